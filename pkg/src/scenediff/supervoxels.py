"""VCCS-style supervoxel oversegmentation and adjacency graph.

The rescan cloud is voxelized, seeds are placed on a coarse grid, and
regions grow outward wave by wave, constrained to voxel 26-adjacency so
every supervoxel is spatially connected.  Growth competes in a joint
distance over color, position, and normals; normals dominate by default
so supervoxels respect surface orientation boundaries.

All tie-breaking is by lowest supervoxel id, which makes the result a
pure function of (cloud, params).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .core import PointCloud
from .seeds import SeedSet
from .voxelgrid import VoxelGrid

SEED_SNAP_EPS = 1e-9


@dataclass(frozen=True)
class SupervoxelParams:
    voxel_resolution: float = 0.02
    seed_resolution: float = 0.25
    weight_color: float = 0.2
    weight_spatial: float = 0.4
    weight_normal: float = 1.0
    max_iterations: int = 5

    def __post_init__(self):
        if not (self.seed_resolution > self.voxel_resolution > 0):
            raise ValueError(
                f"need seed_resolution > voxel_resolution > 0, got "
                f"{self.seed_resolution} / {self.voxel_resolution}"
            )
        weights = (self.weight_color, self.weight_spatial, self.weight_normal)
        if any(w < 0 for w in weights) or not any(weights):
            raise ValueError("weights must be >= 0 and not all zero")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class Supervoxel:
    id: int
    centroid: np.ndarray
    mean_normal: np.ndarray
    point_indices: np.ndarray
    mean_color: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SupervoxelGraph:
    """Total partition of the cloud plus supervoxel adjacency.

    assignment[i] is the supervoxel id of point i; edges are unordered
    (a, b) pairs with a < b, one row per adjacent supervoxel pair.
    """

    assignment: np.ndarray
    supervoxels: List[Supervoxel]
    edges: np.ndarray

    @property
    def n_supervoxels(self) -> int:
        return len(self.supervoxels)

    def sizes(self) -> np.ndarray:
        return np.array([len(sv.point_indices) for sv in self.supervoxels])


def estimate_normals(positions: np.ndarray, k: int = 16) -> np.ndarray:
    """Per-point unit normals from a k-nearest-neighbor plane fit.

    The sign is fixed by making each normal's largest-magnitude component
    positive; downstream distances use |dot| so orientation is free.
    """
    pos = np.asarray(positions, dtype=np.float64)
    n = len(pos)
    if n == 1:
        return np.array([[0.0, 0.0, 1.0]])
    k = min(k, n)
    _, idx = cKDTree(pos).query(pos, k=k)
    if k == 1:
        idx = idx[:, None]
    nbrs = pos[idx]
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]  # eigenvector of the smallest eigenvalue
    lead = np.abs(normals).argmax(axis=1)
    signs = np.sign(normals[np.arange(n), lead])
    signs[signs == 0] = 1.0
    normals = normals * signs[:, None]
    norms = np.linalg.norm(normals, axis=1)
    degenerate = norms < 1e-12
    normals[degenerate] = (0.0, 0.0, 1.0)
    normals[~degenerate] /= norms[~degenerate, None]
    return normals


def _segment_means(values: np.ndarray, segment: np.ndarray, n_segments: int) -> np.ndarray:
    sums = np.zeros((n_segments, values.shape[1]))
    np.add.at(sums, segment, values)
    counts = np.bincount(segment, minlength=n_segments).astype(np.float64)
    counts[counts == 0] = 1.0
    return sums / counts[:, None]


def _mean_normals(normals: np.ndarray, segment: np.ndarray, n_segments: int) -> np.ndarray:
    """Averages unit normals per segment, sign-aligning members first."""
    order = np.argsort(segment, kind="stable")
    seg_sorted = segment[order]
    firsts = np.full(n_segments, -1, dtype=np.int64)
    first_pos = np.unique(seg_sorted, return_index=True)
    firsts[first_pos[0]] = order[first_pos[1]]
    ref = np.where(firsts[:, None] >= 0, normals[firsts], (0.0, 0.0, 1.0))
    signs = np.sign(np.einsum("ij,ij->i", normals, ref[segment]))
    signs[signs == 0] = 1.0
    mean = _segment_means(normals * signs[:, None], segment, n_segments)
    norms = np.linalg.norm(mean, axis=1)
    ok = norms > 1e-12
    mean[ok] /= norms[ok, None]
    mean[~ok] = ref[~ok]
    return mean


def build(cloud: PointCloud, params: SupervoxelParams = SupervoxelParams()) -> SupervoxelGraph:
    if len(cloud) == 0:
        raise ValueError("cannot build supervoxels of an empty cloud")
    pos = cloud.positions
    normals = cloud.normals if cloud.normals is not None else estimate_normals(pos)
    grid = VoxelGrid(pos, params.voxel_resolution)
    n_vox = len(grid)
    vox_pos = _segment_means(pos, grid.point_voxel, n_vox)
    vox_nrm = _mean_normals(normals, grid.point_voxel, n_vox)
    vox_col = (
        _segment_means(cloud.colors, grid.point_voxel, n_vox) if cloud.colors is not None else None
    )
    nbr = grid.neighbor_table()

    seed_vox = _place_seeds(vox_pos, params.seed_resolution)
    n_seeds = len(seed_vox)
    # Growth radius that provably keeps every point within 2*seed_resolution
    # of its supervoxel centroid (cap + voxel diagonal, doubled).
    cap = params.seed_resolution - np.sqrt(3.0) * params.voxel_resolution

    sv_pos = vox_pos[seed_vox]
    sv_nrm = vox_nrm[seed_vox]
    sv_col = vox_col[seed_vox] if vox_col is not None else None
    assign = np.full(n_vox, -1, dtype=np.int64)
    for _ in range(params.max_iterations):
        prev = assign
        assign = _grow(seed_vox, sv_pos, sv_nrm, sv_col, vox_pos, vox_nrm, vox_col, nbr, cap, params)
        assign, n_total = _adopt_orphans(assign, n_seeds, grid, vox_pos, params.seed_resolution)
        if np.array_equal(assign, prev):
            break
        if n_seeds:
            point_sv = assign[grid.point_voxel]
            sv_pos = _segment_means(pos, point_sv, n_total)[:n_seeds]
            sv_nrm = _mean_normals(normals, point_sv, n_total)[:n_seeds]
            if cloud.colors is not None:
                sv_col = _segment_means(cloud.colors, point_sv, n_total)[:n_seeds]

    point_sv = assign[grid.point_voxel]
    n_total = int(assign.max()) + 1
    centroids = _segment_means(pos, point_sv, n_total)
    mean_nrm = _mean_normals(normals, point_sv, n_total)
    mean_col = _segment_means(cloud.colors, point_sv, n_total) if cloud.colors is not None else None
    order = np.argsort(point_sv, kind="stable")
    bounds = np.searchsorted(point_sv[order], np.arange(n_total + 1))
    supervoxels = [
        Supervoxel(
            id=s,
            centroid=centroids[s],
            mean_normal=mean_nrm[s],
            point_indices=np.sort(order[bounds[s] : bounds[s + 1]]),
            mean_color=mean_col[s] if mean_col is not None else None,
        )
        for s in range(n_total)
    ]
    edges = _adjacency_edges(assign, nbr)
    return SupervoxelGraph(assignment=point_sv, supervoxels=supervoxels, edges=edges)


def _place_seeds(vox_pos: np.ndarray, seed_resolution: float) -> np.ndarray:
    """One seed voxel per occupied coarse cell, nearest to the cell center.

    Cells whose nearest voxel is farther than seed_resolution/2 from the
    cell center produce no seed; their voxels are adopted later.
    """
    cell = np.floor(vox_pos / seed_resolution).astype(np.int64)
    lo = cell.min(axis=0)
    extent = cell.max(axis=0) - lo + 1
    lin = (cell - lo) @ np.array([extent[1] * extent[2], extent[2], 1], dtype=np.int64)
    center = (cell + 0.5) * seed_resolution
    dist = np.linalg.norm(vox_pos - center, axis=1)
    order = np.lexsort((np.arange(len(lin)), dist, lin))
    _, first = np.unique(lin[order], return_index=True)
    candidates = order[first]
    keep = dist[candidates] <= seed_resolution / 2 + SEED_SNAP_EPS
    return candidates[keep]


def _grow(seed_vox, sv_pos, sv_nrm, sv_col, vox_pos, vox_nrm, vox_col, nbr, cap, params):
    """One full wave-growth pass from the seed voxels; -1 marks orphans."""
    n_vox = len(vox_pos)
    assign = np.full(n_vox, -1, dtype=np.int64)
    if len(seed_vox) == 0:
        return assign
    assign[seed_vox] = np.arange(len(seed_vox))
    norm_s = (3.0 * params.seed_resolution) ** 2
    frontier = seed_vox
    while len(frontier):
        cand_v = nbr[frontier].ravel()
        cand_s = np.repeat(assign[frontier], nbr.shape[1])
        ok = (cand_v >= 0) & (assign[np.clip(cand_v, 0, None)] < 0)
        cand_v, cand_s = cand_v[ok], cand_s[ok]
        if len(cand_v) == 0:
            break
        pair = cand_v * np.int64(len(sv_pos)) + cand_s
        _, uniq = np.unique(pair, return_index=True)
        cand_v, cand_s = cand_v[uniq], cand_s[uniq]
        ds2 = np.sum((vox_pos[cand_v] - sv_pos[cand_s]) ** 2, axis=1)
        within = ds2 <= cap * cap
        cand_v, cand_s, ds2 = cand_v[within], cand_s[within], ds2[within]
        if len(cand_v) == 0:
            break
        dn = 1.0 - np.abs(np.einsum("ij,ij->i", vox_nrm[cand_v], sv_nrm[cand_s]))
        d2 = params.weight_spatial * ds2 / norm_s + params.weight_normal * dn * dn
        if vox_col is not None and params.weight_color > 0:
            dc2 = np.sum((vox_col[cand_v] - sv_col[cand_s]) ** 2, axis=1)
            d2 = d2 + params.weight_color * dc2
        dist = np.sqrt(d2)
        order = np.lexsort((cand_s, dist, cand_v))
        _, first = np.unique(cand_v[order], return_index=True)
        win = order[first]
        assign[cand_v[win]] = cand_s[win]
        frontier = cand_v[win]
    return assign


def _adopt_orphans(assign, n_seeds, grid: VoxelGrid, vox_pos, seed_resolution):
    """Turns unreached voxels into their own supervoxels.

    Orphans are grouped by coarse cell and then split into 26-connected
    components, which bounds each orphan supervoxel by the cell diagonal
    and keeps ids deterministic.
    """
    assign = assign.copy()
    orphan = np.nonzero(assign < 0)[0]
    next_id = n_seeds
    if len(orphan) == 0:
        return assign, next_id
    cell = np.floor(vox_pos[orphan] / seed_resolution).astype(np.int64)
    lo = cell.min(axis=0)
    extent = cell.max(axis=0) - lo + 1
    lin = (cell - lo) @ np.array([extent[1] * extent[2], extent[2], 1], dtype=np.int64)
    for cell_key in np.unique(lin):
        members = orphan[lin == cell_key]
        sub = VoxelGrid(vox_pos[members], grid.resolution)
        comp = sub.connected_components()[sub.point_voxel]
        for c in range(comp.max() + 1):
            assign[members[comp == c]] = next_id
            next_id += 1
    return assign, next_id


def _adjacency_edges(assign: np.ndarray, nbr: np.ndarray) -> np.ndarray:
    v = np.repeat(np.arange(len(assign)), nbr.shape[1])
    w = nbr.ravel()
    ok = (w >= 0) & (w > v)
    a = assign[v[ok]]
    b = assign[w[ok]]
    differ = a != b
    pairs = np.stack([np.minimum(a[differ], b[differ]), np.maximum(a[differ], b[differ])], axis=1)
    if len(pairs) == 0:
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(pairs, axis=0)


def mark_changed(graph: SupervoxelGraph, seeds: SeedSet, min_seed_points: int = 1) -> set:
    """Supervoxels holding at least min_seed_points seed points."""
    if len(seeds) == 0:
        return set()
    counts = np.bincount(graph.assignment[seeds.point_indices], minlength=graph.n_supervoxels)
    return set(np.nonzero(counts >= min_seed_points)[0].tolist())
