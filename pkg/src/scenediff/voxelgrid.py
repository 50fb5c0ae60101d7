"""Integer voxel-grid indexing shared by supervoxels and postprocessing.

Voxel keys are floor(position / resolution) per axis.  Keys are linearized
into a single int64 with a per-grid mixed radix so neighbor lookups reduce
to searchsorted over a sorted key array.
"""

from __future__ import annotations

import numpy as np

# All 26 nonzero offsets of a 3x3x3 neighborhood.
NEIGHBOR_OFFSETS = np.array(
    [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0)
    ],
    dtype=np.int64,
)


class VoxelGrid:
    """Occupied voxels of a point set at a fixed resolution.

    Attributes:
        keys: (V, 3) int64 voxel coordinates, lexicographically sorted.
        point_voxel: (N,) index into keys for every input point.
        resolution: edge length in meters.
    """

    def __init__(self, positions: np.ndarray, resolution: float):
        if resolution <= 0:
            raise ValueError(f"voxel resolution must be positive, got {resolution}")
        pos = np.asarray(positions, dtype=np.float64)
        ijk = np.floor(pos / resolution).astype(np.int64)
        # Pad the linearization range by 1 so neighbor offsets never wrap.
        self._lo = ijk.min(axis=0) - 1
        extent = ijk.max(axis=0) - self._lo + 2
        self._mul = np.array([extent[1] * extent[2], extent[2], 1], dtype=np.int64)
        lin = (ijk - self._lo) @ self._mul
        self._sorted_lin, self.point_voxel = np.unique(lin, return_inverse=True)
        shifted = np.empty((len(self._sorted_lin), 3), dtype=np.int64)
        shifted[:, 0], rem = np.divmod(self._sorted_lin, self._mul[0])
        shifted[:, 1], shifted[:, 2] = np.divmod(rem, self._mul[1])
        self.keys = shifted + self._lo
        self.resolution = float(resolution)

    def __len__(self) -> int:
        return len(self.keys)

    def centers(self) -> np.ndarray:
        return (self.keys + 0.5) * self.resolution

    def neighbor_table(self) -> np.ndarray:
        """(V, 26) indices of 26-adjacent occupied voxels, -1 where empty."""
        offs = NEIGHBOR_OFFSETS @ self._mul
        cand = self._sorted_lin[:, None] + offs[None, :]
        pos = np.searchsorted(self._sorted_lin, cand)
        pos = np.clip(pos, 0, len(self._sorted_lin) - 1)
        hit = self._sorted_lin[pos] == cand
        return np.where(hit, pos, -1)

    def connected_components(self) -> np.ndarray:
        """(V,) component id per voxel under 26-connectivity, ids 0..C-1.

        Component ids are ordered by each component's smallest voxel index,
        so the labeling is deterministic.
        """
        nbr = self.neighbor_table()
        comp = np.full(len(self), -1, dtype=np.int64)
        next_id = 0
        for start in range(len(self)):
            if comp[start] >= 0:
                continue
            comp[start] = next_id
            frontier = np.array([start], dtype=np.int64)
            while len(frontier):
                adj = nbr[frontier].ravel()
                adj = adj[adj >= 0]
                adj = adj[comp[adj] < 0]
                adj = np.unique(adj)
                comp[adj] = next_id
                frontier = adj
            next_id += 1
        return comp


def group_components(point_indices: np.ndarray, positions: np.ndarray, step: float):
    """Splits the selected points into 26-connected voxel components.

    Returns a list of index arrays (subsets of point_indices), ordered by
    each component's smallest point index.
    """
    point_indices = np.asarray(point_indices, dtype=np.int64)
    if len(point_indices) == 0:
        return []
    grid = VoxelGrid(positions[point_indices], step)
    comp_of_voxel = grid.connected_components()
    comp_of_point = comp_of_voxel[grid.point_voxel]
    groups = []
    for c in range(comp_of_voxel.max() + 1):
        groups.append(np.sort(point_indices[comp_of_point == c]))
    groups.sort(key=lambda g: int(g[0]))
    return groups
