"""Stage orchestration: scans -> seeds -> supervoxels -> masks -> labels
-> detections -> metrics.

Every stage writes a JSON artifact under the output directory and can be
re-run from the artifacts of the stages before it, so a failed or
modified run resumes mid-stream and baselines stay composable.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import detections as postprocess
from . import io as scan_io
from . import masks as mask_constraint
from . import metrics as evalkit
from . import render as depth_render
from . import seeds as seed_detect
from . import solver as gmp
from . import supervoxels as svx
from .config import PipelineConfig
from .core import DepthImage, PointCloud
from .io import ScenePair

log = logging.getLogger("scenediff")

# Distinct colors for the detection PLY (viewer convenience only).
_PALETTE = np.array(
    [
        (0.894, 0.102, 0.110),
        (0.216, 0.494, 0.722),
        (0.302, 0.686, 0.290),
        (0.596, 0.306, 0.639),
        (1.000, 0.498, 0.000),
        (0.651, 0.337, 0.157),
        (0.969, 0.506, 0.749),
        (0.400, 0.761, 0.647),
        (0.906, 0.161, 0.541),
        (0.400, 0.400, 0.400),
    ]
)


@dataclass(frozen=True)
class StagePaths:
    out_dir: Path

    def __post_init__(self):
        object.__setattr__(self, "out_dir", Path(self.out_dir))

    @property
    def seeds(self) -> Path:
        return self.out_dir / "seeds.json"

    @property
    def graph(self) -> Path:
        return self.out_dir / "graph.json"

    @property
    def assignments(self) -> Path:
        return self.out_dir / "assignments.json"

    @property
    def labels(self) -> Path:
        return self.out_dir / "labels.json"

    @property
    def detections(self) -> Path:
        return self.out_dir / "detections.json"

    @property
    def detections_ply(self) -> Path:
        return self.out_dir / "detections.ply"

    @property
    def report(self) -> Path:
        return self.out_dir / "report.json"


@dataclass
class PipelineResult:
    detections: postprocess.DetectionSet
    report: Optional[evalkit.EvalReport]
    paths: StagePaths
    timings: Dict[str, float] = field(default_factory=dict)


def render_depth_pairs(
    scene: ScenePair, config: PipelineConfig
) -> Tuple[List[DepthImage], List[DepthImage]]:
    """Renders reference and rescan depth at every view pose.

    Both scans go through the same renderer so its approximations cancel
    in the residual wherever the geometry did not change.
    """
    ref = depth_render.render_views(scene.reference, scene.views, config.render)
    res = depth_render.render_views(scene.rescan, scene.views, config.render)
    return ref, res


def stage_seeds(
    scene: ScenePair,
    config: PipelineConfig,
    ref_depths: List[DepthImage],
    rescan_depths: List[DepthImage],
) -> seed_detect.SeedSet:
    return seed_detect.detect_seeds(
        ref_depths,
        rescan_depths,
        scene.views,
        scene.rescan,
        policy=config.seeds.policy,
        snap_radius=config.seeds.snap_radius,
    )


def save_seeds(path, seeds: seed_detect.SeedSet, config: PipelineConfig, n_points: int):
    payload = {
        "point_indices": seeds.point_indices.tolist(),
        "n_points": n_points,
        "params": {
            "mode": config.seeds.policy.mode,
            "tau_fixed": config.seeds.policy.tau_fixed,
            "mad_k": config.seeds.policy.mad_k,
            "tau_min": config.seeds.policy.tau_min,
            "snap_radius": config.seeds.snap_radius,
        },
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_seeds(path) -> seed_detect.SeedSet:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"seed artifact not found: {path}")
    raw = json.loads(path.read_text())
    return seed_detect.SeedSet(np.asarray(raw["point_indices"], dtype=np.int64))


def stage_graph(scene: ScenePair, config: PipelineConfig) -> svx.SupervoxelGraph:
    return svx.build(scene.rescan, config.supervoxels)


def save_graph(path, graph: svx.SupervoxelGraph, config: PipelineConfig):
    payload = {
        "assignment": graph.assignment.tolist(),
        "edges": graph.edges.tolist(),
        "centroids": [sv.centroid.tolist() for sv in graph.supervoxels],
        "mean_normals": [sv.mean_normal.tolist() for sv in graph.supervoxels],
        "mean_colors": (
            [sv.mean_color.tolist() for sv in graph.supervoxels]
            if all(sv.mean_color is not None for sv in graph.supervoxels)
            else None
        ),
        "params": {
            "voxel_resolution": config.supervoxels.voxel_resolution,
            "seed_resolution": config.supervoxels.seed_resolution,
        },
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_graph(path) -> svx.SupervoxelGraph:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"graph artifact not found: {path}")
    raw = json.loads(path.read_text())
    assignment = np.asarray(raw["assignment"], dtype=np.int64)
    order = np.argsort(assignment, kind="stable")
    bounds = np.searchsorted(assignment[order], np.arange(len(raw["centroids"]) + 1))
    colors = raw["mean_colors"]
    supervoxels = [
        svx.Supervoxel(
            id=i,
            centroid=np.asarray(raw["centroids"][i]),
            mean_normal=np.asarray(raw["mean_normals"][i]),
            point_indices=np.sort(order[bounds[i]: bounds[i + 1]]),
            mean_color=np.asarray(colors[i]) if colors is not None else None,
        )
        for i in range(len(raw["centroids"]))
    ]
    edges = np.asarray(raw["edges"], dtype=np.int64).reshape(-1, 2)
    return svx.SupervoxelGraph(assignment=assignment, supervoxels=supervoxels, edges=edges)


def stage_masks(
    scene: ScenePair,
    graph: svx.SupervoxelGraph,
    config: PipelineConfig,
    rescan_depths: List[DepthImage],
):
    """Projects every configured mask source onto the graph and derives
    edge terms: binary same-mask phi and continuous weights."""
    available = sorted({src for view in scene.views for src in view.labels})
    sources = list(config.masks.sources) if config.masks.sources is not None else available
    missing = [s for s in sources if s not in available]
    if missing:
        raise ValueError(f"mask source(s) {missing} not present in any view (have {available})")
    if not sources:
        raise ValueError("no mask sources available; the constraint stage needs label images")
    assignments = [
        mask_constraint.assign_view_masks(
            scene.rescan, scene.views, graph, rescan_depths, src, config.masks.depth_tol
        )
        for src in sources
    ]
    phi = mask_constraint.same_mask_edges(graph, assignments)
    if all(sv.mean_color is not None for sv in graph.supervoxels):
        weights = mask_constraint.photoconsistency_weights(graph, config.masks.gamma)
    else:
        weights = mask_constraint.EdgeWeights(np.ones(len(graph.edges)), mode="uniform")
    return assignments, phi, weights


def save_assignments(path, assignments, phi, weights, config: PipelineConfig):
    payload = {
        "sources": {
            a.source: {str(vid): sv_masks.tolist() for vid, sv_masks in sorted(a.per_view.items())}
            for a in assignments
        },
        "phi": phi.values.tolist(),
        "weights": weights.values.tolist(),
        "weight_mode": weights.mode,
        "params": {"depth_tol": config.masks.depth_tol, "gamma": config.masks.gamma},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_assignments(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"assignment artifact not found: {path}")
    raw = json.loads(path.read_text())
    assignments = [
        mask_constraint.MaskAssignment(
            source=src,
            per_view={int(vid): np.asarray(m, dtype=np.int32) for vid, m in per_view.items()},
        )
        for src, per_view in sorted(raw["sources"].items())
    ]
    phi = mask_constraint.EdgeWeights(np.asarray(raw["phi"], dtype=np.float64), mode="same_mask")
    weights = mask_constraint.EdgeWeights(
        np.asarray(raw["weights"], dtype=np.float64), mode=raw.get("weight_mode", "uniform")
    )
    return assignments, phi, weights


def stage_optimize(
    graph: svx.SupervoxelGraph,
    seeds: seed_detect.SeedSet,
    phi: mask_constraint.EdgeWeights,
    weights: mask_constraint.EdgeWeights,
    config: PipelineConfig,
    baseline: str = "full",
) -> dict:
    """Solves the labeling, or skips straight to the prior for the
    seeds-only baseline."""
    if baseline not in ("full", "seeds-only"):
        raise ValueError(f"unknown baseline '{baseline}'")
    changed = svx.mark_changed(graph, seeds, config.solver.min_seed_points)
    p = gmp.init_labeling(
        graph.n_supervoxels,
        changed,
        p_seed=config.solver.p_seed,
        p_rest=config.solver.p_rest,
        epsilon=config.solver.epsilon,
    )
    if baseline == "seeds-only":
        changing = gmp.extract_labels(p)
        return {
            "q": p,
            "changing": changing,
            "energy": None,
            "energy_trace": [],
            "baseline": baseline,
        }
    problem = gmp.GmpProblem(
        n_nodes=graph.n_supervoxels,
        edges=graph.edges,
        phi=phi.values,
        w=weights.values,
        lam=config.solver.lam,
        epsilon=config.solver.epsilon,
    )
    result = gmp.cut_pursuit(p, problem, max_outer_iters=config.solver.max_outer_iters)
    return {
        "q": result.q,
        "changing": gmp.extract_labels(result.q),
        "energy": result.energy,
        "energy_trace": list(result.energy_trace),
        "baseline": baseline,
    }


def save_labels(path, solved: dict, config: PipelineConfig):
    payload = {
        "q": np.asarray(solved["q"]).tolist(),
        "changing": np.asarray(solved["changing"]).astype(bool).tolist(),
        "energy": solved["energy"],
        "energy_trace": solved["energy_trace"],
        "baseline": solved["baseline"],
        "params": {
            "lambda": config.solver.lam,
            "p_seed": config.solver.p_seed,
            "p_rest": config.solver.p_rest,
            "epsilon": config.solver.epsilon,
        },
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_labels(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"label artifact not found: {path}")
    raw = json.loads(path.read_text())
    raw["q"] = np.asarray(raw["q"], dtype=np.float64)
    raw["changing"] = np.asarray(raw["changing"], dtype=bool)
    return raw


def stage_detect(
    graph: svx.SupervoxelGraph,
    changing: np.ndarray,
    cloud: PointCloud,
    seeds: seed_detect.SeedSet,
    config: PipelineConfig,
    extra_params: Optional[dict] = None,
) -> postprocess.DetectionSet:
    params = {
        "step": config.detect.step,
        "min_points": config.detect.min_points,
        "lambda": config.solver.lam,
        "p_seed": config.solver.p_seed,
    }
    if extra_params:
        params.update(extra_params)
    return postprocess.build_detections(
        graph, changing, cloud, seeds,
        step=config.detect.step, min_points=config.detect.min_points, params=params,
    )


def save_detection_cloud(path, dets: postprocess.DetectionSet, cloud: PointCloud):
    """Colored PLY of detected points for external viewers."""
    if len(dets) == 0:
        return
    idx = np.concatenate([d.point_indices for d in dets.detections])
    colors = np.concatenate(
        [np.tile(_PALETTE[d.id % len(_PALETTE)], (len(d.point_indices), 1)) for d in dets.detections]
    )
    scan_io.save_point_cloud(path, PointCloud(cloud.positions[idx], colors=colors))


def stage_eval(
    dets: postprocess.DetectionSet,
    gt: scan_io.GroundTruth,
    cloud: PointCloud,
    config: PipelineConfig,
) -> evalkit.EvalReport:
    return evalkit.evaluate(
        dets, gt,
        ks=config.eval.recall_ks, ap_k=config.eval.ap_k,
        cloud=cloud, mode=config.eval.iou_mode,
    )


def run_pipeline(
    manifest,
    config: PipelineConfig = None,
    out_dir="out",
    baseline: str = "full",
    write_figures: bool = True,
) -> PipelineResult:
    """Runs every stage in order, writing artifacts as it goes.

    ``manifest`` may be a path or a loaded SceneManifest. When the scene
    carries ground truth, an evaluation report (JSON + CSV + figures) is
    produced as well.
    """
    config = config or PipelineConfig()
    paths = StagePaths(Path(out_dir))
    paths.out_dir.mkdir(parents=True, exist_ok=True)
    if not isinstance(manifest, scan_io.SceneManifest):
        manifest = scan_io.load_manifest(manifest)
    scene = scan_io.load_scene(manifest)
    timings = {}

    t0 = time.perf_counter()
    ref_depths, rescan_depths = render_depth_pairs(scene, config)
    timings["render"] = time.perf_counter() - t0
    log.info("rendered %d view pairs in %.2fs", len(scene.views), timings["render"])

    t0 = time.perf_counter()
    seeds = stage_seeds(scene, config, ref_depths, rescan_depths)
    save_seeds(paths.seeds, seeds, config, len(scene.rescan))
    timings["seeds"] = time.perf_counter() - t0
    log.info("found %d seed points in %.2fs", len(seeds.point_indices), timings["seeds"])

    t0 = time.perf_counter()
    graph = stage_graph(scene, config)
    save_graph(paths.graph, graph, config)
    timings["supervoxels"] = time.perf_counter() - t0
    log.info(
        "built %d supervoxels / %d edges in %.2fs",
        graph.n_supervoxels, len(graph.edges), timings["supervoxels"],
    )

    t0 = time.perf_counter()
    assignments, phi, weights = stage_masks(scene, graph, config, rescan_depths)
    save_assignments(paths.assignments, assignments, phi, weights, config)
    timings["masks"] = time.perf_counter() - t0
    log.info(
        "mask constraint: %d/%d edges linked in %.2fs",
        int(phi.values.sum()), len(phi.values), timings["masks"],
    )

    t0 = time.perf_counter()
    solved = stage_optimize(graph, seeds, phi, weights, config, baseline)
    save_labels(paths.labels, solved, config)
    timings["optimize"] = time.perf_counter() - t0
    log.info(
        "labeling done (%s): %d changing supervoxels in %.2fs",
        baseline, int(np.count_nonzero(solved["changing"])), timings["optimize"],
    )

    t0 = time.perf_counter()
    dets = stage_detect(graph, solved["changing"], scene.rescan, seeds, config,
                        extra_params={"baseline": baseline})
    timings["detect"] = time.perf_counter() - t0
    log.info("%d detections in %.2fs", len(dets), timings["detect"])

    report = None
    if scene.ground_truth is not None and len(scene.ground_truth.changed_instances) > 0:
        report = stage_eval(dets, scene.ground_truth, scene.rescan, config)
        scan_io.save_detections(
            paths.detections, dets.detections, dets.params,
            metrics={"recall": {str(k): v for k, v in report.recalls.items()}, "ap": report.ap},
        )
        from . import report as reportkit

        reportkit.write_report(paths.out_dir, report, dets, config, timings,
                               energy_trace=solved["energy_trace"], figures=write_figures)
    else:
        scan_io.save_detections(paths.detections, dets.detections, dets.params)
    save_detection_cloud(paths.detections_ply, dets, scene.rescan)

    return PipelineResult(detections=dets, report=report, paths=paths, timings=timings)


def sweep_pipeline(
    manifest,
    config: PipelineConfig = None,
    param: str = "lambda",
    values=(),
    out_dir="sweep",
    baseline: str = "full",
    write_figures: bool = True,
) -> List[dict]:
    """One pipeline run per parameter value, reusing every artifact the
    parameter cannot affect (renders always; seeds unless tau sweeps)."""
    if param not in ("lambda", "p_seed", "tau"):
        raise ValueError(f"unknown sweep parameter '{param}' (expected lambda, p_seed, or tau)")
    if not len(values):
        raise ValueError("sweep needs at least one value")
    config = config or PipelineConfig()
    out_dir = Path(out_dir)
    if not isinstance(manifest, scan_io.SceneManifest):
        manifest = scan_io.load_manifest(manifest)
    scene = scan_io.load_scene(manifest)

    ref_depths, rescan_depths = render_depth_pairs(scene, config)
    graph = stage_graph(scene, config)
    assignments, phi, weights = stage_masks(scene, graph, config, rescan_depths)
    base_seeds = None if param == "tau" else stage_seeds(scene, config, ref_depths, rescan_depths)

    rows = []
    for value in values:
        cfg = config.with_param(param, value)
        run_dir = out_dir / f"{param}_{value:g}"
        paths = StagePaths(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        seeds = base_seeds if base_seeds is not None else stage_seeds(
            scene, cfg, ref_depths, rescan_depths
        )
        save_seeds(paths.seeds, seeds, cfg, len(scene.rescan))
        save_graph(paths.graph, graph, cfg)
        save_assignments(paths.assignments, assignments, phi, weights, cfg)
        solved = stage_optimize(graph, seeds, phi, weights, cfg, baseline)
        save_labels(paths.labels, solved, cfg)
        dets = stage_detect(graph, solved["changing"], scene.rescan, seeds, cfg,
                            extra_params={"baseline": baseline, "sweep": {param: value}})
        row = {"param": param, "value": float(value), "n_detections": len(dets),
               "out_dir": str(run_dir)}
        if scene.ground_truth is not None and len(scene.ground_truth.changed_instances) > 0:
            rep = stage_eval(dets, scene.ground_truth, scene.rescan, cfg)
            scan_io.save_detections(
                paths.detections, dets.detections, dets.params,
                metrics={"recall": {str(k): v for k, v in rep.recalls.items()}, "ap": rep.ap},
            )
            row["recalls"] = dict(rep.recalls)
            row["ap"] = rep.ap
        else:
            scan_io.save_detections(paths.detections, dets.detections, dets.params)
        rows.append(row)
        log.info("sweep %s=%g: %d detections", param, value, len(dets))

    from . import report as reportkit

    reportkit.write_sweep_report(out_dir, param, rows, figures=write_figures)
    return rows
