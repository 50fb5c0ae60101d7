"""Command-line interface.

Exit codes: 0 success, 1 stage failure, 2 usage or input/output problem.
Input loading errors (missing files, malformed JSON/PLY, bad parameters)
exit 2; errors raised while a stage is computing exit 1 with the stage
named.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np

from . import io as scan_io
from . import pipeline, synth
from .config import PipelineConfig, config_from_dict, load_config, save_config
from .detections import Detection, DetectionSet

log = logging.getLogger("scenediff")


def _setup_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load(fn, *args, **kwargs):
    """Runs an input loader; any failure is a usage/IO error (exit 2)."""
    try:
        return fn(*args, **kwargs)
    except (FileNotFoundError, ValueError, OSError) as e:
        raise click.UsageError(str(e))


@contextmanager
def _stage(name: str):
    """Converts stage-time failures to exit code 1 with the stage named."""
    try:
        yield
    except click.ClickException:
        raise
    except Exception as e:
        raise click.ClickException(f"stage '{name}' failed: {e}")


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Pipeline config JSON; defaults apply where omitted.")
@click.option("--out", "out_dir", type=click.Path(), default="out",
              help="Output directory for stage artifacts.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker processes when running several scenes.")
@click.option("--log-level", default="info", show_default=True,
              type=click.Choice(["debug", "info", "warning", "error"]))
@click.pass_context
def main(ctx, config_path, out_dir, jobs, log_level):
    """Unsupervised 3D change detection on scan pairs."""
    _setup_logging(log_level)
    config = _load(load_config, config_path) if config_path else PipelineConfig()
    ctx.obj = {"config": config, "out": Path(out_dir), "jobs": max(1, jobs)}


def _run_one(manifest_path: str, config_dict: dict, out_dir: str, baseline: str, figures: bool):
    # Module-level entry so a process pool can pickle the call.
    config = config_from_dict(config_dict)
    result = pipeline.run_pipeline(manifest_path, config, out_dir, baseline=baseline,
                                   write_figures=figures)
    summary = {"manifest": manifest_path, "out_dir": out_dir,
               "n_detections": len(result.detections)}
    if result.report is not None:
        summary["recalls"] = {f"{k:g}": v for k, v in sorted(result.report.recalls.items())}
        summary["ap"] = result.report.ap
    return summary


@main.command()
@click.argument("manifests", nargs=-1, required=True, type=click.Path())
@click.option("--baseline", type=click.Choice(["full", "seeds-only"]), default="full",
              show_default=True, help="seeds-only skips the optimization stage.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.pass_context
def run(ctx, manifests, baseline, figures):
    """Run the full pipeline on one or more scene manifests."""
    config = ctx.obj["config"]
    out_root = ctx.obj["out"]
    for m in manifests:
        _load(scan_io.load_manifest, m)  # fail fast with exit 2 before any work
    jobs = []
    for m in manifests:
        out = out_root if len(manifests) == 1 else out_root / Path(m).resolve().parent.name
        jobs.append((str(m), config.to_dict(), str(out), baseline, figures))
    summaries = []
    with _stage("run"):
        if ctx.obj["jobs"] > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=ctx.obj["jobs"]) as pool:
                summaries = list(pool.map(_run_one, *zip(*jobs)))
        else:
            summaries = [_run_one(*j) for j in jobs]
    for s in summaries:
        line = f"{s['manifest']}: {s['n_detections']} detections"
        if "recalls" in s:
            rec = ", ".join(f"recall@{k}={v:.1f}" for k, v in sorted(s["recalls"].items()))
            line += f" ({rec}, AP={s['ap']:.3f})"
        click.echo(line)


@main.command()
@click.argument("manifest", type=click.Path())
@click.option("--param", type=click.Choice(["lambda", "p_seed", "tau"]), required=True)
@click.option("--values", required=True, help="Comma-separated parameter values.")
@click.option("--baseline", type=click.Choice(["full", "seeds-only"]), default="full",
              show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.pass_context
def sweep(ctx, manifest, param, values, baseline, figures):
    """Re-run the pipeline across parameter values; emit one table."""
    try:
        vals = [float(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise click.UsageError(f"--values must be comma-separated numbers, got '{values}'")
    if not vals:
        raise click.UsageError("--values is empty")
    _load(scan_io.load_manifest, manifest)
    with _stage("sweep"):
        rows = pipeline.sweep_pipeline(manifest, ctx.obj["config"], param, vals,
                                       out_dir=ctx.obj["out"], baseline=baseline,
                                       write_figures=figures)
    for row in rows:
        line = f"{param}={row['value']:g}: {row['n_detections']} detections"
        if "recalls" in row:
            rec = ", ".join(f"recall@{k:g}={v:.1f}" for k, v in sorted(row["recalls"].items()))
            line += f" ({rec}, AP={row['ap']:.3f})"
        click.echo(line)


@main.command(name="synth")
@click.option("--spec", "spec_path", required=True, type=click.Path(),
              help="Scene spec JSON.")
@click.pass_context
def synth_cmd(ctx, spec_path):
    """Generate a synthetic scene pair with oracle masks and ground truth."""
    spec = _load(synth.load_spec, spec_path)
    with _stage("synth"):
        manifest = synth.generate(spec, ctx.obj["out"])
    click.echo(f"wrote {manifest}")


@main.command()
@click.argument("manifest", type=click.Path())
@click.option("--scan", type=click.Choice(["reference", "rescan", "both"]), default="both",
              show_default=True)
@click.pass_context
def render(ctx, manifest, scan):
    """Render depth images of the scan(s) at every manifest view."""
    scene = _load(lambda: scan_io.load_scene(scan_io.load_manifest(manifest)))
    config = ctx.obj["config"]
    out = ctx.obj["out"] / "render"
    with _stage("render"):
        from .render import render_views

        for name in ("reference", "rescan") if scan == "both" else (scan,):
            cloud = scene.reference if name == "reference" else scene.rescan
            for vid, depth in enumerate(render_views(cloud, scene.views, config.render)):
                scan_io.save_depth(out / name / f"view_{vid:03d}.png", depth)
    click.echo(f"wrote {out}")


@main.command()
@click.argument("manifest", type=click.Path())
@click.pass_context
def seed(ctx, manifest):
    """Render-and-compare seeding; writes seeds.json."""
    scene = _load(lambda: scan_io.load_scene(scan_io.load_manifest(manifest)))
    config = ctx.obj["config"]
    paths = pipeline.StagePaths(ctx.obj["out"])
    with _stage("seed"):
        ref_d, res_d = pipeline.render_depth_pairs(scene, config)
        seeds = pipeline.stage_seeds(scene, config, ref_d, res_d)
        pipeline.save_seeds(paths.seeds, seeds, config, len(scene.rescan))
    click.echo(f"{len(seeds.point_indices)} seed points -> {paths.seeds}")


@main.command()
@click.argument("manifest", type=click.Path())
@click.pass_context
def supervoxel(ctx, manifest):
    """Build the supervoxel graph; writes graph.json."""
    scene = _load(lambda: scan_io.load_scene(scan_io.load_manifest(manifest)))
    config = ctx.obj["config"]
    paths = pipeline.StagePaths(ctx.obj["out"])
    with _stage("supervoxel"):
        graph = pipeline.stage_graph(scene, config)
        pipeline.save_graph(paths.graph, graph, config)
    click.echo(f"{graph.n_supervoxels} supervoxels, {len(graph.edges)} edges -> {paths.graph}")


@main.command()
@click.argument("manifest", type=click.Path())
@click.pass_context
def assign(ctx, manifest):
    """Project 2D masks onto the graph; writes assignments.json.

    Requires graph.json from a prior `supervoxel` run in the same output
    directory.
    """
    scene = _load(lambda: scan_io.load_scene(scan_io.load_manifest(manifest)))
    config = ctx.obj["config"]
    paths = pipeline.StagePaths(ctx.obj["out"])
    graph = _load(pipeline.load_graph, paths.graph)
    with _stage("assign"):
        _, res_d = pipeline.render_depth_pairs(scene, config)
        assignments, phi, weights = pipeline.stage_masks(scene, graph, config, res_d)
        pipeline.save_assignments(paths.assignments, assignments, phi, weights, config)
    click.echo(
        f"{int(phi.values.sum())}/{len(phi.values)} edges mask-linked -> {paths.assignments}"
    )


@main.command()
@click.option("--graph", "graph_path", type=click.Path(), default=None,
              help="graph.json (default: <out>/graph.json)")
@click.option("--assignments", "assign_path", type=click.Path(), default=None,
              help="assignments.json (default: <out>/assignments.json)")
@click.option("--seeds", "seeds_path", type=click.Path(), default=None,
              help="seeds.json (default: <out>/seeds.json)")
@click.option("--lambda", "lam", type=float, default=None,
              help="Override the config's regularization strength.")
@click.option("--p-seed", type=float, default=None, help="Override the seed prior.")
@click.option("--baseline", type=click.Choice(["full", "seeds-only"]), default="full",
              show_default=True)
@click.pass_context
def optimize(ctx, graph_path, assign_path, seeds_path, lam, p_seed, baseline):
    """Solve the labeling from cached artifacts; writes labels.json."""
    config = ctx.obj["config"]
    if lam is not None:
        config = config.with_param("lambda", lam)
    if p_seed is not None:
        config = config.with_param("p_seed", p_seed)
    paths = pipeline.StagePaths(ctx.obj["out"])
    graph = _load(pipeline.load_graph, graph_path or paths.graph)
    _, phi, weights = _load(pipeline.load_assignments, assign_path or paths.assignments)
    seeds = _load(pipeline.load_seeds, seeds_path or paths.seeds)
    with _stage("optimize"):
        solved = pipeline.stage_optimize(graph, seeds, phi, weights, config, baseline)
        pipeline.save_labels(paths.labels, solved, config)
    n = int(np.count_nonzero(solved["changing"]))
    e = solved["energy"]
    click.echo(
        f"{n}/{graph.n_supervoxels} supervoxels changing"
        + (f", energy {e:.6f}" if e is not None else "")
        + f" -> {paths.labels}"
    )


@main.command()
@click.argument("manifest", type=click.Path())
@click.pass_context
def detect(ctx, manifest):
    """Group changing supervoxels into detections; writes detections.json."""
    scene = _load(lambda: scan_io.load_scene(scan_io.load_manifest(manifest)))
    config = ctx.obj["config"]
    paths = pipeline.StagePaths(ctx.obj["out"])
    graph = _load(pipeline.load_graph, paths.graph)
    solved = _load(pipeline.load_labels, paths.labels)
    seeds = _load(pipeline.load_seeds, paths.seeds)
    with _stage("detect"):
        dets = pipeline.stage_detect(graph, solved["changing"], scene.rescan, seeds, config,
                                     extra_params={"baseline": solved.get("baseline", "full")})
        scan_io.save_detections(paths.detections, dets.detections, dets.params)
        pipeline.save_detection_cloud(paths.detections_ply, dets, scene.rescan)
    click.echo(f"{len(dets)} detections -> {paths.detections}")


@main.command(name="eval")
@click.option("--pred", required=True, type=click.Path(), help="detections.json")
@click.option("--gt", "gt_path", required=True, type=click.Path(), help="ground-truth JSON")
@click.option("--ks", default="0.25,0.5,0.75", show_default=True,
              help="Comma-separated recall IoU thresholds.")
@click.option("--iou", "iou_mode", type=click.Choice(["point", "box"]), default="point",
              show_default=True)
@click.option("--manifest", type=click.Path(), default=None,
              help="Needed for box IoU (point coordinates).")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.pass_context
def eval_cmd(ctx, pred, gt_path, ks, iou_mode, manifest, figures):
    """Score detections against ground truth; writes report files."""
    from . import metrics as evalkit
    from . import report as reportkit
    import dataclasses

    try:
        k_vals = [float(k) for k in ks.split(",") if k.strip()]
    except ValueError:
        raise click.UsageError(f"--ks must be comma-separated numbers, got '{ks}'")
    raw = _load(scan_io.load_detections, pred)
    gt = _load(scan_io.load_ground_truth, gt_path)
    cloud = None
    if iou_mode == "box":
        if manifest is None:
            raise click.UsageError("box IoU needs --manifest for point coordinates")
        cloud = _load(
            lambda: scan_io.load_point_cloud(scan_io.load_manifest(manifest).rescan)
        )
    dets = DetectionSet(
        detections=[
            Detection(id=int(d["id"]), point_indices=np.asarray(d["point_indices"], dtype=np.int64),
                      score=float(d["score"]))
            for d in raw["detections"]
        ],
        params=raw.get("params", {}),
    )
    config = ctx.obj["config"]
    config = dataclasses.replace(
        config, eval=dataclasses.replace(config.eval, recall_ks=tuple(k_vals), iou_mode=iou_mode)
    )
    with _stage("eval"):
        report = evalkit.evaluate(dets, gt, ks=tuple(k_vals), ap_k=config.eval.ap_k,
                                  cloud=cloud, mode=iou_mode)
        out = reportkit.write_report(ctx.obj["out"], report, dets, config, figures=figures)
    click.echo(f"{'k':>8} {'recall':>8}")
    for k in sorted(report.recalls):
        click.echo(f"{k:>8g} {report.recalls[k]:>8.2f}")
    click.echo(f"AP@{report.ap_k:g} = {report.ap:.4f}")
    click.echo(f"wrote {out}")


@main.command(name="config")
@click.pass_context
def config_cmd(ctx):
    """Write the effective configuration (defaults + overrides) to <out>."""
    path = ctx.obj["out"] / "config.json"
    save_config(ctx.obj["config"], path)
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
