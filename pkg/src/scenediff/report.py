"""Evaluation reports: JSON + CSV tables and matplotlib figures.

Figures are rendered headless to PNG files next to the tables; nothing
here opens a window.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .config import PipelineConfig
from .detections import DetectionSet
from .metrics import EvalReport

FIG_DPI = 120


def _fig(width=5.0, height=3.6):
    return plt.subplots(figsize=(width, height), dpi=FIG_DPI)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_report(
    out_dir,
    report: EvalReport,
    dets: DetectionSet,
    config: PipelineConfig,
    timings: dict = None,
    energy_trace=None,
    figures: bool = True,
) -> Path:
    """Writes report.json, report.csv, matches.csv, and PNG figures.

    Returns the JSON path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    payload = {
        "recalls": {f"{k:g}": v for k, v in sorted(report.recalls.items())},
        "ap": report.ap,
        "ap_k": report.ap_k,
        "iou_mode": report.iou_mode,
        "n_ground_truth": report.n_ground_truth,
        "n_detections": report.n_detections,
        "per_gt_iou": {str(g): v for g, v in sorted(report.per_gt_iou.items())},
        "matches": [
            {"gt_id": g, "detection_id": d, "iou": v} for g, d, v in report.matches
        ],
        "params": config.to_dict(),
    }
    if timings:
        payload["timings_s"] = {k: round(v, 4) for k, v in timings.items()}
    if energy_trace:
        payload["energy_trace"] = list(energy_trace)
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    with open(out / "report.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for k in sorted(report.recalls):
            w.writerow([f"recall@{k:g}", f"{report.recalls[k]:.2f}"])
        w.writerow([f"ap@{report.ap_k:g}", f"{report.ap:.4f}"])
        w.writerow(["n_ground_truth", report.n_ground_truth])
        w.writerow(["n_detections", report.n_detections])

    with open(out / "matches.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["gt_id", "detection_id", "iou"])
        for g, d, v in report.matches:
            w.writerow([g, d if d >= 0 else "", f"{v:.4f}"])

    if figures:
        _figure_pr_curve(out / "pr_curve.png", report)
        _figure_recall_vs_k(out / "recall_vs_k.png", report)
        _figure_iou_per_gt(out / "iou_per_gt.png", report)
        if energy_trace:
            _figure_energy_trace(out / "energy_trace.png", energy_trace)
    return out / "report.json"


def _figure_pr_curve(path, report: EvalReport):
    fig, ax = _fig()
    precision, recall = report.pr_curve
    if len(precision):
        ax.step([0.0] + list(recall), [precision[0]] + list(precision), where="post")
        ax.plot(recall, precision, "o", markersize=3)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.05)
    ax.set_title(f"PR curve (AP@{report.ap_k:g} = {report.ap:.3f})")
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def _figure_recall_vs_k(path, report: EvalReport):
    fig, ax = _fig()
    ks = sorted(report.recalls)
    ax.plot(ks, [report.recalls[k] for k in ks], "o-")
    ax.set_xlabel("IoU threshold k")
    ax.set_ylabel("recall@k (%)")
    ax.set_ylim(-2, 105)
    ax.set_title("recall vs IoU threshold")
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def _figure_iou_per_gt(path, report: EvalReport):
    fig, ax = _fig()
    ids = sorted(report.per_gt_iou)
    vals = [report.per_gt_iou[i] for i in ids]
    ax.bar(range(len(ids)), vals)
    ax.set_xticks(range(len(ids)))
    ax.set_xticklabels([str(i) for i in ids])
    ax.axhline(0.5, color="gray", linestyle="--", linewidth=1)
    ax.set_xlabel("ground-truth instance")
    ax.set_ylabel("matched IoU")
    ax.set_ylim(0, 1.05)
    ax.set_title("per-instance matched IoU")
    _save(fig, path)


def _figure_energy_trace(path, trace):
    fig, ax = _fig()
    ax.plot(range(len(trace)), trace, "o-")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("energy")
    ax.set_title("cut-pursuit energy descent")
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def write_sweep_report(out_dir, param: str, rows, figures: bool = True) -> Path:
    """Consolidated sweep table (JSON + CSV) plus a metric-vs-value figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps({"param": param, "rows": rows}, indent=2,
                                               sort_keys=True) + "\n")

    ks = sorted({k for row in rows for k in row.get("recalls", {})})
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([param] + [f"recall@{k:g}" for k in ks] + ["ap", "n_detections"])
        for row in rows:
            recs = row.get("recalls", {})
            w.writerow(
                [f"{row['value']:g}"]
                + [f"{recs[k]:.2f}" if k in recs else "" for k in ks]
                + [f"{row['ap']:.4f}" if "ap" in row else "", row["n_detections"]]
            )

    if figures and ks:
        fig, ax = _fig()
        xs = [row["value"] for row in rows]
        for k in ks:
            ax.plot(xs, [row["recalls"].get(k, np.nan) for row in rows], "o-",
                    label=f"recall@{k:g}")
        ax2 = ax.twinx()
        aps = [row.get("ap", np.nan) for row in rows]
        ax2.plot(xs, aps, "s--", color="gray", label="AP")
        ax2.set_ylabel("AP")
        ax2.set_ylim(-0.02, 1.05)
        ax.set_xlabel(param)
        ax.set_ylabel("recall (%)")
        ax.set_ylim(-2, 105)
        ax.set_title(f"metrics vs {param}")
        ax.grid(True, alpha=0.3)
        ax.legend(loc="lower left")
        _save(fig, out / "sweep_metrics.png")
    return out / "sweep.json"
