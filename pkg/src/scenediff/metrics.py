"""Detection metrics: point-set IoU, recall at IoU thresholds, AP.

Predictions and ground truth both live as rescan point-index sets, so
point-set IoU is exact; axis-aligned box IoU is available as an
alternative for comparability with box-based evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import PointCloud
from .detections import DetectionSet
from .io import GroundTruth

DEFAULT_KS = (0.20, 0.25, 0.50)


@dataclass(frozen=True)
class EvalReport:
    recalls: Dict[float, float]
    ap: float
    ap_k: float
    per_gt_iou: Dict[int, float]
    matches: List[Tuple[int, int, float]]  # (gt instance_id, detection id, iou)
    n_ground_truth: int
    n_detections: int
    pr_curve: Tuple[Tuple[float, ...], Tuple[float, ...]] = ((), ())
    iou_mode: str = "point"


def iou(pred, gt) -> float:
    """|pred & gt| / |pred | gt| over point index sets; both empty -> 0."""
    a = set(int(i) for i in pred)
    b = set(int(i) for i in gt)
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union


def box_iou(pred_idx, gt_idx, cloud: PointCloud) -> float:
    """Volume IoU of the axis-aligned bounding boxes of two point sets."""
    boxes = []
    for idx in (pred_idx, gt_idx):
        idx = np.asarray(list(idx), dtype=np.int64)
        if len(idx) == 0:
            return 0.0
        pts = cloud.positions[idx]
        boxes.append((pts.min(axis=0), pts.max(axis=0)))
    (alo, ahi), (blo, bhi) = boxes
    inter = np.prod(np.clip(np.minimum(ahi, bhi) - np.maximum(alo, blo), 0.0, None))
    va = np.prod(ahi - alo)
    vb = np.prod(bhi - blo)
    union = va + vb - inter
    if union <= 0:
        return 1.0 if inter >= 0 else 0.0
    return float(inter / union)


def _iou_table(dets: DetectionSet, gt: GroundTruth, cloud: Optional[PointCloud], mode: str):
    table = {}
    for inst in gt.changed_instances:
        for det in dets.detections:
            if mode == "box":
                val = box_iou(det.point_indices, inst["point_indices"], cloud)
            else:
                val = iou(det.point_indices, inst["point_indices"])
            table[(inst["instance_id"], det.id)] = val
    return table


def match_detections(dets: DetectionSet, gt: GroundTruth, cloud=None, mode: str = "point"):
    """Greedy one-to-one matching in descending IoU.

    Ties break by lower ground-truth instance id, then lower detection id,
    so the matching is deterministic. Returns (gt_id, det_id, iou) triples
    for every matched ground-truth instance (possibly at IoU 0 if nothing
    overlaps).
    """
    table = _iou_table(dets, gt, cloud, mode)
    pairs = sorted(table.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1]))
    taken_gt = set()
    taken_det = set()
    matches = []
    for (gt_id, det_id), val in pairs:
        if gt_id in taken_gt or det_id in taken_det:
            continue
        taken_gt.add(gt_id)
        taken_det.add(det_id)
        matches.append((gt_id, det_id, val))
    for inst in gt.changed_instances:
        if inst["instance_id"] not in taken_gt:
            matches.append((inst["instance_id"], -1, 0.0))
    return matches


def recall_at(dets: DetectionSet, gt: GroundTruth, k: float, cloud=None, mode: str = "point") -> float:
    """Percentage of ground-truth instances whose matched IoU exceeds k."""
    n = len(gt.changed_instances)
    if n == 0:
        raise ValueError("no ground truth instances to evaluate")
    matches = match_detections(dets, gt, cloud, mode)
    hits = sum(1 for _, det_id, val in matches if det_id >= 0 and val > k)
    return 100.0 * hits / n


def average_precision(dets: DetectionSet, gt: GroundTruth, k: float = 0.25,
                      cloud=None, mode: str = "point"):
    """AP at IoU threshold k with all-point (VOC-style) interpolation.

    Detections are visited in descending score (ties to the lower id);
    each claims the best-IoU unclaimed ground-truth instance, counting as
    a true positive iff that IoU exceeds k. Returns (ap, precision,
    recall) with the raw curve arrays for plotting.
    """
    n_gt = len(gt.changed_instances)
    order = sorted(dets.detections, key=lambda d: (-d.score, d.id))
    if not order or n_gt == 0:
        return 0.0, np.zeros(0), np.zeros(0)
    table = _iou_table(dets, gt, cloud, mode)
    claimed = set()
    tp = np.zeros(len(order))
    for rank, det in enumerate(order):
        cand = [
            (table[(inst["instance_id"], det.id)], inst["instance_id"])
            for inst in gt.changed_instances
            if inst["instance_id"] not in claimed
        ]
        if not cand:
            continue
        best_iou, best_gt = max(cand, key=lambda t: (t[0], -t[1]))
        if best_iou > k:
            claimed.add(best_gt)
            tp[rank] = 1.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(order) + 1)
    recall = cum_tp / n_gt
    # Interpolated precision envelope over the full recall range.
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    ap = float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))
    return ap, precision, recall


def evaluate(
    dets: DetectionSet,
    gt: GroundTruth,
    ks=DEFAULT_KS,
    ap_k: float = 0.25,
    cloud: Optional[PointCloud] = None,
    mode: str = "point",
) -> EvalReport:
    if mode not in ("point", "box"):
        raise ValueError(f"unknown IoU mode '{mode}'")
    if mode == "box" and cloud is None:
        raise ValueError("box IoU needs the cloud for coordinates")
    matches = match_detections(dets, gt, cloud, mode)
    recalls = {float(k): recall_at(dets, gt, float(k), cloud, mode) for k in ks}
    ap, precision, recall = average_precision(dets, gt, ap_k, cloud, mode)
    return EvalReport(
        recalls=recalls,
        ap=ap,
        ap_k=float(ap_k),
        per_gt_iou={gt_id: val for gt_id, _, val in matches},
        matches=[m for m in matches if m[1] >= 0],
        n_ground_truth=len(gt.changed_instances),
        n_detections=len(dets),
        pr_curve=(tuple(precision.tolist()), tuple(recall.tolist())),
        iou_mode=mode,
    )
