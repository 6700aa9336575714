"""Detection evaluation: per-class AP and mAP at a fixed IoU threshold.

AP is the 101-point interpolated area under the precision-recall curve.
Detections are matched to ground truth greedily by confidence with
one-to-one assignment at IoU >= threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

from .pipeline import Detection, iou


@dataclass(frozen=True)
class GroundTruthBox:
    class_id: int
    box: tuple[float, float, float, float]


def average_precision(
    detections: list[list[Detection]],
    truth: list[list[GroundTruthBox]],
    iou_threshold: float = 0.5,
) -> tuple[dict[int, float], float]:
    """Per-class AP plus mAP over all classes with at least one ground
    truth box. ``detections[i]`` and ``truth[i]`` describe image i.
    """
    if len(detections) != len(truth):
        raise ValueError(
            f"{len(detections)} detection lists vs {len(truth)} truth lists"
        )
    classes = sorted({g.class_id for img in truth for g in img})
    ap: dict[int, float] = {}
    for cls in classes:
        ap[cls] = _class_ap(detections, truth, cls, iou_threshold)
    mean = sum(ap.values()) / len(ap) if ap else 0.0
    return ap, mean


def _class_ap(detections, truth, cls: int, iou_threshold: float) -> float:
    n_truth = sum(1 for img in truth for g in img if g.class_id == cls)
    if n_truth == 0:
        return 0.0

    # (confidence, image index, within-image index) for deterministic order
    dets = [
        (d.confidence, i, j)
        for i, img in enumerate(detections)
        for j, d in enumerate(img)
        if d.class_id == cls
    ]
    dets.sort(key=lambda t: (-t[0], t[1], t[2]))

    matched: dict[int, set[int]] = {i: set() for i in range(len(truth))}
    tp = []
    for conf, i, j in dets:
        det = detections[i][j]
        best_iou, best_g = 0.0, -1
        for g, gt in enumerate(truth[i]):
            if gt.class_id != cls or g in matched[i]:
                continue
            v = iou(det.box, gt.box)
            if v > best_iou:
                best_iou, best_g = v, g
        if best_g >= 0 and best_iou >= iou_threshold:
            matched[i].add(best_g)
            tp.append(1)
        else:
            tp.append(0)

    precisions, recalls = [], []
    cum_tp = cum_fp = 0
    for hit in tp:
        cum_tp += hit
        cum_fp += 1 - hit
        precisions.append(cum_tp / (cum_tp + cum_fp))
        recalls.append(cum_tp / n_truth)

    total = 0.0
    for k in range(101):
        r = k / 100.0
        best = 0.0
        for p, rec in zip(precisions, recalls):
            if rec >= r - 1e-12 and p > best:
                best = p
        total += best
    return total / 101.0
