"""Box IoU and frame-level mean average precision.

Detections are ranked by descending score (ties broken by frame id, then
insertion order). A detection counts as a true positive at rank k when it
can be matched, within its own frame, to a ground-truth box of its class at
IoU >= threshold; matching is kept maximal at every rank by augmenting-path
reassignment, so the true-positive count at each rank equals the maximum
bipartite matching over the top-k detections. Average precision integrates
the precision envelope over recall (all-point interpolation); mAP averages
classes that have at least one ground-truth box.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError
from .model.detector import Detection

Box = tuple[float, float, float, float]


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two (x1, y1, x2, y2) boxes."""
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = max(0.0, ix2 - ix1), max(0.0, iy2 - iy1)
    inter = iw * ih
    if inter == 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


@dataclass
class MapReport:
    iou_threshold: float
    per_class_ap: dict[int, float] = field(default_factory=dict)
    n_gt: dict[int, int] = field(default_factory=dict)
    n_det: dict[int, int] = field(default_factory=dict)

    @property
    def mean_ap(self) -> float:
        if not self.per_class_ap:
            return 0.0
        return float(np.mean(list(self.per_class_ap.values())))

    def to_json(self) -> str:
        return json.dumps(
            {
                "iou_threshold": self.iou_threshold,
                "mAP": self.mean_ap,
                "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
                "n_gt": {str(k): v for k, v in sorted(self.n_gt.items())},
                "n_det": {str(k): v for k, v in sorted(self.n_det.items())},
            },
            indent=2,
        )


def _augment(det: int, adj: list[list[int]], match_of_gt: dict[int, int], seen: set[int]) -> bool:
    """Try to match `det`, reassigning earlier matches along an augmenting path."""
    for gt in adj[det]:
        if gt in seen:
            continue
        seen.add(gt)
        if gt not in match_of_gt or _augment(match_of_gt[gt], adj, match_of_gt, seen):
            match_of_gt[gt] = det
            return True
    return False


def average_precision_from_tp(tp_cum: np.ndarray, n_gt: int) -> float:
    """All-point interpolated AP from the cumulative true-positive counts."""
    if n_gt == 0:
        return 0.0
    ranks = np.arange(1, tp_cum.size + 1, dtype=np.float64)
    recall = tp_cum / n_gt
    precision = tp_cum / ranks
    mrec = np.concatenate(([0.0], recall))
    mpre = np.concatenate(([0.0], precision))
    for i in range(mpre.size - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    return float(np.sum((mrec[1:] - mrec[:-1]) * mpre[1:]))


def frame_map(
    detections: dict[int, list[Detection]],
    ground_truth: dict[int, list[tuple[int, Box]]],
    iou_threshold: float = 0.5,
) -> MapReport:
    """Frame-level mAP. Ground truth maps frame_id -> [(class_id, box)]."""
    report = MapReport(iou_threshold=iou_threshold)
    classes = sorted({c for boxes in ground_truth.values() for c, _ in boxes})
    for cls in classes:
        gt_by_frame = {
            fid: [box for c, box in boxes if c == cls] for fid, boxes in ground_truth.items()
        }
        n_gt = sum(len(b) for b in gt_by_frame.values())
        dets: list[tuple[float, int, int, Box]] = []
        for fid in sorted(detections):
            for i, d in enumerate(detections[fid]):
                if d.class_id == cls:
                    dets.append((d.score, fid, i, d.box))
        dets.sort(key=lambda r: (-r[0], r[1], r[2]))
        report.n_gt[cls] = n_gt
        report.n_det[cls] = len(dets)

        # per-frame incremental maximum matching in rank order
        adj_by_frame: dict[int, list[list[int]]] = {}
        match_by_frame: dict[int, dict[int, int]] = {}
        tp_cum = np.zeros(len(dets), dtype=np.int64)
        matched = 0
        for k, (_, fid, _, box) in enumerate(dets):
            gts = gt_by_frame.get(fid, [])
            adj = adj_by_frame.setdefault(fid, [])
            cand = [g for g, gbox in enumerate(gts) if iou(box, gbox) >= iou_threshold]
            det_idx = len(adj)
            adj.append(cand)
            if cand and _augment(det_idx, adj, match_by_frame.setdefault(fid, {}), set()):
                matched += 1
            tp_cum[k] = matched
        report.per_class_ap[cls] = average_precision_from_tp(tp_cum, n_gt)
    return report


def attribution_counts(
    detections: dict[int, list[Detection]],
    boxes_by_key: dict[int, list[tuple[int, Box]]],
    iou_threshold: float = 0.5,
) -> tuple[int, int]:
    """How many detections land on the given boxes: (matched, total).

    Used to check moving-object semantics: detections attributed to static
    distractors should be a small fraction of all detections.
    """
    matched = 0
    total = 0
    for key, dets in detections.items():
        boxes = boxes_by_key.get(key, [])
        for d in dets:
            total += 1
            if any(iou(d.box, b) >= iou_threshold for _, b in boxes):
                matched += 1
    return matched, total


# -- detection CSV export -------------------------------------------------------

DETECTIONS_HEADER = "frame_id,class_id,score,x1,y1,x2,y2"


def write_detections(dets_by_frame: dict[int, list[Detection]], path: str | Path) -> None:
    lines = [DETECTIONS_HEADER]
    for fid in sorted(dets_by_frame):
        for d in dets_by_frame[fid]:
            x1, y1, x2, y2 = d.box
            lines.append(f"{fid},{d.class_id},{d.score:.6f},{x1:.2f},{y1:.2f},{x2:.2f},{y2:.2f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_detections(path: str | Path) -> dict[int, list[Detection]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != DETECTIONS_HEADER:
        raise ParseError(1, f"expected header '{DETECTIONS_HEADER}'")
    out: dict[int, list[Detection]] = {}
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ParseError(ln, f"expected 7 fields, found {len(parts)}")
        fid = int(parts[0])
        out.setdefault(fid, []).append(
            Detection(int(parts[1]), tuple(float(v) for v in parts[3:7]), float(parts[2]))
        )
    return out
