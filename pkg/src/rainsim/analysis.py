"""Simulation-fidelity gaps and detection precision/recall."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ArgumentError, LabelError
from .pointcloud import NoiseLabel, PointCloud

CATEGORIES = ("noise", "clear", "all")


@dataclass
class GapReport:
    intensity_gap: dict = field(default_factory=dict)
    points_gap: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "intensity_gap": dict(self.intensity_gap),
            "points_gap": [{"range_lo": lo, "range_hi": hi, "gap": g} for (lo, hi), g in self.points_gap],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "key", "range_lo", "range_hi", "value"])
        for cat in CATEGORIES:
            v = self.intensity_gap.get(cat)
            w.writerow(["intensity_gap", cat, "", "", "" if v is None else repr(v)])
        for (lo, hi), g in self.points_gap:
            w.writerow(["points_gap", "", repr(lo), repr(hi), repr(g)])
        return buf.getvalue()


def _category_mask(cloud: PointCloud, cat: str) -> np.ndarray:
    if cat == "all":
        return np.ones(len(cloud), bool)
    if cat == "noise":
        return cloud.labels == NoiseLabel.RAIN_NOISE
    return cloud.labels == NoiseLabel.CLEAR


def intensity_gap(real: Sequence[PointCloud], sim: Sequence[PointCloud]) -> dict:
    """|mean real intensity - mean sim intensity| per category, pooled over frames.

    A category with no points on either side maps to ``None``.
    """
    real, sim = list(real), list(sim)
    for c in real + sim:
        if len(c) and not c.is_labeled:
            raise LabelError(f"frame {c.frame_id!r} is not labelled")
    out = {}
    for cat in CATEGORIES:
        r = np.concatenate([c.intensity[_category_mask(c, cat)] for c in real]) if real else np.zeros(0)
        s = np.concatenate([c.intensity[_category_mask(c, cat)] for c in sim]) if sim else np.zeros(0)
        out[cat] = None if len(r) == 0 or len(s) == 0 else float(abs(r.mean() - s.mean()))
    return out


def points_gap_by_range(
    real: Sequence[PointCloud], sim: Sequence[PointCloud], bin_width: float = 10.0, origin=(0.0, 0.0, 0.0)
) -> list:
    """Signed per-frame mean point count, real minus sim, in range bins [k*w, (k+1)*w)."""
    if not bin_width > 0:
        raise ArgumentError("bin_width must be > 0")
    real, sim = list(real), list(sim)

    def counts(corpus):
        if not corpus:
            return np.zeros(0)
        bins = [np.floor(c.ranges(origin) / bin_width).astype(np.int64) for c in corpus]
        n = max((int(b.max()) + 1 for b in bins if len(b)), default=0)
        total = np.zeros(n)
        for b in bins:
            total += np.bincount(b, minlength=n)[:n]
        return total / len(corpus)

    cr, cs = counts(real), counts(sim)
    n = max(len(cr), len(cs))
    cr = np.pad(cr, (0, n - len(cr)))
    cs = np.pad(cs, (0, n - len(cs)))
    return [((k * bin_width, (k + 1) * bin_width), float(cr[k] - cs[k])) for k in range(n)]


def gap_report(real, sim, bin_width: float = 10.0, origin=(0.0, 0.0, 0.0)) -> GapReport:
    return GapReport(intensity_gap(real, sim), points_gap_by_range(real, sim, bin_width, origin))


def _bev(box) -> np.ndarray:
    b = np.asarray(box, dtype=np.float64).reshape(-1, 7)
    if (b[:, 3:5] <= 0).any():
        raise ArgumentError("boxes need positive length and width")
    return b[:, [0, 1, 3, 4, 6]]


def iou_bev(a, b) -> float:
    """IoU of the yaw-rotated ground-plane rectangles of two 7-dof boxes."""
    return float(_kernels.iou_bev_matrix(_bev(a), _bev(b))[0, 0])


def iou_bev_matrix(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64).reshape(-1, 7), np.asarray(b, dtype=np.float64).reshape(-1, 7)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    return _kernels.iou_bev_matrix(_bev(a), _bev(b))


@dataclass
class DetectionMatch:
    threshold: float
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    def __add__(self, other: "DetectionMatch") -> "DetectionMatch":
        if not math.isclose(self.threshold, other.threshold):
            raise ArgumentError("cannot add matches at different thresholds")
        return DetectionMatch(self.threshold, self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
        }


def greedy_match(iou: np.ndarray, confidences, threshold: float) -> list[tuple[int, int]]:
    """Confidence-ordered greedy assignment; returns (pred, gt) index pairs."""
    order = np.argsort(-np.asarray(confidences, dtype=np.float64), kind="stable")
    taken = np.zeros(iou.shape[1], bool)
    pairs = []
    for p in order:
        cand = np.where(taken | (iou[p] < threshold), -np.inf, iou[p])
        if iou.shape[1] == 0 or not np.isfinite(cand).any():
            continue
        g = int(np.argmax(cand))  # first max, i.e. lowest gt index on ties
        taken[g] = True
        pairs.append((int(p), g))
    return pairs


def precision_recall(preds, gts, thresholds=(0.3, 0.5, 0.7)) -> list[DetectionMatch]:
    """``preds``: sequence of (box7, confidence); ``gts``: sequence of box7."""
    preds = list(preds)
    boxes = np.array([b for b, _ in preds], dtype=np.float64).reshape(-1, 7)
    conf = np.array([c for _, c in preds], dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64).reshape(-1, 7)
    iou = iou_bev_matrix(boxes, gts)
    out = []
    for thr in thresholds:
        if not 0 < thr <= 1:
            raise ArgumentError(f"IoU threshold {thr} outside (0, 1]")
        tp = len(greedy_match(iou, conf, thr))
        out.append(DetectionMatch(float(thr), tp, len(boxes) - tp, len(gts) - tp))
    return out
