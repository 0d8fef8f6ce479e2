"""Forward-only loss kernels for sunny-to-rainy knowledge distillation.

* instance distillation weighted by density x shape similarity of each
  ground-truth object's sunny and rainy point sets
* response distillation on teacher-confident foreground positions
* a confidence penalty for predicted boxes dominated by rain-noise points
* the weighted sum of supervision and distillation terms

Everything here is plain numpy; gradients are the training framework's job.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ArgumentError, FormatError, LabelError
from .pointcloud import NoiseLabel, PointCloud


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 15.0
    lambda2: float = 0.2
    threshold: float = 0.5
    eta1: float = 2.0
    eta2: float = 0.5
    eta3: float = 2.0
    epsilon: float = 1e-6

    def __post_init__(self):
        if not all(math.isfinite(v) for v in asdict(self).values()):
            raise ArgumentError("loss weights must be finite")
        if not self.epsilon > 0:
            raise ArgumentError("epsilon must be > 0")

    def replace(self, **changes) -> "LossWeights":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise FormatError(f"unknown loss-weight keys: {sorted(unknown)}")
        try:
            values = {k: float(v) for k, v in d.items()}
        except (TypeError, ValueError) as exc:
            raise FormatError(f"invalid loss weights: {exc}") from None
        return cls(**values)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "LossWeights":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


DEFAULT_WEIGHTS = LossWeights()

_BELOW_ONE = math.nextafter(1.0, 0.0)
_TINY = math.ulp(0.0)


@dataclass
class InstancePair:
    """One ground-truth object seen in sunny and rainy conditions."""

    box_id: object
    pc_sunny: np.ndarray
    pc_rainy: np.ndarray
    feat_sunny: np.ndarray
    feat_rainy: np.ndarray

    def __post_init__(self):
        self.pc_sunny = np.asarray(self.pc_sunny, dtype=np.float64).reshape(-1, 3)
        self.pc_rainy = np.asarray(self.pc_rainy, dtype=np.float64).reshape(-1, 3)
        self.feat_sunny = np.asarray(self.feat_sunny, dtype=np.float64).reshape(-1)
        self.feat_rainy = np.asarray(self.feat_rainy, dtype=np.float64).reshape(-1)
        if self.feat_sunny.shape != self.feat_rainy.shape:
            raise ArgumentError(
                f"instance {self.box_id!r}: feature dimensions differ ({len(self.feat_sunny)} vs {len(self.feat_rainy)})"
            )

    @property
    def d_s(self) -> int:
        return len(self.pc_sunny)

    @property
    def d_r(self) -> int:
        return len(self.pc_rainy)

    @classmethod
    def from_dict(cls, d: dict) -> "InstancePair":
        try:
            return cls(d.get("box_id"), d["pc_sunny"], d["pc_rainy"], d["feat_sunny"], d["feat_rainy"])
        except KeyError as exc:
            raise FormatError(f"instance pair missing key {exc}") from None

    def to_dict(self) -> dict:
        return {
            "box_id": self.box_id,
            "pc_sunny": self.pc_sunny.tolist(),
            "pc_rainy": self.pc_rainy.tolist(),
            "feat_sunny": self.feat_sunny.tolist(),
            "feat_rainy": self.feat_rainy.tolist(),
        }


@dataclass
class PredictionSet:
    """Teacher/student dense outputs at foreground positions plus final detections."""

    cls_teacher: np.ndarray
    cls_student: np.ndarray
    box_teacher: np.ndarray
    box_student: np.ndarray
    det_boxes: list = field(default_factory=list)

    def __post_init__(self):
        self.cls_teacher = np.asarray(self.cls_teacher, dtype=np.float64).reshape(-1)
        self.cls_student = np.asarray(self.cls_student, dtype=np.float64).reshape(-1)
        self.box_teacher = np.asarray(self.box_teacher, dtype=np.float64).reshape(-1, 7)
        self.box_student = np.asarray(self.box_student, dtype=np.float64).reshape(-1, 7)
        self.det_boxes = [(np.asarray(b, dtype=np.float64).reshape(7), float(c)) for b, c in self.det_boxes]
        if self.cls_teacher.shape != self.cls_student.shape:
            raise ArgumentError("teacher and student logits must be aligned")
        if self.box_teacher.shape != self.box_student.shape:
            raise ArgumentError("teacher and student boxes must be aligned")
        if any(not 0.0 <= c <= 1.0 for _, c in self.det_boxes):
            raise ArgumentError("detection confidences must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionSet":
        try:
            dets = [(r["box"], r["confidence"]) for r in d.get("det_boxes", [])]
            return cls(d["cls_teacher"], d["cls_student"], d["box_teacher"], d["box_student"], dets)
        except (KeyError, TypeError) as exc:
            raise FormatError(f"invalid prediction set: {exc}") from None


# -- instance distillation -------------------------------------------------


def density_similarity(d_s: float, d_r: float, eps: float = 1e-6) -> float:
    if d_s < 0 or d_r < 0:
        raise ArgumentError("point counts must be >= 0")
    # tanh rounds to 1.0 beyond ~19; keep the value inside [0, 1)
    return min(math.tanh(min(d_s, d_r) / (abs(d_s - d_r) + eps)), _BELOW_ONE)


def chamfer_distance(a, b) -> float:
    """Symmetric Chamfer distance: sum of the two mean nearest-neighbour Euclidean distances."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ArgumentError("Chamfer distance needs two non-empty point sets")
    return float(_kernels.nn_mean_dist(a, b) + _kernels.nn_mean_dist(b, a))


def shape_similarity(a, b) -> float:
    """``1 - tanh(d_CD)``, evaluated as ``2 e / (1 + e)`` with ``e = exp(-2 d_CD)`` so it stays > 0."""
    e = math.exp(-2.0 * chamfer_distance(a, b))
    return max(2.0 * e / (1.0 + e), _TINY)


def instance_similarity(pair: InstancePair, eps: float = 1e-6) -> float:
    # an object with no points on either side carries no shape evidence
    if pair.d_r == 0 or pair.d_s == 0:
        return 0.0
    return density_similarity(pair.d_s, pair.d_r, eps) * shape_similarity(pair.pc_sunny, pair.pc_rainy)


def smooth_l1(x, y) -> float:
    """Mean elementwise smooth-L1 with the kink at |d| = 1."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ArgumentError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) == 0:
        return 0.0
    d = np.abs(x - y)
    return float(np.where(d < 1.0, 0.5 * d * d, d - 0.5).mean())


def weighted_instance_loss(similarities, feats_sunny, feats_rainy) -> float:
    """Mean of ``S_i * smooth_l1(feat_sunny_i, feat_rainy_i)`` over instances."""
    similarities = list(similarities)
    if not similarities:
        return 0.0
    terms = [s * smooth_l1(fs, fr) for s, fs, fr in zip(similarities, feats_sunny, feats_rainy, strict=True)]
    return float(sum(terms) / len(terms))


def awid_loss(pairs: Sequence[InstancePair], eps: float = 1e-6) -> float:
    pairs = list(pairs)
    return weighted_instance_loss(
        [instance_similarity(p, eps) for p in pairs],
        [p.feat_sunny for p in pairs],
        [p.feat_rainy for p in pairs],
    )


# -- response distillation -------------------------------------------------


def _sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def prd_cls_loss(preds: PredictionSet, threshold: float = 0.5) -> float:
    """Squared logit error on positions where the teacher is confident, averaged over all positions."""
    cs, cr = preds.cls_teacher, preds.cls_student
    if len(cs) == 0:
        return 0.0
    mask = _sigmoid(cs) >= threshold
    return float(np.sum(np.where(mask, (cr - cs) ** 2, 0.0)) / len(cs))


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    return np.where(w <= -np.pi, w + 2 * np.pi, w)


def box_residuals(b_student, b_teacher) -> np.ndarray:
    d = np.asarray(b_student, dtype=np.float64).reshape(-1, 7) - np.asarray(b_teacher, dtype=np.float64).reshape(-1, 7)
    d[:, 6] = wrap_angle(d[:, 6])
    return d


def prd_reg_loss(preds: PredictionSet) -> float:
    d = box_residuals(preds.box_student, preds.box_teacher)
    if d.size == 0:
        return 0.0
    return smooth_l1(d, np.zeros_like(d))


def prd_loss(preds: PredictionSet, weights: LossWeights = DEFAULT_WEIGHTS) -> float:
    return combine_prd(prd_cls_loss(preds, weights.threshold), prd_reg_loss(preds), weights)


def combine_prd(cls_loss: float, reg_loss: float, weights: LossWeights = DEFAULT_WEIGHTS) -> float:
    return weights.lambda1 * cls_loss + weights.lambda2 * reg_loss


# -- noise-aware prediction correction ------------------------------------


def box_contains(box, xyz) -> np.ndarray:
    """Boolean mask of points inside a 7-dof box (x, y, z, l, w, h, yaw), faces inclusive."""
    x, y, z, l, w, h, yaw = np.asarray(box, dtype=np.float64).reshape(7)
    p = np.asarray(xyz, dtype=np.float64).reshape(-1, 3) - (x, y, z)
    c, s = math.cos(yaw), math.sin(yaw)
    lx = c * p[:, 0] + s * p[:, 1]
    ly = -s * p[:, 0] + c * p[:, 1]
    return (np.abs(lx) <= l / 2) & (np.abs(ly) <= w / 2) & (np.abs(p[:, 2]) <= h / 2)


def points_in_box(box, cloud: PointCloud) -> tuple[int, int]:
    """(noise count, clear count) of labelled points inside ``box``."""
    if len(cloud) == 0:
        return 0, 0
    inside = box_contains(box, cloud.xyz)
    lab = cloud.labels[inside]
    if (lab == NoiseLabel.UNLABELED).any():
        raise LabelError("points_in_box needs a labelled cloud")
    return int((lab == NoiseLabel.RAIN_NOISE).sum()), int((lab == NoiseLabel.CLEAR).sum())


def noise_ratio(k_noise: float, k_clear: float, eps: float = 1e-6) -> float:
    if k_noise < 0 or k_clear < 0:
        raise ArgumentError("counts must be >= 0")
    return k_noise / (k_clear + eps)


def napc_loss(det_boxes, cloud: PointCloud, eps: float = 1e-6) -> float:
    det_boxes = list(det_boxes)
    if not det_boxes:
        return 0.0
    if len(cloud) and not cloud.is_labeled:
        raise LabelError("napc_loss needs a labelled cloud")
    total = 0.0
    for box, conf in det_boxes:
        if not 0.0 <= conf <= 1.0:
            raise ArgumentError(f"confidence {conf} outside [0, 1]")
        total += math.tanh(noise_ratio(*points_in_box(box, cloud), eps)) * conf
    return total / len(det_boxes)


# -- total -----------------------------------------------------------------


def total_loss(sup_cls: float, sup_reg: float, ins: float, rsp: float, napc: float, weights: LossWeights = DEFAULT_WEIGHTS) -> float:
    vals = (sup_cls, sup_reg, ins, rsp, napc)
    if not all(math.isfinite(v) for v in vals):
        raise ArgumentError(f"loss components must be finite, got {vals}")
    return sup_cls + sup_reg + weights.eta1 * ins + weights.eta2 * rsp + weights.eta3 * napc


def loss_report(
    pairs: Sequence[InstancePair],
    preds: PredictionSet,
    cloud: PointCloud | None = None,
    weights: LossWeights = DEFAULT_WEIGHTS,
    sup_cls: float = 0.0,
    sup_reg: float = 0.0,
) -> dict:
    """All distillation terms as a JSON-ready map {ins, rsp_cls, rsp_reg, rsp, napc, total}."""
    ins = awid_loss(pairs, weights.epsilon)
    rsp_cls = prd_cls_loss(preds, weights.threshold)
    rsp_reg = prd_reg_loss(preds)
    rsp = combine_prd(rsp_cls, rsp_reg, weights)
    napc = napc_loss(preds.det_boxes, cloud if cloud is not None else PointCloud.empty(), weights.epsilon)
    return {
        "ins": ins,
        "rsp_cls": rsp_cls,
        "rsp_reg": rsp_reg,
        "rsp": rsp,
        "napc": napc,
        "total": total_loss(sup_cls, sup_reg, ins, rsp, napc, weights),
    }
