"""Point-cloud data model, file I/O and beam (ring/column) indexing.

Clouds are stored column-wise as numpy arrays: ``xyz`` (N, 3) float64,
``intensity`` (N,) float64 and ``labels`` (N,) int8. Binary files hold
little-endian float32 records:

* ``bin4``: x, y, z, intensity (16 bytes per point)
* ``bin5``: x, y, z, intensity, label (20 bytes per point; label 0.0 = clear,
  1.0 = rain noise)

CSV files carry a header ``x,y,z,intensity[,label]``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, DegeneratePointError, FormatError, ValidationError

FORMATS = ("bin4", "bin5", "csv")
_RECORD_FIELDS = {"bin4": 4, "bin5": 5}


class NoiseLabel(IntEnum):
    UNLABELED = -1
    CLEAR = 0
    RAIN_NOISE = 1


@dataclass(frozen=True)
class Point:
    x: float
    y: float
    z: float
    intensity: float = 0.0
    noise_label: NoiseLabel = NoiseLabel.UNLABELED

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValidationError(f"non-finite coordinate in {self!r}")
        if not math.isfinite(self.intensity) or self.intensity < 0:
            raise ValidationError(f"intensity must be finite and >= 0, got {self.intensity}")

    @property
    def xyz(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


class PointCloud:
    """Ordered LiDAR returns with per-point intensity and noise label."""

    __slots__ = ("xyz", "intensity", "labels", "frame_id")

    def __init__(self, xyz, intensity=None, labels=None, frame_id: str = ""):
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        n = len(xyz)
        if intensity is None:
            intensity = np.zeros(n)
        intensity = np.asarray(intensity, dtype=np.float64).reshape(-1)
        if labels is None:
            labels = np.full(n, NoiseLabel.UNLABELED, dtype=np.int8)
        labels = np.asarray(labels, dtype=np.int8).reshape(-1)
        if len(intensity) != n or len(labels) != n:
            raise ArgumentError(
                f"column lengths differ: xyz={n}, intensity={len(intensity)}, labels={len(labels)}"
            )
        _validate(xyz, intensity, labels)
        self.xyz = xyz
        self.intensity = intensity
        self.labels = labels
        self.frame_id = frame_id

    @classmethod
    def from_points(cls, points: Iterable[Point], frame_id: str = "") -> "PointCloud":
        points = list(points)
        xyz = np.array([[p.x, p.y, p.z] for p in points], dtype=np.float64).reshape(-1, 3)
        intensity = np.array([p.intensity for p in points], dtype=np.float64)
        labels = np.array([int(p.noise_label) for p in points], dtype=np.int8)
        return cls(xyz, intensity, labels, frame_id)

    @classmethod
    def empty(cls, frame_id: str = "") -> "PointCloud":
        return cls(np.zeros((0, 3)), frame_id=frame_id)

    def __len__(self) -> int:
        return len(self.xyz)

    def __getitem__(self, i: int) -> Point:
        x, y, z = self.xyz[i]
        return Point(float(x), float(y), float(z), float(self.intensity[i]), NoiseLabel(int(self.labels[i])))

    @property
    def points(self) -> list[Point]:
        return [self[i] for i in range(len(self))]

    @property
    def is_labeled(self) -> bool:
        return not np.any(self.labels == NoiseLabel.UNLABELED)

    def copy(self) -> "PointCloud":
        return PointCloud(self.xyz.copy(), self.intensity.copy(), self.labels.copy(), self.frame_id)

    def subset(self, mask_or_index) -> "PointCloud":
        return PointCloud(
            self.xyz[mask_or_index], self.intensity[mask_or_index], self.labels[mask_or_index], self.frame_id
        )

    def ranges(self, origin=(0.0, 0.0, 0.0)) -> np.ndarray:
        return np.linalg.norm(self.xyz - np.asarray(origin, dtype=np.float64), axis=1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return (
            np.array_equal(self.xyz, other.xyz)
            and np.array_equal(self.intensity, other.intensity)
            and np.array_equal(self.labels, other.labels)
        )

    def __repr__(self) -> str:
        return f"PointCloud(n={len(self)}, frame_id={self.frame_id!r})"


def _validate(xyz: np.ndarray, intensity: np.ndarray, labels: np.ndarray) -> None:
    bad = ~np.isfinite(xyz).all(axis=1)
    if bad.any():
        raise ValidationError(f"non-finite coordinate at record {int(np.argmax(bad))}")
    bad = ~np.isfinite(intensity) | (intensity < 0)
    if bad.any():
        i = int(np.argmax(bad))
        raise ValidationError(f"intensity must be finite and >= 0 at record {i}, got {intensity[i]}")
    if not np.isin(labels, (-1, 0, 1)).all():
        raise ValidationError("labels must be -1 (unlabeled), 0 (clear) or 1 (rain noise)")


def infer_format(path: str | os.PathLike) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix == ".bin5":
        return "bin5"
    if suffix in (".bin", ".bin4"):
        return "bin4"
    raise FormatError(f"cannot infer point-cloud format from {path}")


def read_pointcloud(path: str | os.PathLike, format: str | None = None) -> PointCloud:
    """Read a cloud in file order. ``format`` defaults to the one implied by the suffix."""
    format = format or infer_format(path)
    path = Path(path)
    frame_id = path.stem
    if format == "csv":
        return _read_csv(path, frame_id)
    if format not in _RECORD_FIELDS:
        raise ArgumentError(f"unknown format {format!r}; expected one of {FORMATS}")
    nfields = _RECORD_FIELDS[format]
    raw = path.read_bytes()
    record = 4 * nfields
    if len(raw) % record:
        raise FormatError(f"{path}: {len(raw)} bytes is not a multiple of the {record}-byte {format} record")
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, nfields).astype(np.float64)
    if format == "bin4":
        labels = None
    else:
        lab = data[:, 4]
        bad = ~np.isin(lab, (0.0, 1.0))
        if bad.any():
            raise FormatError(f"{path}: label field must be 0.0 or 1.0 at record {int(np.argmax(bad))}")
        labels = lab.astype(np.int8)
    return PointCloud(data[:, :3], data[:, 3], labels, frame_id)


def _read_csv(path: Path, frame_id: str) -> PointCloud:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return PointCloud.empty(frame_id)
        header = [h.strip() for h in header]
        if header not in (["x", "y", "z", "intensity"], ["x", "y", "z", "intensity", "label"]):
            raise FormatError(f"{path}: unexpected CSV header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    data = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    labels = data[:, 4].astype(np.int8) if len(header) == 5 else None
    return PointCloud(data[:, :3], data[:, 3], labels, frame_id)


def write_pointcloud(cloud: PointCloud, path: str | os.PathLike, format: str | None = None) -> None:
    format = format or infer_format(path)
    if format not in FORMATS:
        raise ArgumentError(f"unknown format {format!r}; expected one of {FORMATS}")
    if format == "bin5" and not cloud.is_labeled:
        raise ArgumentError("bin5 output requires every point to carry a clear/rain-noise label")
    if format == "csv":
        buf = io.StringIO()
        labeled = cloud.is_labeled and len(cloud) > 0
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "y", "z", "intensity"] + (["label"] if labeled else []))
        for i in range(len(cloud)):
            row = [repr(float(v)) for v in cloud.xyz[i]] + [repr(float(cloud.intensity[i]))]
            if labeled:
                row.append(str(int(cloud.labels[i])))
            writer.writerow(row)
        Path(path).write_text(buf.getvalue())
        return
    cols = [cloud.xyz, cloud.intensity[:, None]]
    if format == "bin5":
        cols.append(cloud.labels[:, None].astype(np.float64))
    data = np.hstack(cols).astype("<f4")
    Path(path).write_bytes(data.tobytes())


@dataclass(frozen=True)
class LidarConfig:
    """Sensor geometry: ring elevations, azimuth binning and range limits."""

    ring_inclinations: tuple[float, ...]
    azimuth_resolution: float
    max_range: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    min_power_override: float | None = None
    _sorted: np.ndarray = field(init=False, repr=False, compare=False)
    _order: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        inc = np.asarray(self.ring_inclinations, dtype=np.float64)
        object.__setattr__(self, "ring_inclinations", tuple(float(v) for v in inc))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if len(self.origin) != 3:
            raise ArgumentError("origin must be a 3-vector")
        if len(inc) == 0:
            raise ArgumentError("at least one ring inclination is required")
        d = np.diff(inc)
        if len(inc) > 1 and not ((d > 0).all() or (d < 0).all()):
            raise ArgumentError("ring_inclinations must be strictly monotonic")
        if not self.azimuth_resolution > 0:
            raise ArgumentError("azimuth_resolution must be > 0")
        if not self.max_range > 0:
            raise ArgumentError("max_range must be > 0")
        # stable argsort keeps lower original index first among equal values
        order = np.argsort(inc, kind="stable")
        object.__setattr__(self, "_sorted", inc[order])
        object.__setattr__(self, "_order", order)

    @property
    def n_rings(self) -> int:
        return len(self.ring_inclinations)

    @property
    def n_columns(self) -> int:
        return int(math.ceil(2 * math.pi / self.azimuth_resolution - 1e-12))

    @property
    def min_power(self) -> float:
        """Received-power floor; 0.9 / R_max**2 unless overridden."""
        if self.min_power_override is not None:
            return float(self.min_power_override)
        return 0.9 / self.max_range**2

    @classmethod
    def uniform(cls, n_rings: int, fov_low: float, fov_high: float, azimuth_resolution: float, max_range: float, **kw):
        """Rings evenly spaced in elevation between ``fov_low`` and ``fov_high`` (radians)."""
        return cls(tuple(np.linspace(fov_low, fov_high, n_rings)), azimuth_resolution, max_range, **kw)

    def to_dict(self) -> dict:
        return {
            "origin": list(self.origin),
            "ring_inclinations": list(self.ring_inclinations),
            "azimuth_resolution": self.azimuth_resolution,
            "max_range": self.max_range,
            "min_power_override": self.min_power_override,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LidarConfig":
        try:
            return cls(
                ring_inclinations=tuple(d["ring_inclinations"]),
                azimuth_resolution=float(d["azimuth_resolution"]),
                max_range=float(d["max_range"]),
                origin=tuple(d.get("origin", (0.0, 0.0, 0.0))),
                min_power_override=d.get("min_power_override"),
            )
        except ArgumentError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"invalid lidar config: {exc}") from None

    @classmethod
    def load(cls, path: str | os.PathLike) -> "LidarConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class BeamCoord:
    azimuth: float
    elevation: float
    range: float


def _wrap_azimuth(az):
    # atan2 yields (-pi, pi]; fold +pi onto -pi
    return np.where(az >= np.pi, az - 2 * np.pi, az)


def beam_coords(xyz, lidar: LidarConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`to_beam_coord`: (azimuth, elevation, range) arrays."""
    d = np.asarray(xyz, dtype=np.float64).reshape(-1, 3) - np.asarray(lidar.origin)
    rng = np.linalg.norm(d, axis=1)
    if (rng == 0).any():
        raise DegeneratePointError(f"point {int(np.argmax(rng == 0))} coincides with the LiDAR origin")
    az = _wrap_azimuth(np.arctan2(d[:, 1], d[:, 0]))
    el = np.arcsin(np.clip(d[:, 2] / rng, -1.0, 1.0))
    return az, el, rng


def to_beam_coord(p: Point | Sequence[float], lidar: LidarConfig) -> BeamCoord:
    xyz = p.xyz if isinstance(p, Point) else np.asarray(p, dtype=np.float64)
    az, el, r = beam_coords(xyz, lidar)
    return BeamCoord(float(az[0]), float(el[0]), float(r[0]))


def from_beam_coord(b: BeamCoord, lidar: LidarConfig) -> np.ndarray:
    ce = math.cos(b.elevation)
    return np.asarray(lidar.origin) + b.range * np.array(
        [ce * math.cos(b.azimuth), ce * math.sin(b.azimuth), math.sin(b.elevation)]
    )


def beam_indices(azimuth, elevation, lidar: LidarConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`beam_index` returning (ring, column) integer arrays."""
    el = np.asarray(elevation, dtype=np.float64).reshape(-1)
    az = np.asarray(azimuth, dtype=np.float64).reshape(-1)
    s = lidar._sorted
    pos = np.searchsorted(s, el, side="left")
    lo = np.clip(pos - 1, 0, len(s) - 1)
    hi = np.clip(pos, 0, len(s) - 1)
    d_lo = np.abs(el - s[lo])
    d_hi = np.abs(s[hi] - el)
    o_lo = lidar._order[lo]
    o_hi = lidar._order[hi]
    pick_hi = (d_hi < d_lo) | ((d_hi == d_lo) & (o_hi < o_lo))
    ring = np.where(pick_hi, o_hi, o_lo)
    col = np.floor((az + np.pi) / lidar.azimuth_resolution).astype(np.int64)
    col = np.clip(col, 0, lidar.n_columns - 1)
    return ring.astype(np.int64), col


def beam_index(b: BeamCoord, lidar: LidarConfig) -> tuple[int, int]:
    """Nearest ring (ties toward the lower ring index) and azimuth column of a beam."""
    ring, col = beam_indices([b.azimuth], [b.elevation], lidar)
    return int(ring[0]), int(col[0])


def beam_keys(xyz, lidar: LidarConfig) -> tuple[np.ndarray, np.ndarray]:
    """Flattened beam id (ring * n_columns + column) and range for each point."""
    az, el, rng = beam_coords(xyz, lidar)
    ring, col = beam_indices(az, el, lidar)
    return ring * lidar.n_columns + col, rng
