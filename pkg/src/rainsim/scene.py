"""Transfer a clear-weather scene into rain.

Pipeline: match splash particles to LiDAR beams, compute each matched
particle's return intensity from the pulse-scattering integral, let the
particle replace (occlude) the surface return on its beam, attenuate the
remaining clear returns, and drop every return whose received power
``I / R**2`` falls below the sensor floor.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import _kernels
from .errors import ArgumentError, DegeneratePointError, DomainError, FormatError
from .pointcloud import LidarConfig, NoiseLabel, PointCloud, beam_keys
from .splash import RainParticleSet

SPEED_OF_LIGHT = 2.99792458e8
INTEGRAL_SAMPLES = 129
POLE_GUARD = 1e-6


@dataclass(frozen=True)
class AtmosphereParams:
    alpha: float = 0.01
    beta: float = 0.005
    beta0: float = 1e-6
    tau_h: float = 1e-8
    r1: float = 0.9
    r2: float = 1.0
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ArgumentError("alpha must be >= 0")
        if not self.beta >= 0:
            raise ArgumentError("beta must be >= 0")
        if not self.beta0 > 0:
            raise ArgumentError("beta0 must be > 0")
        if not self.tau_h > 0:
            raise ArgumentError("tau_h must be > 0")
        if not 0 <= self.r1 < self.r2:
            raise ArgumentError("need 0 <= r1 < r2")
        if not self.c > 0:
            raise ArgumentError("c must be > 0")

    def replace(self, **changes) -> "AtmosphereParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AtmosphereParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise FormatError(f"unknown atmosphere keys: {sorted(unknown)}")
        try:
            values = {k: float(v) for k, v in d.items()}
        except (TypeError, ValueError) as exc:
            raise FormatError(f"invalid atmosphere params: {exc}") from None
        return cls(**values)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "AtmosphereParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# Documentation-level presets; the scattering magnitudes are tuning knobs.
HEAVY_SPRAY = AtmosphereParams(alpha=0.01, beta=0.6, beta0=1e-6 / math.pi, tau_h=2e-8, r1=0.9, r2=1.0)


@dataclass(frozen=True)
class MatchedPair:
    point_index: int
    R_i: float
    I_i: float
    R_j: float
    particle_ref: int


def match_pairs(cloud: PointCloud, particles: RainParticleSet, lidar: LidarConfig) -> list[MatchedPair]:
    """Pair each beam's nearest particle with the beam's nearest point when the particle is in front."""
    if len(cloud) == 0 or len(particles) == 0:
        return []
    pkey, prng = beam_keys(cloud.xyz, lidar)
    rel = particles.position - np.asarray(lidar.origin)
    visible = np.flatnonzero(np.linalg.norm(rel, axis=1) > 0)
    if len(visible) == 0:
        return []
    qkey, qrng = beam_keys(particles.position[visible], lidar)

    # nearest point per beam, ties to the lowest index
    order = np.lexsort((np.arange(len(pkey)), prng, pkey))
    first = np.r_[True, pkey[order][1:] != pkey[order][:-1]]
    near_pt = order[first]
    # nearest particle per beam, ties to the lowest particle index
    qorder = np.lexsort((visible, qrng, qkey))
    qfirst = np.r_[True, qkey[qorder][1:] != qkey[qorder][:-1]]
    near_q = qorder[qfirst]

    beams_pt = pkey[near_pt]
    beams_q = qkey[near_q]
    _, ip, iq = np.intersect1d(beams_pt, beams_q, assume_unique=True, return_indices=True)
    pts = near_pt[ip]
    qs = near_q[iq]
    front = qrng[qs] < prng[pts]
    pts, qs = pts[front], qs[front]
    srt = np.argsort(pts, kind="stable")
    return [
        MatchedPair(int(p), float(prng[p]), float(cloud.intensity[p]), float(qrng[q]), int(visible[q]))
        for p, q in zip(pts[srt], qs[srt])
    ]


def gamma_term(R, atmos: AtmosphereParams):
    """Sensor overlap ramp: 0 up to r1, linear to 1 at r2, then 1."""
    R = np.asarray(R, dtype=np.float64)
    out = np.where(R <= atmos.r1, 0.0, np.where(R >= atmos.r2, 1.0, (R - atmos.r1) / (atmos.r2 - atmos.r1)))
    return float(out) if out.ndim == 0 else out


def heaviside(x):
    """Unit step with U(0) = 1."""
    x = np.asarray(x, dtype=np.float64)
    out = (x >= 0).astype(np.float64)
    return float(out) if out.ndim == 0 else out


def simpson_integrate(samples, h: float) -> float:
    """Composite Simpson 1/3 rule over equally spaced samples (odd count >= 3)."""
    f = np.asarray(samples, dtype=np.float64).reshape(-1)
    n = len(f)
    if n < 3 or n % 2 == 0:
        raise ArgumentError(f"Simpson's rule needs an odd sample count >= 3, got {n}")
    if not h > 0:
        raise ArgumentError("step h must be > 0")
    return float((h / 3.0) * (f[0] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum() + f[-1]))


def intensity_integrand(t, R_i: float, R_j: float, atmos: AtmosphereParams):
    """Integrand of the particle-intensity integral at pulse times ``t`` (pole-guarded)."""
    t = np.asarray(t, dtype=np.float64)
    rp = R_j - atmos.c * t / 2.0
    guard = np.abs(rp) < POLE_GUARD
    safe = np.where(guard, 1.0, rp)
    f = (
        np.sin(math.pi / (2.0 * atmos.tau_h) * t) ** 2
        * np.exp(-2.0 * atmos.alpha * safe)
        / safe**2
        * gamma_term(safe, atmos)
        * heaviside(R_i - R_j + atmos.c * t / 2.0)
    )
    return np.where(guard, 0.0, f)


def particle_intensities(R_i, I_i, R_j, atmos: AtmosphereParams, n: int = INTEGRAL_SAMPLES) -> np.ndarray:
    """Batched :func:`rain_particle_intensity` over parallel arrays."""
    R_j = np.asarray(R_j, dtype=np.float64).reshape(-1)
    if (R_j <= 0).any():
        raise DomainError("particle range R_j must be > 0")
    if n < 3 or n % 2 == 0:
        raise ArgumentError("sample count must be odd and >= 3")
    if len(R_j) == 0:
        return np.zeros(0)
    a = atmos
    return _kernels.particle_intensity_many(R_i, I_i, R_j, a.alpha, a.beta, a.beta0, a.tau_h, a.r1, a.r2, a.c, n)


def rain_particle_intensity(pair: MatchedPair, atmos: AtmosphereParams, n: int = INTEGRAL_SAMPLES) -> float:
    """Return intensity of the particle in ``pair``.

    The transmitted-power factor is recovered from the occluded surface
    return as ``I_i * R_i**2 / beta0``.
    """
    return float(particle_intensities([pair.R_i], [pair.I_i], [pair.R_j], atmos, n)[0])


def apply_occlusion(cloud: PointCloud, pairs, intensities, particles: RainParticleSet) -> PointCloud:
    """Replace each paired point by its particle; every other point is labelled clear."""
    idx = np.array([p.point_index for p in pairs], dtype=np.int64)
    if len(np.unique(idx)) != len(idx):
        raise ArgumentError("pairs must not share a point_index")
    intensities = np.asarray(intensities, dtype=np.float64).reshape(-1)
    if len(intensities) != len(idx):
        raise ArgumentError("one intensity per pair is required")
    out = PointCloud(cloud.xyz.copy(), cloud.intensity.copy(), np.full(len(cloud), NoiseLabel.CLEAR, np.int8), cloud.frame_id)
    if len(idx):
        refs = np.array([p.particle_ref for p in pairs], dtype=np.int64)
        out.xyz[idx] = particles.position[refs]
        out.intensity[idx] = intensities
        out.labels[idx] = NoiseLabel.RAIN_NOISE
    return out


def attenuate_clear_points(cloud: PointCloud, atmos: AtmosphereParams, origin=(0.0, 0.0, 0.0)) -> PointCloud:
    """Two-way extinction ``I * exp(-2 alpha R)`` on clear points; rain noise untouched."""
    out = cloud.copy()
    clear = out.labels == NoiseLabel.CLEAR
    if clear.any() and atmos.alpha != 0:
        out.intensity[clear] *= np.exp(-2.0 * atmos.alpha * cloud.subset(clear).ranges(origin))
    return out


def received_power(cloud: PointCloud, origin=(0.0, 0.0, 0.0)) -> np.ndarray:
    r = cloud.ranges(origin)
    if (r == 0).any():
        raise DegeneratePointError(f"point {int(np.argmax(r == 0))} coincides with the LiDAR origin")
    return cloud.intensity / (r * r)


def power_filter(cloud: PointCloud, lidar: LidarConfig) -> PointCloud:
    """Keep returns whose received power reaches ``lidar.min_power``."""
    if len(cloud) == 0:
        return cloud.copy()
    return cloud.subset(received_power(cloud, lidar.origin) >= lidar.min_power)


def simulate_rain(
    cloud: PointCloud, particles: RainParticleSet, atmos: AtmosphereParams, lidar: LidarConfig
) -> PointCloud:
    pairs = match_pairs(cloud, particles, lidar)
    intensities = particle_intensities(
        [p.R_i for p in pairs], [p.I_i for p in pairs], [p.R_j for p in pairs], atmos
    )
    occluded = apply_occlusion(cloud, pairs, intensities, particles)
    attenuated = attenuate_clear_points(occluded, atmos, lidar.origin)
    return power_filter(attenuated, lidar)
