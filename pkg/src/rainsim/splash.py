"""Splash particles thrown up by moving vehicles, with Perlin-noise wind.

Three emission mechanisms per wheel: bow wave (forward and up), side wave
(outward and up) and tread pickup (rearward and steeply up). Particles are
advanced by semi-implicit Euler under gravity, linear drag and a spatial
gradient-noise wind field, and are absorbed on reaching the ground (z < 0).

Random draws are counter-based: each (step, vehicle, wheel, mechanism)
tuple seeds its own generator, so raising the emission rate only appends
particles and never perturbs the ones already emitted.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import ArgumentError, FormatError

_SEED_MASK = (1 << 64) - 1
# per-axis seed offsets so the three wind components are independent fields
_AXIS_SEED_OFFSETS = (0x243F6A8885A308D3, 0x13198A2E03707344, 0xA4093822299F31D0)


class Mechanism(str, Enum):
    BW = "BW"
    SW = "SW"
    TP = "TP"


MECHANISMS = (Mechanism.BW, Mechanism.SW, Mechanism.TP)
_MECH_CODE = {m: k for k, m in enumerate(MECHANISMS)}
# launch elevation above horizontal
_LAUNCH_ANGLE = {Mechanism.BW: math.radians(30.0), Mechanism.SW: math.radians(45.0), Mechanism.TP: math.radians(60.0)}


@lru_cache(maxsize=64)
def perlin_permutation(seed: int) -> np.ndarray:
    """Doubled 512-entry permutation table derived from ``seed``."""
    perm = np.random.default_rng(int(seed) & _SEED_MASK).permutation(256)
    table = np.concatenate([perm, perm]).astype(np.int64)
    table.flags.writeable = False
    return table


def perlin3(x: float, y: float, z: float, seed: int = 0) -> float:
    """Improved 3D gradient noise in [-1, 1]; exactly 0 on integer lattice points."""
    return float(_kernels.perlin3_many(np.array([[x, y, z]], dtype=np.float64), perlin_permutation(seed))[0])


def perlin3_many(points, seed: int = 0) -> np.ndarray:
    return _kernels.perlin3_many(np.asarray(points, dtype=np.float64).reshape(-1, 3), perlin_permutation(seed))


@dataclass(frozen=True)
class VehicleState:
    position: tuple[float, float, float]
    heading: float
    speed: float
    wheelbase: float = 2.8
    track_width: float = 1.6

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if len(self.position) != 3:
            raise ArgumentError("vehicle position must be a 3-vector")
        if not self.speed >= 0:
            raise ArgumentError(f"vehicle speed must be >= 0, got {self.speed}")
        if not (self.wheelbase > 0 and self.track_width > 0):
            raise ArgumentError("wheelbase and track_width must be > 0")

    @property
    def forward(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading), 0.0])

    @property
    def left(self) -> np.ndarray:
        return np.array([-math.sin(self.heading), math.cos(self.heading), 0.0])

    @property
    def wheel_contact_points(self) -> np.ndarray:
        """(4, 3) contact points: front-left, front-right, rear-left, rear-right."""
        c = np.asarray(self.position)
        f = self.forward * (self.wheelbase / 2)
        s = self.left * (self.track_width / 2)
        return np.stack([c + f + s, c + f - s, c - f + s, c - f - s])

    def moved(self, dt: float) -> "VehicleState":
        """State after travelling straight for ``dt`` seconds (negative rewinds)."""
        p = np.asarray(self.position) + self.forward * self.speed * dt
        return VehicleState(tuple(p), self.heading, self.speed, self.wheelbase, self.track_width)

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleState":
        if not isinstance(d, dict):
            raise FormatError(f"vehicle record must be an object, got {type(d).__name__}")
        try:
            return cls(
                position=tuple(d["position"]),
                heading=float(d["heading"]),
                speed=float(d["speed"]),
                wheelbase=float(d.get("wheelbase", 2.8)),
                track_width=float(d.get("track_width", 1.6)),
            )
        except ArgumentError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"invalid vehicle record: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "position": list(self.position),
            "heading": self.heading,
            "speed": self.speed,
            "wheelbase": self.wheelbase,
            "track_width": self.track_width,
        }


def load_vehicles(path: str | os.PathLike) -> list[VehicleState]:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise FormatError(f"{path}: vehicles file must hold a JSON array")
    return [VehicleState.from_dict(d) for d in data]


@dataclass(frozen=True)
class SplashConfig:
    emission_rate: float = 400.0
    mechanism_gains: dict = field(default_factory=lambda: {"BW": 0.2, "SW": 0.15, "TP": 0.25})
    gravity: float = 9.81
    drag_coefficient: float = 5.0
    wind_amplitude: float = 0.5
    wind_frequency: float = 0.5
    duration: float = 1.0
    dt: float = 0.01
    seed: int = 0

    def __post_init__(self):
        gains = {Mechanism(k).value: float(v) for k, v in dict(self.mechanism_gains).items()}
        for m in MECHANISMS:
            gains.setdefault(m.value, 0.0)
        object.__setattr__(self, "mechanism_gains", gains)
        object.__setattr__(self, "seed", int(self.seed) & _SEED_MASK)
        if not self.dt > 0:
            raise ArgumentError("dt must be > 0")
        if not self.duration >= self.dt:
            raise ArgumentError("duration must be >= dt")
        if any(g < 0 for g in gains.values()):
            raise ArgumentError("mechanism gains must be >= 0")
        if self.emission_rate < 0:
            raise ArgumentError("emission_rate must be >= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def gain(self, mechanism: Mechanism) -> float:
        return self.mechanism_gains[Mechanism(mechanism).value]

    def replace(self, **changes) -> "SplashConfig":
        d = asdict(self)
        d.update(changes)
        return SplashConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SplashConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise FormatError(f"unknown splash config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except ArgumentError:
            raise
        except (TypeError, ValueError) as exc:
            raise FormatError(f"invalid splash config: {exc}") from None

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SplashConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class RainParticle:
    position: tuple[float, float, float]
    velocity: tuple[float, float, float]
    birth_time: float
    mechanism: Mechanism


class RainParticleSet:
    """Particle state as parallel arrays; iterating yields :class:`RainParticle`."""

    __slots__ = ("position", "velocity", "birth_time", "mechanism", "seed")

    def __init__(self, position=None, velocity=None, birth_time=None, mechanism=None, seed: int = 0):
        self.position = np.zeros((0, 3)) if position is None else np.asarray(position, dtype=np.float64).reshape(-1, 3)
        n = len(self.position)
        self.velocity = np.zeros((n, 3)) if velocity is None else np.asarray(velocity, dtype=np.float64).reshape(-1, 3)
        self.birth_time = np.zeros(n) if birth_time is None else np.asarray(birth_time, dtype=np.float64).reshape(-1)
        self.mechanism = np.zeros(n, np.int8) if mechanism is None else np.asarray(mechanism, dtype=np.int8).reshape(-1)
        self.seed = seed
        if not (len(self.velocity) == len(self.birth_time) == len(self.mechanism) == n):
            raise ArgumentError("particle arrays must have equal length")

    @classmethod
    def from_particles(cls, particles, seed: int = 0) -> "RainParticleSet":
        particles = list(particles)
        return cls(
            [p.position for p in particles],
            [p.velocity for p in particles],
            [p.birth_time for p in particles],
            [_MECH_CODE[Mechanism(p.mechanism)] for p in particles],
            seed,
        )

    @classmethod
    def concat(cls, sets, seed: int = 0) -> "RainParticleSet":
        sets = list(sets)
        if not sets:
            return cls(seed=seed)
        return cls(
            np.concatenate([s.position for s in sets]),
            np.concatenate([s.velocity for s in sets]),
            np.concatenate([s.birth_time for s in sets]),
            np.concatenate([s.mechanism for s in sets]),
            seed,
        )

    def __len__(self) -> int:
        return len(self.position)

    def __getitem__(self, i) -> RainParticle:
        return RainParticle(
            tuple(float(v) for v in self.position[i]),
            tuple(float(v) for v in self.velocity[i]),
            float(self.birth_time[i]),
            MECHANISMS[int(self.mechanism[i])],
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, mask) -> "RainParticleSet":
        return RainParticleSet(
            self.position[mask], self.velocity[mask], self.birth_time[mask], self.mechanism[mask], self.seed
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, RainParticleSet):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("position", "velocity", "birth_time", "mechanism")
        )

    def __repr__(self) -> str:
        return f"RainParticleSet(n={len(self)}, seed={self.seed})"


def _speed_factor(speed: float) -> float:
    return min(max(speed / 10.0, 0.0), 3.0)


def _launch_direction(vehicle: VehicleState, mechanism: Mechanism, wheel: int) -> np.ndarray:
    ang = _LAUNCH_ANGLE[mechanism]
    up = np.array([0.0, 0.0, 1.0])
    if mechanism is Mechanism.BW:
        horiz = vehicle.forward
    elif mechanism is Mechanism.SW:
        # wheels 0 and 2 are on the left side
        horiz = vehicle.left if wheel % 2 == 0 else -vehicle.left
    else:
        horiz = -vehicle.forward
    return math.cos(ang) * horiz + math.sin(ang) * up


def _step_index(t: float, dt: float) -> int:
    return int(round(t / dt))


def emission_count(cfg: SplashConfig, speed: float) -> int:
    """Particles emitted per wheel per mechanism in one step (round half up)."""
    return int(math.floor(cfg.emission_rate * cfg.dt * _speed_factor(speed) + 0.5))


def _emit(vehicle: VehicleState, cfg: SplashConfig, t: float, vehicle_index: int) -> RainParticleSet:
    count = emission_count(cfg, vehicle.speed)
    if count == 0:
        return RainParticleSet(seed=cfg.seed)
    step = _step_index(t, cfg.dt)
    contacts = vehicle.wheel_contact_points
    pos, vel, mech = [], [], []
    for wheel in range(4):
        for m in MECHANISMS:
            rng = np.random.default_rng([cfg.seed, step, vehicle_index, wheel, _MECH_CODE[m]])
            u = rng.uniform(-1.0, 1.0, count)
            mag = cfg.gain(m) * vehicle.speed * (1.0 + 0.2 * u)
            pos.append(np.repeat(contacts[wheel][None, :], count, axis=0))
            vel.append(mag[:, None] * _launch_direction(vehicle, m, wheel)[None, :])
            mech.append(np.full(count, _MECH_CODE[m], np.int8))
    n = 12 * count
    return RainParticleSet(np.concatenate(pos), np.concatenate(vel), np.full(n, float(t)), np.concatenate(mech), cfg.seed)


def emit_splash(vehicle: VehicleState, cfg: SplashConfig, t: float, vehicle_index: int = 0) -> list[RainParticle]:
    """Particles launched from the vehicle's wheel contact points at time ``t``.

    Order is wheel, then mechanism (BW, SW, TP), then particle. ``vehicle_index``
    distinguishes the random streams of several vehicles in one scene.
    """
    if not 0.0 <= t <= cfg.duration + 1e-12:
        raise ArgumentError(f"t={t} outside [0, {cfg.duration}]")
    return list(_emit(vehicle, cfg, t, vehicle_index))


def wind_acceleration(position, cfg: SplashConfig) -> np.ndarray:
    if cfg.wind_amplitude == 0:
        return np.zeros_like(position)
    q = np.asarray(position, dtype=np.float64) * cfg.wind_frequency
    return cfg.wind_amplitude * np.stack(
        [perlin3_many(q, (cfg.seed + off) & _SEED_MASK) for off in _AXIS_SEED_OFFSETS], axis=1
    )


def _step(ps: RainParticleSet, dt: float, cfg: SplashConfig) -> RainParticleSet:
    if len(ps) == 0:
        return ps
    acc = -cfg.drag_coefficient * ps.velocity + wind_acceleration(ps.position, cfg)
    acc[:, 2] -= cfg.gravity
    v = ps.velocity + acc * dt
    x = ps.position + v * dt
    keep = x[:, 2] >= 0.0
    return RainParticleSet(x[keep], v[keep], ps.birth_time[keep], ps.mechanism[keep], ps.seed)


def step_particles(particles, dt: float, cfg: SplashConfig, t: float = 0.0):
    """One semi-implicit Euler step; particles ending below z = 0 are removed.

    Accepts a :class:`RainParticleSet` or a list of :class:`RainParticle` and
    returns the same kind. The wind field is static, so ``t`` is unused.
    """
    if not dt > 0:
        raise ArgumentError("dt must be > 0")
    if isinstance(particles, RainParticleSet):
        return _step(particles, dt, cfg)
    return list(_step(RainParticleSet.from_particles(particles, cfg.seed), dt, cfg))


def simulate_splash(vehicles, cfg: SplashConfig) -> RainParticleSet:
    """Particles alive after ``cfg.duration`` seconds of driving.

    Each vehicle is treated as having driven straight at constant speed so
    that it reaches its given pose at the final time.
    """
    vehicles = list(vehicles)
    state = RainParticleSet(seed=cfg.seed)
    for k in range(cfg.n_steps):
        t = k * cfg.dt
        born = [_emit(v.moved(t - cfg.duration), cfg, t, i) for i, v in enumerate(vehicles)]
        state = _step(RainParticleSet.concat([state] + born, cfg.seed), cfg.dt, cfg)
    return state
