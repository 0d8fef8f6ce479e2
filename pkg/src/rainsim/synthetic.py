"""Ray-cast synthetic LiDAR frames: flat ground plus box-shaped vehicles.

Used for the bundled two-vehicle demo scene, for randomized test corpora and
for benchmarks. Ground is the plane z = 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .pointcloud import LidarConfig, PointCloud
from .scene import AtmosphereParams
from .splash import SplashConfig, VehicleState

GROUND_INTENSITY = 0.2
BODY_INTENSITY = 0.7


@dataclass(frozen=True)
class BoxBody:
    """Vehicle body used for ray casting: BEV footprint plus height."""

    center: tuple[float, float]
    yaw: float
    length: float = 4.5
    width: float = 1.8
    height: float = 1.5

    @classmethod
    def from_vehicle(cls, v: VehicleState, length: float = 4.5, width: float = 1.8, height: float = 1.5):
        return cls((v.position[0], v.position[1]), v.heading, length, width, height)

    @property
    def box7(self) -> np.ndarray:
        return np.array([self.center[0], self.center[1], self.height / 2, self.length, self.width, self.height, self.yaw])


def beam_directions(lidar: LidarConfig) -> np.ndarray:
    """(rings * columns, 3) unit vectors through each beam's bin centre."""
    el = np.asarray(lidar.ring_inclinations)
    az = -math.pi + (np.arange(lidar.n_columns) + 0.5) * lidar.azimuth_resolution
    E, A = np.meshgrid(el, az, indexing="ij")
    ce = np.cos(E)
    return np.stack([ce * np.cos(A), ce * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)


def _box_hits(origin: np.ndarray, dirs: np.ndarray, body: BoxBody) -> np.ndarray:
    """Ray parameter of the first hit with an oriented box (inf on miss), slab method."""
    c, s = math.cos(body.yaw), math.sin(body.yaw)
    o = origin - np.array([body.center[0], body.center[1], body.height / 2])
    rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    ol = rot @ o
    dl = dirs @ rot.T
    half = np.array([body.length, body.width, body.height]) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - ol) / dl
        t2 = (half - ol) / dl
    tmin = np.nanmax(np.minimum(t1, t2), axis=1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=1)
    hit = (tmax >= np.maximum(tmin, 0.0)) & np.isfinite(tmin)
    return np.where(hit & (tmin > 0), tmin, np.inf)


def raycast_frame(lidar: LidarConfig, bodies=(), seed: int = 0, intensity_jitter: float = 0.05, frame_id: str = "") -> PointCloud:
    """First-return scan of ground and ``bodies`` within ``lidar.max_range``."""
    origin = np.asarray(lidar.origin, dtype=np.float64)
    dirs = beam_directions(lidar)
    with np.errstate(divide="ignore"):
        t_ground = np.where(dirs[:, 2] < 0, -origin[2] / dirs[:, 2], np.inf)
    t = t_ground.copy()
    base = np.full(len(dirs), GROUND_INTENSITY)
    for body in bodies:
        tb = _box_hits(origin, dirs, body)
        closer = tb < t
        t = np.where(closer, tb, t)
        base = np.where(closer, BODY_INTENSITY, base)
    keep = np.isfinite(t) & (t <= lidar.max_range) & (t > 0)
    xyz = origin + dirs[keep] * t[keep, None]
    rng = np.random.default_rng(seed)
    inten = np.clip(base[keep] * (1.0 + intensity_jitter * rng.standard_normal(keep.sum())), 0.0, None)
    return PointCloud(xyz, inten, frame_id=frame_id)


def random_vehicles(rng: np.random.Generator, n: int, r_min: float = 8.0, r_max: float = 25.0):
    out = []
    for _ in range(n):
        r = rng.uniform(r_min, r_max)
        az = rng.uniform(-math.pi, math.pi)
        out.append(
            VehicleState((r * math.cos(az), r * math.sin(az), 0.0), rng.uniform(-math.pi, math.pi), rng.uniform(6.0, 10.0))
        )
    return out


@dataclass
class DemoScene:
    lidar: LidarConfig
    atmos: AtmosphereParams
    splash: SplashConfig
    vehicles: list
    bodies: list
    cloud: PointCloud


def load_demo_scene() -> DemoScene:
    """The bundled two-vehicle scene (config in ``rainsim/data/two_vehicle_scene.json``)."""
    text = resources.files("rainsim").joinpath("data/two_vehicle_scene.json").read_text()
    return scene_from_dict(json.loads(text))


def scene_from_dict(d: dict) -> DemoScene:
    lidar = LidarConfig.from_dict(d["lidar"])
    atmos = AtmosphereParams.from_dict(d["atmosphere"])
    splash = SplashConfig.from_dict(d["splash"])
    vehicles = [VehicleState.from_dict(v) for v in d["vehicles"]]
    bodies = [BoxBody.from_vehicle(v) for v in vehicles]
    cloud = raycast_frame(lidar, bodies, seed=int(d.get("scan_seed", 0)), frame_id=d.get("name", "demo"))
    return DemoScene(lidar, atmos, splash, vehicles, bodies, cloud)
