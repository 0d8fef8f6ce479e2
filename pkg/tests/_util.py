"""Shared builders and independent reference implementations for the tests."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from rainsim.pointcloud import LidarConfig, write_pointcloud
from rainsim.splash import SplashConfig
from rainsim.synthetic import BoxBody, raycast_frame, random_vehicles


def small_lidar(**kw) -> LidarConfig:
    kw.setdefault("origin", (0.0, 0.0, 1.8))
    return LidarConfig.uniform(16, math.radians(-24.0), math.radians(2.0), math.radians(1.0), 60.0, **kw)


# -- Reference integrand for the particle return intensity -----------------


def ref_integrand(t, R_i, R_j, a):
    rp = R_j - a.c * t / 2.0
    if abs(rp) < 1e-6:
        return 0.0
    if rp <= a.r1:
        g = 0.0
    elif rp >= a.r2:
        g = 1.0
    else:
        g = (rp - a.r1) / (a.r2 - a.r1)
    u = 1.0 if R_i - R_j + a.c * t / 2.0 >= 0.0 else 0.0
    return math.sin(math.pi * t / (2.0 * a.tau_h)) ** 2 * math.exp(-2.0 * a.alpha * rp) / rp**2 * g * u


def ref_intensity_quad(R_i, I_i, R_j, a) -> float:
    """Adaptive Gauss-Kronrod with the kink and step locations as breakpoints."""
    span = 2.0 * a.tau_h
    pts = sorted(t for t in (2 * (R_j - a.r1) / a.c, 2 * (R_j - a.r2) / a.c, 2 * (R_j - R_i) / a.c) if 0 < t < span)
    val, _ = quad(ref_integrand, 0.0, span, args=(R_i, R_j, a), points=pts or None, epsabs=0.0, epsrel=1e-13, limit=2000)
    return I_i * R_i**2 / a.beta0 * a.beta * val


def ref_intensity_dense(R_i, I_i, R_j, a, samples: int = 1_000_001) -> float:
    """Plain composite Simpson on a uniform million-sample grid, no breakpoint handling."""
    t = np.linspace(0.0, 2.0 * a.tau_h, samples)
    rp = R_j - a.c * t / 2.0
    safe = np.where(np.abs(rp) < 1e-6, 1.0, rp)
    g = np.clip((safe - a.r1) / (a.r2 - a.r1), 0.0, 1.0)
    u = (R_i - R_j + a.c * t / 2.0 >= 0.0).astype(float)
    f = np.sin(math.pi * t / (2.0 * a.tau_h)) ** 2 * np.exp(-2.0 * a.alpha * safe) / safe**2 * g * u
    f[np.abs(rp) < 1e-6] = 0.0
    h = t[1] - t[0]
    s = h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum())
    return I_i * R_i**2 / a.beta0 * a.beta * s


# -- Other brute-force oracles ---------------------------------------------


def brute_chamfer(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return float(d.min(1).mean() + d.min(0).mean())


def brute_in_box(box, xyz):
    x, y, z, l, w, h, yaw = box
    out = []
    for p in xyz:
        dx, dy, dz = p[0] - x, p[1] - y, p[2] - z
        c, s = math.cos(yaw), math.sin(yaw)
        lx, ly = c * dx + s * dy, -s * dx + c * dy
        out.append(abs(lx) <= l / 2 and abs(ly) <= w / 2 and abs(dz) <= h / 2)
    return np.array(out, dtype=bool)


def monte_carlo_iou(a, b, n: int, rng) -> float:
    """Sample uniformly inside box a's footprint and count hits in box b's footprint."""
    xa, ya, _, la, wa, _, ta = a
    xb, yb, _, lb, wb, _, tb = b
    u = (rng.random(n) - 0.5) * la
    v = (rng.random(n) - 0.5) * wa
    ca, sa = math.cos(ta), math.sin(ta)
    px, py = xa + ca * u - sa * v, ya + sa * u + ca * v
    cb, sb = math.cos(tb), math.sin(tb)
    dx, dy = px - xb, py - yb
    hit = (np.abs(cb * dx + sb * dy) <= lb / 2) & (np.abs(-sb * dx + cb * dy) <= wb / 2)
    inter = la * wa * hit.mean()
    return float(inter / (la * wa + lb * wb - inter))


# -- Corpora ---------------------------------------------------------------


def random_frame(rng, lidar, n_vehicles=2, frame_id=""):
    vehicles = random_vehicles(rng, n_vehicles)
    bodies = [BoxBody.from_vehicle(v) for v in vehicles]
    cloud = raycast_frame(lidar, bodies, seed=int(rng.integers(1 << 31)), frame_id=frame_id)
    return cloud, vehicles


def write_corpus(root: Path, n_frames: int, lidar: LidarConfig, seed: int = 0) -> dict:
    """Frames with vehicle sidecars plus lidar/atmosphere/splash JSON configs; returns their paths."""
    from rainsim.scene import HEAVY_SPRAY

    rng = np.random.default_rng(seed)
    frames = root / "frames"
    frames.mkdir(parents=True)
    for k in range(n_frames):
        cloud, vehicles = random_frame(rng, lidar, frame_id=f"f{k:03d}")
        write_pointcloud(cloud, frames / f"f{k:03d}.bin", "bin4")
        (frames / f"f{k:03d}.vehicles.json").write_text(json.dumps([v.to_dict() for v in vehicles]))
    paths = {"input": frames}
    for name, obj in (
        ("lidar", lidar.to_dict()),
        ("atmos", HEAVY_SPRAY.to_dict()),
        ("splash", SplashConfig(duration=0.5, dt=0.02).to_dict()),
    ):
        p = root / f"{name}.json"
        p.write_text(json.dumps(obj))
        paths[name] = p
    return paths


def dir_bytes(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir()) if p.is_file()}


# -- Straight-line loss references (plain Python loops, no shared code) ----


def _sl1(d):
    d = abs(d)
    return 0.5 * d * d if d < 1.0 else d - 0.5


def ref_awid(pairs, eps=1e-6):
    if not pairs:
        return 0.0
    total = 0.0
    for p in pairs:
        ds, dr = len(p.pc_sunny), len(p.pc_rainy)
        if ds == 0 or dr == 0:
            s = 0.0
        else:
            dens = math.tanh(min(ds, dr) / (abs(ds - dr) + eps))
            s = dens * (1.0 - math.tanh(brute_chamfer(p.pc_sunny, p.pc_rainy)))
        fs, fr = list(p.feat_sunny), list(p.feat_rainy)
        l = sum(_sl1(a - b) for a, b in zip(fs, fr)) / len(fs) if fs else 0.0
        total += s * l
    return total / len(pairs)


def ref_prd_cls(cs, cr, thr=0.5):
    if len(cs) == 0:
        return 0.0
    acc = 0.0
    for a, b in zip(cs, cr):
        if 1.0 / (1.0 + math.exp(-a)) >= thr:
            acc += (b - a) ** 2
    return acc / len(cs)


def ref_prd_reg(bs, br):
    terms = []
    for t, s in zip(bs, br):
        for k in range(7):
            d = s[k] - t[k]
            if k == 6:
                d = math.atan2(math.sin(d), math.cos(d))
                if d == -math.pi:
                    d = math.pi
            terms.append(_sl1(d))
    return sum(terms) / len(terms) if terms else 0.0


def ref_napc(dets, xyz, labels, eps=1e-6):
    if not dets:
        return 0.0
    acc = 0.0
    for box, conf in dets:
        inside = brute_in_box(box, xyz)
        kn = int(sum(1 for i, f in enumerate(inside) if f and labels[i] == 1))
        kc = int(sum(1 for i, f in enumerate(inside) if f and labels[i] == 0))
        acc += math.tanh(kn / (kc + eps)) * conf
    return acc / len(dets)


def ref_total(sc, sr, ins, rsp, napc, e1=2.0, e2=0.5, e3=2.0):
    return sc + sr + e1 * ins + e2 * rsp + e3 * napc
