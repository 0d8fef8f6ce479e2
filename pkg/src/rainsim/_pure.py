"""Numpy implementations of the hot kernels.

Used when the compiled ``_core`` extension is unavailable or when
``RAINSIM_PURE=1`` is set. Signatures match ``_core`` exactly.
"""
import math

import numpy as np


_GRAD = np.array(
    [
        [1, 1, 0], [-1, 1, 0], [1, -1, 0], [-1, -1, 0],
        [1, 0, 1], [-1, 0, 1], [1, 0, -1], [-1, 0, -1],
        [0, 1, 1], [0, -1, 1], [0, 1, -1], [0, -1, -1],
        [1, 1, 0], [0, -1, 1], [-1, 1, 0], [0, -1, -1],
    ],
    dtype=np.float64,
)


def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _dot(h, x, y, z):
    g = _GRAD[h & 15]
    return g[:, 0] * x + g[:, 1] * y + g[:, 2] * z


def perlin3_many(pts, perm):
    pts = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 3)
    p = np.asarray(perm, dtype=np.int64)
    fl = np.floor(pts)
    f = pts - fl
    i = fl.astype(np.int64) & 255
    x, y, z = f[:, 0], f[:, 1], f[:, 2]
    xi, yi, zi = i[:, 0], i[:, 1], i[:, 2]
    u, v, w = _fade(x), _fade(y), _fade(z)

    a = p[xi] + yi
    aa = p[a] + zi
    ab = p[a + 1] + zi
    b = p[xi + 1] + yi
    ba = p[b] + zi
    bb = p[b + 1] + zi

    x1 = _dot(p[aa], x, y, z) + u * (_dot(p[ba], x - 1, y, z) - _dot(p[aa], x, y, z))
    x2 = _dot(p[ab], x, y - 1, z) + u * (_dot(p[bb], x - 1, y - 1, z) - _dot(p[ab], x, y - 1, z))
    y1 = x1 + v * (x2 - x1)
    x3 = _dot(p[aa + 1], x, y, z - 1) + u * (_dot(p[ba + 1], x - 1, y, z - 1) - _dot(p[aa + 1], x, y, z - 1))
    x4 = _dot(p[ab + 1], x, y - 1, z - 1) + u * (
        _dot(p[bb + 1], x - 1, y - 1, z - 1) - _dot(p[ab + 1], x, y - 1, z - 1)
    )
    y2 = x3 + v * (x4 - x3)
    out = y1 + w * (y2 - y1)
    # raw extrema reach 1.0 up to rounding
    return np.clip(out, -1.0, 1.0)


def simpson_weights(n):
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w


def _integrand(t, r_i, r_j, alpha, tau_h, r1, r2, c, step=None):
    half_ct = c * t / 2.0
    rp = r_j - half_ct
    guard = np.abs(rp) < 1e-6
    safe = np.where(guard, 1.0, rp)
    gamma = np.where(safe <= r1, 0.0, np.where(safe >= r2, 1.0, (safe - r1) / (r2 - r1)))
    if step is None:
        step = (r_i - r_j + half_ct) >= 0.0
    f = np.sin(math.pi / (2.0 * tau_h) * t) ** 2 * np.exp(-2.0 * alpha * safe) / (safe * safe) * gamma * step
    return np.where(guard, 0.0, f)


def breakpoints(r_i, r_j, tau_h, r1, r2, c):
    """Interior times where the integrand has a kink or jump, sorted."""
    span = 2.0 * tau_h
    cand = sorted({2.0 * (r_j - r2) / c, 2.0 * (r_j - r1) / c, 2.0 * (r_j - r_i) / c})
    return [b for b in cand if 0.0 < b < span]


def live_segments(r_i, r_j, tau_h, r1, c, edges):
    """Segments between breakpoints on which the integrand is not identically zero."""
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        if r_j - c * mid / 2.0 > r1 and r_i - r_j + c * mid / 2.0 >= 0.0:
            out.append((a, b))
    return out


def segment_panels(segments, n):
    """Even panel counts sharing the (n - 1)-panel budget in proportion to length."""
    half = (n - 1) // 2
    total = sum(b - a for a, b in segments)
    return [max(2, 2 * int(math.floor(half * (b - a) / total + 0.5))) for a, b in segments]


def particle_intensity_many(r_i, i_i, r_j, alpha, beta, beta0, tau_h, r1, r2, c, n):
    r_i = np.asarray(r_i, dtype=np.float64).reshape(-1)
    i_i = np.asarray(i_i, dtype=np.float64).reshape(-1)
    r_j = np.asarray(r_j, dtype=np.float64).reshape(-1)
    span = 2.0 * tau_h
    integral = np.empty(len(r_j))
    # no interior kink: one uniform composite rule over the whole window
    smooth = np.array([not breakpoints(a, b, tau_h, r1, r2, c) for a, b in zip(r_i, r_j)], dtype=bool)
    if smooth.any():
        h = span / (n - 1)
        t = np.arange(n) * h
        f = _integrand(t[None, :], r_i[smooth, None], r_j[smooth, None], alpha, tau_h, r1, r2, c)
        integral[smooth] = (h / 3.0) * (f @ simpson_weights(n))
    for k in np.flatnonzero(~smooth):
        edges = [0.0] + breakpoints(r_i[k], r_j[k], tau_h, r1, r2, c) + [span]
        segments = live_segments(r_i[k], r_j[k], tau_h, r1, c, edges)
        total = 0.0
        for (a, b), m in zip(segments, segment_panels(segments, n)):
            h = (b - a) / m
            t = a + np.arange(m + 1) * h
            f = _integrand(t, r_i[k], r_j[k], alpha, tau_h, r1, r2, c, step=1.0)
            total += (h / 3.0) * (f @ simpson_weights(m + 1))
        integral[k] = total
    cap0 = i_i * r_i * r_i / beta0
    return np.maximum(cap0 * beta * integral, 0.0)


def nn_mean_dist(a, b, chunk=2048):
    """Mean over points of ``a`` of the Euclidean distance to the nearest point of ``b``."""
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 3)
    total = 0.0
    for s in range(0, len(a), chunk):
        d = a[s : s + chunk, None, :] - b[None, :, :]
        total += np.sqrt((d * d).sum(axis=2).min(axis=1)).sum()
    return total / len(a)


def rect_corners(x, y, l, w, yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    hl, hw = l / 2.0, w / 2.0
    # counter-clockwise
    return [
        (x + c * hl - s * hw, y + s * hl + c * hw),
        (x - c * hl - s * hw, y - s * hl + c * hw),
        (x - c * hl + s * hw, y - s * hl - c * hw),
        (x + c * hl + s * hw, y + s * hl - c * hw),
    ]


def _clip(poly, a, b):
    out = []
    ax, ay = a
    ex, ey = b[0] - ax, b[1] - ay
    n = len(poly)
    for k in range(n):
        p = poly[k]
        q = poly[(k + 1) % n]
        sp = ex * (p[1] - ay) - ey * (p[0] - ax)
        sq = ex * (q[1] - ay) - ey * (q[0] - ax)
        if sp >= 0:
            out.append(p)
        if (sp >= 0) != (sq >= 0):
            t = sp / (sp - sq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _area(poly):
    s = 0.0
    n = len(poly)
    for k in range(n):
        x0, y0 = poly[k]
        x1, y1 = poly[(k + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def rect_intersection_area(a, b):
    """Overlap area of two BEV rectangles given as (x, y, l, w, yaw)."""
    poly = rect_corners(*a)
    clip = rect_corners(*b)
    for k in range(4):
        if not poly:
            return 0.0
        poly = _clip(poly, clip[k], clip[(k + 1) % 4])
    if len(poly) < 3:
        return 0.0
    return abs(_area(poly))


def iou_bev_matrix(a, b):
    """Pairwise BEV IoU between (N, 5) and (M, 5) arrays of (x, y, l, w, yaw)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 5)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 5)
    out = np.zeros((len(a), len(b)))
    for i in range(len(a)):
        area_a = a[i, 2] * a[i, 3]
        for j in range(len(b)):
            inter = rect_intersection_area(a[i], b[j])
            union = area_a + b[j, 2] * b[j, 3] - inter
            out[i, j] = min(max(inter / union, 0.0), 1.0) if union > 0 else 0.0
    return out
