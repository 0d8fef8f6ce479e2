# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Semantics mirror rainsim._pure."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sin, cos, exp, sqrt, fabs, M_PI, INFINITY

cnp.import_array()

cdef double[16][3] GRAD = [
    [1, 1, 0], [-1, 1, 0], [1, -1, 0], [-1, -1, 0],
    [1, 0, 1], [-1, 0, 1], [1, 0, -1], [-1, 0, -1],
    [0, 1, 1], [0, -1, 1], [0, 1, -1], [0, -1, -1],
    [1, 1, 0], [0, -1, 1], [-1, 1, 0], [0, -1, -1],
]


cdef inline double _fade(double t) nogil:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


cdef inline double _dot(long h, double x, double y, double z) nogil:
    h = h & 15
    return GRAD[h][0] * x + GRAD[h][1] * y + GRAD[h][2] * z


cdef inline double _lerp(double t, double a, double b) nogil:
    return a + t * (b - a)


cdef double _perlin(double px, double py, double pz, const long[::1] p) nogil:
    cdef double fx = floor(px), fy = floor(py), fz = floor(pz)
    cdef long xi = (<long>fx) & 255, yi = (<long>fy) & 255, zi = (<long>fz) & 255
    cdef double x = px - fx, y = py - fy, z = pz - fz
    cdef double u = _fade(x), v = _fade(y), w = _fade(z)
    cdef long a = p[xi] + yi
    cdef long aa = p[a] + zi
    cdef long ab = p[a + 1] + zi
    cdef long b = p[xi + 1] + yi
    cdef long ba = p[b] + zi
    cdef long bb = p[b + 1] + zi
    cdef double x1 = _lerp(u, _dot(p[aa], x, y, z), _dot(p[ba], x - 1, y, z))
    cdef double x2 = _lerp(u, _dot(p[ab], x, y - 1, z), _dot(p[bb], x - 1, y - 1, z))
    cdef double y1 = _lerp(v, x1, x2)
    cdef double x3 = _lerp(u, _dot(p[aa + 1], x, y, z - 1), _dot(p[ba + 1], x - 1, y, z - 1))
    cdef double x4 = _lerp(u, _dot(p[ab + 1], x, y - 1, z - 1), _dot(p[bb + 1], x - 1, y - 1, z - 1))
    cdef double y2 = _lerp(v, x3, x4)
    cdef double out = _lerp(w, y1, y2)
    if out > 1.0:
        return 1.0
    if out < -1.0:
        return -1.0
    return out


def perlin3_many(pts, perm):
    cdef const double[:, ::1] q = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 3)
    cdef const long[::1] p = np.ascontiguousarray(perm, dtype=np.int64)
    cdef Py_ssize_t n = q.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _perlin(q[i, 0], q[i, 1], q[i, 2], p)
    return out


cdef inline double _integrand(double t, double r_i, double r_j, double alpha, double tau_h,
                              double r1, double r2, double c, bint force_step) nogil:
    cdef double half_ct = c * t / 2.0
    cdef double rp = r_j - half_ct
    cdef double g, s
    if fabs(rp) < 1e-6:
        return 0.0
    if not force_step and r_i - r_j + half_ct < 0.0:
        return 0.0
    if rp <= r1:
        return 0.0
    elif rp >= r2:
        g = 1.0
    else:
        g = (rp - r1) / (r2 - r1)
    s = sin(M_PI / (2.0 * tau_h) * t)
    return s * s * exp(-2.0 * alpha * rp) / (rp * rp) * g


cdef inline double _simpson(double a, double h, Py_ssize_t panels, double r_i, double r_j, double alpha,
                            double tau_h, double r1, double r2, double c, bint force_step) nogil:
    cdef Py_ssize_t k
    cdef double total = 0.0, wk
    for k in range(panels + 1):
        if k == 0 or k == panels:
            wk = 1.0
        elif k % 2 == 1:
            wk = 4.0
        else:
            wk = 2.0
        total += wk * _integrand(a + k * h, r_i, r_j, alpha, tau_h, r1, r2, c, force_step)
    return (h / 3.0) * total


def particle_intensity_many(r_i, i_i, r_j, double alpha, double beta, double beta0,
                            double tau_h, double r1, double r2, double c, Py_ssize_t n):
    cdef const double[::1] ri = np.ascontiguousarray(r_i, dtype=np.float64).reshape(-1)
    cdef const double[::1] ii = np.ascontiguousarray(i_i, dtype=np.float64).reshape(-1)
    cdef const double[::1] rj = np.ascontiguousarray(r_j, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t m = rj.shape[0], j, q, u, nb, ns, half = (n - 1) // 2, panels
    out = np.empty(m)
    cdef double[::1] o = out
    cdef double span = 2.0 * tau_h
    cdef double cand[3]
    cdef double edges[5]
    cdef double seg_a[4]
    cdef double seg_b[4]
    cdef double tmp, mid, live, total, f
    with nogil:
        for j in range(m):
            # interior kinks and the step, sorted and deduplicated
            cand[0] = 2.0 * (rj[j] - r2) / c
            cand[1] = 2.0 * (rj[j] - r1) / c
            cand[2] = 2.0 * (rj[j] - ri[j]) / c
            for q in range(3):
                for u in range(2 - q):
                    if cand[u] > cand[u + 1]:
                        tmp = cand[u]
                        cand[u] = cand[u + 1]
                        cand[u + 1] = tmp
            edges[0] = 0.0
            nb = 1
            for q in range(3):
                if 0.0 < cand[q] < span and (q == 0 or cand[q] != cand[q - 1]):
                    edges[nb] = cand[q]
                    nb += 1
            if nb == 1:
                total = _simpson(0.0, span / (n - 1), n - 1, ri[j], rj[j], alpha, tau_h, r1, r2, c, False)
            else:
                edges[nb] = span
                ns = 0
                live = 0.0
                for q in range(nb):
                    mid = 0.5 * (edges[q] + edges[q + 1])
                    if rj[j] - c * mid / 2.0 > r1 and ri[j] - rj[j] + c * mid / 2.0 >= 0.0:
                        seg_a[ns] = edges[q]
                        seg_b[ns] = edges[q + 1]
                        live += edges[q + 1] - edges[q]
                        ns += 1
                total = 0.0
                for q in range(ns):
                    panels = 2 * <Py_ssize_t>floor(half * (seg_b[q] - seg_a[q]) / live + 0.5)
                    if panels < 2:
                        panels = 2
                    total += _simpson(seg_a[q], (seg_b[q] - seg_a[q]) / panels, panels,
                                      ri[j], rj[j], alpha, tau_h, r1, r2, c, True)
            f = ii[j] * ri[j] * ri[j] / beta0 * beta * total
            o[j] = f if f > 0.0 else 0.0
    return out


def nn_mean_dist(a, b):
    cdef const double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 3)
    cdef const double[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 3)
    cdef Py_ssize_t na = A.shape[0], nb = B.shape[0], i, j
    cdef double best, dx, dy, dz, d, total = 0.0
    with nogil:
        for i in range(na):
            best = INFINITY
            for j in range(nb):
                dx = A[i, 0] - B[j, 0]
                dy = A[i, 1] - B[j, 1]
                dz = A[i, 2] - B[j, 2]
                d = dx * dx + dy * dy + dz * dz
                if d < best:
                    best = d
            total += sqrt(best)
    return total / na


cdef void _corners(double x, double y, double l, double w, double yaw, double* out) nogil:
    cdef double c = cos(yaw), s = sin(yaw), hl = l / 2.0, hw = w / 2.0
    out[0] = x + c * hl - s * hw
    out[1] = y + s * hl + c * hw
    out[2] = x - c * hl - s * hw
    out[3] = y - s * hl + c * hw
    out[4] = x - c * hl + s * hw
    out[5] = y - s * hl - c * hw
    out[6] = x + c * hl + s * hw
    out[7] = y + s * hl - c * hw


cdef int _clip(double* poly, int n, double ax, double ay, double bx, double by, double* out) nogil:
    cdef int k, m = 0
    cdef double ex = bx - ax, ey = by - ay, px, py, qx, qy, sp, sq, t
    for k in range(n):
        px = poly[2 * k]
        py = poly[2 * k + 1]
        qx = poly[2 * ((k + 1) % n)]
        qy = poly[2 * ((k + 1) % n) + 1]
        sp = ex * (py - ay) - ey * (px - ax)
        sq = ex * (qy - ay) - ey * (qx - ax)
        if sp >= 0:
            out[2 * m] = px
            out[2 * m + 1] = py
            m += 1
        if (sp >= 0) != (sq >= 0):
            t = sp / (sp - sq)
            out[2 * m] = px + t * (qx - px)
            out[2 * m + 1] = py + t * (qy - py)
            m += 1
    return m


cdef double _inter_area(const double[:, ::1] A, Py_ssize_t i, const double[:, ::1] B, Py_ssize_t j) nogil:
    # a convex quad clipped by 4 half-planes has at most 8 vertices
    cdef double buf0[32]
    cdef double buf1[32]
    cdef double clip[8]
    cdef double* src = buf0
    cdef double* dst = buf1
    cdef double* tmp
    cdef int n = 4, k
    cdef double s = 0.0
    _corners(A[i, 0], A[i, 1], A[i, 2], A[i, 3], A[i, 4], src)
    _corners(B[j, 0], B[j, 1], B[j, 2], B[j, 3], B[j, 4], clip)
    for k in range(4):
        if n == 0:
            return 0.0
        n = _clip(src, n, clip[2 * k], clip[2 * k + 1], clip[2 * ((k + 1) % 4)], clip[2 * ((k + 1) % 4) + 1], dst)
        tmp = src
        src = dst
        dst = tmp
    if n < 3:
        return 0.0
    for k in range(n):
        s += src[2 * k] * src[2 * ((k + 1) % n) + 1] - src[2 * ((k + 1) % n)] * src[2 * k + 1]
    return fabs(0.5 * s)


def rect_intersection_area(a, b):
    cdef const double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64).reshape(1, 5)
    cdef const double[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64).reshape(1, 5)
    return _inter_area(A, 0, B, 0)


def iou_bev_matrix(a, b):
    cdef const double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 5)
    cdef const double[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 5)
    cdef Py_ssize_t na = A.shape[0], nb = B.shape[0], i, j
    out = np.zeros((na, nb))
    cdef double[:, ::1] o = out
    cdef double inter, union, v
    with nogil:
        for i in range(na):
            for j in range(nb):
                inter = _inter_area(A, i, B, j)
                union = A[i, 2] * A[i, 3] + B[j, 2] * B[j, 3] - inter
                if union > 0:
                    v = inter / union
                    o[i, j] = 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)
    return out
