"""Time each hot kernel on the numpy fallback and the compiled extension.

    python benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import math
import timeit

import numpy as np

from rainsim._kernels import backends
from rainsim.scene import HEAVY_SPRAY
from rainsim.splash import perlin_permutation


def workloads(rng):
    a = HEAVY_SPRAY
    r_j = rng.uniform(0.5, 40, 5000)
    r_i = r_j + rng.uniform(0.1, 30, 5000)
    i_i = rng.uniform(0, 1, 5000)
    pts = rng.uniform(-50, 50, (200_000, 3))
    perm = perlin_permutation(1)
    ca, cb = rng.normal(size=(2000, 3)), rng.normal(size=(2000, 3))

    def boxes(n):
        return np.c_[rng.uniform(-5, 5, (n, 2)), rng.uniform(0.5, 4, (n, 2)), rng.uniform(-math.pi, math.pi, n)]

    ba, bb = boxes(200), boxes(200)
    return {
        "perlin3_many (200k points)": lambda k: k.perlin3_many(pts, perm),
        "particle_intensity_many (5k pairs)": lambda k: k.particle_intensity_many(
            r_i, i_i, r_j, a.alpha, a.beta, a.beta0, a.tau_h, a.r1, a.r2, a.c, 129
        ),
        "nn_mean_dist (2k x 2k)": lambda k: k.nn_mean_dist(ca, cb),
        "iou_bev_matrix (200 x 200)": lambda k: k.iou_bev_matrix(ba, bb),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    mods = backends()
    if "compiled" not in mods:
        print("compiled extension not built; timing the numpy fallback only")
    jobs = workloads(np.random.default_rng(0))
    names = list(mods)
    print(f"{'kernel':40s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in jobs.items():
        best = {}
        for name, mod in mods.items():
            best[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = f"{label:40s}" + "".join(f"{best[n] * 1e3:10.1f}ms" for n in names)
        if len(names) > 1:
            row += f"{best['pure'] / best['compiled']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
