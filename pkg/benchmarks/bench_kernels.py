"""Numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once untimed (compilation), then the best of ``--repeat``
runs is reported. The numpy path is what ``ZIPPER3D_NO_NUMBA=1`` selects.
"""
import argparse
import math
import time

import numpy as np

from zipper3d import _accel
from zipper3d import family as F


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    cfg = F.FamilyConfig()
    z = F.build_zipper(cfg, F.default_xi(cfg))
    t = F.linear_zipper(cfg)
    u = np.random.default_rng(0).random(100_000)
    desc = (t.starts, np.asarray(t.ratios), np.asarray(t.signature, dtype=np.bool_), 14)
    digits, _ = _accel.descend_np(u, *desc)
    anchors = np.tile(z.vertices[0], (u.size, 1))
    arrs = z.arrays()
    ns = np.arange(1, 100_001, dtype=np.int64)
    bp = (0.0, 0.0, math.log(cfg.q1), cfg.alpha1, math.log(cfg.q2m), -cfg.alpha2m, 0, 100_000, 4)
    kr = (math.sqrt(2), math.sqrt(3), 2000, 1e-12)
    return {
        "descend (1e5 params, depth 14)": (lambda: _accel.descend_nb(u, *desc), lambda: _accel.descend_np(u, *desc)),
        "chain_apply (1e5 chains, depth 14)": (lambda: _accel.chain_apply_nb(digits, anchors, *arrs),
                                               lambda: _accel.chain_apply_np(digits, anchors, *arrs)),
        "best_partner (n <= 1e5)": (lambda: _accel.best_partner_nb(ns, *bp), lambda: _accel.best_partner_np(ns, *bp)),
        "kron_search (height 2000)": (lambda: _accel.kron_search_nb(*kr), lambda: _accel.kron_search_np(*kr)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba not importable: both columns run numpy")
    print(f"{'kernel':40s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, (nb, np_) in cases().items():
        a, b = best_of(nb, args.repeat), best_of(np_, args.repeat)
        print(f"{name:40s} {a:10.4f} {b:10.4f} {b / a:8.1f}")


if __name__ == "__main__":
    main()
