"""Time the numba kernels against the numpy fallback on the same inputs.

    python benchmarks/bench_kernels.py [--repeat 3]

The JIT switch is read on every kernel call, so both paths run in one process.
"""
import argparse
import os
import time

import numpy as np

from ifsca import kernels
from ifsca.catalog import build_example, invariant_arc
from ifsca.space import Base, Power
from ifsca._rng import draw_symbols


def _cases():
    circle = build_example("circle_ns_rotation").system
    arcs = build_example("circle_two_arcs")
    rng = np.random.default_rng(0)
    xs, ys = rng.random(2000), rng.random(2000)
    syms = draw_symbols(rng, circle.probs, (4, 200_000))
    mc = draw_symbols(rng, circle.probs, (20_000, 64))
    ia = invariant_arc(arcs)
    inv = (ia.lo, ia.hi, ia.r_up, ia.r_low)
    alpha = arcs.constants.alpha
    return {
        "psi_profile depth 12, 2000 pairs, sine": lambda: kernels.psi_profile(circle.packed, xs, ys, 12),
        "psi_profile depth 12, 2000 pairs, affine": lambda: kernels.psi_profile(arcs.system.packed, xs, ys, 12),
        "log_profile depth 10, 2000 pairs": lambda: kernels.log_profile(circle.packed, xs, ys, 10),
        "deriv_profile depth 12, 256 points": lambda: kernels.deriv_profile(circle.packed, xs[:256], 12),
        "sup_profile depth 60, 500 pairs": lambda: kernels.sup_profile(arcs.system.packed, xs[:500], ys[:500], 60, 1,
                                                                      alpha, inv)[:2],
        "chain_samples 4 x 200k": lambda: kernels.chain_samples(circle.packed, np.array([0.1, 0.2, 0.3, 0.4]), syms,
                                                                1000),
        "mc_paths 20k x 64": lambda: kernels.mc_paths(circle.packed, 0.1, 0.6, mc),
    }


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    cases = _cases()
    rows = []
    for name, fn in cases.items():
        os.environ.pop("IFSCA_DISABLE_JIT", None)
        fn()  # compile
        t_jit = _time(fn, args.repeat)
        a = fn()
        os.environ["IFSCA_DISABLE_JIT"] = "1"
        t_np = _time(fn, args.repeat)
        b = fn()
        os.environ.pop("IFSCA_DISABLE_JIT", None)
        a = a if isinstance(a, tuple) else (a,)
        b = b if isinstance(b, tuple) else (b,)
        err = max(float(np.nanmax(np.abs(np.asarray(u, float) - np.asarray(v, float)))) for u, v in zip(a, b))
        rows.append((name, t_jit, t_np, err))
    w = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{w}}  {'numba [s]':>10}  {'numpy [s]':>10}  {'speedup':>8}  {'max |diff|':>10}")
    for name, tj, tn, err in rows:
        print(f"{name:<{w}}  {tj:10.4f}  {tn:10.4f}  {tn / tj:8.1f}  {err:10.2e}")


if __name__ == "__main__":
    main()
