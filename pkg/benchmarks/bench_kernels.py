"""Wall-clock comparison of the compiled and pure-Python path kernels.

Runs the same paths through both backends (identical streams, so the
outputs agree to rounding) and reports the median time per path.

    python benchmarks/bench_kernels.py [--paths N] [--repeat R]
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from multiscale_mdp.engine import IntegratorConfig, integrate_frozen_fast, integrate_multiscale
from multiscale_mdp.kernels import COMPILED_AVAILABLE
from multiscale_mdp.model import builtin_gauss_ou
from multiscale_mdp.rng import Streams
from multiscale_mdp.segment import InitialDatum, Segment


def _time(fn, paths: int, repeat: int) -> float:
    runs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for i in range(paths):
            fn(Streams(1, i))
        runs.append((time.perf_counter() - t0) / paths)
    return statistics.median(runs)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--paths", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not COMPILED_AVAILABLE:
        print("compiled kernels are not built; only the Python backend is available")
        return 1

    cs = builtin_gauss_ou(f1_mod=0.5)
    cfg = IntegratorConfig(epsilon=0.01, dt=0.001, T=1.0, delay_tau=1.0)
    chi = InitialDatum.constant([1.0])
    zeta = Segment.constant([1.0], 1.0)
    cases = {
        "multiscale path (eps=0.01, dt=1e-3, T=1)": lambda b: (
            lambda s: integrate_multiscale(cs, cfg, chi, [0.0], s, backend=b)
        ),
        "frozen fast path (dt=1e-3, T=50)": lambda b: (
            lambda s: integrate_frozen_fast(cs, zeta, [0.0], 50.0, 1e-3, s, backend=b)
        ),
    }
    print(f"{'case':<44} {'compiled [ms]':>14} {'python [ms]':>12} {'speed-up':>9}")
    for name, make in cases.items():
        a = make("compiled")(Streams(9))
        b = make("python")(Streams(9))
        ra = a.slow.right if hasattr(a, "slow") else a.right
        rb = b.slow.right if hasattr(b, "slow") else b.right
        assert np.allclose(ra, rb, atol=1e-12), "backends disagree"
        tc = _time(make("compiled"), args.paths, args.repeat)
        tp = _time(make("python"), args.paths, args.repeat)
        print(f"{name:<44} {1e3 * tc:>14.2f} {1e3 * tp:>12.2f} {tp / tc:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
