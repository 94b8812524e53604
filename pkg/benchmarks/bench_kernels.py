"""Time the numba kernels against their pure-numpy counterparts.

Each kernel is called once to trigger compilation (excluded from timing),
then timed with ``timeit`` on a fixed, seeded input.  A final end-to-end row
times one full bound pipeline in a subprocess per backend, selected with the
``CMESP_DISABLE_NUMBA`` flag.

    python benchmarks/bench_kernels.py [--repeat 5] [--skip-end-to-end]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from cmesp import _kernels as K
from cmesp._accel import NUMBA_INSTALLED
from cmesp.instance import random_spd
from cmesp.polytope import solve_lp


def make_cases():
    rng = np.random.default_rng(0)
    C = random_spd(40, rng)
    F = np.linalg.cholesky(C)
    x = np.full(40, 10 / 40)
    d = np.zeros(40)
    d[:2] = [0.4, -0.4]
    W = np.ascontiguousarray((F.T * x) @ F)
    B = np.ascontiguousarray((F.T * d) @ F)
    lam = np.sort(rng.uniform(0.1, 5.0, 200))[::-1].copy()
    mu = rng.standard_normal(60)
    C12 = random_spd(14, 1)
    A12 = rng.integers(1, 6, size=(2, 14)).astype(float)
    b12 = A12.sum(axis=1) * 0.5 + 2
    Ws = np.stack([W, np.eye(40) + 0.1 * W])
    Bs = np.stack([B, 0.1 * B])
    mix = (Ws, Bs, np.array([0, 1]), np.array([10, 10]), np.array([0.5, 0.5]), np.zeros(2), 1.0, 40)
    n = 30
    A_ub = rng.integers(1, 6, size=(3, n)).astype(float)
    b_ub = np.full(3, 3.0 * n * 0.3 + 5)
    c = rng.standard_normal(n)

    def lp(kernel):
        # solve_lp looks the pivot kernel up at call time
        saved = K.simplex_pivots
        K.simplex_pivots = kernel
        try:
            return solve_lp(c, A_ub, b_ub, np.vstack([np.ones((1, n))]), [9.0])
        finally:
            K.simplex_pivots = saved

    return {
        "phi_s (k=200)": (lambda v: v(lam, 60), "phi_s"),
        "gamma_line_search (k=40)": (lambda v: v(W, B, 10, 1.0, 40), "gamma_line_search"),
        "logsum_newton (60)": (lambda v: v(mu, 1.0), "logsum_newton"),
        "mix_line_search (2x40)": (lambda v: v(*mix), "mix_line_search"),
        "pivoted_cholesky (n=40)": (lambda v: v(C, 1e-12, 40), "pivoted_cholesky"),
        "subset_logdets (C(14,6))": (lambda v: v(C12, 6, A12, b12, 1e-13), "subset_logdets"),
        "swap_logdets (n=40, s=10)": (lambda v: v(C, np.arange(10), 1e-13), "swap_logdets"),
        "solve_lp (n=30, m=3)": (lp, "simplex_pivots"),
    }


END_TO_END = (
    "import time; from cmesp.instance import random_instance; from cmesp.linx_bound import optimize_gamma;"
    "from cmesp.fact_bound import ddfact_bound; inst = random_instance(10, 4, seed=1, m=2);"
    "ddfact_bound(inst); optimize_gamma(inst); t = time.perf_counter();"
    "[ddfact_bound(random_instance(10, 4, seed=s, m=2)) for s in range(20)];"
    "optimize_gamma(inst); print(time.perf_counter() - t)"
)


def end_to_end(disable):
    env = dict(os.environ, CMESP_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-end-to-end", action="store_true")
    args = parser.parse_args(argv)
    if not NUMBA_INSTALLED:
        print("numba is not installed; both columns time the numpy code")
    print(f"{'kernel':28s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, (call, kernel) in make_cases().items():
        fnp = getattr(K, f"_{kernel}_numpy")
        fnb = getattr(K, f"_{kernel}_numba")
        call(fnb)  # compile
        times = []
        for f in (fnp, fnb):
            timer = timeit.Timer(lambda f=f: call(f))
            number, _ = timer.autorange()
            best = min(timer.repeat(args.repeat, number)) / number
            times.append(best * 1e3)
        print(f"{name:28s} {times[0]:11.3f} {times[1]:11.3f} {times[0] / times[1]:7.1f}x")
    if not args.skip_end_to_end:
        tnp, tnb = end_to_end(True), end_to_end(False)
        print(f"{'20 ddfact + gamma search':28s} {tnp * 1e3:11.1f} {tnb * 1e3:11.1f} {tnp / tnb:7.1f}x")


if __name__ == "__main__":
    main()
