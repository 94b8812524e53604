"""Acceptance gate: thirteen numbered criteria at their stated tolerances.

Each test records one PASS/FAIL/SKIP line; the lines are printed together at
the end of the pytest run (see ``conftest.pytest_terminal_summary``).  Run
this file alone with ``pytest tests/test_acceptance.py`` or
``python tests/test_acceptance.py``.

Criterion 13 needs the n=2000 covariance matrix; point ``CMESP_N2000_MATRIX``
at a matrix file in the package format to enable it.
"""

import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from cmesp.exact import branch_and_bound, brute_force, iterative_fix
from cmesp.fact_bound import (
    certify,
    comp_ddfact,
    ddfact_bound,
    ddfact_objective,
    fix_variables,
    gamma_s_gradient,
    spectral_bound,
)
from cmesp.instance import Instance, complement, factorize, load_instance, random_instance, random_spd, scale
from cmesp.linx_bound import (
    linx_bound,
    linx_gradient,
    linx_hessian,
    linx_objective,
    optimize_gamma,
)
from cmesp.mixing import ddfact_component, fix_mix, linx_component, mix_bound, optimize_alpha
from cmesp.fact_bound import fix_from_margins
from cmesp.polytope import InfeasibleError, Polytope, linear_oracle

RESULTS = {}


def record(number, ok, detail):
    RESULTS[number] = ("PASS" if ok else "FAIL", detail)
    assert ok, f"criterion {number}: {detail}"


def central_diff(f, x, h):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# ---------------------------------------------------------------------------
# Shared sweep over 100 seeded instances (criteria 1, 2, 5, 8)
# ---------------------------------------------------------------------------


def sweep_instances(count=100):
    """``count`` instances with n in 5..10 cycling through every valid s.

    Each pass over the (n, s) pairs shifts the number of side constraints
    (0, 1 or 2), so repeated pairs are seen with different m.
    """
    pairs = [(n, s) for n in range(5, 11) for s in range(1, n)]
    out = []
    for i in range(count):
        n, s = pairs[i % len(pairs)]
        m = (i + i // len(pairs)) % 3
        out.append(random_instance(n, s, seed=1000 + i, m=m))
    return out


@dataclass
class SweepRecord:
    inst: Instance
    z: float
    optima: list
    bounds: dict = field(default_factory=dict)  # name -> (value, gap, FixReport)


@pytest.fixture(scope="module")
def sweep():
    t0 = time.perf_counter()
    records, infeasible = [], 0
    for inst in sweep_instances():
        try:
            bf = brute_force(inst)
        except InfeasibleError:
            infeasible += 1
            continue
        rec = SweepRecord(inst, bf.z, bf.optima)
        P = Polytope.of(inst)
        z = bf.z

        _, cert = ddfact_bound(inst)
        rec.bounds["ddfact"] = (cert.value, cert.gap, fix_variables(cert, z))

        comp = comp_ddfact(inst)
        rec.bounds["comp_ddfact"] = (comp.bound, comp.certificate.gap, comp.fix(z))

        _, lc = linx_bound(inst, 1.0, P)
        rec.bounds["linx@1"] = (lc.value, lc.gap, fix_from_margins(lc.upsilon, lc.nu, lc.value, z))

        g = optimize_gamma(inst, P)
        gc = g.certificate
        rec.bounds["linx@opt"] = (gc.value, gc.gap, fix_from_margins(gc.upsilon, gc.nu, gc.value, z))

        a = optimize_alpha(inst, ddfact_component(inst), linx_component(inst, g.gamma), P)
        rec.bounds["mix"] = (a.value, a.certificate.gap, fix_mix(a.certificate, z))
        records.append(rec)
    return records, infeasible, time.perf_counter() - t0


def test_criterion_01_validity(sweep):
    records, infeasible, seconds = sweep
    worst = min(v[0] - r.z for r in records for v in r.bounds.values())
    ok = worst >= -1e-6 and seconds < 120
    record(
        1,
        ok,
        f"{len(records)} instances ({infeasible} without a feasible subset), "
        f"min(bound - z) = {worst:.3e}, {seconds:.1f}s",
    )


def test_criterion_02_tight_certificates(sweep):
    records, _, _ = sweep
    gaps = [abs(v[1]) for r in records for v in r.bounds.values()]
    record(2, max(gaps) <= 1e-6, f"{len(gaps)} certificates, max |gap| = {max(gaps):.3e}")


def test_criterion_03_scaling_identity():
    worst = 0.0
    for i in range(20):
        inst = random_instance(5 + i % 5, 1 + i % 4, seed=3000 + i, m=i % 2)
        _, base = ddfact_bound(inst)
        for gamma in (0.1, 3.0, 10.0):
            scaled, off = scale(inst, gamma)
            _, cert = ddfact_bound(scaled)
            worst = max(worst, abs(cert.value + off - base.value))
    record(3, worst <= 1e-6, f"20 instances x 3 scales, max deviation {worst:.3e}")


def test_criterion_04_factorization_independence():
    worst, deficient = 0.0, 0
    for i in range(20):
        n = 6 + i % 5
        s = 2 + i % 3
        rank = None if i % 2 == 0 else s + (i % (n - s))
        deficient += rank is not None and rank < n
        inst = Instance(random_spd(n, 4000 + i, rank=rank), s)
        vals = [ddfact_bound(inst, factorize(inst, m))[1].value for m in ("cholesky-pivoted", "spectral", "sqrt")]
        worst = max(worst, max(vals) - min(vals))
    record(4, worst <= 1e-6, f"20 instances ({deficient} rank-deficient), max spread {worst:.3e}")


def test_criterion_05_spectral_dominance(sweep):
    records, _, _ = sweep
    excess = max(r.bounds["ddfact"][0] - spectral_bound(r.inst.C, r.inst.s) for r in records)
    record(5, excess <= 1e-8, f"{len(records)} instances, max(certified ddfact - spectral) = {excess:.3e}")


def test_criterion_06_binary_restriction():
    rng = np.random.default_rng(6)
    worst, count = 0.0, 0
    while count < 200:
        n = int(rng.integers(4, 11))
        s = int(rng.integers(1, n))
        inst = random_instance(n, s, seed=int(rng.integers(1 << 30)), m=int(rng.integers(0, 3)))
        fac = factorize(inst, "spectral")
        S = np.sort(rng.choice(n, s, replace=False))
        x = np.zeros(n)
        x[S] = 1.0
        if not inst.is_feasible(x):
            continue
        ref = np.linalg.slogdet(inst.C[np.ix_(S, S)])[1]
        worst = max(worst, abs(ddfact_objective(fac, x, s) - ref))
        count += 1
    record(6, worst <= 1e-8, f"200 binary feasible points, max |Gamma_s - ldet| = {worst:.3e}")


def test_criterion_07_derivatives():
    rng = np.random.default_rng(7)
    g_fact = g_linx = h_linx = 0.0
    skipped = 0
    for i in range(50):
        n = int(rng.integers(4, 9))
        s = int(rng.integers(1, n))
        inst = random_instance(n, s, seed=7000 + i)
        x = rng.uniform(0.05, 0.95, size=n)
        gamma = float(np.exp(rng.uniform(-1.5, 1.5)))
        fac = factorize(inst, "spectral")
        g, smooth = gamma_s_gradient(fac, x, s)
        if smooth:
            fd = central_diff(lambda y: ddfact_objective(fac, y, s), x, 1e-5)
            g_fact = max(g_fact, np.linalg.norm(g - fd) / np.linalg.norm(fd))
        else:
            skipped += 1
        C = inst.C
        g = linx_gradient(C, gamma, x)
        fd = central_diff(lambda y: linx_objective(C, gamma, y, s), x, 1e-5)
        g_linx = max(g_linx, np.linalg.norm(g - fd) / np.linalg.norm(fd))
        H = linx_hessian(C, gamma, x)
        Hfd = np.array([central_diff(lambda y: linx_gradient(C, gamma, y)[k], x, 1e-5) for k in range(n)])
        h_linx = max(h_linx, np.abs(H - Hfd).max())
    ok = g_fact <= 1e-5 and g_linx <= 1e-5 and h_linx <= 1e-6
    record(
        7,
        ok,
        f"50 points ({skipped} nonsmooth skipped): Gamma_s grad rel {g_fact:.1e}, "
        f"linx grad rel {g_linx:.1e}, linx Hessian abs {h_linx:.1e}",
    )


def test_criterion_08_fixing_soundness(sweep):
    records, _, _ = sweep
    violations = fixed = 0
    for r in records:
        for _, _, rep in r.bounds.values():
            fixed += rep.count
            for opt in r.optima:
                o = set(opt)
                violations += len(set(rep.fixed_zero) & o) + len(set(rep.fixed_one) - o)
    record(8, violations == 0, f"{fixed} fixings checked against every optimum, {violations} violations")


def test_criterion_09_complement_identities():
    exact_worst = 0.0
    for i in range(20):
        n = 5 + i % 5
        inst = random_instance(n, 1 + i % (n - 1), seed=9000 + i)
        comp, off = complement(inst)
        exact_worst = max(exact_worst, abs(brute_force(inst).z - brute_force(comp).z - off))
    linx_worst = 0.0
    for i in range(8):
        n = 5 + i % 4
        inst = random_instance(n, 1 + i % (n - 1), seed=9100 + i)
        comp, off = complement(inst)
        linx_worst = max(linx_worst, abs(optimize_gamma(inst).value - optimize_gamma(comp).value - off))
    ok = exact_worst <= 1e-8 and linx_worst <= 1e-4
    record(9, ok, f"enumeration identity {exact_worst:.1e} (20), optimized linx invariance {linx_worst:.1e} (8)")


def test_criterion_10_mixing():
    worst_gain = -math.inf
    worst_convex = -math.inf
    improved = 0
    for i in range(20):
        n = 6 + i % 5
        inst = random_instance(n, 2 + i % (n - 3), seed=10000 + i, m=i % 3)
        P = Polytope.of(inst)
        g = optimize_gamma(inst, P)
        a, b = ddfact_component(inst), linx_component(inst, g.gamma)
        search = optimize_alpha(inst, a, b, P)
        ends = dict(search.history)
        best_end = min(ends[0.0], ends[1.0])
        worst_gain = max(worst_gain, search.value - best_end)
        improved += search.value < best_end - 1e-6
        mid, _ = mix_bound(inst, [a, b], [0.5, 0.5], P)
        worst_convex = max(worst_convex, mid.value - 0.5 * (ends[0.0] + ends[1.0]))
    ok = worst_gain <= 1e-6 and worst_convex <= 1e-8
    record(
        10,
        ok,
        f"20 pairs ({improved} strictly improved): max(v* - min endpoint) = {worst_gain:.1e}, "
        f"max midpoint excess = {worst_convex:.1e}",
    )


def test_criterion_11_eps_monotonicity():
    rng = np.random.default_rng(11)
    worst = -math.inf
    strict = 0
    for i in range(20):
        n = int(rng.integers(7, 11))
        s = int(rng.integers(2, 4))
        inst = random_instance(n, s, seed=11000 + i)
        fac = factorize(inst, "spectral")
        P = Polytope.of(inst)
        # two vertices: support at most 2s < n, so F(x) is rank deficient
        v1, _ = linear_oracle(rng.standard_normal(n), P)
        v2, _ = linear_oracle(rng.standard_normal(n), P)
        t = rng.uniform(0.2, 0.8)
        x = (1 - t) * v1 + t * v2
        if np.linalg.matrix_rank(inst.C[np.ix_(x > 0, x > 0)]) < s:
            x = 0.5 * x + 0.5 * np.full(n, s / n)
        g0 = certify(inst, fac, x, 0.0, P=P).gap
        g5 = certify(inst, fac, x, 0.5, P=P).gap
        worst = max(worst, g0 - g5)
        strict += g5 > g0 + 1e-10
    record(11, worst <= 1e-10, f"20 pairs ({strict} strictly larger at eps=0.5), max(gap0 - gap0.5) = {worst:.1e}")


def test_criterion_12_end_to_end():
    bad_bnb = bad_fix = bad_solved = solved = 0
    for i in range(30):
        n = 6 + i % 7
        inst = random_instance(n, 1 + (i * 5) % (n - 1), seed=12000 + i, m=i % 3)
        try:
            z = brute_force(inst).z
        except InfeasibleError:
            inst = random_instance(n, 1 + (i * 5) % (n - 1), seed=12000 + i)
            z = brute_force(inst).z
        r = branch_and_bound(inst, "ddfact")
        bad_bnb += not (r.proven and abs(r.z - z) <= 1e-8 and inst.is_feasible(r.x))
        f = iterative_fix(inst, ["ddfact", "linx"], finish="brute")
        bad_fix += not (abs(f.lb - z) <= 1e-8 and abs(inst.value(f.x) - z) <= 1e-8)
        if f.solved:
            solved += 1
            bad_solved += not abs(inst.value(f.x) - z) <= 1e-8
    ok = bad_bnb == bad_fix == bad_solved == 0
    record(
        12,
        ok,
        f"30 instances: B&B mismatches {bad_bnb}, iterative_fix mismatches {bad_fix}, "
        f"solved-but-suboptimal {bad_solved} of {solved} solved",
    )


def test_criterion_13_large_iterated_fixing():
    path = os.environ.get("CMESP_N2000_MATRIX")
    if not path:
        RESULTS[13] = ("SKIP", "CMESP_N2000_MATRIX not set; n=2000 data not supplied")
        pytest.skip("n=2000 covariance file not supplied")
    inst = load_instance(path, 20)
    res = iterative_fix(inst, ["ddfact", "linx@opt"], max_rounds=3)
    n1 = res.rounds[1].n if len(res.rounds) > 1 else res.reduced.n
    ok = n1 == 28 and res.solved and len(res.rounds) <= 3
    record(13, ok, f"n after round 1: {n1}, status {res.status} after {len(res.rounds)} rounds")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
