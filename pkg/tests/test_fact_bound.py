import math

import numpy as np
import pytest

from cmesp.fact_bound import (
    FixReport,
    build_dual_theta,
    certificate_residual,
    certify,
    comp_ddfact,
    ddfact_bound,
    ddfact_objective,
    fix_from_margins,
    fix_variables,
    gamma_s,
    gamma_s_gradient,
    iota,
    omega,
    phi_s,
    solve_ddfact,
    spectral_bound,
)
from cmesp.instance import Instance, factorize, random_instance, random_spd, scale
from cmesp.polytope import Polytope, find_start, linear_oracle

from conftest import central_diff, enumerate_subsets


def naive_phi(lam, s):
    lam = np.sort(np.asarray(lam, float))[::-1]
    for i in range(s):
        delta = lam[i:].sum() / (s - i)
        upper = math.inf if i == 0 else lam[i - 1]
        if upper > delta >= lam[i]:
            return i, np.sum(np.log(lam[:i])) + (s - i) * math.log(delta)
    raise AssertionError("no index satisfies the condition")


@pytest.mark.parametrize("lam,s,expected", [((4, 1, 1), 2, (1, 2.0)), ((1, 1, 1), 2, (0, 1.5))])
def test_iota_examples(lam, s, expected):
    r = iota(lam, s)
    assert (r.iota, r.delta) == (expected[0], pytest.approx(expected[1]))


def test_iota_uniform_spectrum():
    for s in range(1, 6):
        assert iota(np.full(6, 2.5), s).iota == 0


def test_iota_rejects_unsorted():
    with pytest.raises(ValueError):
        iota([1, 2, 3], 2)


@pytest.mark.parametrize("seed", range(30))
def test_phi_matches_naive_scan(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 9))
    s = int(rng.integers(1, k + 1))
    lam = np.sort(np.exp(rng.uniform(-3, 3, size=k)))[::-1]
    i, ref = naive_phi(lam, s)
    assert iota(lam, s).iota == i
    assert phi_s(lam, s) == pytest.approx(ref, abs=1e-12)
    assert phi_s(lam, s) >= np.sum(np.log(lam[:s])) - 1e-12


def test_gamma_s_examples():
    assert gamma_s(np.eye(3), 2) == pytest.approx(2 * math.log(1.5))
    C = np.array([[2.0, 1.0], [1.0, 2.0]])
    fac = factorize(Instance(C, 1), "spectral", s=2)
    assert ddfact_objective(fac, [1, 1], 2) == pytest.approx(math.log(3))
    assert gamma_s(np.diag([1.0, 0, 0]), 2) == -math.inf


@pytest.mark.parametrize("seed", range(10))
def test_gamma_s_equals_logdet_at_binary_points(seed):
    inst = random_instance(8, 3, seed=seed)
    fac = factorize(inst, "spectral")
    rng = np.random.default_rng(seed)
    for _ in range(5):
        S = np.sort(rng.choice(8, 3, replace=False))
        x = np.zeros(8)
        x[S] = 1
        assert ddfact_objective(fac, x, 3) == pytest.approx(np.linalg.slogdet(inst.C[np.ix_(S, S)])[1], abs=1e-9)


def test_gradient_uniform_example():
    fac = factorize(Instance(np.eye(3), 1), "sqrt")
    g, smooth = gamma_s_gradient(fac, np.full(3, 2 / 3), 2)
    np.testing.assert_allclose(g, 1.0)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    inst = random_instance(7, 3, seed=seed)
    fac = factorize(inst, "spectral")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.2, 0.8, size=7)
    g, smooth = gamma_s_gradient(fac, x, 3)
    assert smooth
    fd = central_diff(lambda y: ddfact_objective(fac, y, 3), x)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)


def test_ddfact_identity_and_diagonal():
    for n, s in [(4, 2), (5, 1), (6, 5)]:
        res, cert = ddfact_bound(Instance(np.eye(n), s))
        assert res.value == pytest.approx(0.0, abs=1e-12)
        assert cert.value == pytest.approx(0.0, abs=1e-9)
    res, cert = ddfact_bound(Instance(np.diag([4.0, 1.0, 1.0]), 1))
    assert cert.value == pytest.approx(math.log(4), abs=1e-7)
    assert cert.value <= spectral_bound(np.diag([4.0, 1.0, 1.0]), 1) + 1e-8


def test_dual_theta_examples():
    fac = factorize(Instance(np.eye(3), 1), "sqrt")
    T = build_dual_theta(fac, np.full(3, 2 / 3), 2)
    np.testing.assert_allclose(T, np.eye(3), atol=1e-12)
    assert omega(T, 2) == pytest.approx(0.0, abs=1e-12)
    fac = factorize(Instance(np.diag([4.0, 1.0]), 1), "spectral")
    for eps in (0.0, 0.5):
        T = build_dual_theta(fac, [1, 0], 1, eps)
        np.testing.assert_allclose(np.linalg.eigvalsh(T), sorted([0.25, (1 + eps) / 4]))
    with pytest.raises(ValueError):
        build_dual_theta(fac, [1, 0], 1, -0.1)


@pytest.mark.parametrize("seed", range(12))
def test_certificate_is_tight_and_valid(seed):
    n = 6 + seed % 4
    inst = random_instance(n, 2 + seed % 3, seed=seed, m=seed % 3)
    fac = factorize(inst, "spectral")
    res, cert = ddfact_bound(inst, fac)
    assert res.converged
    assert abs(cert.gap) <= 1e-6
    assert certificate_residual(cert, fac, Polytope.of(inst)) < 1e-9
    z, _ = enumerate_subsets(inst)
    assert cert.value >= z - 1e-9


@pytest.mark.parametrize("seed", range(6))
def test_certificate_valid_at_arbitrary_points(seed):
    inst = random_instance(7, 3, seed=seed, m=1)
    fac = factorize(inst, "spectral")
    P = Polytope.of(inst)
    z, _ = enumerate_subsets(inst)
    rng = np.random.default_rng(seed)
    x0 = find_start(P)
    v, _ = linear_oracle(rng.standard_normal(7), P)
    for t in (0.0, 0.3, 0.7):
        for eps in (0.0, 0.5):
            cert = certify(inst, fac, (1 - t) * x0 + t * v, eps)
            assert cert.value >= z - 1e-9
            assert cert.gap >= -1e-9


@pytest.mark.parametrize("gamma", [0.1, 3.0, 10.0])
def test_scaling_identity(gamma):
    inst = random_instance(7, 3, seed=int(gamma * 10))
    _, base = ddfact_bound(inst)
    scaled, off = scale(inst, gamma)
    _, cert = ddfact_bound(scaled)
    assert cert.value + off == pytest.approx(base.value, abs=1e-6)


@pytest.mark.parametrize("rank", [None, 5])
def test_factorization_independence(rank):
    inst = Instance(random_spd(8, 21, rank=rank), 3)
    vals = [ddfact_bound(inst, factorize(inst, m))[1].value for m in ("spectral", "cholesky-pivoted", "sqrt")]
    assert max(vals) - min(vals) <= 1e-6


def test_comp_ddfact_diagonal():
    out = comp_ddfact(Instance(np.diag([2.0, 0.5]), 1))
    assert out.offset == pytest.approx(0.0, abs=1e-15)
    assert out.bound == pytest.approx(math.log(2), abs=1e-7)


@pytest.mark.parametrize("seed", range(5))
def test_comp_ddfact_valid(seed):
    inst = random_instance(7, 4, seed=seed, m=seed % 2)
    out = comp_ddfact(inst)
    z, _ = enumerate_subsets(inst)
    assert out.bound >= z - 1e-9
    assert abs(out.certificate.gap) <= 1e-6


def test_fix_from_margins_rules():
    rep = fix_from_margins([0.0, 2e-10, 0.5], [0, 0, 0], value=1.0, lb=1.0)
    assert rep.fixed_zero == (1, 2) and rep.fixed_one == ()
    rep = fix_from_margins(np.zeros(3), np.zeros(3), 2.0, 1.0)
    assert rep.count == 0
    # strict inequality at the threshold
    rep = fix_from_margins([0.1 + 1e-10], [0.0], 1.1, 1.0, threshold=1e-10)
    assert rep.fixed_zero == ()
    with pytest.raises(ArithmeticError):
        fix_from_margins([1.0], [1.0], 0.0, 0.0)


def test_fix_report_merge_and_swap():
    a = FixReport((0,), (3,), np.zeros(4), np.zeros(4))
    b = FixReport((1,), (), np.ones(4), np.zeros(4))
    m = a.merged(b)
    assert m.fixed_zero == (0, 1) and m.fixed_one == (3,)
    assert m.swapped().fixed_one == (0, 1)
    with pytest.raises(ArithmeticError):
        a.merged(FixReport((3,), (), np.zeros(4), np.zeros(4)))


@pytest.mark.parametrize("seed", range(8))
def test_fixing_with_optimal_lb_is_sound(seed):
    inst = random_instance(8, 3 + seed % 3, seed=seed, m=seed % 2)
    z, S = enumerate_subsets(inst)
    _, cert = ddfact_bound(inst)
    rep = fix_variables(cert, z)
    assert not set(rep.fixed_zero) & set(S)
    assert set(rep.fixed_one) <= set(S)


def test_solver_with_x0_and_s_override():
    inst = random_instance(6, 2, seed=1)
    fac = factorize(inst, "spectral", s=3)
    res = solve_ddfact(inst, fac, Polytope(6, 3), s=3)
    assert res.x.sum() == pytest.approx(3)
    res2 = solve_ddfact(inst, fac, Polytope(6, 3), s=3, x0=res.x)
    assert res2.value == pytest.approx(res.value, abs=1e-8)
