import math

import numpy as np
import pytest

from cmesp.fact_bound import comp_ddfact, ddfact_bound
from cmesp.instance import Instance, random_instance
from cmesp.linx_bound import linx_bound, linx_objective
from cmesp.mixing import (
    MixComponent,
    DmixCertificate,
    MixWeights,
    certify_mix,
    comp_ddfact_component,
    ddfact_component,
    fix_mix,
    linx_component,
    make_component,
    mix_bound,
    mix_gradient,
    mix_objective,
    mix_residual,
    optimize_alpha,
)
from cmesp.polytope import Polytope

from conftest import central_diff, enumerate_subsets


def test_weights_validation():
    with pytest.raises(ValueError):
        MixWeights([0.5, 0.6])
    with pytest.raises(ValueError):
        MixWeights([-0.1, 1.1])
    np.testing.assert_allclose(MixWeights.pair(0.25).alpha, [0.75, 0.25])


def test_component_kind_validation():
    with pytest.raises(ValueError):
        make_component(Instance(np.eye(3), 1), "nope")
    with pytest.raises(ValueError):
        linx_component(Instance(np.eye(3), 1), -1.0)


def test_components_reproduce_single_objectives():
    inst = random_instance(6, 2, seed=5)
    x = np.linspace(0.1, 0.6, 6)
    x *= 2 / x.sum()
    lx = linx_component(inst, 1.7)
    assert lx.value(lx.affine(x)) == pytest.approx(linx_objective(inst.C, 1.7, x, 2), abs=1e-12)
    cd = comp_ddfact_component(inst)
    # L(x) = C^{-1/2} Diag(e - x) C^{-1/2} spectrally matches F^T Diag(e - x) F for C^{-1} = F F^T
    W = cd.affine(x)
    Ci = np.linalg.inv(inst.C)
    Ri = np.linalg.cholesky(Ci)
    ref = Ri.T @ np.diag(1 - x) @ Ri
    np.testing.assert_allclose(np.linalg.eigvalsh(W), np.linalg.eigvalsh(ref), atol=1e-10)
    for j in range(6):
        np.testing.assert_allclose(cd.direction(np.eye(6)[j]), cd.L(j), atol=1e-12)


def test_weight_collapse():
    inst = random_instance(6, 3, seed=2)
    comps = [ddfact_component(inst), linx_component(inst)]
    x = np.full(6, 0.5)
    assert mix_objective(x, comps, [1, 0]) == pytest.approx(comps[0].value(comps[0].affine(x)))
    assert mix_objective(x, comps, [0, 1]) == pytest.approx(comps[1].value(comps[1].affine(x)))


def test_identity_half_half_is_zero():
    inst = Instance(np.eye(5), 2)
    comps = [ddfact_component(inst), linx_component(inst)]
    res, cert = mix_bound(inst, comps, [0.5, 0.5])
    assert res.value == pytest.approx(0.0, abs=1e-12)
    assert cert.value == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_finite_differences(seed):
    inst = random_instance(6, 3, seed=seed)
    comps = [ddfact_component(inst), comp_ddfact_component(inst), linx_component(inst, 0.7)]
    a = np.array([0.2, 0.3, 0.5])
    x = np.random.default_rng(seed).uniform(0.2, 0.8, 6)
    g = mix_gradient(x, comps, a)
    fd = central_diff(lambda y: mix_objective(y, comps, a), x)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("seed", range(4))
def test_single_component_matches_dedicated_bounds(seed):
    inst = random_instance(7, 3, seed=seed, m=seed % 2)
    checks = [
        (ddfact_component(inst), ddfact_bound(inst)[1].value),
        (comp_ddfact_component(inst), comp_ddfact(inst).bound),
        (linx_component(inst, 2.0), linx_bound(inst, 2.0)[1].value),
    ]
    for comp, ref in checks:
        _, cert = mix_bound(inst, [comp], [1.0])
        assert cert.value == pytest.approx(ref, abs=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_mixed_certificate_tight_and_valid(seed):
    inst = random_instance(7 + seed % 3, 3, seed=seed, m=seed % 3)
    comps = [ddfact_component(inst), comp_ddfact_component(inst), linx_component(inst)]
    a = np.array([0.5, 0.2, 0.3])
    P = Polytope.of(inst)
    res, cert = mix_bound(inst, comps, a, P)
    assert abs(cert.gap) <= 1e-6
    assert mix_residual(cert, comps, P) < 1e-9
    assert cert.value >= enumerate_subsets(inst)[0] - 1e-9
    # weak duality also holds at a point far from the optimum
    far = certify_mix(inst, comps, a, np.full(inst.n, 3 / inst.n), P, eps=0.5)
    assert far.value >= cert.value - 1e-9


def test_zero_weight_component_has_no_theta():
    inst = random_instance(6, 2, seed=1)
    comps = [ddfact_component(inst), linx_component(inst)]
    _, cert = mix_bound(inst, comps, [1.0, 0.0])
    assert cert.thetas[1] is None


def test_fix_mix_boundary_is_strict():
    # binary fractions so the margin equals the threshold exactly
    cert = DmixCertificate([None], np.array([0.375, 0.5]), np.zeros(2), np.zeros(0), 0.0, 1.0, 0.0, np.ones(1))
    rep = fix_mix(cert, lb=0.75, threshold=0.125)
    assert rep.fixed_zero == (1,)


def test_identical_components_flat():
    inst = random_instance(6, 3, seed=3)
    c = ddfact_component(inst)
    search = optimize_alpha(inst, c, c)
    assert search.value == pytest.approx(search.history[0][1], abs=1e-8)
    assert search.value == pytest.approx(search.history[-1][1], abs=1e-8)


@pytest.mark.parametrize("seed", range(4))
def test_optimize_alpha_never_worse_than_endpoints(seed):
    inst = random_instance(8, 2 + seed, seed=seed, m=seed % 2)
    a, b = ddfact_component(inst), linx_component(inst)
    search = optimize_alpha(inst, a, b)
    ends = dict(search.history)
    assert search.value <= min(ends[0.0], ends[1.0]) + 1e-9
    assert search.value >= enumerate_subsets(inst)[0] - 1e-9
    assert search.solves <= 30
    # convexity of the optimal value in alpha: the primal value at the midpoint
    # cannot exceed the average of the certified endpoint values
    mid, _ = mix_bound(inst, [a, b], [0.5, 0.5])
    assert mid.value <= 0.5 * (ends[0.0] + ends[1.0]) + 1e-8


def test_component_dataclass_rejects_kind():
    with pytest.raises(ValueError):
        MixComponent("bogus", np.eye(2), 1.0, np.zeros((2, 2)), 1.0, 1, 1)
