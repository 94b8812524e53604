"""Convex combinations of the DDFact, complementary DDFact and linx bounds.

Every bound has the form ``f_i(L_i(x))`` with ``L_i`` affine,
``L_i(x) = L_i0 + sum_j x_j L_ij``.  A weighted sum of such objectives is
again a valid relaxation, and each component contributes a closed-form dual
matrix ``Theta_i`` to a joint certificate completed by one gap LP.

The per-index matrices ``L_ij`` are never materialized.  Each component
stores rows ``r_j`` and a coefficient so that
``L_ij = coef * r_j r_j^T`` (minus ``e_j e_j^T`` for linx).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from . import _kernels
from ._frankwolfe import PrimalResult, SolverOptions, away_step_fw, golden_section_min
from .fact_bound import FIX_THRESHOLD, FixReport, fix_from_margins, gamma_s, omega, theta_from_matrix
from .instance import Factorization, Instance, InstanceError, factorize
from .linx_bound import linx_omega
from .polytope import Polytope, find_start, gap_lp, linear_oracle

KINDS = ("ddfact", "comp_ddfact", "linx")
ALPHA_TOL = 1e-3
ALPHA_MAX_SOLVES = 30


@dataclass(frozen=True)
class MixComponent:
    """One bound written as ``f(L0 + sum_j x_j L_j)``.

    ``card`` is the cardinality used inside ``f`` (``s`` or ``n - s``) and
    ``rho`` the constant with ``Theta . W = rho`` at the closed-form pair.
    """

    kind: str
    R: np.ndarray = field(repr=False)
    coef: float
    L0: np.ndarray = field(repr=False)
    rho: float
    card: int
    s: int
    gamma: float = 1.0
    ldet_offset: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown component kind {self.kind!r}")

    @property
    def n(self) -> int:
        return self.R.shape[0]

    @property
    def k(self) -> int:
        return self.R.shape[1]

    def L(self, j: int) -> np.ndarray:
        """The matrix ``L_j`` (for tests and inspection)."""
        r = self.R[j]
        out = self.coef * np.outer(r, r)
        if self.kind == "linx":
            out[j, j] -= 1.0
        return out

    def direction(self, d) -> np.ndarray:
        """``sum_j d_j L_j``, the derivative of ``L(x)`` along ``d``."""
        d = np.asarray(d, dtype=float)
        B = self.coef * (self.R.T * d) @ self.R
        if self.kind == "linx":
            B.flat[:: B.shape[0] + 1] -= d
        return 0.5 * (B + B.T)

    def affine(self, x) -> np.ndarray:
        return self.L0 + self.direction(x)

    def value(self, W) -> float:
        if self.kind == "linx":
            try:
                Lc = linalg.cholesky(W, lower=True, check_finite=False)
            except linalg.LinAlgError:
                return -math.inf
            return float(np.sum(np.log(np.diag(Lc))) - 0.5 * self.s * math.log(self.gamma))
        return gamma_s(W, self.card) + self.ldet_offset

    def theta(self, W, eps: float = 0.0) -> np.ndarray:
        """Closed-form dual matrix; for ``eps = 0`` it is the gradient of ``f`` at ``W``."""
        if self.kind == "linx":
            Ki = linalg.inv(W, check_finite=False)
            return 0.25 * (Ki + Ki.T)
        return theta_from_matrix(W, self.card, eps)

    def omega(self, theta) -> float:
        if self.kind == "linx":
            return linx_omega(theta, self.gamma, self.s)
        return omega(theta, self.card) + self.ldet_offset

    def dot_L(self, theta) -> np.ndarray:
        """The vector ``(Theta . L_j)_j``."""
        out = self.coef * np.einsum("ij,jk,ik->i", self.R, theta, self.R)
        if self.kind == "linx":
            out = out - np.diag(theta)
        return out

    def dot_L0(self, theta) -> float:
        return float(np.sum(theta * self.L0))


def ddfact_component(inst: Instance, fac: Optional[Factorization] = None) -> MixComponent:
    fac = fac or factorize(inst, "spectral")
    k = fac.F.shape[1]
    return MixComponent("ddfact", np.asarray(fac.F, dtype=float), 1.0, np.zeros((k, k)), float(inst.s), inst.s, inst.s)


def comp_ddfact_component(inst: Instance) -> MixComponent:
    """Complementary DDFact: ``L(x) = G^T Diag(e - x) G`` with ``G = F^{-T}``.

    Uses the symmetric square-root factor, so ``G = C^{-1/2}`` and its rows
    equal its columns.
    """
    if not inst.is_nonsingular():
        raise InstanceError("complementary bound needs a nonsingular C")
    fac = factorize(inst, "sqrt")
    G = linalg.solve(fac.F.T, np.eye(inst.n), check_finite=False)
    G = 0.5 * (G + G.T)
    L0 = G.T @ G
    card = inst.n - inst.s
    sign, ld = np.linalg.slogdet(inst.C)
    return MixComponent("comp_ddfact", G, -1.0, 0.5 * (L0 + L0.T), float(card), card, inst.s, ldet_offset=float(ld))


def linx_component(inst: Instance, gamma: float = 1.0) -> MixComponent:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    n = inst.n
    return MixComponent("linx", np.asarray(inst.C, dtype=float), float(gamma), np.eye(n), 0.5 * n, inst.s, inst.s, gamma=gamma)


def make_component(inst: Instance, kind: str, gamma: float = 1.0) -> MixComponent:
    if kind == "ddfact":
        return ddfact_component(inst)
    if kind == "comp_ddfact":
        return comp_ddfact_component(inst)
    if kind == "linx":
        return linx_component(inst, gamma)
    raise ValueError(f"unknown component kind {kind!r}")


@dataclass(frozen=True)
class MixWeights:
    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float).ravel()
        if np.any(a < 0) or abs(a.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be nonnegative and sum to 1, got {a}")
        object.__setattr__(self, "alpha", a)

    @classmethod
    def pair(cls, a: float) -> "MixWeights":
        """Weights ``(1 - a, a)``."""
        return cls(np.array([1.0 - a, a]))


def _weights(alpha) -> np.ndarray:
    if isinstance(alpha, MixWeights):
        return alpha.alpha
    return MixWeights(np.asarray(alpha, dtype=float)).alpha


@dataclass
class DmixCertificate:
    thetas: list
    upsilon: np.ndarray
    nu: np.ndarray
    pi: np.ndarray
    tau: float
    value: float
    gap: float
    alpha: np.ndarray
    primal_value: float = math.nan


# ---------------------------------------------------------------------------
# Objective, gradient, solver
# ---------------------------------------------------------------------------


def _value_shift(comp: MixComponent) -> float:
    """The ``x``-independent part of ``f`` (offset or ``-s log(gamma) / 2``)."""
    if comp.kind == "linx":
        return -0.5 * comp.s * math.log(comp.gamma)
    return comp.ldet_offset


def _active(components, a):
    return [(w, c) for w, c in zip(a, components) if w > 0]


def mix_objective(x, components: Sequence[MixComponent], alpha) -> float:
    a = _weights(alpha)
    total = 0.0
    for w, comp in _active(components, a):
        v = comp.value(comp.affine(x))
        if not math.isfinite(v):
            return -math.inf
        total += w * v
    return total


def mix_gradient(x, components: Sequence[MixComponent], alpha) -> np.ndarray:
    """``sum_i alpha_i (Theta_i . L_ij)_j`` with ``Theta_i`` the gradient of ``f_i``."""
    a = _weights(alpha)
    g = np.zeros(components[0].n)
    for w, comp in _active(components, a):
        g += w * comp.dot_L(comp.theta(comp.affine(x)))
    return g


def solve_mix(
    inst: Instance,
    components: Sequence[MixComponent],
    alpha,
    P: Optional[Polytope] = None,
    opts: Optional[SolverOptions] = None,
    x0=None,
    active=None,
) -> PrimalResult:
    """Maximize the weighted objective over the polytope (away-step Frank-Wolfe,
    golden-section line search)."""
    opts = opts or SolverOptions()
    a = _weights(alpha)
    P = P or Polytope.of(inst)
    used = _active(components, a)

    def value(x):
        return mix_objective(x, components, a)

    def grad(x):
        return mix_gradient(x, components, a)

    kmax = max(c.k for _, c in used)
    kinds = np.array([1 if c.kind == "linx" else 0 for _, c in used], dtype=np.int64)
    cards = np.array([c.card for _, c in used], dtype=np.int64)
    wts = np.array([w for w, _ in used])
    consts = np.array([_value_shift(c) for _, c in used])

    def line_search(x, d, tmax):
        Ws = np.zeros((len(used), kmax, kmax))
        Bs = np.zeros_like(Ws)
        for i, (_, c) in enumerate(used):
            k = c.k
            Ws[i, :k, :k] = c.affine(x)
            Bs[i, :k, :k] = c.direction(d)
            if kinds[i] == 1 and k < kmax:
                Ws[i, k:, k:] = np.eye(kmax - k)
        t, f = _kernels.mix_line_search(Ws, Bs, kinds, cards, wts, consts, float(tmax), opts.line_search_evals)
        return float(t), float(f)

    def oracle(g):
        return linear_oracle(g, P)

    start = find_start(P) if x0 is None else np.asarray(x0, dtype=float)
    if not math.isfinite(value(start)):
        rng = np.random.default_rng(0)
        base = start
        for attempt in range(1, opts.restarts + 1):
            v, _ = linear_oracle(rng.standard_normal(P.n), P)
            start = base + 0.25 * attempt / (1 + attempt) * (v - base)
            if math.isfinite(value(start)):
                break
        else:
            raise FloatingPointError(f"mixed objective is -inf at {opts.restarts} perturbed starts")
    x, fx, it, gap, conv, act = away_step_fw(value, grad, line_search, oracle, start, opts.tol, opts.max_iter, active)
    return PrimalResult(x=x, value=value(x), iterations=it, fw_gap=gap, converged=conv, info={"active": act})


# ---------------------------------------------------------------------------
# Certificates and fixing
# ---------------------------------------------------------------------------


def certify_mix(
    inst: Instance,
    components: Sequence[MixComponent],
    alpha,
    x,
    P: Optional[Polytope] = None,
    eps: float = 0.0,
) -> DmixCertificate:
    """Joint certificate at ``x``.

    Solves the gap LP with ``d_j = sum_i alpha_i (Theta_i . L_ij)`` and
    constant ``sum_i alpha_i (rho_i - Theta_i . L_i0)``.  Components with zero
    weight get ``Theta_i = None``.
    """
    a = _weights(alpha)
    P = P or Polytope.of(inst)
    x = np.asarray(x, dtype=float)
    d = np.zeros(inst.n)
    const = 0.0
    om = 0.0
    thetas = []
    for w, comp in zip(a, components):
        if w == 0:
            thetas.append(None)
            continue
        th = comp.theta(comp.affine(x), eps)
        thetas.append(th)
        d += w * comp.dot_L(th)
        const += w * (comp.rho - comp.dot_L0(th))
        om += w * comp.omega(th)
    sol = gap_lp(d, const, P)
    value = om + sol.objective
    primal = mix_objective(x, components, a)
    return DmixCertificate(
        thetas=thetas,
        upsilon=sol.upsilon,
        nu=sol.nu,
        pi=sol.pi,
        tau=sol.tau,
        value=float(value),
        gap=float(value - primal),
        alpha=a,
        primal_value=primal,
    )


def mix_residual(cert: DmixCertificate, components: Sequence[MixComponent], P: Polytope) -> float:
    """Violation of ``sum_i alpha_i (Theta_i . L_ij) + upsilon_j - nu_j - pi^T A_j - tau = 0``."""
    d = np.zeros(P.n)
    for w, comp, th in zip(cert.alpha, components, cert.thetas):
        if th is not None:
            d += w * comp.dot_L(th)
    r = d + cert.upsilon - cert.nu - P.A.T @ cert.pi - cert.tau
    return float(np.abs(r).max())


def fix_mix(cert: DmixCertificate, lb: float, threshold: float = FIX_THRESHOLD) -> FixReport:
    return fix_from_margins(cert.upsilon, cert.nu, cert.value, lb, threshold)


def mix_bound(inst: Instance, components, alpha, P=None, opts=None, active=None):
    """Solve and certify; returns ``(primal, certificate)``."""
    P = P or Polytope.of(inst)
    res = solve_mix(inst, components, alpha, P, opts, active=active)
    return res, certify_mix(inst, components, alpha, res.x, P)


@dataclass
class AlphaSearch:
    alpha: float
    value: float
    primal: PrimalResult
    certificate: DmixCertificate
    solves: int
    history: list


def optimize_alpha(
    inst: Instance,
    comp_a: MixComponent,
    comp_b: MixComponent,
    P: Optional[Polytope] = None,
    opts: Optional[SolverOptions] = None,
    tol: float = ALPHA_TOL,
    max_solves: int = ALPHA_MAX_SOLVES,
) -> AlphaSearch:
    """Minimize the certified mixed bound over weights ``(1 - a, a)``.

    Both endpoints are evaluated, so the result is never worse than the
    better single bound.  Ties go to the smallest ``a``.
    """
    P = P or Polytope.of(inst)
    comps = [comp_a, comp_b]
    cache = {}
    last = [None]

    def evaluate(t):
        if t not in cache:
            res, cert = mix_bound(inst, comps, MixWeights.pair(t), P, opts, active=last[0])
            last[0] = res.info["active"]
            cache[t] = (cert.value, res, cert)
        return cache[t][0]

    golden_section_min(evaluate, 0.0, 1.0, tol, max_solves, endpoints=True)
    best = min(cache, key=lambda k: (cache[k][0], k))
    value, res, cert = cache[best]
    history = sorted((k, v[0]) for k, v in cache.items())
    return AlphaSearch(best, value, res, cert, len(cache), history)
