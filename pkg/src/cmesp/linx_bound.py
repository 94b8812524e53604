"""The scaled linx bound.

For a scale ``gamma > 0`` the relaxation maximizes

    0.5 * (ldet(gamma C Diag(x) C + Diag(e - x)) - s log gamma)

over the polytope.  The objective is smooth and concave wherever the matrix
is positive definite, so Frank-Wolfe with an exact 1-d Newton line search
converges quickly.  ``gamma`` itself is chosen by a golden-section search on
``log gamma``, where the optimal value is convex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from . import _kernels
from ._frankwolfe import PrimalResult, SolverOptions, away_step_fw, golden_section_min
from .instance import Instance
from .polytope import Polytope, find_start, gap_lp, linear_oracle

GAMMA_SEARCH = (1e-6, 1e6)
GAMMA_TOL = 1e-4
GAMMA_MAX_SOLVES = 60


@dataclass(frozen=True)
class LinxParams:
    gamma: float = 1.0
    tol: float = 1e-8
    max_iter: int = 5000

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass
class LinxCertificate:
    """Dual point ``Theta = K^{-1} / 2`` completed by the gap LP."""

    theta: np.ndarray
    upsilon: np.ndarray
    nu: np.ndarray
    pi: np.ndarray
    tau: float
    value: float
    gap: float
    gamma: float
    primal_value: float = math.nan


def linx_kernel_matrix(C, gamma: float, x) -> np.ndarray:
    """``K = gamma C Diag(x) C + Diag(e - x)``."""
    C = np.asarray(C, dtype=float)
    x = np.asarray(x, dtype=float)
    K = gamma * (C * x) @ C
    K.flat[:: K.shape[0] + 1] += 1.0 - x
    return 0.5 * (K + K.T)


def _chol(K):
    try:
        return linalg.cholesky(K, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None


def linx_objective(C, gamma: float, x, s: int) -> float:
    L = _chol(linx_kernel_matrix(C, gamma, x))
    if L is None:
        return -math.inf
    d = np.diag(L)
    if not np.all(d > 0):
        return -math.inf
    return float(np.sum(np.log(d)) - 0.5 * s * math.log(gamma))


def _kinv(C, gamma, x):
    K = linx_kernel_matrix(C, gamma, x)
    L = _chol(K)
    if L is None:
        raise np.linalg.LinAlgError("linx matrix is not positive definite")
    Ki = linalg.cho_solve((L, True), np.eye(K.shape[0]), check_finite=False)
    return 0.5 * (Ki + Ki.T)


def linx_gradient(C, gamma: float, x) -> np.ndarray:
    """``0.5 * (diag(gamma C K^{-1} C) - diag(K^{-1}))``."""
    C = np.asarray(C, dtype=float)
    Ki = _kinv(C, gamma, x)
    return 0.5 * (gamma * np.einsum("ij,jk,ki->i", C, Ki, C) - np.diag(Ki))


def linx_hessian(C, gamma: float, x) -> np.ndarray:
    """Hessian of the linx objective in ``x``.

    With ``M = C K^{-1} C`` and ``N = C K^{-1}``::

        H = -0.5 * (gamma^2 M o M - gamma (N o N + N^T o N^T) + K^{-1} o K^{-1})

    where ``o`` is the Hadamard product.
    """
    C = np.asarray(C, dtype=float)
    Ki = _kinv(C, gamma, x)
    N = C @ Ki
    M = N @ C
    H = -0.5 * (gamma**2 * M * M - gamma * (N * N + N.T * N.T) + Ki * Ki)
    return 0.5 * (H + H.T)


def linx_dual_theta(C, gamma: float, x) -> np.ndarray:
    """``Theta = K^{-1} / 2``."""
    return 0.5 * _kinv(C, gamma, x)


def linx_omega(theta, gamma: float, s: int) -> float:
    """``-0.5 * (ldet(2 Theta) + s log gamma)``; ``+inf`` unless ``Theta`` is PD."""
    lam = np.linalg.eigvalsh(0.5 * (theta + theta.T))
    if lam[0] <= 0:
        return math.inf
    ld = float(np.sum(np.log(2.0 * lam)))
    return float(-0.5 * (ld + s * math.log(gamma)))


def solve_linx(
    inst: Instance,
    params: Optional[LinxParams] = None,
    P: Optional[Polytope] = None,
    x0=None,
    active=None,
) -> PrimalResult:
    """Maximize the linx objective over the polytope.

    Along a feasible direction ``d`` (with ``e^T d = 0``) the objective is
    ``f(x) + 0.5 * sum(log(1 + t mu))`` where ``mu`` are the eigenvalues of
    ``L^{-1} (gamma C Diag(d) C - Diag(d)) L^{-T}`` and ``K = L L^T``; the
    step is found by safeguarded Newton on that 1-d function.
    """
    params = params or LinxParams()
    P = P or Polytope.of(inst)
    C = inst.C
    gamma, s = params.gamma, inst.s

    def value(x):
        return linx_objective(C, gamma, x, s)

    def grad(x):
        return linx_gradient(C, gamma, x)

    def line_search(x, d, tmax):
        L = _chol(linx_kernel_matrix(C, gamma, x))
        if L is None:
            return 0.0, value(x)
        D = gamma * (C * d) @ C
        D.flat[:: D.shape[0] + 1] -= d
        Y = linalg.solve_triangular(L, D, lower=True, check_finite=False)
        Z = linalg.solve_triangular(L, Y.T, lower=True, check_finite=False)
        mu = np.linalg.eigvalsh(0.5 * (Z + Z.T))
        t, inc = _kernels.logsum_newton(np.ascontiguousarray(mu), float(tmax))
        if t <= 0.0 or not inc > 0.0:
            return 0.0, value(x)
        return float(t), value(x + t * d)

    def oracle(g):
        return linear_oracle(g, P)

    start = find_start(P) if x0 is None else np.asarray(x0, dtype=float)
    if not math.isfinite(value(start)):
        start = find_start(P)
    x, fx, it, gap, conv, act = away_step_fw(
        value, grad, line_search, oracle, start, params.tol, params.max_iter, active
    )
    return PrimalResult(
        x=x, value=value(x), iterations=it, fw_gap=gap, converged=conv, info={"gamma": gamma, "active": act}
    )


def certify_linx(inst: Instance, gamma: float, x, P: Optional[Polytope] = None) -> LinxCertificate:
    """Certificate from ``Theta = K^{-1}/2``.

    The gap LP uses ``d_j = Theta . (gamma c_j c_j^T - e_j e_j^T)``, which is
    the gradient, and the constant ``n/2 - tr(Theta)``.
    """
    P = P or Polytope.of(inst)
    C = inst.C
    x = np.asarray(x, dtype=float)
    theta = linx_dual_theta(C, gamma, x)
    d = gamma * np.einsum("ij,jk,ki->i", C, theta, C) - np.diag(theta)
    const = 0.5 * inst.n - float(np.trace(theta))
    sol = gap_lp(d, const, P)
    value = linx_omega(theta, gamma, inst.s) + sol.objective
    primal = linx_objective(C, gamma, x, inst.s)
    return LinxCertificate(
        theta=theta,
        upsilon=sol.upsilon,
        nu=sol.nu,
        pi=sol.pi,
        tau=sol.tau,
        value=float(value),
        gap=float(value - primal),
        gamma=gamma,
        primal_value=primal,
    )


def linx_bound(
    inst: Instance, gamma: float = 1.0, P=None, opts: Optional[SolverOptions] = None, x0=None, active=None
):
    """Solve and certify at a fixed ``gamma``; returns ``(primal, certificate)``."""
    opts = opts or SolverOptions()
    P = P or Polytope.of(inst)
    res = solve_linx(inst, LinxParams(gamma, opts.tol, opts.max_iter), P, x0=x0, active=active)
    return res, certify_linx(inst, gamma, res.x, P)


@dataclass
class GammaSearch:
    gamma: float
    value: float
    primal: PrimalResult
    certificate: LinxCertificate
    solves: int
    history: list


def optimize_gamma(
    inst: Instance,
    P: Optional[Polytope] = None,
    search: tuple = GAMMA_SEARCH,
    tol: float = GAMMA_TOL,
    max_solves: int = GAMMA_MAX_SOLVES,
    opts: Optional[SolverOptions] = None,
) -> GammaSearch:
    """Golden-section search on ``log gamma`` minimizing the certified linx bound.

    Each solve is warm-started from the previous optimum.  The returned value
    is the smallest certified bound among all evaluated ``gamma``.
    """
    lo, hi = search
    if not 0 < lo < hi:
        raise ValueError(f"bad gamma bracket {search}")
    P = P or Polytope.of(inst)
    cache = {}
    last = [None]

    def evaluate(lg):
        if lg not in cache:
            res, cert = linx_bound(inst, math.exp(lg), P, opts, active=last[0])
            last[0] = res.info["active"]
            cache[lg] = (cert.value, res, cert)
        return cache[lg][0]

    golden_section_min(evaluate, math.log(lo), math.log(hi), tol, max_solves)
    best = min(cache, key=lambda k: (cache[k][0], k))
    value, res, cert = cache[best]
    history = sorted((math.exp(k), v[0]) for k, v in cache.items())
    return GammaSearch(math.exp(best), value, res, cert, len(cache), history)
