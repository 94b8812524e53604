"""The factorization bound (DDFact) and its dual certificates.

For a factor ``C = F F^T`` the relaxation maximizes ``Gamma_s(F^T Diag(x) F)``
over the polytope, where ``Gamma_s`` applies the concave spectral function
``phi_s`` to the eigenvalues.  From any feasible ``x`` a positive-definite
``Theta`` is built in closed form; completing it with the gap LP gives a
certified upper bound and the margins used for variable fixing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from ._frankwolfe import PrimalResult, SolverOptions, away_step_fw
from .instance import Factorization, Instance, InstanceError, complement, f_of_x, factorize
from .polytope import Polytope, find_start, gap_lp, linear_oracle

EIG_CLAMP = 1e-12
SMOOTH_TOL = 1e-12
FIX_THRESHOLD = 1e-10


@dataclass(frozen=True)
class IotaResult:
    iota: int
    delta: float


@dataclass
class DFactCertificate:
    """Dual-feasible point of the factorization-bound dual and its value."""

    theta: np.ndarray
    upsilon: np.ndarray
    nu: np.ndarray
    pi: np.ndarray
    tau: float
    value: float
    gap: float
    primal_value: float = math.nan
    eps: float = 0.0


@dataclass
class FixReport:
    """Indices provably 0 (or 1) in every optimal solution.

    ``margin_zero[j] = upsilon_j - (bound - LB)`` and
    ``margin_one[j] = nu_j - (bound - LB)``; an index is fixed when its margin
    exceeds the threshold.
    """

    fixed_zero: tuple
    fixed_one: tuple
    margin_zero: np.ndarray
    margin_one: np.ndarray

    @property
    def count(self) -> int:
        return len(self.fixed_zero) + len(self.fixed_one)

    def swapped(self) -> "FixReport":
        """Same report read through the complement map ``x -> e - x``."""
        return FixReport(self.fixed_one, self.fixed_zero, self.margin_one, self.margin_zero)

    def merged(self, other: "FixReport") -> "FixReport":
        z = tuple(sorted(set(self.fixed_zero) | set(other.fixed_zero)))
        o = tuple(sorted(set(self.fixed_one) | set(other.fixed_one)))
        both = set(z) & set(o)
        if both:
            raise ArithmeticError(f"indices {sorted(both)} fixed to both 0 and 1")
        return FixReport(
            z, o, np.maximum(self.margin_zero, other.margin_zero), np.maximum(self.margin_one, other.margin_one)
        )


def fix_from_margins(upsilon, nu, value: float, lb: float, threshold: float = FIX_THRESHOLD) -> FixReport:
    gap = value - lb
    mz = np.asarray(upsilon, dtype=float) - gap
    mo = np.asarray(nu, dtype=float) - gap
    zero = np.flatnonzero(mz > threshold)
    one = np.flatnonzero(mo > threshold)
    both = np.intersect1d(zero, one)
    if both.size:
        # only possible when LB exceeds the bound, i.e. inconsistent input
        raise ArithmeticError(f"indices {both.tolist()} fixed to both 0 and 1; is LB valid?")
    return FixReport(tuple(int(j) for j in zero), tuple(int(j) for j in one), mz, mo)


# ---------------------------------------------------------------------------
# Spectral function
# ---------------------------------------------------------------------------


def iota(lam, s: int) -> IotaResult:
    """The unique ``iota`` in ``[0, s)`` with
    ``lam[iota-1] > sum(lam[iota:]) / (s - iota) >= lam[iota]`` (1-based ``lam_0 = inf``).
    """
    lam = np.asarray(lam, dtype=float)
    if not 0 < s <= lam.size:
        raise ValueError(f"need 0 < s <= k, got s={s}, k={lam.size}")
    if np.any(np.diff(lam) > 1e-12 * (1 + abs(lam[0]))):
        raise ValueError("eigenvalues must be sorted nonincreasing")
    lam = np.maximum(lam, 0.0)
    if not lam.sum() > 0:
        raise ValueError("eigenvalues sum to zero")
    i, delta = _kernels.iota_scan(lam, s)
    if i < 0 or not delta > 0:
        raise ValueError(f"no valid iota: fewer than {s} positive eigenvalues")
    return IotaResult(int(i), float(delta))


def phi_s(lam, s: int) -> float:
    lam = np.maximum(np.sort(np.asarray(lam, dtype=float))[::-1], 0.0)
    return float(_kernels.phi_s(np.ascontiguousarray(lam), s))


def gamma_s(X, s: int) -> float:
    """``phi_s`` of the eigenvalues of a PSD matrix; ``-inf`` if rank < s."""
    X = np.asarray(X, dtype=float)
    lam = _kernels.sorted_eigs(np.ascontiguousarray(0.5 * (X + X.T)))
    if lam.size < s:
        raise ValueError(f"matrix order {lam.size} < s={s}")
    if lam[0] <= 0 or np.count_nonzero(lam > EIG_CLAMP * lam[0]) < s:
        return -math.inf
    return float(_kernels.phi_s(lam, s))


def _spectral(W):
    lam, U = np.linalg.eigh(0.5 * (W + W.T))
    return lam[::-1].copy(), U[:, ::-1].copy()


def theta_weights(lam, s: int, eps: float = 0.0):
    """Eigenvalue weights ``beta`` of the dual matrix (also ``d phi_s / d lam`` for eps=0).

    Returns ``(beta, iota, delta, rhat, smooth)``.
    """
    lam = np.maximum(np.asarray(lam, dtype=float), 0.0)
    rhat = int(np.count_nonzero(lam > EIG_CLAMP * lam[0])) if lam[0] > 0 else 0
    if rhat < s:
        raise InstanceError(f"rank of the relaxation matrix is {rhat} < s={s}")
    lam = np.where(lam > EIG_CLAMP * lam[0], lam, 0.0)
    i, delta = _kernels.iota_scan(lam, s)
    beta = np.empty(lam.size)
    beta[:i] = 1.0 / lam[:i]
    beta[i:rhat] = 1.0 / delta
    beta[rhat:] = (1.0 + eps) / delta
    smooth = bool(i >= lam.size or delta > lam[i] + SMOOTH_TOL * lam[0])
    return beta, int(i), float(delta), rhat, smooth


def theta_from_matrix(W, s: int, eps: float = 0.0) -> np.ndarray:
    """Closed-form dual matrix for ``Gamma_s`` at ``W``."""
    lam, U = _spectral(W)
    beta, *_ = theta_weights(lam, s, eps)
    T = (U * beta) @ U.T
    return 0.5 * (T + T.T)


def omega(theta, s: int) -> float:
    """``-sum of logs of the s smallest eigenvalues`` of a PD matrix."""
    lam = np.linalg.eigvalsh(0.5 * (theta + theta.T))
    if lam[0] <= 0:
        return math.inf
    return float(-np.sum(np.log(lam[:s])))


# ---------------------------------------------------------------------------
# Objective and gradient over x
# ---------------------------------------------------------------------------


def ddfact_objective(fac: Factorization, x, s: int) -> float:
    return gamma_s(f_of_x(fac, x), s)


def gamma_s_gradient(fac: Factorization, x, s: int):
    """Gradient of ``x -> Gamma_s(F(x))``, and whether the point is smooth.

    ``g_j = sum_l beta_l (F_j. u_l)^2`` with ``beta_l = 1/lam_l`` for
    ``l <= iota`` and ``(s - iota) / sum_{i > iota} lam_i`` otherwise.  At
    non-smooth points the same formula is a supergradient.
    """
    lam, U = _spectral(f_of_x(fac, x))
    beta, _, _, _, smooth = theta_weights(lam, s, 0.0)
    P = fac.F @ U
    return (P * P) @ beta, smooth


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


def _perturbed_start(P: Polytope, x0, attempt: int):
    rng = np.random.default_rng(attempt)
    v, _ = linear_oracle(rng.standard_normal(P.n), P)
    theta = 0.25 * attempt / (1 + attempt)
    return (1 - theta) * x0 + theta * v


def solve_ddfact(
    inst: Instance,
    fac: Optional[Factorization] = None,
    P: Optional[Polytope] = None,
    opts: Optional[SolverOptions] = None,
    x0=None,
    s: Optional[int] = None,
    active=None,
) -> PrimalResult:
    """Maximize ``Gamma_s(F(x))`` over the polytope by away-step Frank-Wolfe."""
    opts = opts or SolverOptions()
    s = inst.s if s is None else s
    fac = fac or factorize(inst, "spectral", s=s)
    P = P or Polytope(inst.n, s, inst.side)
    F = np.ascontiguousarray(fac.F)

    def value(x):
        return ddfact_objective(fac, x, s)

    def grad(x):
        return gamma_s_gradient(fac, x, s)[0]

    def line_search(x, d, tmax):
        W = np.ascontiguousarray(f_of_x(fac, x))
        B = np.ascontiguousarray((F.T * d) @ F)
        B = 0.5 * (B + B.T)
        t, f = _kernels.gamma_line_search(W, B, s, float(tmax), opts.line_search_evals)
        return float(t), float(f)

    def oracle(g):
        return linear_oracle(g, P)

    start = find_start(P) if x0 is None else np.asarray(x0, dtype=float)
    base = start
    for attempt in range(opts.restarts + 1):
        if math.isfinite(value(start)):
            break
        start = _perturbed_start(P, base, attempt + 1)
    else:
        raise FloatingPointError(f"DDFact objective is -inf at {opts.restarts} perturbed starts")
    x, fx, it, gap, conv, act = away_step_fw(
        value, grad, line_search, oracle, start, opts.tol, opts.max_iter, active
    )
    _, smooth = gamma_s_gradient(fac, x, s)
    return PrimalResult(
        x=x,
        value=value(x),
        iterations=it,
        fw_gap=gap,
        smooth_at_solution=smooth,
        converged=conv,
        info={"active": act},
    )


# ---------------------------------------------------------------------------
# Dual construction and certification
# ---------------------------------------------------------------------------


def build_dual_theta(fac: Factorization, x, s: int, eps: float = 0.0) -> np.ndarray:
    """``Theta = sum_l beta_l u_l u_l^T`` from the eigenpairs of ``F(x)``.

    ``beta_l`` is ``1/lam_l`` on the leading ``iota`` eigenvalues, ``1/delta``
    up to the numerical rank and ``(1 + eps)/delta`` beyond it.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return theta_from_matrix(f_of_x(fac, x), s, eps)


def certify(
    inst: Instance,
    fac: Factorization,
    x,
    eps: float = 0.0,
    s: Optional[int] = None,
    P: Optional[Polytope] = None,
) -> DFactCertificate:
    """Dual certificate for the point ``x`` (value is a valid upper bound)."""
    s = inst.s if s is None else s
    P = P or Polytope(inst.n, s, inst.side)
    x = np.asarray(x, dtype=float)
    theta = build_dual_theta(fac, x, s, eps)
    F = fac.F
    d = np.einsum("ij,jk,ik->i", F, theta, F)
    sol = gap_lp(d, float(s), P)
    om = omega(theta, s)
    value = om + sol.objective
    primal = ddfact_objective(fac, x, s)
    return DFactCertificate(
        theta=theta,
        upsilon=sol.upsilon,
        nu=sol.nu,
        pi=sol.pi,
        tau=sol.tau,
        value=float(value),
        gap=float(value - primal),
        primal_value=primal,
        eps=eps,
    )


def certificate_residual(cert: DFactCertificate, fac: Factorization, P: Polytope) -> float:
    """Violation of ``diag(F Theta F^T) + upsilon - nu - A^T pi - tau e = 0``."""
    F = fac.F
    d = np.einsum("ij,jk,ik->i", F, cert.theta, F)
    r = d + cert.upsilon - cert.nu - P.A.T @ cert.pi - cert.tau
    return float(np.abs(r).max())


def fix_variables(cert, lb: float, threshold: float = FIX_THRESHOLD) -> FixReport:
    """Fix ``x_j = 0`` when ``upsilon_j - (value - LB) > threshold`` and
    ``x_j = 1`` when ``nu_j - (value - LB) > threshold``."""
    return fix_from_margins(cert.upsilon, cert.nu, cert.value, lb, threshold)


def spectral_bound(C, s: int) -> float:
    """Sum of logs of the ``s`` largest eigenvalues of ``C``."""
    lam = np.linalg.eigvalsh(np.asarray(C, dtype=float))[::-1]
    if not lam[s - 1] > 0:
        raise InstanceError(f"lambda_s(C)={lam[s - 1]:.3e} is not positive")
    return float(np.sum(np.log(lam[:s])))


def ddfact_bound(inst: Instance, fac=None, opts=None, eps: float = 0.0):
    """Solve and certify; returns ``(primal, certificate)``."""
    fac = fac or factorize(inst, "spectral")
    P = Polytope.of(inst)
    res = solve_ddfact(inst, fac, P, opts)
    return res, certify(inst, fac, res.x, eps, P=P)


@dataclass
class ComplementResult:
    primal: PrimalResult
    certificate: DFactCertificate
    bound: float
    offset: float
    instance: Instance = field(repr=False, default=None)

    def fix(self, lb: float, threshold: float = FIX_THRESHOLD) -> FixReport:
        """Fixings for the original instance (0/1 swapped from the complement)."""
        return fix_variables(self.certificate, lb - self.offset, threshold).swapped()


def comp_ddfact(inst: Instance, opts: Optional[SolverOptions] = None, method: str = "sqrt") -> ComplementResult:
    """DDFact on ``(C^{-1}, n - s, -A, b - A e)``, shifted by ``ldet C``.

    The certificate lives on the complement instance; use
    :meth:`ComplementResult.fix` to map fixings back.
    """
    comp, offset = complement(inst)
    fac = factorize(comp, method)
    P = Polytope.of(comp)
    res = solve_ddfact(comp, fac, P, opts)
    cert = certify(comp, fac, res.x, 0.0, P=P)
    return ComplementResult(primal=res, certificate=cert, bound=cert.value + offset, offset=offset, instance=comp)
