"""The relaxed feasible region ``P = {x : e^T x = s, A x <= b, 0 <= x <= e}``.

Provides the linear-optimization oracle used by the Frank-Wolfe solvers,
start-point finding, and the gap LP that completes a matrix dual variable
into a full dual certificate.  Everything is closed form when there are no
side constraints; otherwise a small dense simplex method is used.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .instance import Instance, SideConstraints

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9


class InfeasibleError(ValueError):
    """The polytope (or an LP over it) is empty."""


class LPError(RuntimeError):
    """The simplex method failed (iteration limit or numerical breakdown)."""


@dataclass(frozen=True)
class Polytope:
    n: int
    s: int
    side: Optional[SideConstraints] = None

    def __post_init__(self):
        if not 0 < self.s < self.n:
            raise ValueError(f"need 0 < s < n, got s={self.s}, n={self.n}")
        if self.side is not None and self.side.m == 0:
            object.__setattr__(self, "side", None)

    @classmethod
    def of(cls, inst: Instance) -> "Polytope":
        return cls(inst.n, inst.s, inst.side)

    @property
    def m(self) -> int:
        return 0 if self.side is None else self.side.m

    @property
    def A(self) -> np.ndarray:
        return np.zeros((0, self.n)) if self.side is None else self.side.A

    @property
    def b(self) -> np.ndarray:
        return np.zeros(0) if self.side is None else self.side.b

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if abs(x.sum() - self.s) > tol * max(1, self.s):
            return False
        if (x < -tol).any() or (x > 1 + tol).any():
            return False
        return self.m == 0 or bool(np.all(self.A @ x <= self.b + tol))


@dataclass(frozen=True)
class GapLpSolution:
    upsilon: np.ndarray
    nu: np.ndarray
    pi: np.ndarray
    tau: float
    objective: float

    def residual(self, d, P: Polytope) -> float:
        """Max violation of ``upsilon - nu - A^T pi - tau e = -d``."""
        d = np.asarray(d, dtype=float)
        r = self.upsilon - self.nu - P.A.T @ self.pi - self.tau + d
        return float(np.abs(r).max(initial=0.0))


# ---------------------------------------------------------------------------
# Dense simplex
# ---------------------------------------------------------------------------


@dataclass
class LPResult:
    x: np.ndarray
    value: float
    y_ub: np.ndarray
    y_eq: np.ndarray
    iterations: int


def _pivot(T, row, col):
    T[row] /= T[row, col]
    piv_row = T[row]
    colv = T[:, col].copy()
    colv[row] = 0.0
    T -= np.outer(colv, piv_row)


def _run_simplex(T, basis, ncols, max_iter, bland_after):
    """Maximize the objective held in the last row of ``T`` (stored as -c)."""
    it, status = _kernels.simplex_pivots(T, basis, ncols, max_iter, bland_after, PIVOT_TOL)
    if status == 1:
        raise LPError("LP is unbounded")
    if status == 2:
        raise LPError(f"simplex iteration limit {max_iter} reached")
    return it


@dataclass
class _FeasibleBasis:
    """Phase-1 output: a feasible basis for the constraint system, reusable
    for any objective."""

    M: np.ndarray
    rhs: np.ndarray
    sign: np.ndarray
    n: int
    mu: int
    kept: np.ndarray
    body: np.ndarray
    basis: np.ndarray
    max_iter: int
    iterations: int


def _phase1(n, A_ub, b_ub, A_eq, b_eq, max_iter=None) -> _FeasibleBasis:
    mu, me = A_ub.shape[0], A_eq.shape[0]
    rows = mu + me
    # columns: z (n) | slacks (mu) | artificials (rows)
    M = np.zeros((rows, n + mu))
    M[:mu, :n] = A_ub
    M[:mu, n:] = np.eye(mu)
    M[mu:, :n] = A_eq
    rhs = np.concatenate([b_ub, b_eq])
    sign = np.where(rhs < 0, -1.0, 1.0)
    M *= sign[:, None]
    rhs = rhs * sign
    ncols = n + mu
    total = ncols + rows
    if max_iter is None:
        max_iter = 50 * (rows + total) + 1000
    T = np.zeros((rows + 1, total + 1))
    T[:rows, :ncols] = M
    T[:rows, ncols:total] = np.eye(rows)
    T[:rows, -1] = rhs
    basis = np.arange(ncols, total)
    # maximize -sum(artificials)
    T[-1, ncols:total] = 1.0
    T[-1] -= T[:rows].sum(axis=0)
    iters = _run_simplex(T, basis, total, max_iter, 2 * n)
    scale = 1.0 + np.abs(rhs).max(initial=0.0)
    if -T[-1, -1] > 1e-9 * scale:
        raise InfeasibleError("LP is infeasible")
    # drive artificials out of the basis
    keep_rows = np.ones(rows, dtype=bool)
    for r in range(rows):
        if basis[r] >= ncols:
            nz = np.flatnonzero(np.abs(T[r, :ncols]) > 1e-9)
            if nz.size:
                _pivot(T, r, int(nz[0]))
                basis[r] = nz[0]
            else:
                keep_rows[r] = False  # redundant row
    body = np.empty((int(keep_rows.sum()), ncols + 1))
    body[:, :ncols] = T[:rows][keep_rows, :ncols]
    body[:, -1] = T[:rows][keep_rows, -1]
    return _FeasibleBasis(
        M, rhs, sign, n, mu, np.flatnonzero(keep_rows), body, basis[keep_rows].copy(), max_iter, iters
    )


def _phase2(fb: _FeasibleBasis, c) -> LPResult:
    n, mu = fb.n, fb.mu
    ncols = n + mu
    T2 = np.empty((fb.body.shape[0] + 1, ncols + 1))
    T2[:-1] = fb.body
    basis2 = fb.basis.copy()
    cfull = np.concatenate([c, np.zeros(mu)])
    T2[-1, :ncols] = -cfull
    T2[-1, -1] = 0.0
    T2[-1] += cfull[basis2] @ T2[:-1]
    iters = fb.iterations + _run_simplex(T2, basis2, ncols, fb.max_iter, 2 * n)

    # recompute primal and dual values from the basis
    B = fb.M[np.ix_(fb.kept, basis2)]
    try:
        zB = np.linalg.solve(B, fb.rhs[fb.kept])
        yk = np.linalg.solve(B.T, cfull[basis2])
    except np.linalg.LinAlgError as exc:
        raise LPError("singular final basis") from exc
    z = np.zeros(ncols)
    z[basis2] = zB
    z = np.maximum(z, 0.0)
    y = np.zeros(fb.M.shape[0])
    y[fb.kept] = yk
    y = y * fb.sign
    x = z[:n]
    return LPResult(x=x, value=float(c @ x), y_ub=y[:mu], y_eq=y[mu:], iterations=iters)


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, max_iter: Optional[int] = None) -> LPResult:
    """``max c^T z`` subject to ``A_ub z <= b_ub``, ``A_eq z = b_eq``, ``z >= 0``.

    Two-phase dense tableau simplex.  Dantzig pricing, switching to Bland's
    rule after ``2 n`` consecutive degenerate pivots.  Duals are recomputed
    from the final basis with a linear solve (``y = B^{-T} c_B``), so they
    satisfy the reduced-cost identities to working precision.

    Raises :class:`InfeasibleError` or :class:`LPError`.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    return _phase2(_phase1(n, A_ub, b_ub, A_eq, b_eq, max_iter), c)


def _feasible_basis(P: Polytope) -> _FeasibleBasis:
    # phase 1 depends only on P, so its basis is computed once and cached
    fb = P.__dict__.get("_feasible_basis")
    if fb is None:
        n = P.n
        A_ub = np.vstack([P.A, np.eye(n)])
        b_ub = np.concatenate([P.b, np.ones(n)])
        fb = _phase1(n, A_ub, b_ub, np.ones((1, n)), np.array([float(P.s)]))
        object.__setattr__(P, "_feasible_basis", fb)
    return fb


def _polytope_lp(c, P: Polytope) -> LPResult:
    return _phase2(_feasible_basis(P), np.asarray(c, dtype=float))


def nonempty(P: Polytope) -> bool:
    """Whether ``P`` contains a point."""
    if P.m == 0:
        return True
    try:
        _feasible_basis(P)
    except InfeasibleError:
        return False
    return True


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def top_s(c, s: int) -> np.ndarray:
    """Indices of the ``s`` largest entries, ties broken by lowest index."""
    order = np.argsort(-np.asarray(c, dtype=float), kind="stable")
    return np.sort(order[:s])


def linear_oracle(c, P: Polytope) -> tuple[np.ndarray, float]:
    """A maximizing vertex of ``c^T x`` over ``P`` and its value."""
    c = np.asarray(c, dtype=float)
    if P.m == 0:
        x = np.zeros(P.n)
        x[top_s(c, P.s)] = 1.0
        return x, float(c @ x)
    res = _polytope_lp(c, P)
    x = res.x
    # snap to the box / integer grid where the LP left rounding noise
    x = np.where(np.abs(x) < 1e-12, 0.0, x)
    x = np.where(np.abs(x - 1) < 1e-12, 1.0, x)
    return x, float(c @ x)


def gap_lp(d, constant: float, P: Polytope) -> GapLpSolution:
    """Solve ``min nu^T e + pi^T b + tau s - constant``
    s.t. ``upsilon - nu - A^T pi - tau e = -d``, ``upsilon, nu, pi >= 0``.

    By LP duality the optimal objective is ``max_{x in P} d^T x - constant``.
    """
    d = np.asarray(d, dtype=float)
    n, s = P.n, P.s
    if P.m == 0:
        order = np.argsort(-d, kind="stable")
        tau = float(d[order[s - 1]])
        nu = np.maximum(d - tau, 0.0)
        upsilon = np.maximum(tau - d, 0.0)
        obj = float(np.sum(d[order[:s]])) - constant
        return GapLpSolution(upsilon, nu, np.zeros(0), tau, obj)
    res = _polytope_lp(d, P)
    pi = np.maximum(res.y_ub[: P.m], 0.0)
    nu = np.maximum(res.y_ub[P.m :], 0.0)
    tau = float(res.y_eq[0])
    upsilon = tau + P.A.T @ pi + nu - d
    neg = upsilon.min(initial=0.0)
    if neg < -1e-7 * (1 + np.abs(d).max()):
        raise LPError(f"gap LP dual infeasible (min reduced cost {neg:.3e})")
    upsilon = np.maximum(upsilon, 0.0)
    obj = float(nu.sum() + pi @ P.b + tau * s) - constant
    return GapLpSolution(upsilon, nu, pi, tau, obj)


def find_start(P: Polytope) -> np.ndarray:
    """A feasible point, strictly inside the box when one exists.

    Returns ``(s/n) e`` whenever it satisfies the side constraints;
    otherwise maximizes the smallest box slack with an LP.
    """
    n, s = P.n, P.s
    x0 = np.full(n, s / n)
    if P.m == 0 or np.all(P.A @ x0 <= P.b + FEAS_TOL):
        return x0
    # variables (x, t): max t  s.t. A x <= b, t - x_j <= 0, x_j + t <= 1, t <= 1/2, e^T x = s
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.vstack(
        [
            np.hstack([P.A, np.zeros((P.m, 1))]),
            np.hstack([-np.eye(n), np.ones((n, 1))]),
            np.hstack([np.eye(n), np.ones((n, 1))]),
            np.hstack([np.zeros((1, n)), np.ones((1, 1))]),
        ]
    )
    b_ub = np.concatenate([P.b, np.zeros(n), np.ones(n), [0.5]])
    A_eq = np.hstack([np.ones((1, n)), np.zeros((1, 1))])
    res = solve_lp(c, A_ub, b_ub, A_eq, np.array([float(s)]))
    x = np.clip(res.x[:n], 0.0, 1.0)
    if res.x[-1] < 1e-9:
        log.debug("polytope has no point strictly inside the box")
    return x
