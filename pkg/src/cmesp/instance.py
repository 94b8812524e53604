"""Instance data with its factorizations and exact transforms.

An instance is ``max ldet C[S,S]`` over ``|S| = s`` subject to optional
linear side constraints ``A x <= b`` on the incidence vector of ``S``.
All transforms return ``(instance, offset)`` such that the optimal value of
the original equals the optimal value of the transformed instance plus
``offset``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from . import _kernels

SYM_TOL = 1e-10
NEG_EIG_TOL = 1e-8
RANK_TOL = 1e-10
FACTOR_METHODS = ("cholesky-pivoted", "spectral", "sqrt")


class InstanceError(ValueError):
    """Invalid problem data (shape, symmetry, definiteness, cardinality)."""


class RankError(InstanceError):
    """rank(C) is too small for the requested operation."""


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SideConstraints:
    """Linear constraints ``A x <= b`` (``A`` is m x n)."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).ravel()
        if A.size == 0:
            A = A.reshape(0, A.shape[1] if A.ndim == 2 else 0)
        if A.shape[0] != b.shape[0]:
            raise InstanceError(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
        object.__setattr__(self, "A", _readonly(A))
        object.__setattr__(self, "b", _readonly(b))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @classmethod
    def empty(cls, n: int) -> "SideConstraints":
        return cls(np.zeros((0, n)), np.zeros(0))


@dataclass(frozen=True)
class Instance:
    """A validated CMESP instance.

    ``C`` is symmetrized on construction and tiny negative eigenvalues
    (above ``-1e-8 * lambda_max``) are clamped to zero.
    """

    C: np.ndarray
    s: int
    side: Optional[SideConstraints] = None
    label: str = ""
    _eigs: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise InstanceError(f"C must be square, got shape {C.shape}")
        n = C.shape[0]
        scale = 1.0 + (np.abs(C).max() if C.size else 0.0)
        if np.abs(C - C.T).max(initial=0.0) > SYM_TOL * scale:
            raise InstanceError("C is not symmetric within tolerance")
        C = 0.5 * (C + C.T)
        lam, V = np.linalg.eigh(C)
        lmax = max(lam[-1], 0.0) if n else 0.0
        if n and lam[0] < -NEG_EIG_TOL * lmax:
            raise InstanceError(
                f"C is not positive semidefinite (lambda_min={lam[0]:.3e}, lambda_max={lmax:.3e})"
            )
        if n and lam[0] < 0:
            lam = np.maximum(lam, 0.0)
            C = (V * lam) @ V.T
            C = 0.5 * (C + C.T)
        s = int(self.s)
        if s != self.s or not 0 < s < n:
            raise InstanceError(f"cardinality s={self.s} must satisfy 0 < s < n={n}")
        side = self.side
        if side is not None:
            if side.A.shape[1] != n and side.m > 0:
                raise InstanceError(f"A has {side.A.shape[1]} columns, expected {n}")
            if side.m == 0:
                side = None
        object.__setattr__(self, "C", _readonly(C))
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "side", side)
        object.__setattr__(self, "_eigs", _readonly(lam[::-1]))

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def m(self) -> int:
        return 0 if self.side is None else self.side.m

    @property
    def A(self) -> np.ndarray:
        return np.zeros((0, self.n)) if self.side is None else self.side.A

    @property
    def b(self) -> np.ndarray:
        return np.zeros(0) if self.side is None else self.side.b

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of C, nonincreasing."""
        return self._eigs

    @property
    def rank(self) -> int:
        lam = self._eigs
        if lam.size == 0 or lam[0] <= 0:
            return 0
        return int(np.count_nonzero(lam > RANK_TOL * lam[0]))

    def is_nonsingular(self) -> bool:
        lam = self._eigs
        return bool(lam[0] > 0 and lam[-1] > RANK_TOL * lam[0])

    def with_s(self, s: int) -> "Instance":
        return Instance(self.C, s, self.side, self.label)

    def logdet(self, support) -> float:
        """``ldet C[S,S]`` for an index collection ``S`` (``-inf`` if singular)."""
        S = np.sort(np.asarray(support, dtype=np.int64))
        if S.size == 0:
            return 0.0
        sign, val = np.linalg.slogdet(self.C[np.ix_(S, S)])
        return float(val) if sign > 0 else -math.inf

    def value(self, x) -> float:
        """Objective at a 0/1 vector."""
        return self.logdet(np.flatnonzero(np.asarray(x) > 0.5))

    def is_feasible(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        if abs(x.sum() - self.s) > tol or (x < -tol).any() or (x > 1 + tol).any():
            return False
        if self.side is None:
            return True
        return bool(np.all(self.side.A @ x <= self.side.b + tol))


def indicator(support, n: int) -> np.ndarray:
    x = np.zeros(n)
    x[np.asarray(support, dtype=np.int64)] = 1.0
    return x


@dataclass(frozen=True)
class Factorization:
    """``C = F F^T`` with ``F`` of shape n x k."""

    F: np.ndarray
    k: int
    r: int
    method: str

    def __post_init__(self):
        object.__setattr__(self, "F", _readonly(self.F))


def factorize(inst: Instance, method: str = "spectral", s: Optional[int] = None) -> Factorization:
    """Factor ``C = F F^T``.

    ``spectral`` puts ``sqrt(lambda_l) v_l`` in column l (k = r);
    ``cholesky-pivoted`` uses diagonal pivoting (k = r); ``sqrt`` is the
    symmetric square root (k = n).  Raises :class:`RankError` when
    ``rank(C) < s`` (``s`` defaults to the instance cardinality).
    """
    if method not in FACTOR_METHODS:
        raise ValueError(f"unknown factorization method {method!r}; choose from {FACTOR_METHODS}")
    s = inst.s if s is None else s
    r = inst.rank
    if r < s:
        raise RankError(f"rank(C)={r} < s={s}")
    C = np.ascontiguousarray(inst.C)
    lam, V = np.linalg.eigh(C)
    lam, V = lam[::-1], V[:, ::-1]
    if method == "spectral":
        F = V[:, :r] * np.sqrt(lam[:r])
    elif method == "sqrt":
        root = np.sqrt(np.maximum(lam, 0.0))
        root[r:] = 0.0
        F = (V * root) @ V.T
        F = 0.5 * (F + F.T)
    else:
        tol = 1e-14 * max(float(np.max(np.diag(C))), 1e-300)
        F = _kernels.pivoted_cholesky(C, tol, r)
        if F.shape[1] < r:
            # residual pivots fell under tol before reaching the eigen rank
            F = np.hstack([F, np.zeros((inst.n, r - F.shape[1]))])
    return Factorization(F=F, k=F.shape[1], r=r, method=method)


def f_of_x(fac: Factorization, x) -> np.ndarray:
    """``F^T Diag(x) F`` (k x k, PSD for x >= 0)."""
    x = np.asarray(x, dtype=float)
    F = fac.F
    X = (F.T * x) @ F
    return 0.5 * (X + X.T)


def complement(inst: Instance) -> tuple[Instance, float]:
    """``(C^{-1}, n - s, -A, b - A e)`` with offset ``ldet C``."""
    if not inst.is_nonsingular():
        raise InstanceError("complement requires a nonsingular C")
    lam = inst.eigenvalues
    Cinv = np.linalg.inv(inst.C)
    Cinv = 0.5 * (Cinv + Cinv.T)
    offset = float(np.sum(np.log(lam)))
    side = None
    if inst.side is not None:
        A = inst.side.A
        side = SideConstraints(-A, inst.side.b - A.sum(axis=1))
    label = f"{inst.label}~comp" if inst.label else "comp"
    return Instance(Cinv, inst.n - inst.s, side, label), offset


def scale(inst: Instance, gamma: float) -> tuple[Instance, float]:
    """``gamma C`` with offset ``-s log gamma``."""
    if not gamma > 0:
        raise ValueError(f"scale factor must be positive, got {gamma}")
    return Instance(gamma * inst.C, inst.s, inst.side, inst.label), -inst.s * math.log(gamma)


def _drop_index(C, side, j):
    keep = np.r_[0:j, j + 1 : C.shape[0]]
    if side is None:
        return keep, None
    return keep, (side.A[:, keep], side.b.copy())


def schur_branch(inst: Instance, j: int, direction: str) -> tuple[Instance, float]:
    """Fix ``x_j`` out (``down``: delete row/column) or in (``up``: Schur complement).

    Raises :class:`InstanceError` when the child would have ``s' = 0`` or
    ``s' = n'``; drivers handle those terminal nodes with :func:`branch_data`.
    """
    C2, s2, A2, b2, offset = branch_data(inst.C, inst.s, inst.A, inst.b, j, direction)
    side = SideConstraints(A2, b2) if A2.shape[0] else None
    return Instance(C2, s2, side, inst.label), offset


def branch_data(C, s, A, b, j, direction):
    """Raw-array version of :func:`schur_branch` (no cardinality check)."""
    n = C.shape[0]
    if not 0 <= j < n:
        raise IndexError(f"index {j} out of range for n={n}")
    keep = np.r_[0:j, j + 1 : n]
    A = np.asarray(A, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float)
    if direction == "down":
        return C[np.ix_(keep, keep)].copy(), s, A[:, keep].copy(), b.copy(), 0.0
    if direction == "up":
        cjj = C[j, j]
        if not cjj > 1e-12:
            raise InstanceError(f"up-branch on C[{j},{j}]={cjj:.3e} (numerically zero)")
        c = C[keep, j]
        C2 = C[np.ix_(keep, keep)] - np.outer(c, c) / cjj
        C2 = 0.5 * (C2 + C2.T)
        return C2, s - 1, A[:, keep].copy(), b - A[:, j], math.log(cjj)
    raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")


def generate_cmesp_constraints(
    inst: Instance, m: int, seed: int, best_x_per_s: Mapping[int, np.ndarray]
) -> SideConstraints:
    """Random integer side constraints that cut off most of the given solutions.

    Row ``a_i`` is uniform on ``{1..5}^n``; ``b_i`` is the nearest-rank 80th
    percentile of ``a_i^T x*(s) - 1`` over the supplied solutions.
    """
    n = inst.n
    if m == 0:
        return SideConstraints.empty(n)
    if not best_x_per_s:
        raise ValueError("best_x_per_s must be nonempty")
    rng = np.random.default_rng(seed)
    A = rng.integers(1, 6, size=(m, n)).astype(float)
    X = np.array([np.asarray(best_x_per_s[s], dtype=float) for s in sorted(best_x_per_s)])
    vals = A @ X.T - 1.0  # m x (#s)
    b = np.percentile(vals, 80, axis=1, method="inverted_cdf")
    return SideConstraints(A, np.asarray(b, dtype=float))


def random_spd(n: int, seed, rank: Optional[int] = None, spread: float = 10.0) -> np.ndarray:
    """``Q diag(d) Q^T`` with a seeded Haar-random orthogonal ``Q``.

    ``d`` is log-uniform on ``[1/sqrt(spread), sqrt(spread)]``; with ``rank``
    given, the trailing ``n - rank`` entries of ``d`` are zero.  ``seed`` may
    also be a ``numpy.random.Generator``.
    """
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    Q = Q * np.sign(np.diag(R))
    half = 0.5 * math.log(spread)
    d = np.exp(rng.uniform(-half, half, size=n))
    if rank is not None:
        d[rank:] = 0.0
    C = (Q * d) @ Q.T
    return 0.5 * (C + C.T)


def random_instance(n: int, s: int, seed, rank: Optional[int] = None, m: int = 0, label: str = "") -> Instance:
    """Random instance; with ``m > 0`` adds ``{1..5}``-integer side constraints.

    Right-hand sides sit just above ``A (s/n) e`` so the relaxation keeps a
    strictly feasible point while cutting off a good share of the subsets.
    """
    rng = np.random.default_rng(seed)
    C = random_spd(n, rng, rank=rank)
    side = None
    if m:
        A = rng.integers(1, 6, size=(m, n)).astype(float)
        center = A.sum(axis=1) * s / n
        b = np.ceil(center + rng.uniform(0.1, 1.5, size=m))
        side = SideConstraints(A, b)
    return Instance(C, s, side, label or f"rand-n{n}-s{s}-seed{seed}")


def _tokens(path: Path):
    text = Path(path).read_text()
    toks = text.replace("|", " ").replace(",", " ").split()
    return toks


def load_matrix(path) -> np.ndarray:
    toks = _tokens(path)
    if not toks:
        raise InstanceError(f"{path}: empty matrix file")
    try:
        n = int(toks[0])
        vals = np.array([float(t) for t in toks[1:]])
    except ValueError as exc:
        raise InstanceError(f"{path}: cannot parse matrix: {exc}") from exc
    if n <= 0 or vals.size != n * n:
        raise InstanceError(f"{path}: expected {n}x{n}={n * n} entries after the order, got {vals.size}")
    return vals.reshape(n, n)


def load_constraints(path, n: int) -> SideConstraints:
    toks = _tokens(path)
    if not toks:
        raise InstanceError(f"{path}: empty constraints file")
    try:
        m = int(toks[0])
        vals = np.array([float(t) for t in toks[1:]])
    except ValueError as exc:
        raise InstanceError(f"{path}: cannot parse constraints: {exc}") from exc
    if m < 0 or vals.size != m * (n + 1):
        raise InstanceError(f"{path}: expected {m} rows of {n + 1} numbers, got {vals.size} numbers")
    rows = vals.reshape(m, n + 1)
    return SideConstraints(rows[:, :n], rows[:, n])


def load_instance(matrix_path, s: int, constraints_path=None, label: Optional[str] = None) -> Instance:
    """Read a dense whitespace matrix file (and optional constraints file)."""
    C = load_matrix(matrix_path)
    side = load_constraints(constraints_path, C.shape[0]) if constraints_path else None
    return Instance(C, s, side, label if label is not None else Path(matrix_path).stem)


def write_matrix(path, C) -> None:
    C = np.asarray(C, dtype=float)
    lines = [str(C.shape[0])] + [" ".join(repr(float(v)) for v in row) for row in C]
    Path(path).write_text("\n".join(lines) + "\n")


def write_constraints(path, side: SideConstraints) -> None:
    lines = [str(side.m)]
    for a, bi in zip(side.A, side.b):
        lines.append(" ".join(repr(float(v)) for v in a) + " | " + repr(float(bi)))
    Path(path).write_text("\n".join(lines) + "\n")
