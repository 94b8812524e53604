"""Away-step Frank-Wolfe for maximizing a concave function over a polytope.

The iterate is kept as an explicit convex combination of atoms.  Atoms
returned by the linear oracle are vertices; the starting point enters as an
atom of its own so that it can be removed by away steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 5000
    line_search_evals: int = 40
    restarts: int = 5


@dataclass
class PrimalResult:
    """Relaxation solution with its objective value and solver diagnostics."""

    x: np.ndarray
    value: float
    iterations: int
    fw_gap: float
    smooth_at_solution: bool = True
    converged: bool = False
    info: dict = field(default_factory=dict)


DROP_TOL = 1e-9
NOISE = 1e-13


def _zoom_search(line_search, x, d, tmax):
    t, f = line_search(x, d, tmax)
    shrink = tmax
    for _ in range(4):
        if t > 0.0:
            break
        # optimum sits inside the first golden bracket; zoom towards 0
        shrink *= 1e-3
        t, f = line_search(x, d, shrink)
    return t, f


def _key(v):
    return np.round(v, 10).tobytes()


def away_step_fw(
    value_fn: Callable[[np.ndarray], float],
    grad_fn: Callable[[np.ndarray], np.ndarray],
    line_search: Callable[[np.ndarray, np.ndarray, float], tuple[float, float]],
    oracle: Callable[[np.ndarray], tuple[np.ndarray, float]],
    x0: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 5000,
    active=None,
):
    """Run away-step Frank-Wolfe from ``x0``.

    ``active`` optionally supplies a starting convex decomposition
    ``(atoms, weights)`` (for instance from a previous solve); it overrides
    ``x0`` when its combination has a finite objective.

    ``line_search(x, d, tmax)`` returns ``(t, value(x + t d))`` with
    ``0 <= t <= tmax``.  Stops when the Frank-Wolfe gap
    ``max_v g^T (v - x)`` falls below ``tol * (1 + |value|)``.

    Returns ``(x, value, iterations, fw_gap, converged, (atoms, weights))``.
    """
    x = np.array(x0, dtype=float)
    atoms, weights = [x.copy()], [1.0]
    if active is not None:
        a = [np.array(v, dtype=float) for v in active[0]]
        w = np.asarray(active[1], dtype=float)
        xa = np.sum([wi * ai for wi, ai in zip(w / w.sum(), a)], axis=0)
        if math.isfinite(value_fn(xa)):
            x, atoms, weights = xa, a, list(w / w.sum())
    fx = value_fn(x)
    if not math.isfinite(fx):
        raise FloatingPointError("objective is not finite at the starting point")
    index = {_key(a): i for i, a in enumerate(atoms)}
    fw_gap = math.inf
    converged = False
    it = 0
    while True:
        g = grad_fn(x)
        v, vval = oracle(g)
        fw_gap = float(vval - g @ x)
        if fw_gap <= tol * (1.0 + abs(fx)):
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        scores = np.array([g @ a for a in atoms])
        ia = int(np.argmin(scores))
        away_gap = float(g @ x - scores[ia])
        if fw_gap >= away_gap or len(atoms) == 1:
            d = v - x
            tmax = 1.0
            mode = "fw"
        else:
            d = x - atoms[ia]
            w = weights[ia]
            tmax = w / (1.0 - w)
            mode = "away"
        if mode == "away" and tmax <= DROP_TOL:
            # negligible atom: remove it outright instead of line searching
            t, fnew = tmax, value_fn(x + tmax * d)
        else:
            t, fnew = _zoom_search(line_search, x, d, tmax)
        if t <= 0.0 and mode == "away":
            d, tmax, mode = v - x, 1.0, "fw"
            t, fnew = _zoom_search(line_search, x, d, tmax)
        if t <= 0.0 or not fnew >= fx - NOISE * (1.0 + abs(fx)):
            break
        if mode == "fw":
            weights = [w * (1.0 - t) for w in weights]
            key = _key(v)
            if t >= 1.0:
                atoms, weights, index = [v.copy()], [1.0], {key: 0}
            elif key in index:
                weights[index[key]] += t
            else:
                index[key] = len(atoms)
                atoms.append(v.copy())
                weights.append(t)
        else:
            weights = [w * (1.0 + t) for w in weights]
            weights[ia] -= t
            if t >= tmax * (1.0 - 1e-9) or weights[ia] <= 1e-15:
                del atoms[ia]
                del weights[ia]
                index = {_key(a): i for i, a in enumerate(atoms)}
        total = sum(weights)
        weights = [w / total for w in weights]
        x = np.sum([w * a for w, a in zip(weights, atoms)], axis=0)
        fx = value_fn(x) if not math.isfinite(fnew) else fnew
    return x, fx, it, fw_gap, converged, (atoms, weights)


def golden_section(f, tmax: float, n_eval: int = 40):
    """Maximize a concave scalar function on ``[0, tmax]``.

    Returns ``(t, f(t))``; ``t = 0`` when no evaluated point beats ``f(0)``.
    """
    gr = 0.5 * (math.sqrt(5.0) - 1.0)
    f0 = f(0.0)
    fmax = f(tmax)
    lo, hi = 0.0, tmax
    x1, x2 = hi - gr * (hi - lo), lo + gr * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(n_eval - 4):
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - gr * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + gr * (hi - lo)
            f2 = f(x2)
    tbest, fbest = (x1, f1) if f1 >= f2 else (x2, f2)
    if fmax >= fbest:
        tbest, fbest = tmax, fmax
    if not fbest > f0:
        return 0.0, f0
    return tbest, fbest


def golden_section_min(f, lo: float, hi: float, tol: float, max_evals: int, endpoints: bool = False):
    """Minimize a unimodal scalar function on ``[lo, hi]``.

    Stops when the bracket is shorter than ``tol`` or after ``max_evals``
    evaluations.  With ``endpoints=True`` both ends are evaluated first so
    the result never exceeds ``min(f(lo), f(hi))``.  Returns ``(t, f(t))``
    for the best point seen, lowest ``t`` on ties.
    """
    gr = 0.5 * (math.sqrt(5.0) - 1.0)
    seen = {}

    def ev(t):
        if t not in seen:
            seen[t] = f(t)
        return seen[t]

    if endpoints:
        ev(lo)
        ev(hi)
    a, b = lo, hi
    x1, x2 = b - gr * (b - a), a + gr * (b - a)
    f1, f2 = ev(x1), ev(x2)
    while b - a > tol and len(seen) < max_evals:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - gr * (b - a)
            f1 = ev(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + gr * (b - a)
            f2 = ev(x2)
    t = min(seen, key=lambda k: (seen[k], k))
    return t, seen[t]
