"""Exact and heuristic solution of small instances.

``brute_force`` enumerates every feasible subset.  ``heuristic_lb`` builds a
good feasible subset greedily and improves it by interchange.  The two
drivers ``iterative_fix`` and ``branch_and_bound`` combine certified bounds,
variable fixing and the up/down branching transforms to prove optimality.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from ._frankwolfe import SolverOptions
from .fact_bound import FIX_THRESHOLD, FixReport, comp_ddfact, ddfact_bound, fix_from_margins
from .instance import Instance, InstanceError, SideConstraints, branch_data, factorize, indicator
from .linx_bound import linx_bound, optimize_gamma
from .mixing import make_component, mix_bound, optimize_alpha
from .polytope import InfeasibleError, Polytope, nonempty

__all__ = [
    "BoundConfig",
    "BoundOutcome",
    "FixReport",
    "SolveResult",
    "branch_and_bound",
    "brute_force",
    "evaluate_bound",
    "heuristic_lb",
    "iterative_fix",
    "parse_bound",
]

log = logging.getLogger(__name__)

ENUM_GUARD = 10**7
SING_TOL = 1e-13
TIE_TOL = 1e-9
PRUNE_TOL = 1e-9
SWAP_TOL = 1e-12
GREEDY_NODE_LIMIT = 10000


@dataclass
class SolveResult:
    """A feasible subset and its value.

    ``count`` is the number of subsets evaluated (enumeration and heuristic)
    or nodes processed (branch and bound).  ``optima`` lists every support
    within ``TIE_TOL`` of ``z`` when the solver enumerates.
    """

    z: float
    x: np.ndarray
    count: int
    optima: list = field(default_factory=list)
    proven: bool = True
    upper: float = math.nan

    @property
    def support(self) -> tuple:
        return tuple(int(j) for j in np.flatnonzero(self.x > 0.5))


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def _unrank(rank: int, n: int, s: int) -> tuple:
    """The ``rank``-th ``s``-subset of ``range(n)`` in lexicographic order."""
    out = []
    j = 0
    for left in range(s, 0, -1):
        while True:
            block = math.comb(n - j - 1, left - 1)
            if rank < block:
                out.append(j)
                j += 1
                break
            rank -= block
            j += 1
    return tuple(out)


def brute_force(inst: Instance, guard: int = ENUM_GUARD, tie_tol: float = TIE_TOL) -> SolveResult:
    """Maximize ``ldet C[S,S]`` over all feasible ``s``-subsets.

    Ties go to the lexicographically smallest support; ``optima`` holds all
    supports within ``tie_tol * (1 + |z|)`` of the maximum.
    """
    n, s = inst.n, inst.s
    total = math.comb(n, s)
    if total > guard:
        raise ValueError(f"C({n},{s}) = {total} subsets exceeds the enumeration guard {guard}")
    C = np.ascontiguousarray(inst.C)
    A = np.ascontiguousarray(inst.A, dtype=float)
    b = np.ascontiguousarray(inst.b, dtype=float)
    scale = max(1.0, float(np.abs(np.diag(C)).max()))
    vals = _kernels.subset_logdets(C, s, A, b, SING_TOL * scale)
    best = int(np.argmax(vals))
    z = float(vals[best])
    if not math.isfinite(z):
        raise InfeasibleError("no feasible subset with a nonsingular submatrix")
    near = np.flatnonzero(vals >= z - tie_tol * (1.0 + abs(z)))
    optima = [_unrank(int(r), n, s) for r in near]
    return SolveResult(z=z, x=indicator(optima[0], n), count=total, optima=optima)


# ---------------------------------------------------------------------------
# Heuristic
# ---------------------------------------------------------------------------


def _completion_possible(inst: Instance, ones, zeros) -> bool:
    """LP test: is there a fractional completion with ``ones`` at 1 and ``zeros`` at 0?"""
    n, s = inst.n, inst.s
    if inst.side is None:
        return len(ones) <= s and n - len(zeros) >= s
    fixed = set(ones) | set(zeros)
    free = [j for j in range(n) if j not in fixed]
    s2 = s - len(ones)
    A = inst.A
    b2 = inst.b - A[:, list(ones)].sum(axis=1) if ones else inst.b.copy()
    if s2 < 0 or s2 > len(free):
        return False
    if s2 == 0:
        return bool(np.all(b2 >= -1e-9))
    if s2 == len(free):
        return bool(np.all(A[:, free].sum(axis=1) <= b2 + 1e-9))
    return nonempty(Polytope(len(free), s2, SideConstraints(A[:, free], b2)))


def _greedy(inst: Instance, node_limit: int = GREEDY_NODE_LIMIT):
    """Depth-first greedy: add the index with the largest conditional
    variance, backtracking when the LP says no completion exists."""
    n, s = inst.n, inst.s
    C = np.array(inst.C)
    nodes = [0]

    def dfs(R, S, excluded):
        if len(S) == s:
            return list(S) if inst.is_feasible(indicator(S, n)) else None
        nodes[0] += 1
        if nodes[0] > node_limit:
            return None
        diag = np.diag(R).copy()
        diag[list(S)] = -np.inf
        diag[list(excluded)] = -np.inf
        order = [int(j) for j in np.argsort(-diag, kind="stable") if diag[j] > -np.inf]
        tried = set()
        for j in order:
            if not _completion_possible(inst, S + [j], excluded | tried):
                tried.add(j)
                continue
            piv = R[j, j]
            if piv > SING_TOL * max(1.0, abs(C).max()):
                R2 = R - np.outer(R[:, j], R[j, :]) / piv
            else:
                R2 = R.copy()
                R2[j, :] = 0.0
                R2[:, j] = 0.0
            got = dfs(R2, S + [j], excluded | tried)
            if got is not None:
                return got
            tried.add(j)
            if nodes[0] > node_limit:
                return None
        return None

    found = dfs(C, [], frozenset())
    if found is None:
        raise InfeasibleError("no feasible subset found by the greedy search")
    return sorted(found), nodes[0]


def _interchange(inst: Instance, S):
    """Best-improvement swaps (one out, one in) preserving feasibility."""
    n = inst.n
    C = np.ascontiguousarray(inst.C)
    scale = max(1.0, float(np.abs(np.diag(C)).max()))
    S = np.array(sorted(S), dtype=np.int64)
    cur = inst.logdet(S)
    evals = 0
    while True:
        table = _kernels.swap_logdets(C, S, SING_TOL * scale)
        evals += table.size
        if inst.side is not None:
            x = indicator(S, n)
            Ax = inst.A @ x
            # lhs[i, a, j] = A x - A[:, S[a]] + A[:, j]
            lhs = Ax[:, None, None] - inst.A[:, S][:, :, None] + inst.A[:, None, :]
            ok = np.all(lhs <= inst.b[:, None, None] + 1e-9, axis=0)
            table = np.where(ok, table, -np.inf)
        a, j = np.unravel_index(int(np.argmax(table)), table.shape)
        if not table[a, j] > cur + SWAP_TOL * (1.0 + abs(cur)):
            return S, cur, evals
        S = np.sort(np.r_[np.delete(S, a), j])
        cur = inst.logdet(S)


def heuristic_lb(inst: Instance) -> SolveResult:
    """Greedy construction followed by interchange; a valid lower bound."""
    S, nodes = _greedy(inst)
    S, z, evals = _interchange(inst, S)
    return SolveResult(z=float(z), x=indicator(S, inst.n), count=nodes + evals, proven=False)


# ---------------------------------------------------------------------------
# Bound configurations
# ---------------------------------------------------------------------------

BOUND_KINDS = ("ddfact", "comp_ddfact", "linx", "mix")
_ALIASES = {"comp": "comp_ddfact", "compddfact": "comp_ddfact", "fact": "ddfact"}


@dataclass(frozen=True)
class BoundConfig:
    """Which bound to compute.

    ``gamma=None`` means optimize the linx scale; ``alpha=None`` means
    optimize the mixing weight of a pair.
    """

    kind: str
    gamma: Optional[float] = 1.0
    pair: tuple = ()
    alpha: Optional[float] = None
    eps: float = 0.0

    def __post_init__(self):
        if self.kind not in BOUND_KINDS:
            raise ValueError(f"unknown bound {self.kind!r}; choose from {BOUND_KINDS}")
        if self.kind == "mix":
            if len(self.pair) != 2 or any(p not in BOUND_KINDS[:3] for p in self.pair):
                raise ValueError(f"mix needs two of {BOUND_KINDS[:3]}, got {self.pair}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def name(self) -> str:
        if self.kind == "mix":
            return "mix:" + "+".join(self.pair)
        if self.kind == "linx" and self.gamma is None:
            return "linx@opt"
        return self.kind


def parse_bound(text: str, gamma: Optional[float] = 1.0) -> BoundConfig:
    """Parse ``ddfact``, ``comp``, ``linx``, ``linx@opt``, ``linx@2.5`` or
    ``mix:ddfact+linx``; ``gamma`` is the default linx scale (``None`` = optimize)."""
    t = text.strip().lower()
    if t.startswith("mix:"):
        pair = tuple(_ALIASES.get(p, p) for p in t[4:].split("+"))
        return BoundConfig("mix", gamma=gamma, pair=pair)
    if "@" in t:
        kind, g = t.split("@", 1)
        kind = _ALIASES.get(kind, kind)
        return BoundConfig(kind, gamma=None if g == "opt" else float(g))
    return BoundConfig(_ALIASES.get(t, t), gamma=gamma)


@dataclass
class BoundOutcome:
    """A certified bound in the instance's own variable space.

    ``upsilon``/``nu`` are the fixing margins' dual parts for ``x_j = 0`` /
    ``x_j = 1``; ``x`` is the relaxation optimum.
    """

    name: str
    value: float
    primal_value: float
    gap: float
    x: np.ndarray
    upsilon: np.ndarray
    nu: np.ndarray
    gamma: float = math.nan
    alpha: float = math.nan
    iterations: int = 0

    def fix(self, lb: float, threshold: float = FIX_THRESHOLD) -> FixReport:
        return fix_from_margins(self.upsilon, self.nu, self.value, lb, threshold)


def evaluate_bound(
    inst: Instance, cfg: BoundConfig, opts: Optional[SolverOptions] = None, P: Optional[Polytope] = None
) -> BoundOutcome:
    """Solve the relaxation named by ``cfg`` and certify it."""
    P = P or Polytope.of(inst)
    if cfg.kind == "ddfact":
        res, cert = ddfact_bound(inst, factorize(inst, "spectral"), opts, cfg.eps)
        return BoundOutcome(
            cfg.name, cert.value, res.value, cert.gap, res.x, cert.upsilon, cert.nu, iterations=res.iterations
        )
    if cfg.kind == "comp_ddfact":
        out = comp_ddfact(inst, opts)
        cert = out.certificate
        # the complement works in y = e - x, so the margins swap roles
        return BoundOutcome(
            cfg.name,
            out.bound,
            out.primal.value + out.offset,
            cert.gap,
            1.0 - out.primal.x,
            cert.nu,
            cert.upsilon,
            iterations=out.primal.iterations,
        )
    if cfg.kind == "linx":
        if cfg.gamma is None:
            g = optimize_gamma(inst, P, opts=opts)
            res, cert, gamma = g.primal, g.certificate, g.gamma
        else:
            gamma = cfg.gamma
            res, cert = linx_bound(inst, gamma, P, opts)
        return BoundOutcome(
            cfg.name, cert.value, res.value, cert.gap, res.x, cert.upsilon, cert.nu, gamma, iterations=res.iterations
        )
    # mix
    gamma = cfg.gamma
    if "linx" in cfg.pair and gamma is None:
        gamma = optimize_gamma(inst, P, opts=opts).gamma
    comps = [make_component(inst, k, gamma if gamma is not None else 1.0) for k in cfg.pair]
    if cfg.alpha is None:
        a = optimize_alpha(inst, comps[0], comps[1], P, opts)
        alpha, res, cert = a.alpha, a.primal, a.certificate
    else:
        alpha = cfg.alpha
        res, cert = mix_bound(inst, comps, [1.0 - alpha, alpha], P, opts)
    return BoundOutcome(
        cfg.name,
        cert.value,
        res.value,
        cert.gap,
        res.x,
        cert.upsilon,
        cert.nu,
        gamma if "linx" in cfg.pair else math.nan,
        alpha,
        res.iterations,
    )


# ---------------------------------------------------------------------------
# Reduced problems
# ---------------------------------------------------------------------------


@dataclass
class Reduced:
    """A subproblem left after fixing: data, the accumulated ``ldet`` offset,
    and the original indices of the free and fixed-to-1 variables."""

    C: np.ndarray
    s: int
    A: np.ndarray
    b: np.ndarray
    offset: float
    free: np.ndarray
    ones: tuple

    @classmethod
    def root(cls, inst: Instance) -> "Reduced":
        return cls(np.array(inst.C), inst.s, np.array(inst.A), np.array(inst.b), 0.0, np.arange(inst.n), ())

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def terminal(self) -> bool:
        return self.s == 0 or self.s == self.n

    def instance(self, label: str = "") -> Instance:
        side = SideConstraints(self.A, self.b) if self.A.shape[0] else None
        return Instance(self.C, self.s, side, label)

    def apply(self, zeros: Sequence[int], ones: Sequence[int]) -> "Reduced":
        """Delete ``zeros`` and Schur-complement ``ones`` (local indices)."""
        C, s, A, b, off = self.C, self.s, self.A, self.b, self.offset
        free = list(self.free)
        new_ones = list(self.ones)
        todo = sorted([(j, "down") for j in zeros] + [(j, "up") for j in ones], reverse=True)
        for j, direction in todo:
            C, s, A, b, o = branch_data(C, s, A, b, j, direction)
            off += o
            if direction == "up":
                new_ones.append(int(free[j]))
            del free[j]
        return Reduced(C, s, A, b, off, np.array(free, dtype=np.int64), tuple(sorted(new_ones)))

    def terminal_solution(self, n_orig: int):
        """``(value, x)`` for a terminal subproblem, or ``None`` if infeasible."""
        if self.s == 0:
            if np.any(self.b < -1e-9):
                return None
            return self.offset, indicator(list(self.ones), n_orig)
        if np.any(self.A.sum(axis=1) > self.b + 1e-9):
            return None
        sign, ld = np.linalg.slogdet(self.C)
        if sign <= 0:
            return None
        return self.offset + ld, indicator(list(self.ones) + list(self.free), n_orig)


# ---------------------------------------------------------------------------
# Iterated fixing
# ---------------------------------------------------------------------------


@dataclass
class RoundRecord:
    round: int
    n: int
    s: int
    lb: float
    ub: float
    fixed_zero: int
    fixed_one: int
    bounds: dict


@dataclass
class IterativeFixResult:
    status: str
    rounds: list
    instances: list
    reports: list
    lb: float
    x: np.ndarray
    reduced: Reduced

    @property
    def solved(self) -> bool:
        return self.status == "solved"


def _bound_or_none(inst, cfg, opts):
    try:
        return evaluate_bound(inst, cfg, opts)
    except (InstanceError, InfeasibleError) as exc:
        log.info("bound %s unavailable: %s", cfg.name, exc)
        return None


def iterative_fix(
    inst: Instance,
    bounds: Sequence[Union[BoundConfig, str]],
    max_rounds: int = 10,
    opts: Optional[SolverOptions] = None,
    finish: Optional[str] = None,
    threshold: float = FIX_THRESHOLD,
) -> IterativeFixResult:
    """Repeat rounds of certified bounding and fixing until nothing fixes.

    Status is ``solved`` when the subproblem collapses (``s' = 0`` or
    ``s' = n'``), ``stalled`` when a round fixes nothing and ``max_rounds``
    when the round budget runs out.  With ``finish="brute"`` a stalled
    subproblem is enumerated, so ``x`` is optimal in every case.
    """
    cfgs = [parse_bound(b) if isinstance(b, str) else b for b in bounds]
    if not cfgs:
        raise ValueError("at least one bound is required")
    n0 = inst.n
    red = Reduced.root(inst)
    best_lb, best_x = -math.inf, None
    rounds, chain, reports = [], [inst], []
    status = "max_rounds"
    for r in range(1, max_rounds + 1):
        cur = red.instance(f"{inst.label}-round{r}") if r > 1 else inst
        if r > 1:
            chain.append(cur)
        h = heuristic_lb(cur)
        cand = h.z + red.offset
        if cand > best_lb:
            best_lb = cand
            best_x = indicator(list(red.ones) + [int(red.free[j]) for j in h.support], n0)
        lb_local = best_lb - red.offset
        report = None
        values = {}
        for cfg in cfgs:
            out = _bound_or_none(cur, cfg, opts)
            if out is None:
                continue
            values[cfg.name] = out.value + red.offset
            rep = out.fix(lb_local, threshold)
            report = rep if report is None else report.merged(rep)
        if report is None:
            raise InstanceError("no configured bound could be computed")
        reports.append(report)
        rounds.append(
            RoundRecord(
                r, cur.n, cur.s, best_lb, min(values.values()), len(report.fixed_zero), len(report.fixed_one), values
            )
        )
        if report.count == 0:
            status = "stalled"
            break
        red = red.apply(report.fixed_zero, report.fixed_one)
        if red.terminal:
            sol = red.terminal_solution(n0)
            if sol is None:
                raise ArithmeticError("fixing removed every solution; the lower bound is inconsistent")
            val, x = sol
            if val > best_lb:
                best_lb, best_x = val, x
            status = "solved"
            break
    if status != "solved" and finish == "brute":
        sub = brute_force(red.instance())
        val = sub.z + red.offset
        if val > best_lb:
            best_lb = val
            best_x = indicator(list(red.ones) + [int(red.free[j]) for j in sub.support], n0)
    return IterativeFixResult(status, rounds, chain, reports, best_lb, best_x, red)


# ---------------------------------------------------------------------------
# Branch and bound
# ---------------------------------------------------------------------------


def branch_and_bound(
    inst: Instance,
    bound: Union[BoundConfig, str] = "ddfact",
    budget: int = 10000,
    opts: Optional[SolverOptions] = None,
    threshold: float = FIX_THRESHOLD,
) -> SolveResult:
    """Best-first branch and bound with certified node bounds and fixing.

    A node is pruned when its bound is at most ``incumbent + 1e-9``.  The
    branching index is the relaxation coordinate closest to 1/2.  For linx
    with an optimized scale, ``gamma`` is chosen at the root and reused.
    """
    cfg = parse_bound(bound) if isinstance(bound, str) else bound
    n0 = inst.n
    try:
        h = heuristic_lb(inst)
        inc, inc_x = h.z, h.x
    except InfeasibleError:
        inc, inc_x = -math.inf, None
    counter = itertools.count()
    heap = [(-math.inf, next(counter), Reduced.root(inst))]
    nodes = 0
    open_max = -math.inf
    while heap:
        neg_parent, _, red = heapq.heappop(heap)
        parent_bound = -neg_parent
        if parent_bound <= inc + PRUNE_TOL:
            continue
        if nodes >= budget:
            open_max = max(open_max, parent_bound, max((-e[0] for e in heap), default=-math.inf))
            break
        nodes += 1
        if red.terminal:
            sol = red.terminal_solution(n0)
            if sol is not None and sol[0] > inc:
                inc, inc_x = sol
            continue
        sub = red.instance()
        try:
            out = evaluate_bound(sub, cfg, opts)
        except InfeasibleError:
            continue
        except InstanceError:
            # rank(C') < s': every subset in this node is singular
            continue
        if nodes == 1 and cfg.kind in ("linx", "mix") and cfg.gamma is None:
            cfg = BoundConfig(cfg.kind, gamma=out.gamma, pair=cfg.pair, alpha=cfg.alpha, eps=cfg.eps)
        node_bound = out.value + red.offset
        if node_bound <= inc + PRUNE_TOL:
            continue
        x = out.x
        if math.isfinite(inc):
            rep = out.fix(inc - red.offset, threshold)
            if rep.count:
                keep = np.setdiff1d(np.arange(red.n), np.r_[rep.fixed_zero, rep.fixed_one].astype(int))
                red = red.apply(rep.fixed_zero, rep.fixed_one)
                x = x[keep]
                if red.terminal:
                    heapq.heappush(heap, (-node_bound, next(counter), red))
                    continue
        j = int(np.argmin(np.abs(x - 0.5)))
        heapq.heappush(heap, (-node_bound, next(counter), red.apply([j], [])))
        if red.C[j, j] > 1e-12:
            heapq.heappush(heap, (-node_bound, next(counter), red.apply([], [j])))
    if inc_x is None:
        raise InfeasibleError("no feasible subset")
    proven = not math.isfinite(open_max) or open_max <= inc + PRUNE_TOL
    return SolveResult(z=float(inc), x=inc_x, count=nodes, proven=proven, upper=max(inc, open_max))
