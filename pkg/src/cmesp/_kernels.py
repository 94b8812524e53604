"""Hot numeric kernels, each in a numba and a pure-numpy variant.

The public names at the bottom of the module are bound to one variant
according to :data:`cmesp._accel.USE_NUMBA`.  Both variants are importable
directly (``*_numba`` / ``*_numpy``) so tests can check they agree and the
benchmark can time them side by side.
"""

import itertools
import math

import numpy as np

from ._accel import NUMBA_INSTALLED, USE_NUMBA, optional_njit

GOLDEN = 0.5 * (math.sqrt(5.0) - 1.0)


# ---------------------------------------------------------------------------
# Spectral function phi_s (concave envelope of the sum of logs)
# ---------------------------------------------------------------------------


def _iota_scan_numpy(lam, s):
    # lam sorted nonincreasing, entries >= 0; suffix sums avoid cancellation
    tails = np.cumsum(lam[::-1])[::-1]
    deltas = tails[:s] / (s - np.arange(s))
    ok = deltas >= lam[:s]
    ok[s - 1] = True  # sum(lam[s-1:]) >= lam[s-1] always holds
    i = int(np.argmax(ok))
    return i, float(deltas[i])


@optional_njit(cache=True)
def _iota_scan_numba(lam, s):
    k = lam.shape[0]
    tails = np.empty(k + 1)
    tails[k] = 0.0
    for ell in range(k - 1, -1, -1):
        tails[ell] = tails[ell + 1] + lam[ell]
    for i in range(s - 1):
        delta = tails[i] / (s - i)
        if delta >= lam[i]:
            return i, delta
    return s - 1, tails[s - 1]


def _phi_s_numpy(lam, s):
    i, delta = _iota_scan_numpy(lam, s)
    if i < 0 or delta <= 0.0:
        return -np.inf
    head = lam[:i]
    if i > 0 and head[-1] <= 0.0:
        return -np.inf
    return float(np.sum(np.log(head)) + (s - i) * math.log(delta))


@optional_njit(cache=True)
def _phi_s_numba(lam, s):
    i, delta = _iota_scan_numba(lam, s)
    if i < 0 or delta <= 0.0:
        return -np.inf
    val = 0.0
    for ell in range(i):
        if lam[ell] <= 0.0:
            return -np.inf
        val += math.log(lam[ell])
    return val + (s - i) * math.log(delta)


def _sorted_eigs_numpy(X):
    lam = np.linalg.eigvalsh(X)[::-1]
    return np.maximum(lam, 0.0)


@optional_njit(cache=True)
def _sorted_eigs_numba(X):
    lam = np.linalg.eigvalsh(X)[::-1].copy()
    for i in range(lam.shape[0]):
        if lam[i] < 0.0:
            lam[i] = 0.0
    return lam


# ---------------------------------------------------------------------------
# Golden-section line search for Gamma_s(W + t B) on [0, tmax]
# ---------------------------------------------------------------------------


def _gamma_line_search_numpy(W, B, s, tmax, n_eval):
    def f(t):
        return _phi_s_numpy(_sorted_eigs_numpy(W + t * B), s)

    f0 = f(0.0)
    fmax = f(tmax)
    lo, hi = 0.0, tmax
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    evals = 3
    while evals < n_eval:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
        evals += 1
    if f1 >= f2:
        tbest, fbest = x1, f1
    else:
        tbest, fbest = x2, f2
    if fmax >= fbest:
        tbest, fbest = tmax, fmax
    if not fbest > f0:
        return 0.0, f0
    return tbest, fbest


@optional_njit(cache=True)
def _gamma_line_search_numba(W, B, s, tmax, n_eval):
    f0 = _phi_s_numba(_sorted_eigs_numba(W), s)
    fmax = _phi_s_numba(_sorted_eigs_numba(W + tmax * B), s)
    lo = 0.0
    hi = tmax
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1 = _phi_s_numba(_sorted_eigs_numba(W + x1 * B), s)
    f2 = _phi_s_numba(_sorted_eigs_numba(W + x2 * B), s)
    evals = 3
    while evals < n_eval:
        if f1 >= f2:
            hi = x2
            x2 = x1
            f2 = f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = _phi_s_numba(_sorted_eigs_numba(W + x1 * B), s)
        else:
            lo = x1
            x1 = x2
            f1 = f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = _phi_s_numba(_sorted_eigs_numba(W + x2 * B), s)
        evals += 1
    if f1 >= f2:
        tbest = x1
        fbest = f1
    else:
        tbest = x2
        fbest = f2
    if fmax >= fbest:
        tbest = tmax
        fbest = fmax
    if not fbest > f0:
        return 0.0, f0
    return tbest, fbest


# ---------------------------------------------------------------------------
# Golden-section line search for a weighted sum of spectral objectives
# ---------------------------------------------------------------------------
# Component i is evaluated on W[i] + t B[i].  kinds[i] == 0 means
# phi_{cards[i]} of the eigenvalues, kinds[i] == 1 means half the log-det.
# Matrices are zero-padded (kind 0) or identity-padded (kind 1) to a common
# order, which leaves both functions unchanged.


def _mix_eval_numpy(Ws, Bs, kinds, cards, weights, consts, t):
    total = 0.0
    for i in range(Ws.shape[0]):
        lam = _sorted_eigs_numpy(Ws[i] + t * Bs[i]) if kinds[i] == 0 else np.linalg.eigvalsh(Ws[i] + t * Bs[i])
        if kinds[i] == 0:
            v = _phi_s_numpy(lam, cards[i])
        elif lam[0] <= 0.0:
            v = -np.inf
        else:
            v = 0.5 * float(np.sum(np.log(lam)))
        if v == -np.inf:
            return -np.inf
        total += weights[i] * (v + consts[i])
    return total


@optional_njit(cache=True)
def _mix_eval_numba(Ws, Bs, kinds, cards, weights, consts, t):
    total = 0.0
    for i in range(Ws.shape[0]):
        X = Ws[i] + t * Bs[i]
        if kinds[i] == 0:
            v = _phi_s_numba(_sorted_eigs_numba(X), cards[i])
        else:
            lam = np.linalg.eigvalsh(X)
            if lam[0] <= 0.0:
                return -np.inf
            v = 0.0
            for ell in range(lam.shape[0]):
                v += math.log(lam[ell])
            v *= 0.5
        if v == -np.inf:
            return -np.inf
        total += weights[i] * (v + consts[i])
    return total


def _mix_line_search_numpy(Ws, Bs, kinds, cards, weights, consts, tmax, n_eval):
    def f(t):
        return _mix_eval_numpy(Ws, Bs, kinds, cards, weights, consts, t)

    f0 = f(0.0)
    fmax = f(tmax)
    lo, hi = 0.0, tmax
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    evals = 3
    while evals < n_eval:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
        evals += 1
    if f1 >= f2:
        tbest, fbest = x1, f1
    else:
        tbest, fbest = x2, f2
    if fmax >= fbest:
        tbest, fbest = tmax, fmax
    if not fbest > f0:
        return 0.0, f0
    return tbest, fbest


@optional_njit(cache=True)
def _mix_line_search_numba(Ws, Bs, kinds, cards, weights, consts, tmax, n_eval):
    f0 = _mix_eval_numba(Ws, Bs, kinds, cards, weights, consts, 0.0)
    fmax = _mix_eval_numba(Ws, Bs, kinds, cards, weights, consts, tmax)
    lo = 0.0
    hi = tmax
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1 = _mix_eval_numba(Ws, Bs, kinds, cards, weights, consts, x1)
    f2 = _mix_eval_numba(Ws, Bs, kinds, cards, weights, consts, x2)
    evals = 3
    while evals < n_eval:
        if f1 >= f2:
            hi = x2
            x2 = x1
            f2 = f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = _mix_eval_numba(Ws, Bs, kinds, cards, weights, consts, x1)
        else:
            lo = x1
            x1 = x2
            f1 = f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = _mix_eval_numba(Ws, Bs, kinds, cards, weights, consts, x2)
        evals += 1
    if f1 >= f2:
        tbest = x1
        fbest = f1
    else:
        tbest = x2
        fbest = f2
    if fmax >= fbest:
        tbest = tmax
        fbest = fmax
    if not fbest > f0:
        return 0.0, f0
    return tbest, fbest


# ---------------------------------------------------------------------------
# Pivoted Cholesky (outer-product form, columns indexed in original order)
# ---------------------------------------------------------------------------


def _pivoted_cholesky_numpy(C, tol, max_rank):
    n = C.shape[0]
    L = np.zeros((n, max_rank))
    d = np.diag(C).astype(float).copy()
    used = np.zeros(n, dtype=bool)
    r = 0
    for k in range(max_rank):
        cand = np.where(used, -np.inf, d)
        i = int(np.argmax(cand))
        if cand[i] <= tol:
            break
        col = (C[:, i] - L[:, :k] @ L[i, :k]) / math.sqrt(d[i])
        col[used] = 0.0
        col[i] = math.sqrt(d[i])
        L[:, k] = col
        d = d - col * col
        used[i] = True
        r = k + 1
    return L[:, :r]


@optional_njit(cache=True)
def _pivoted_cholesky_numba(C, tol, max_rank):
    n = C.shape[0]
    L = np.zeros((n, max_rank))
    d = np.empty(n)
    for i in range(n):
        d[i] = C[i, i]
    used = np.zeros(n, dtype=np.bool_)
    r = 0
    for k in range(max_rank):
        i = -1
        best = -np.inf
        for j in range(n):
            if not used[j] and d[j] > best:
                best = d[j]
                i = j
        if i < 0 or best <= tol:
            break
        piv = math.sqrt(d[i])
        for j in range(n):
            if used[j]:
                L[j, k] = 0.0
                continue
            acc = C[j, i]
            for q in range(k):
                acc -= L[j, q] * L[i, q]
            L[j, k] = acc / piv
        L[i, k] = piv
        for j in range(n):
            d[j] -= L[j, k] * L[j, k]
        used[i] = True
        r = k + 1
    return L[:, :r].copy()


# ---------------------------------------------------------------------------
# Brute-force enumeration of ldet C[S,S] over all |S| = s (lexicographic)
# ---------------------------------------------------------------------------


def _subset_logdets_numpy(C, s, A, b, sing_tol, chunk=20000):
    n = C.shape[0]
    out = []
    combos_iter = itertools.combinations(range(n), s)
    while True:
        block = list(itertools.islice(combos_iter, chunk))
        if not block:
            break
        idx = np.asarray(block, dtype=np.int64)
        M = C[idx[:, :, None], idx[:, None, :]].copy()
        vals = np.zeros(len(block))
        alive = np.ones(len(block), dtype=bool)
        # batched right-looking Cholesky, same arithmetic as the numba kernel
        for j in range(s):
            piv = M[:, j, j]
            bad = piv <= sing_tol
            alive &= ~bad
            piv = np.where(alive, piv, 1.0)
            root = np.sqrt(piv)
            vals += np.log(root)
            col = M[:, j + 1 :, j] / root[:, None]
            M[:, j + 1 :, j + 1 :] -= col[:, :, None] * col[:, None, :]
        vals = 2.0 * vals
        if A.shape[0] > 0:
            lhs = A[:, idx].sum(axis=2)  # m x batch
            alive &= np.all(lhs <= b[:, None] + 1e-9, axis=0)
        vals[~alive] = -np.inf
        out.append(vals)
    if not out:
        return np.empty(0)
    return np.concatenate(out)


@optional_njit(cache=True)
def _subset_logdets_numba(C, s, A, b, sing_tol):
    n = C.shape[0]
    m = A.shape[0]
    total = 1
    for i in range(s):
        total = total * (n - i) // (i + 1)
    out = np.empty(total)
    idx = np.arange(s)
    M = np.empty((s, s))
    for c in range(total):
        feasible = True
        for row in range(m):
            acc = 0.0
            for q in range(s):
                acc += A[row, idx[q]]
            if acc > b[row] + 1e-9:
                feasible = False
                break
        if feasible:
            for p in range(s):
                for q in range(s):
                    M[p, q] = C[idx[p], idx[q]]
            val = 0.0
            for j in range(s):
                piv = M[j, j]
                if piv <= sing_tol:
                    feasible = False
                    break
                root = math.sqrt(piv)
                val += math.log(root)
                for p in range(j + 1, s):
                    M[p, j] /= root
                for p in range(j + 1, s):
                    for q in range(j + 1, p + 1):
                        M[p, q] -= M[p, j] * M[q, j]
                        M[q, p] = M[p, q]
            out[c] = 2.0 * val if feasible else -np.inf
        else:
            out[c] = -np.inf
        i = s - 1
        while i >= 0 and idx[i] == n - s + i:
            i -= 1
        if i < 0:
            break
        idx[i] += 1
        for j in range(i + 1, s):
            idx[j] = idx[j - 1] + 1
    return out


# ---------------------------------------------------------------------------
# Interchange scores: ldet C[S - S[a] + j] for every (a, j)
# ---------------------------------------------------------------------------


def _swap_logdets_numpy(C, S, sing_tol):
    n = C.shape[0]
    s = S.shape[0]
    out = np.full((s, n), -np.inf)
    CSS = C[np.ix_(S, S)]
    sign, base = np.linalg.slogdet(CSS)
    if sign <= 0:
        return out
    Minv = np.linalg.inv(CSS)
    outside = np.ones(n, dtype=bool)
    outside[S] = False
    js = np.flatnonzero(outside)
    for a in range(s):
        keep = np.r_[0:a, a + 1 : s]
        maa = Minv[a, a]
        if maa <= 0:
            continue
        Mp = Minv[np.ix_(keep, keep)] - np.outer(Minv[keep, a], Minv[a, keep]) / maa
        Q = C[np.ix_(js, S[keep])]
        schur = C[js, js] - np.einsum("ij,jk,ik->i", Q, Mp, Q)
        vals = np.full(js.shape[0], -np.inf)
        pos = schur > sing_tol
        vals[pos] = base + math.log(maa) + np.log(schur[pos])
        out[a, js] = vals
    return out


@optional_njit(cache=True)
def _swap_logdets_numba(C, S, sing_tol):
    n = C.shape[0]
    s = S.shape[0]
    out = np.full((s, n), -np.inf)
    CSS = np.empty((s, s))
    for p in range(s):
        for q in range(s):
            CSS[p, q] = C[S[p], S[q]]
    sign, base = np.linalg.slogdet(CSS)
    if sign <= 0:
        return out
    Minv = np.linalg.inv(CSS)
    inS = np.zeros(n, dtype=np.bool_)
    for p in range(s):
        inS[S[p]] = True
    Mp = np.empty((s, s))
    for a in range(s):
        maa = Minv[a, a]
        if maa <= 0.0:
            continue
        for p in range(s):
            for q in range(s):
                Mp[p, q] = Minv[p, q] - Minv[p, a] * Minv[a, q] / maa
        head = base + math.log(maa)
        for j in range(n):
            if inS[j]:
                continue
            acc = C[j, j]
            for p in range(s):
                if p == a:
                    continue
                cp = C[j, S[p]]
                for q in range(s):
                    if q == a:
                        continue
                    acc -= cp * Mp[p, q] * C[j, S[q]]
            if acc > sing_tol:
                out[a, j] = head + math.log(acc)
    return out


# ---------------------------------------------------------------------------
# 1-d Newton search for h(t) = 0.5 * sum(log(1 + t mu))
# ---------------------------------------------------------------------------


def _logsum_newton_numpy(mu, tmax, tol=1e-14, max_iter=100):
    neg = mu < 0
    hi = tmax
    open_end = False
    if np.any(neg):
        tdom = float(np.min(-1.0 / mu[neg]))
        if tdom <= tmax:
            hi, open_end = tdom, True

    def d1(t):
        return 0.5 * float(np.sum(mu / (1.0 + t * mu)))

    if d1(0.0) <= 0.0:
        return 0.0, 0.0
    if not open_end and d1(hi) >= 0.0:
        return hi, 0.5 * float(np.sum(np.log1p(hi * mu)))
    lo, t = 0.0, 0.0
    for _ in range(max_iter):
        q = mu / (1.0 + t * mu)
        g = 0.5 * float(np.sum(q))
        if g > 0.0:
            lo = t
        else:
            hi = t
        if abs(g) <= tol * (1.0 + float(np.sum(np.abs(q)))) or hi - lo <= 1e-16 * (1.0 + hi):
            break
        h2 = -0.5 * float(np.sum(q * q))
        tn = t - g / h2
        if not lo < tn < hi:
            tn = 0.5 * (lo + hi)
        t = tn
    return t, 0.5 * float(np.sum(np.log1p(t * mu)))


@optional_njit(cache=True)
def _logsum_newton_numba(mu, tmax, tol=1e-14, max_iter=100):
    n = mu.shape[0]
    hi = tmax
    open_end = False
    for i in range(n):
        if mu[i] < 0.0 and -1.0 / mu[i] <= hi:
            hi = -1.0 / mu[i]
            open_end = True
    g0 = 0.0
    for i in range(n):
        g0 += mu[i]
    if g0 <= 0.0:
        return 0.0, 0.0
    if not open_end:
        gh = 0.0
        for i in range(n):
            gh += mu[i] / (1.0 + hi * mu[i])
        if gh >= 0.0:
            acc = 0.0
            for i in range(n):
                acc += math.log1p(hi * mu[i])
            return hi, 0.5 * acc
    lo = 0.0
    t = 0.0
    for _ in range(max_iter):
        g = 0.0
        h2 = 0.0
        qa = 0.0
        for i in range(n):
            q = mu[i] / (1.0 + t * mu[i])
            g += q
            h2 += q * q
            qa += abs(q)
        g *= 0.5
        if g > 0.0:
            lo = t
        else:
            hi = t
        if abs(g) <= tol * (1.0 + qa) or hi - lo <= 1e-16 * (1.0 + hi):
            break
        tn = t + g / (0.5 * h2)
        if not (lo < tn < hi):
            tn = 0.5 * (lo + hi)
        t = tn
    acc = 0.0
    for i in range(n):
        acc += math.log1p(t * mu[i])
    return t, 0.5 * acc


# ---------------------------------------------------------------------------
# Dense tableau simplex pivoting
# ---------------------------------------------------------------------------
# Status codes: 0 optimal, 1 unbounded, 2 iteration limit.


def _simplex_pivots_numpy(T, basis, ncols, max_iter, bland_after, piv_tol):
    rows = T.shape[0] - 1
    it = 0
    degenerate = 0
    bland = False
    while True:
        obj = T[-1, :ncols]
        if bland:
            cand = np.flatnonzero(obj < -piv_tol)
            if cand.size == 0:
                return it, 0
            col = int(cand[0])
        else:
            col = int(np.argmin(obj))
            if obj[col] >= -piv_tol:
                return it, 0
        colv = T[:rows, col]
        rhs = T[:rows, -1]
        pos = colv > piv_tol
        if not pos.any():
            return it, 1
        ratios = np.full(rows, np.inf)
        ratios[pos] = rhs[pos] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * (1 + abs(best)))
        if bland:
            row = int(ties[np.argmin(basis[ties])])
        else:
            row = int(ties[np.argmax(colv[ties])])
        if best <= 1e-12:
            degenerate += 1
            if degenerate > bland_after:
                bland = True
        else:
            degenerate = 0
        pv = T[row, col]
        T[row] /= pv
        cv = T[:, col].copy()
        cv[row] = 0.0
        T -= np.outer(cv, T[row])
        basis[row] = col
        it += 1
        if it > max_iter:
            return it, 2


@optional_njit(cache=True)
def _simplex_pivots_numba(T, basis, ncols, max_iter, bland_after, piv_tol):
    rows = T.shape[0] - 1
    width = T.shape[1]
    it = 0
    degenerate = 0
    bland = False
    cv = np.empty(rows + 1)
    while True:
        col = -1
        if bland:
            for j in range(ncols):
                if T[rows, j] < -piv_tol:
                    col = j
                    break
            if col < 0:
                return it, 0
        else:
            col = 0
            for j in range(1, ncols):
                if T[rows, j] < T[rows, col]:
                    col = j
            if T[rows, col] >= -piv_tol:
                return it, 0
        best = np.inf
        for i in range(rows):
            if T[i, col] > piv_tol:
                r = T[i, width - 1] / T[i, col]
                if r < best:
                    best = r
        if best == np.inf:
            return it, 1
        thr = best + 1e-12 * (1 + abs(best))
        row = -1
        for i in range(rows):
            if T[i, col] > piv_tol and T[i, width - 1] / T[i, col] <= thr:
                if row < 0:
                    row = i
                elif bland:
                    if basis[i] < basis[row]:
                        row = i
                elif T[i, col] > T[row, col]:
                    row = i
        if best <= 1e-12:
            degenerate += 1
            if degenerate > bland_after:
                bland = True
        else:
            degenerate = 0
        pv = T[row, col]
        for j in range(width):
            T[row, j] /= pv
        for i in range(rows + 1):
            cv[i] = T[i, col]
        cv[row] = 0.0
        for i in range(rows + 1):
            f = cv[i]
            if f != 0.0:
                for j in range(width):
                    T[i, j] -= f * T[row, j]
        basis[row] = col
        it += 1
        if it > max_iter:
            return it, 2


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    iota_scan = _iota_scan_numba
    phi_s = _phi_s_numba
    sorted_eigs = _sorted_eigs_numba
    gamma_line_search = _gamma_line_search_numba
    pivoted_cholesky = _pivoted_cholesky_numba
    subset_logdets = _subset_logdets_numba
    swap_logdets = _swap_logdets_numba
    logsum_newton = _logsum_newton_numba
    simplex_pivots = _simplex_pivots_numba
    mix_line_search = _mix_line_search_numba
else:
    iota_scan = _iota_scan_numpy
    phi_s = _phi_s_numpy
    sorted_eigs = _sorted_eigs_numpy
    gamma_line_search = _gamma_line_search_numpy
    pivoted_cholesky = _pivoted_cholesky_numpy
    subset_logdets = _subset_logdets_numpy
    swap_logdets = _swap_logdets_numpy
    logsum_newton = _logsum_newton_numpy
    simplex_pivots = _simplex_pivots_numpy
    mix_line_search = _mix_line_search_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"

__all__ = [
    "BACKEND",
    "NUMBA_INSTALLED",
    "gamma_line_search",
    "iota_scan",
    "logsum_newton",
    "mix_line_search",
    "phi_s",
    "pivoted_cholesky",
    "simplex_pivots",
    "sorted_eigs",
    "subset_logdets",
    "swap_logdets",
]
