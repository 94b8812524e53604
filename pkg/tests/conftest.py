import itertools

import numpy as np
import pytest

from cmesp.instance import Instance, random_instance


def enumerate_subsets(inst):
    """Plain ``slogdet`` enumeration, independent of the package's kernels."""
    best, best_S = -np.inf, None
    for S in itertools.combinations(range(inst.n), inst.s):
        x = np.zeros(inst.n)
        x[list(S)] = 1.0
        if inst.side is not None and np.any(inst.A @ x > inst.b + 1e-9):
            continue
        sign, ld = np.linalg.slogdet(inst.C[np.ix_(S, S)])
        if sign > 0 and ld > best:
            best, best_S = ld, S
    return best, best_S


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.fixture
def two_by_two():
    return Instance(np.array([[2.0, 1.0], [1.0, 2.0]]), 1)


@pytest.fixture(params=[(6, 3, 0), (7, 2, 1), (8, 4, 2)])
def small_instance(request):
    n, s, m = request.param
    return random_instance(n, s, seed=100 + n, m=m)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
