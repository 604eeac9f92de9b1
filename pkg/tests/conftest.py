import math

import numpy as np
import pytest

from hypfill.filling import FillingParams, build_filling
from hypfill.metric import from_points, scale_stats

A, TAU = 0.5, 4.0
EPS = -math.log(A)


def cloud(n, seed, sep=0.05):
    """Seeded points in the unit square with pairwise separation >= sep."""
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < n:
        p = rng.random(2)
        if all(math.hypot(*(p - q)) >= sep for q in pts):
            pts.append(p)
    return np.array(pts)


def space(n, seed=7, **kw):
    return from_points([f"z{i}" for i in range(n)], cloud(n, seed), **kw)


def filling(M, extra_top=0, extra_bottom=0, **kw):
    st = scale_stats(M, A)
    p = FillingParams(A, TAU, st.suggested_n_min - extra_bottom, st.suggested_n_max + extra_top, **kw)
    return build_filling(M, p)


@pytest.fixture(scope="session")
def Z10():
    return space(10, seed=3)


@pytest.fixture(scope="session")
def Z15():
    return space(15, seed=7)


@pytest.fixture(scope="session")
def Z20():
    return space(20, seed=7)


@pytest.fixture(scope="session")
def G10(Z10):
    return filling(Z10)


@pytest.fixture(scope="session")
def G15(Z15):
    return filling(Z15)


@pytest.fixture(scope="session")
def G20(Z20):
    return filling(Z20)


# one line per acceptance criterion, filled by test_acceptance and echoed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
