import sys

import numpy as np
import pytest

from convex_margins.ensemble import ConvexEnsemble, Dataset, Stump, normalize


def make_ensemble(weights, stumps, mode="conv"):
    return ConvexEnsemble(tuple(zip(weights, stumps)), mode=mode)


def random_conv_ensemble(rng, T, p=2, n_thresholds=20):
    """Normalized conv ensemble of T distinct random stumps on [0, 1]^p features."""
    seen = set()
    stumps = []
    while len(stumps) < T:
        s = Stump(int(rng.integers(p)), float(rng.integers(n_thresholds)) / n_thresholds + 0.025,
                  int(rng.choice([-1, 1])))
        if s not in seen:
            seen.add(s)
            stumps.append(s)
    w = rng.random(T) + 1e-3
    return normalize(make_ensemble(w / w.sum(), stumps))


def two_group_fixture(n=40):
    """Two groups of duplicated stumps with opposite outputs on every row.

    Features are ``x`` in (0, 1); group A is ``+1`` above 1/2 and group B is
    ``-1`` above 1/2.  Duplicates are the same stump listed twice, which
    normalize would merge, so groups are built from stumps with equal
    profiles but distinct thresholds.
    """
    x = (np.arange(n) + 0.5) / n
    X = np.column_stack([x, x])
    y = np.where(x > 0.5, 1.0, -1.0)
    data = Dataset(X, y)
    # Thresholds between the same pair of consecutive sample values give equal profiles.
    mid = 0.5
    eps = 0.1 / n
    A = [Stump(0, mid - eps, 1), Stump(0, mid, 1), Stump(1, mid + eps / 2, 1)]
    B = [Stump(0, mid - eps, -1), Stump(1, mid, -1), Stump(1, mid + eps / 2, -1)]
    w = [0.25, 0.2, 0.15, 0.2, 0.12, 0.08]
    f = normalize(make_ensemble(w, A + B))
    return data, f, A, B


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def four_points():
    return Dataset(np.array([[1.0], [2.0], [3.0], [4.0]]), np.array([-1, -1, 1, 1]))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
