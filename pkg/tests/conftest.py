import numpy as np
from hypothesis import strategies as st

from cramer_metrics.distributions import DiscreteDist


@st.composite
def discrete_dists(draw, max_atoms=5, lo=-5, hi=5):
    """Small distributions on integer-valued supports with integer weights."""
    support = draw(st.lists(st.integers(lo, hi), min_size=1, max_size=max_atoms, unique=True))
    weights = draw(st.lists(st.integers(1, 9), min_size=len(support), max_size=len(support)))
    w = np.array(weights, dtype=float)
    return DiscreteDist(sorted(float(s) for s in support), w / w.sum())


def random_dist(rng, max_atoms=5, lo=-5, hi=5, integer=True):
    k = int(rng.integers(1, max_atoms + 1))
    if integer:
        support = rng.choice(np.arange(lo, hi + 1), size=k, replace=False).astype(float)
    else:
        support = rng.uniform(lo, hi, size=k)
    w = rng.uniform(0.1, 1.0, size=k)
    return DiscreteDist(np.sort(support), w / w.sum())


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
