import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

settings.register_profile(
    "repo",
    max_examples=60,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def random_spd(rng, n, size=(), cond=10.0):
    """Random positive-definite matrices with moderate conditioning."""
    x = rng.standard_normal(size + (n, n))
    q, _ = np.linalg.qr(x)
    w = np.exp(rng.uniform(0.0, np.log(cond), size + (n,)))
    return np.einsum("...ij,...j,...kj->...ik", q, w, q)


def random_sym(rng, n, size=(), scale=1.0):
    x = rng.standard_normal(size + (n, n)) * scale
    return 0.5 * (x + np.swapaxes(x, -1, -2))


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


dims = st.integers(min_value=1, max_value=3)


@st.composite
def spd_matrices(draw, n=None, cond=1e3):
    """Hypothesis strategy for positive-definite matrices."""
    n = draw(dims) if n is None else n
    seed = draw(st.integers(0, 2**32 - 1))
    return random_spd(np.random.default_rng(seed), n, cond=cond)


@st.composite
def sym_matrices(draw, n, scale=1.0):
    entries = draw(
        hnp.arrays(np.float64, (n, n), elements=st.floats(-scale, scale, allow_nan=False))
    )
    return 0.5 * (entries + entries.T)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
