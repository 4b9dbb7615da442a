import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from homog3.models import Matrix2

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

entry = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False, allow_infinity=False)


@st.composite
def matrices(draw, elements=entry):
    return Matrix2(*(draw(elements) for _ in range(4)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_matrix(rng, scale=2.0):
    return Matrix2(*rng.uniform(-scale, scale, 4))


# acceptance criteria write one line each here; printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
