import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_tt(shape, rank, rng):
    from ttcrit.tt import TTVector

    ranks = [1] + [rank] * (len(shape) - 1) + [1]
    return TTVector([rng.standard_normal((ranks[k], n, ranks[k + 1])) for k, n in enumerate(shape)])


def random_ttm(rows, cols, rank, rng):
    from ttcrit.tt import TTMatrix

    ranks = [1] + [rank] * (len(rows) - 1) + [1]
    return TTMatrix(
        [rng.standard_normal((ranks[k], m, n, ranks[k + 1])) for k, (m, n) in enumerate(zip(rows, cols))]
    )


# acceptance criterion -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
