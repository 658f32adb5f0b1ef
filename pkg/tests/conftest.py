import pytest

from lurkdim.dimensions import DimMatrix, DimVector

PIPE_DIMS = {
    "rho_F": [1, -3, 0],
    "U_F": [0, 1, -1],
    "d_P": [0, 1, 0],
    "mu_F": [1, -1, -1],
    "eps_P": [0, 1, 0],
}


@pytest.fixture
def pipe_matrix():
    return DimMatrix.from_dict(PIPE_DIMS)


@pytest.fixture
def pressure():
    return DimVector((1, -1, -2))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
