import numpy as np
import pytest

from katolab import lattice, operator, weights


def build_op(dim, m, field="identity", weight="constant", wparams=None, fparams=None):
    g = lattice.make_grid(dim, m)
    w = weights.make_weight(g, weight, **(wparams or {}))
    return operator.assemble(operator.make_field(g, w, field, **(fparams or {})))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(2024))


@pytest.fixture(scope="session")
def lap64():
    return build_op(1, 6)


@pytest.fixture(scope="session")
def sym64():
    return build_op(1, 6, "real_symmetric", "power", {"a": 0.5})


@pytest.fixture(scope="session")
def cplx64():
    return build_op(1, 6, "complex_perturbation", "power", {"a": 0.5}, {"kappa": 0.3})


@pytest.fixture(scope="session")
def cplx2d():
    return build_op(2, 4, "complex_perturbation", "power", {"a": 0.5}, {"kappa": 0.3})


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
