import pytest

from videstep import (
    TestEquationParams,
    make_mesh,
    test_equation,
    test_equation_exact,
)

# library symbols, not test cases, despite their names
TestEquationParams.__test__ = False
test_equation.__test__ = False
test_equation_exact.__test__ = False


@pytest.fixture
def oscillatory_params():
    # complex-discriminant branch: d = 1 - 8 < 0
    return TestEquationParams(lam=-1.0, gamma=-2.0)


@pytest.fixture
def oscillatory_problem(oscillatory_params):
    return test_equation(oscillatory_params)


@pytest.fixture
def stiff_params():
    return TestEquationParams(lam=-100.0, gamma=-200.0)


@pytest.fixture
def growing_params():
    # real-discriminant branch: d = 1 + 8 > 0
    return TestEquationParams(lam=1.0, gamma=2.0)


@pytest.fixture
def short_mesh():
    return make_mesh(0.0, 1.0, 0.1)
