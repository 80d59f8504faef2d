import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from backstep.coefficients import CoefficientFamily, ProblemSpec
from backstep.kernel import GoursatProblem, picard_solve, solve_inverse_kernel

settings.register_profile(
    "ci", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ci")


def zero_spec(lambda0=0.0):
    """Null plant: c = 0, f = 0 (kernel identically zero when lambda0 = 0)."""
    return ProblemSpec(CoefficientFamily(), lambda0=lambda0)


@pytest.fixture(scope="session")
def spec_rx2():
    """The closed-form family: f = 0, c1(x) = 2 x^2, lambda0 = 10."""
    return ProblemSpec(CoefficientFamily(c1_poly=(0.0, 0.0, 2.0)), lambda0=10.0)


@pytest.fixture(scope="session")
def kernels_rx2_101(spec_rx2):
    k = picard_solve(GoursatProblem.direct(spec_rx2), n_xi=101, tol=1e-11, max_iter=80)
    l = solve_inverse_kernel(spec_rx2, n_xi=101, tol=1e-11, max_iter=80)
    return k, l


@pytest.fixture(scope="session")
def kernels_rx2_201(spec_rx2):
    k = picard_solve(GoursatProblem.direct(spec_rx2), n_xi=201, tol=1e-11, max_iter=80)
    l = solve_inverse_kernel(spec_rx2, n_xi=201, tol=1e-11, max_iter=80)
    return k, l


@pytest.fixture(scope="session")
def null_kernel():
    """k = 0 grid from the null problem (useful as the identity transform)."""
    return picard_solve(GoursatProblem.direct(zero_spec()), n_xi=65, tol=1e-12, max_iter=5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
