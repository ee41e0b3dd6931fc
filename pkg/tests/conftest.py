import numpy as np
import pytest

from jflow import problems as P


@pytest.fixture(scope="session")
def robin_small():
    # 5x5 grid keeps checker-style tests fast
    return P.build_robin(P.grid(5, 5, 0.25), 2.0, P.ScalarLaw(g=P.g_arctan(0.5), beta=P.beta_linear(1.0)))


@pytest.fixture(scope="session")
def robin_small_p3():
    return P.build_robin(P.grid(5, 5, 0.25), 3.0, P.ScalarLaw(g=P.g_arctan(0.5), beta=P.beta_linear(1.0)))


@pytest.fixture(scope="session")
def dtn_chain16():
    return P.build_dtn(P.chain(16, 1.0 / 15.0), 2.0)


@pytest.fixture(scope="session")
def coupled_small():
    # 10-node chain: 8 interior, central 4 observed
    return P.build_coupled(P.chain(10, 0.2), list(range(3, 7)), 2.0)


def weighted_norm(space, u):
    return float(np.sqrt(np.sum(space.weights * np.asarray(u) ** 2)))
