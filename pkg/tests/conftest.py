import numpy as np
import pytest

from trudinger.calculus import Exponents
from trudinger.problem import Ball, BoundaryDatum, CylinderProblem


def flat_problem(p, n, h=2.0, bounds=(1.0, 3.0), T=1.0, domain=None, n_samples=2000):
    """Constant datum h with prescribed (m, M); the fixture used by the parameter oracles."""
    dom = domain if domain is not None else Ball([0.0] * n, 1.0)
    datum = BoundaryDatum.from_space_time(lambda x, t: np.full(len(x), h), bounds)
    return CylinderProblem(dom, T, Exponents(p, n), datum, n_samples=n_samples)


def smooth_problem(p, n, T=1.0, domain=None, n_samples=20_000):
    dom = domain if domain is not None else Ball([0.0] * n, 1.0)
    datum = BoundaryDatum.from_space_time(
        lambda x, t: 2 + 0.5 * np.sin(x.sum(axis=1)) * np.cos(t), (1.5, 2.5))
    return CylinderProblem(dom, T, Exponents(p, n), datum, n_samples=n_samples)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
