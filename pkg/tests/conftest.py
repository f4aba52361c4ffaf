import numpy as np
import pytest

from quarterplane.oracle import truncated_stationary
from quarterplane.solver import solve_model
from quarterplane.templates import build_template

# nearest-neighbour models without the (-1,-1) jump that the analytic solver handles
ORACLE_MODELS = {
    "ra-example": ("ra-example", {"lam": 0.1, "a": 0.6}),
    "dgps": ("policy", {"policy": "DGPS", "lam1": 0.25, "lam2": 0.2, "mu1": 0.9, "mu2": 0.8,
                        "N1": 3, "N2": 2, "beta": 0.4}),
    "ra-geometric": ("ra-geometric", {"lam1": 0.3, "lam2": 0.4, "r1": 0.5, "r2": 0.6, "N1": 2, "N2": 3}),
    "bernoulli": ("policy", {"policy": "Bernoulli", "lam1": 0.2, "lam2": 0.25, "mu1": 0.8, "mu2": 0.7}),
}

_cache = {}


def model(name):
    t, p = ORACLE_MODELS[name]
    return build_template(t, p)


def solved(name):
    if ("bvp", name) not in _cache:
        _cache["bvp", name] = solve_model(model(name))
    return _cache["bvp", name]


def truncated(name):
    if ("trunc", name) not in _cache:
        _cache["trunc", name] = truncated_stationary(model(name))
    return _cache["trunc", name]


@pytest.fixture(scope="session")
def ra_spec():
    return model("ra-example")


@pytest.fixture(scope="session")
def ra_solution():
    return solved("ra-example")


@pytest.fixture(scope="session")
def ra_truncated():
    return truncated("ra-example")


def random_cell(rng, support=(-1, 0, 1), zero_sw=True):
    """Random S_d cell on the given jump support (optionally without the
    (-1,-1) jump)."""
    cell = np.zeros((4, 4))
    for i in support:
        for j in support:
            if zero_sw and (i, j) == (-1, -1):
                continue
            cell[i + 2, j + 2] = rng.random()
    return cell / cell.sum()


def random_ergodic_cell(rng, max_tries=1000):
    """Random nearest-neighbour S_d cell with both corner drifts negative."""
    for _ in range(max_tries):
        c = random_cell(rng)
        jj = np.array([-2, -1, 0, 1])
        ex = jj @ c.sum(axis=1)
        ey = c.sum(axis=0) @ jj
        if ex < -0.02 and ey < -0.02:
            return c
    raise RuntimeError("no ergodic draw")
