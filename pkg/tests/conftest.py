import numpy as np
import pytest

from gamehedge import (
    MarketParams,
    make_step_model,
    build_stock_lattice,
    payoff_lattices,
    game_put,
)

BENCH = dict(r=0.06, kappa=0.2, T=1.0, z=100.0)


@pytest.fixture
def bench_params():
    return MarketParams(**BENCH)


@pytest.fixture
def bench_put():
    """At-the-money game put with a 2.0 cancellation surcharge."""
    return game_put(100.0, 2.0)


@pytest.fixture
def otm_put():
    """In-the-money game put (K=110); the cancellation clamp does not bind
    at the root, so rational cancellation is not immediate."""
    return game_put(110.0, 2.0)


def build_bundle(params, spec, n):
    """step, lattice, yhat, xhat for one instance."""
    step = make_step_model(params, n)
    lat = build_stock_lattice(step, params)
    yhat, xhat = payoff_lattices(spec, lat, step)
    return step, lat, yhat, xhat


def random_instance(rng):
    """A random market/payoff draw within the supported ranges."""
    params = MarketParams(
        r=float(rng.uniform(0.0, 0.1)),
        kappa=float(rng.uniform(0.05, 0.5)),
        T=float(rng.uniform(0.25, 2.0)),
        z=100.0,
    )
    strike = float(rng.uniform(70.0, 130.0))
    penalty = float(rng.uniform(0.0, 5.0))
    return params, game_put(strike, penalty)


def all_paths(n):
    """All 2**n up/down paths as lists of +/-1."""
    for bits in range(1 << n):
        yield [1 if (bits >> i) & 1 else -1 for i in range(n)]


def path_probability(path, p):
    prob = 1.0
    for s in path:
        prob *= p if s == 1 else (1.0 - p)
    return prob
