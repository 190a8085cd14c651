import numpy as np
import pytest

from hetprice import BlackScholes, European, Heston, PricingTask
from hetprice.mcengine import chunk_moments


def bs_european(strike=100.0, vol=0.2, kind="call", seed=42, task_id="bs_european", steps=1):
    return PricingTask(
        task_id,
        BlackScholes(spot=100.0, rate=0.05, volatility=vol),
        European(strike=strike, maturity=1.0, kind=kind),
        steps=steps,
        base_seed=seed,
    )


def heston_flat(xi=0.0, seed=42, task_id="heston", steps=16, rho=-0.7):
    return PricingTask(
        task_id,
        Heston(spot=100.0, rate=0.05, v0=0.04, kappa=2.0, theta=0.04, xi=xi, rho=rho),
        European(strike=100.0, maturity=1.0),
        steps=steps,
        base_seed=seed,
    )


@pytest.fixture
def bs_task():
    return bs_european()


@pytest.fixture(autouse=True)
def _fresh_cache():
    yield
    chunk_moments.cache_clear()


def random_instance(rng, P, T, setups=(0.0, 0.1, 1.0)):
    """Random ``(MetricModels, N)`` with log-uniform rates and demands."""
    from hetprice import MetricModels

    rate = 10 ** rng.uniform(5, 7, size=(P, T))
    setup = rng.choice(setups, size=(P, T))
    N = (10 ** rng.uniform(5, 7, size=T)).astype(np.int64)
    return MetricModels.from_arrays(setup, rate), N


def grid_cell_bound(models, N, grid_step=0.01):
    _, rate = models.arrays()
    return grid_step * float(np.max(N)) / float(rate.min())
