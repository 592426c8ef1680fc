import numpy as np
import pytest

from zrplab.environment import RateFunction


def brute_series(psi: float, rate: RateFunction, n_terms: int = 1_000_000):
    """Independent series oracle: term-by-term sums of psi^k / (r(1)...r(k)).

    Deliberately ignorant of the closed-form tail used by the implementation.
    """
    ks = np.arange(1, n_terms + 1)
    ratios = psi / np.array([rate(int(k)) for k in range(1, rate.k_max + 2)])
    # ratio is constant beyond k_max
    full = np.full(n_terms, ratios[-1])
    full[: rate.k_max] = ratios[:-1][: rate.k_max]
    terms = np.cumprod(full)
    Z = 1.0 + float(np.sum(terms))
    S1 = float(np.sum(ks * terms))
    return Z, S1 / Z


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
