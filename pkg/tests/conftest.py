"""Shared fixtures: reference models and a naive scanner."""

import numpy as np
import pytest

from hitrev.model import cyclic_chain, iid_uniform, random_model, reversible_chain, symmetric_chain


@pytest.fixture
def cyclic():
    return cyclic_chain(0.5, 0.25)


@pytest.fixture
def reversible():
    return reversible_chain(3, seed=0)


@pytest.fixture
def symmetric():
    return symmetric_chain(3, seed=0)


@pytest.fixture
def iid2():
    return iid_uniform(2)


@pytest.fixture
def second_order():
    return random_model(2, 2, seed=0)


@pytest.fixture(params=[(2, 1, 1), (3, 1, 2), (2, 2, 3), (3, 2, 4)], ids=lambda p: f"m{p[0]}r{p[1]}s{p[2]}")
def random_chain(request):
    m, order, seed = request.param
    return random_model(m, order, seed=seed)


def naive_hit(symbols, word, cap):
    """First shift 1 <= k <= cap where ``word`` sits at k..k+n-1, else None."""
    symbols = list(np.asarray(symbols).tolist())
    word = list(np.asarray(word).tolist())
    n = len(word)
    for k in range(1, cap + 1):
        if symbols[k:k + n] == word:
            return k
    return None


@pytest.fixture
def naive_scanner():
    return naive_hit
