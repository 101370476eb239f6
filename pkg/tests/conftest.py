"""Shared fixtures for the test suite."""

from pathlib import Path

import numpy as np
import pytest

import tbn_compiler
from tbn_compiler.core import generators
from tbn_compiler.core.factor import multiply_all, normalize

EXAMPLES = Path(tbn_compiler.__file__).parent / "examples"


@pytest.fixture
def examples_dir() -> Path:
    return EXAMPLES


@pytest.fixture
def two_slice():
    return generators.two_slice_model()


@pytest.fixture
def three_chains():
    return generators.three_chains()


@pytest.fixture
def ring():
    return generators.ring_model()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def feed(instance, evidence):
    """Post each slice of ``evidence`` and advance past all but the last."""
    for i, posted in enumerate(evidence):
        for obs, lik in posted.items():
            instance.post_observation(obs, lik)
        if i < len(evidence) - 1:
            instance.advance()


def joint_past(factors, order):
    """Normalized product of past factors, axes in ``order`` (node ids)."""
    product = normalize(multiply_all(factors))
    by_node = {v.node: v for v in product.vars}
    return product.transpose([by_node[n] for n in order]).values


@pytest.fixture
def stream():
    return feed


@pytest.fixture
def past_product():
    return joint_past
