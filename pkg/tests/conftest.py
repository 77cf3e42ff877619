"""
Shared fixtures for the mbpre test suite
"""

import math

import numpy as np
import pytest

from mbpre.environment import (
    EnvironmentComponent,
    OffspringLaw,
    build_preset,
    finite_mixture,
    make_fractional_linear,
    scalar_symmetric,
)
from mbpre.runner import RandomStreams, ReplicaExecutor

LN2 = math.log(2.0)


@pytest.fixture
def lattice():
    """±ln 2 の格子歩行を与える p = 1 のモデル"""
    return scalar_symmetric(LN2)


@pytest.fixture
def geometric_component():
    """f(s) = 1/(2-s)"""
    laws, form = make_fractional_linear(1, [0.5], [0.5], [[1.0]])
    return EnvironmentComponent.from_laws(laws, closed_form=form)


@pytest.fixture
def geometric_model():
    return build_preset("critical_geometric")


@pytest.fixture
def doubling_component():
    """f(s) = s^2"""
    return EnvironmentComponent.from_laws([OffspringLaw.deterministic([2])])


@pytest.fixture
def doubling_model(doubling_component):
    return finite_mixture([doubling_component], [1.0])


@pytest.fixture
def pair_component():
    """全タイプが確率1で (1, 1) を産む p = 2 の成分"""
    law = OffspringLaw.deterministic([1, 1])
    return EnvironmentComponent.from_laws([law, law])


@pytest.fixture
def identity_model():
    laws = [OffspringLaw.deterministic([1, 0]), OffspringLaw.deterministic([0, 1])]
    return finite_mixture([EnvironmentComponent.from_laws(laws)], [1.0])


@pytest.fixture
def two_type_critical():
    return build_preset("two_type_critical")


@pytest.fixture
def executor():
    return ReplicaExecutor(num_workers=1, chunk_size=250)


@pytest.fixture
def streams():
    return RandomStreams(12345, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
