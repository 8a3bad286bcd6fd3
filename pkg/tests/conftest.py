from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pytest
from core.config import settings
from core.states import StateSet, WeylIndex, make_weyl_state_set

EXAMPLE1 = [(0, 0), (1, 1), (3, 2), (3, 1)]
EXAMPLE2 = [(0, 0), (0, 1), (3, 1), (2, 2)]
EXAMPLE3 = [(0, 0), (0, 1), (4, 1), (1, 2), (3, 3)]
# d=8: on support {0, 2, 5} the shift-0 points w^(2j) sit on a half-plane boundary with the origin on its edge
BOUNDARY_D8 = [(0, 0), (0, 1), (1, 6), (1, 7), (2, 0), (3, 7), (4, 2), (5, 4)]


def weyl_indices(d: int, pairs: Sequence[tuple[int, int]]) -> tuple[WeylIndex, ...]:
    """(n, m) pairs to Weyl indices in dimension d."""
    return tuple(WeylIndex(n, m, d) for n, m in pairs)


def weyl_set(d: int, pairs: Sequence[tuple[int, int]]) -> StateSet:
    return make_weyl_state_set(weyl_indices(d, pairs))


@pytest.fixture
def state_sets_dir() -> Path:
    return settings.STATE_SETS_DIR


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def bell_pair() -> StateSet:
    return weyl_set(2, [(0, 0), (0, 1)])


@pytest.fixture
def pure_shifts() -> StateSet:
    return weyl_set(4, [(0, 0), (0, 1), (0, 2), (0, 3)])


@pytest.fixture
def example1() -> StateSet:
    return weyl_set(4, EXAMPLE1)


@pytest.fixture
def example2() -> StateSet:
    return weyl_set(5, EXAMPLE2)


@pytest.fixture
def example3() -> StateSet:
    return weyl_set(6, EXAMPLE3)
