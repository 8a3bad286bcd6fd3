"""Complex linear algebra primitives, Weyl operators and generalized Bell states for bipartite state sets.

A bipartite pure state is stored as its dA x dB coefficient matrix: entry [a, b] is the amplitude of |a>|b>.
A `StateSet` is a base state plus N local unitaries acting on the party that measures second in the
one-way protocol under test (Bob for AtoB, Alice for BtoA).
"""

import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property, lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy.stats import unitary_group

from core.config import settings

logger = logging.getLogger(__name__)

ComplexVector = NDArray[np.complex128]
ComplexOperator = NDArray[np.complex128]


class InvalidWeylIndexError(ValueError):
    """Weyl index out of range: expected 0 <= n, m < d and d >= 1."""


class DimensionMismatchError(ValueError):
    """Operator or state dimensions do not match."""


class NotUnitaryError(ValueError):
    """Operator fails the unitarity check ||U†U - I||_max <= EPS_UNIT."""


class NotNormalizedError(ValueError):
    """State is not normalized within EPS_NORM."""


class NonOrthogonalStatesError(ValueError):
    """The derived states (I⊗U_i)|base> are not pairwise orthogonal."""


class NotMaximallyEntangledError(ValueError):
    """The base state is not maximally entangled."""


class Direction(StrEnum):
    """Order of the one-way protocol: who measures first."""

    A_TO_B = "AtoB"
    B_TO_A = "BtoA"

    def flipped(self) -> "Direction":
        return Direction.B_TO_A if self is Direction.A_TO_B else Direction.A_TO_B


class Side(StrEnum):
    A = "A"
    B = "B"


@dataclass(frozen=True, order=True)
class WeylIndex:
    """Index (n, m) of the Weyl operator U_nm on C^d: U_nm|j> = w^(jn)|j+m mod d>."""

    n: int
    m: int
    d: int

    def __post_init__(self) -> None:
        if self.d < 1 or not (0 <= self.n < self.d and 0 <= self.m < self.d):
            raise InvalidWeylIndexError(f"invalid Weyl index (n={self.n}, m={self.m}, d={self.d})")

    def __str__(self) -> str:
        return f"{self.n}:{self.m}"


@lru_cache(maxsize=None)
def roots_of_unity(d: int) -> NDArray[np.complex128]:
    """Returns w^r for r = 0..d-1 with w = exp(2πi/d), one exponential per residue.

    Phases are always looked up by an exponent reduced mod d, so equal phases are bit-identical.
    """
    roots = np.exp(2j * np.pi * np.arange(d) / d)
    roots[0] = 1.0
    roots.setflags(write=False)
    return roots


def make_weyl(idx: WeylIndex) -> ComplexOperator:
    """Builds U_nm with U[j+m mod d, j] = w^(jn) and zeros elsewhere."""
    d = idx.d
    j = np.arange(d)
    op = np.zeros((d, d), dtype=np.complex128)
    op[(j + idx.m) % d, j] = roots_of_unity(d)[(j * idx.n) % d]
    return op


def transpose_weyl_index(idx: WeylIndex) -> WeylIndex:
    """Index of U_nm^T, which equals U_{n,-m} up to a global phase."""
    return WeylIndex(idx.n, (-idx.m) % idx.d, idx.d)


def weyl_product_index(a: WeylIndex, b: WeylIndex) -> WeylIndex:
    """Index of U_a†U_b, which equals U_{n_b-n_a, m_b-m_a} up to a global phase."""
    if a.d != b.d:
        raise DimensionMismatchError(f"Weyl indices of different dimension: {a.d} vs {b.d}")
    return WeylIndex((b.n - a.n) % a.d, (b.m - a.m) % a.d, a.d)


def is_unitary(op: ComplexOperator, tol: float = settings.EPS_UNIT) -> bool:
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        return False
    defect = op.conj().T @ op - np.eye(op.shape[0])
    return bool(np.max(np.abs(defect)) <= tol)


def is_normalized(vec: ComplexVector, tol: float = settings.EPS_NORM) -> bool:
    return bool(abs(np.vdot(vec, vec).real - 1.0) <= tol)


def normalize(vec: ComplexVector) -> ComplexVector:
    return vec / np.linalg.norm(vec)


def gauge_fix(vec: ComplexVector) -> ComplexVector:
    """Rotates the global phase so the first component of largest modulus is real and nonnegative."""
    pivot = int(np.argmax(np.abs(vec)))
    if vec[pivot] == 0:
        return vec.copy()
    fixed = vec * (np.abs(vec[pivot]) / vec[pivot])
    fixed[pivot] = abs(vec[pivot])
    return fixed


def random_unitary(d: int, rng: np.random.Generator) -> ComplexOperator:
    """Haar-random unitary: a matrix of standard complex Gaussians, orthonormalized."""
    return np.atleast_2d(unitary_group.rvs(d, random_state=rng)).astype(np.complex128)


def random_state_vector(d: int, rng: np.random.Generator) -> ComplexVector:
    """Uniformly random point on the unit sphere of C^d."""
    return normalize(rng.standard_normal(d) + 1j * rng.standard_normal(d))


@dataclass(frozen=True, eq=False)
class BipartiteState:
    """Pure state of C^dA ⊗ C^dB stored as its coefficient matrix."""

    amplitudes: NDArray[np.complex128]

    def __post_init__(self) -> None:
        amplitudes = np.array(self.amplitudes, dtype=np.complex128)
        if amplitudes.ndim != 2:
            raise DimensionMismatchError(f"amplitudes must be a dA x dB matrix, got shape {amplitudes.shape}")
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1.0) > settings.EPS_NORM:
            raise NotNormalizedError(f"state has norm {norm:.12g}")
        amplitudes.setflags(write=False)
        object.__setattr__(self, "amplitudes", amplitudes)

    @property
    def dA(self) -> int:  # noqa: N802
        return self.amplitudes.shape[0]

    @property
    def dB(self) -> int:  # noqa: N802
        return self.amplitudes.shape[1]


def make_generalized_bell(idx: WeylIndex) -> BipartiteState:
    """|Psi_nm> = d^(-1/2) sum_j w^(jn) |j>|j+m mod d>."""
    d = idx.d
    j = np.arange(d)
    amplitudes = np.zeros((d, d), dtype=np.complex128)
    amplitudes[j, (j + idx.m) % d] = roots_of_unity(d)[(j * idx.n) % d] / np.sqrt(d)
    return BipartiteState(amplitudes)


def phi_plus(d: int) -> BipartiteState:
    """The standard maximally entangled state |Phi+> = |Psi_00>."""
    return make_generalized_bell(WeylIndex(0, 0, d))


def apply_local_unitary(op: ComplexOperator, state: BipartiteState, side: Side) -> BipartiteState:
    """Applies U to one party: (I⊗U)|s> for side B, (U⊗I)|s> for side A."""
    dim = state.dB if side is Side.B else state.dA
    if op.shape != (dim, dim):
        raise DimensionMismatchError(f"operator of shape {op.shape} cannot act on side {side} of dimension {dim}")
    if side is Side.B:
        return BipartiteState(state.amplitudes @ op.T)
    return BipartiteState(op @ state.amplitudes)


def inner_product(s1: BipartiteState, s2: BipartiteState) -> complex:
    """<s1|s2>."""
    if s1.amplitudes.shape != s2.amplitudes.shape:
        raise DimensionMismatchError(f"states of shape {s1.amplitudes.shape} and {s2.amplitudes.shape}")
    return complex(np.vdot(s1.amplitudes, s2.amplitudes))


def is_maximally_entangled(state: BipartiteState) -> bool:
    """True iff dA = dB = d and the reduced state amp·amp† equals I/d within EPS_ORTH."""
    if state.dA != state.dB:
        return False
    d = state.dA
    reduced = state.amplitudes @ state.amplitudes.conj().T
    return bool(np.max(np.abs(reduced - np.eye(d) / d)) <= settings.EPS_ORTH)


@dataclass(frozen=True, eq=False)
class StateSet:
    """N states (I⊗U_i)|base> for AtoB, or (U_i⊗I)|base> for BtoA.

    The unitaries always act on the party that measures second, so a witness vector lives in that
    party's space. `weyl_indices` records the Weyl labels when the set was built from them.
    """

    base: BipartiteState
    unitaries: tuple[ComplexOperator, ...]
    direction: Direction = Direction.A_TO_B
    weyl_indices: tuple[WeylIndex, ...] | None = field(default=None)

    def __post_init__(self) -> None:
        unitaries = tuple(np.array(u, dtype=np.complex128) for u in self.unitaries)
        if not unitaries:
            raise DimensionMismatchError("a state set needs at least one unitary")
        dim = self.receiver_dim
        for k, op in enumerate(unitaries):
            if op.shape != (dim, dim):
                raise DimensionMismatchError(f"unitary {k} has shape {op.shape}, expected ({dim}, {dim})")
            if not is_unitary(op):
                raise NotUnitaryError(f"unitary {k} fails the unitarity check")
            op.setflags(write=False)
        object.__setattr__(self, "unitaries", unitaries)
        if self.weyl_indices is not None and len(self.weyl_indices) != len(unitaries):
            raise DimensionMismatchError("weyl_indices must label every unitary")

        states = self.states
        for k, l in itertools.combinations(range(len(states)), 2):
            overlap = abs(inner_product(states[k], states[l]))
            if overlap > settings.EPS_ORTH:
                raise NonOrthogonalStatesError(f"states {k} and {l} overlap by {overlap:.3e}")

    @property
    def dA(self) -> int:  # noqa: N802
        return self.base.dA

    @property
    def dB(self) -> int:  # noqa: N802
        return self.base.dB

    @property
    def n_states(self) -> int:
        return len(self.unitaries)

    @property
    def receiver_side(self) -> Side:
        return Side.B if self.direction is Direction.A_TO_B else Side.A

    @property
    def receiver_dim(self) -> int:
        return self.dB if self.direction is Direction.A_TO_B else self.dA

    @cached_property
    def states(self) -> tuple[BipartiteState, ...]:
        return tuple(apply_local_unitary(op, self.base, self.receiver_side) for op in self.unitaries)


def make_weyl_state_set(
    indices: Sequence[WeylIndex], direction: Direction = Direction.A_TO_B
) -> StateSet:
    """Generalized Bell states (I⊗U_nm)|Phi+> for the given Weyl indices."""
    if not indices:
        raise DimensionMismatchError("at least one Weyl index is required")
    d = indices[0].d
    if any(idx.d != d for idx in indices):
        raise DimensionMismatchError("all Weyl indices must share the same d")
    return StateSet(
        base=phi_plus(d),
        unitaries=tuple(make_weyl(idx) for idx in indices),
        direction=direction,
        weyl_indices=tuple(indices),
    )


def transpose_set(ss: StateSet) -> StateSet:
    """Re-expresses the set with the unitaries on the other party, base |Phi+>.

    Uses (I⊗U)|Phi+> = (U^T⊗I)|Phi+>. A maximally entangled base (I⊗W)|Phi+> is absorbed into the
    unitaries first, so V_k = (U_k W)^T; for base |Phi+> this is V_k = U_k^T.
    """
    if ss.dA != ss.dB:
        raise DimensionMismatchError(f"transpose_set needs dA = dB, got {ss.dA} and {ss.dB}")
    if not is_maximally_entangled(ss.base):
        raise NotMaximallyEntangledError("transpose_set needs a maximally entangled base state")
    d = ss.dA
    standard = phi_plus(d)
    if np.allclose(ss.base.amplitudes, standard.amplitudes, rtol=0, atol=settings.EPS_NORM):
        frame = np.eye(d, dtype=np.complex128)
        weyl_indices = (
            tuple(transpose_weyl_index(idx) for idx in ss.weyl_indices) if ss.weyl_indices is not None else None
        )
    else:
        # base = (I⊗W)|Phi+> for AtoB, (W⊗I)|Phi+> for BtoA
        frame = np.sqrt(d) * (ss.base.amplitudes.T if ss.receiver_side is Side.B else ss.base.amplitudes)
        weyl_indices = None
    logger.debug("transpose_set: %d unitaries moved off side %s", ss.n_states, ss.receiver_side)
    return StateSet(
        base=standard,
        unitaries=tuple((op @ frame).T for op in ss.unitaries),
        direction=ss.direction.flipped(),
        weyl_indices=weyl_indices,
    )


def commutation_defect(ss: StateSet) -> float:
    """max over (k, l) of ||U_k†U_l - U_l U_k†||_max; zero means the AtoB/BtoA symmetry remark applies."""
    defect = 0.0
    for u_k, u_l in itertools.product(ss.unitaries, repeat=2):
        u_k_dag = u_k.conj().T
        defect = max(defect, float(np.max(np.abs(u_k_dag @ u_l - u_l @ u_k_dag))))
    return defect
