"""Projective one-way protocols: the first party measures and announces m, the second measures in a basis picked by m.

With a witness basis {φ_m} on the second party's space, the first party measures {conj(φ_m)} and the second
party measures {U_i φ_m}; outcome i names state i. When N < d the second measurement is completed by the
projector onto the orthogonal complement, whose outcome is labeled FAILURE_LABEL.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pandas as pd
from core.config import settings
from core.states import (
    ComplexVector,
    DimensionMismatchError,
    Side,
    StateSet,
    phi_plus,
)
from numpy.typing import NDArray
from scipy.linalg import null_space
from witness_analysis.solver import WitnessBasisReport

logger = logging.getLogger(__name__)

FAILURE_LABEL = -1

# Probabilities below this are treated as exact zeros when sampling.
_SAMPLING_FLOOR = 1e-15

JOINT_COLUMNS = ["state", "first_outcome", "second_outcome", "label", "probability"]


class IncompleteBasisError(ValueError):
    """A protocol needs a complete witness basis: d orthonormal witnesses on the measuring party's space."""


class UnsupportedBaseStateError(ValueError):
    """Protocols are only built for the base state |Phi+>."""


class InvalidProtocolError(ValueError):
    """Measurement vectors are not orthonormal, or labels do not match the outcomes."""


class InvalidTrialCountError(ValueError):
    """trials must be at least 1."""


def _is_orthonormal(rows: NDArray[np.complex128]) -> bool:
    gram = rows.conj() @ rows.T
    return bool(np.max(np.abs(gram - np.eye(len(rows))), initial=0.0) <= settings.EPS_ORTH)


@dataclass(frozen=True, eq=False)
class OneWayProtocol:
    """First-party basis (rows), one second-party basis per first outcome (rows) and their labels.

    `first_party` is A for an AtoB protocol and B for BtoA.
    """

    first_party: Side
    first_basis: NDArray[np.complex128]
    second_bases: tuple[NDArray[np.complex128], ...]
    labels: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not _is_orthonormal(self.first_basis):
            raise InvalidProtocolError("first-party basis is not orthonormal")
        if len(self.second_bases) != len(self.first_basis) or len(self.labels) != len(self.first_basis):
            raise InvalidProtocolError("need one second-party basis and one label list per first-party outcome")
        if len({len(vectors) for vectors in self.second_bases}) > 1:
            raise InvalidProtocolError("every first-party outcome needs the same number of second-party vectors")
        for m, (vectors, labels) in enumerate(zip(self.second_bases, self.labels, strict=True)):
            if not _is_orthonormal(vectors):
                raise InvalidProtocolError(f"second-party vectors for outcome {m} are not orthonormal")
            if len(labels) != len(vectors):
                raise InvalidProtocolError(f"outcome {m}: {len(vectors)} vectors but {len(labels)} labels")

    @property
    def second_party(self) -> Side:
        return Side.B if self.first_party is Side.A else Side.A

    @cached_property
    def rest_vectors(self) -> tuple[NDArray[np.complex128], ...]:
        """Orthonormal rows spanning the complement of each second-party basis (empty when it is complete)."""
        return tuple(null_space(vectors.conj()).T for vectors in self.second_bases)


@dataclass(frozen=True, eq=False)
class ProtocolTranscript:
    joint: pd.DataFrame
    success_probability: float
    worst_case_success: float
    per_state_success: tuple[float, ...]


def build_protocol(ss: StateSet, basis: WitnessBasisReport) -> OneWayProtocol:
    """The protocol a complete witness basis gives.

    :param ss: the state set with base |Phi+>; the party holding the unitaries measures second.
    :type ss: StateSet
    :param basis: a witness basis for `ss` (from find_witness_basis on the same set).
    :type basis: WitnessBasisReport
    :raises UnsupportedBaseStateError: base is not |Phi+>.
    :raises IncompleteBasisError: fewer than d witnesses, or a vector that is not a witness.
    :return: first party measures conj(φ_m), second party measures {U_i φ_m} labeled by i.
    :rtype: OneWayProtocol
    """
    if ss.dA != ss.dB or not np.allclose(
        ss.base.amplitudes, phi_plus(ss.dA).amplitudes, rtol=0, atol=settings.EPS_NORM
    ):
        raise UnsupportedBaseStateError("build_protocol needs base |Phi+>; other base states are not supported")
    d = ss.receiver_dim
    if basis.completeness != d or len(basis.vectors) != d:
        raise IncompleteBasisError(f"witness basis has {basis.completeness} of {d} vectors")

    phis = np.array(basis.vectors, dtype=np.complex128)
    second_bases = []
    for m, phi in enumerate(phis):
        vectors = np.array([op @ phi for op in ss.unitaries])
        if not _is_orthonormal(vectors):
            raise IncompleteBasisError(f"basis vector {m} is not a witness: {{U_i φ_{m}}} is not orthonormal")
        second_bases.append(vectors)
    labels = tuple(tuple(range(ss.n_states)) for _ in range(d))
    first_party = Side.A if ss.receiver_side is Side.B else Side.B
    return OneWayProtocol(
        first_party=first_party,
        first_basis=phis.conj(),
        second_bases=tuple(second_bases),
        labels=labels,
    )


def post_measurement_state(ss: StateSet, p: OneWayProtocol, state: int, first_outcome: int) -> ComplexVector:
    """Unnormalized second-party state after the first party projects state `state` onto outcome `first_outcome`.

    Its squared norm is the probability of that first outcome.
    """
    amplitudes = ss.states[state].amplitudes
    if p.first_party is Side.A:
        amplitudes = amplitudes.T
    if amplitudes.shape[1] != p.first_basis.shape[1]:
        raise DimensionMismatchError(
            f"first-party vectors have dimension {p.first_basis.shape[1]}, the party has {amplitudes.shape[1]}"
        )
    return amplitudes @ p.first_basis[first_outcome].conj()


def _outcome_table(ss: StateSet, p: OneWayProtocol, state: int) -> NDArray[np.float64]:
    """Joint probabilities [m, o] for one true state; the last column is the rest outcome."""
    rows = []
    for m in range(len(p.first_basis)):
        residual = post_measurement_state(ss, p, state, m)
        if residual.shape[0] != p.second_bases[m].shape[1]:
            raise DimensionMismatchError(f"second-party vectors do not match dimension {residual.shape[0]}")
        listed = np.abs(p.second_bases[m].conj() @ residual) ** 2
        rest = float(np.sum(np.abs(p.rest_vectors[m].conj() @ residual) ** 2))
        rows.append(np.append(listed, rest))
    return np.array(rows)


def evaluate_protocol(ss: StateSet, p: OneWayProtocol) -> ProtocolTranscript:
    """Exact joint outcome table and success rates under a uniform prior over the states.

    :raises DimensionMismatchError: protocol vectors do not fit the parties of `ss`.
    """
    records = []
    per_state = []
    for i in range(ss.n_states):
        table = _outcome_table(ss, p, i)
        total = float(table.sum())
        if abs(total - 1.0) > 1e-9:
            logger.warning("outcome probabilities for state %d sum to %.12f", i, total)
        correct = 0.0
        for m, labels in enumerate(p.labels):
            for o, label in enumerate([*labels, FAILURE_LABEL]):
                probability = float(table[m, o])
                records.append((i, m, o, label, probability))
                if label == i:
                    correct += probability
        per_state.append(min(correct, 1.0))

    joint = pd.DataFrame.from_records(records, columns=JOINT_COLUMNS)
    success = float(np.clip(np.mean(per_state), 0.0, 1.0))
    worst = float(np.min(per_state))
    logger.info("protocol success %.12f (worst case %.12f)", success, worst)
    return ProtocolTranscript(
        joint=joint,
        success_probability=success,
        worst_case_success=worst,
        per_state_success=tuple(per_state),
    )


def _sample(rng: np.random.Generator, probabilities: NDArray[np.float64], size: int) -> NDArray[np.int64]:
    """Inverse-CDF sampling of `size` outcomes."""
    clipped = np.where(probabilities < _SAMPLING_FLOOR, 0.0, probabilities)
    cumulative = np.cumsum(clipped / clipped.sum())
    draws = np.searchsorted(cumulative, rng.random(size), side="right")
    return np.minimum(draws, len(probabilities) - 1)


def sample_protocol(ss: StateSet, p: OneWayProtocol, trials: int, seed: int) -> float:
    """Empirical success frequency: draw a state uniformly, then the first outcome, then the second.

    :raises InvalidTrialCountError: trials < 1.
    """
    if trials < 1:
        raise InvalidTrialCountError(f"trials={trials}")
    rng = np.random.default_rng(seed)
    states = rng.integers(ss.n_states, size=trials)
    successes = 0
    for i in range(ss.n_states):
        count = int(np.sum(states == i))
        if not count:
            continue
        table = _outcome_table(ss, p, i)
        first = _sample(rng, table.sum(axis=1), count)
        for m in range(len(p.first_basis)):
            hits = int(np.sum(first == m))
            if not hits:
                continue
            second = _sample(rng, table[m], hits)
            labels = np.array([*p.labels[m], FAILURE_LABEL])
            successes += int(np.sum(labels[second] == i))
    return successes / trials
