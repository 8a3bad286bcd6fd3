"""Exact case-analysis certificates that no witness exists for a set of generalized Bell states.

For Weyl-indexed unitaries every pairwise witness condition <φ|U_k†U_l|φ> = 0 is, up to a global phase,

    Σ_j w^(e·j) φ_j φ*_(j+t) = 0

with shift t = m_l - m_k and exponent e = n_l - n_k (mod d). The prover looks for a shift t0, coprime to d,
whose correlation vector c(j) = φ_j φ*_(j+t0) is annihilated by d-1 characters. Then c = λ·w^(-n4·j) for the
missing exponent n4, and two cases remain: λ ≠ 0 (refuted by one aligned longer-shift condition) and λ = 0
(refuted support by support). Exponent arithmetic is integer-exact, and so is the half-plane test on a single
shift-0 condition. Only the joint test across several shift-0 conditions is a linear program, and it refutes
a support only when the program is infeasible outright.
"""

import itertools
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
from core.states import ComplexVector, WeylIndex, roots_of_unity
from numpy.typing import NDArray
from scipy.optimize import linprog

logger = logging.getLogger(__name__)

_RANK_TOLERANCE = 1e-9

StepValue = int | tuple[int, ...]


class InvalidIndexSetError(ValueError):
    """Weyl indices must be distinct, share one d, and number between 2 and d."""


class TraceFormatError(ValueError):
    """A proof trace line does not follow `STEP <n>: <kind> | key=value ...` / `OUTCOME: <outcome>`."""


class HullTestError(RuntimeError):
    """The positive-combination linear program neither solved nor proved infeasibility."""


class Outcome(StrEnum):
    INFEASIBLE = "INFEASIBLE"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True, order=True)
class Condition:
    """Σ_j w^(e·j) φ_j φ*_(j+t) = 0."""

    t: int
    e: int

    def conjugate(self, d: int) -> "Condition":
        """Complex conjugate of the condition, re-indexed: (t, e) -> (-t, -e) mod d."""
        return Condition((-self.t) % d, (-self.e) % d)


def evaluate_condition(condition: Condition, phi: ComplexVector) -> complex:
    """Σ_j w^(e·j) φ_j φ*_(j+t) for a concrete vector."""
    d = len(phi)
    j = np.arange(d)
    return complex(np.sum(roots_of_unity(d)[(condition.e * j) % d] * phi * np.conj(phi[(j + condition.t) % d])))


@dataclass(frozen=True)
class ConditionTable:
    d: int
    conditions: tuple[Condition, ...]
    sources: tuple[tuple[int, int], ...]
    # True where the source pair gave shift d - t and the stored condition is its conjugate
    folded: tuple[bool, ...] = ()

    def exponents_at(self, t: int) -> frozenset[int]:
        """Every exponent e with a condition (t, e), reading stored conditions in both orientations."""
        t %= self.d
        exponents = {c.e for c in self.conditions if c.t == t}
        exponents |= {(-c.e) % self.d for c in self.conditions if (-c.t) % self.d == t}
        return frozenset(exponents)

    def direct_exponents_at(self, t: int) -> frozenset[int]:
        """Exponents of the conditions whose source pair itself has shift t, before any folding."""
        t %= self.d
        folded = self.folded or (False,) * len(self.conditions)
        exponents = set()
        for c, was_folded in zip(self.conditions, folded, strict=True):
            raw = c.conjugate(self.d) if was_folded else c
            if raw.t == t:
                exponents.add(raw.e)
        return frozenset(exponents)

    def shift_zero_exponents(self) -> tuple[int, ...]:
        return tuple(sorted({c.e for c in self.conditions if c.t == 0}))


@dataclass(frozen=True)
class ForcedProportionality:
    """Anchor shift t0 and the character c is proportional to; `complete` means all d characters vanish on c."""

    t0: int
    n4: int | None
    complete: bool = False


@dataclass(frozen=True)
class SupportPattern:
    support: frozenset[int]

    @property
    def mask(self) -> int:
        return sum(1 << j for j in self.support)

    @classmethod
    def from_mask(cls, mask: int, d: int) -> "SupportPattern":
        return cls(frozenset(j for j in range(d) if mask >> j & 1))


@dataclass(frozen=True)
class ProofStep:
    kind: str
    payload: dict[str, StepValue] = field(default_factory=dict)

    def to_line(self, number: int) -> str:
        parts = [f"{key}={_format_value(key, value)}" for key, value in self.payload.items()]
        return f"STEP {number}: {self.kind} | {' '.join(parts)}".rstrip(" |")

    @classmethod
    def from_line(cls, line: str, expected_number: int) -> "ProofStep":
        head, _, body = line.partition(":")
        words = head.split()
        if len(words) != 2 or words[0] != "STEP" or not words[1].isdigit():
            raise TraceFormatError(f"malformed step header: {line!r}")
        if int(words[1]) != expected_number:
            raise TraceFormatError(f"expected step {expected_number}, found {words[1]}")
        kind, _, rest = body.partition("|")
        payload: dict[str, StepValue] = {}
        for item in rest.split():
            key, sep, raw = item.partition("=")
            if not sep:
                raise TraceFormatError(f"malformed payload item {item!r} in step {expected_number}")
            try:
                values = tuple(int(part, 0) for part in raw.split(",") if part)
            except ValueError as e:
                raise TraceFormatError(f"non-integer value {raw!r} in step {expected_number}") from e
            payload[key] = values if "," in raw or not values else values[0]
        return cls(kind.strip(), payload)


def _format_value(key: str, value: StepValue) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value) + ("," if len(value) == 1 else "")
    if key == "support":
        return bin(value)
    return str(value)


@dataclass(frozen=True)
class ProofTrace:
    steps: tuple[ProofStep, ...]
    outcome: Outcome

    def to_text(self) -> str:
        lines = [step.to_line(n) for n, step in enumerate(self.steps, start=1)]
        lines.append(f"OUTCOME: {self.outcome}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ProofTrace":
        lines = [line.strip() for line in text.splitlines() if line.strip()]
        if not lines or not lines[-1].startswith("OUTCOME:"):
            raise TraceFormatError("trace must end with an OUTCOME line")
        try:
            outcome = Outcome(lines[-1].removeprefix("OUTCOME:").strip())
        except ValueError as e:
            raise TraceFormatError(f"unknown outcome in {lines[-1]!r}") from e
        steps = tuple(ProofStep.from_line(line, n) for n, line in enumerate(lines[:-1], start=1))
        return cls(steps, outcome)

    def kinds(self) -> list[str]:
        return [step.kind for step in self.steps]


def validate_indices(indices: Sequence[WeylIndex]) -> int:
    """Returns the common d, or raises InvalidIndexSetError."""
    if len(indices) < 2:
        raise InvalidIndexSetError(f"need at least 2 Weyl indices, got {len(indices)}")
    d = indices[0].d
    if any(idx.d != d for idx in indices):
        raise InvalidIndexSetError("all Weyl indices must share the same d")
    if len(set(indices)) != len(indices):
        raise InvalidIndexSetError(f"repeated Weyl index in {[str(idx) for idx in indices]}")
    if len(indices) > d:
        raise InvalidIndexSetError(f"N={len(indices)} exceeds d={d}")
    return d


def build_condition_table(indices: Sequence[WeylIndex]) -> ConditionTable:
    """One condition per unordered pair, folded so t <= d/2, duplicates (in either orientation) removed.

    :param indices: distinct Weyl indices sharing d, 2 <= N <= d.
    :type indices: Sequence[WeylIndex]
    :raises InvalidIndexSetError: repeated indices, mixed d, or N outside [2, d].
    :return: the deduplicated table, with the first index pair that produced each condition.
    :rtype: ConditionTable
    """
    d = validate_indices(indices)
    conditions: list[Condition] = []
    sources: list[tuple[int, int]] = []
    folded: list[bool] = []
    seen: set[Condition] = set()
    for k, l in itertools.combinations(range(len(indices)), 2):
        condition = Condition((indices[l].m - indices[k].m) % d, (indices[l].n - indices[k].n) % d)
        flip = condition.t > d // 2
        if flip:
            condition = condition.conjugate(d)
        if condition in seen:
            continue
        seen.update({condition, condition.conjugate(d)})
        conditions.append(condition)
        sources.append((k, l))
        folded.append(flip)
    return ConditionTable(d=d, conditions=tuple(conditions), sources=tuple(sources), folded=tuple(folded))


def anchor_candidates(table: ConditionTable) -> list[ForcedProportionality]:
    """Coprime shifts that pin c_t0 to one character (d-1 exponents) or to zero (all d), in shift order.

    Per shift, d-1 exponents read from pairs that produce that shift directly come first; the count over
    both orientations follows.
    """
    d = table.d
    everything = set(range(d))
    candidates: list[ForcedProportionality] = []
    for t0 in range(1, d):
        if math.gcd(t0, d) != 1:
            continue
        found = []
        direct = table.direct_exponents_at(t0)
        if len(direct) == d - 1:
            (missing,) = everything - direct
            found.append(ForcedProportionality(t0=t0, n4=missing))
        exponents = table.exponents_at(t0)
        if len(exponents) == d:
            found.append(ForcedProportionality(t0=t0, n4=None, complete=True))
        elif len(exponents) == d - 1:
            (missing,) = everything - exponents
            found.append(ForcedProportionality(t0=t0, n4=missing))
        candidates.extend(c for c in dict.fromkeys(found) if c not in candidates)
    return candidates


def forced_proportionality(table: ConditionTable) -> ForcedProportionality | None:
    """First coprime anchor shift whose correlation vector is pinned to a single character (or to zero)."""
    candidates = anchor_candidates(table)
    return candidates[0] if candidates else None


def chain_length(t: int, t0: int, d: int) -> int:
    """k with k·t0 = t mod d, i.e. the number of anchor steps that cover shift t."""
    return (t * pow(t0, -1, d)) % d


def refute_lambda_nonzero(table: ConditionTable, t0: int, n4: int) -> ProofStep | None:
    """Finds a condition (t, e) with t = k·t0, 2 <= k <= d-1 and e - k·n4 = 0 mod d.

    With λ ≠ 0 every φ_j is nonzero, and chaining c(j) = λ w^(-n4·j) turns that condition into a sum of
    strictly positive terms, which cannot vanish.
    """
    d = table.d
    for condition in table.conditions:
        for oriented in (condition, condition.conjugate(d)):
            k = chain_length(oriented.t, t0, d)
            if 2 <= k <= d - 1 and (oriented.e - k * n4) % d == 0:
                return ProofStep(
                    "lambda_nonzero_refuted",
                    {"t0": t0, "n4": n4, "t": oriented.t, "e": oriented.e, "k": k},
                )
    return None


def independent_supports(d: int, t0: int) -> list[SupportPattern]:
    """All S ⊆ Z_d containing no pair {j, j+t0}, ordered by bitmask."""
    patterns = []
    for mask in range(1 << d):
        if all(not (mask >> j & 1 and mask >> ((j + t0) % d) & 1) for j in range(d)):
            patterns.append(SupportPattern.from_mask(mask, d))
    return patterns


def positive_combination_margin(points: NDArray[np.complex128]) -> float | None:
    """Largest s such that some x >= s with Σ x = 1 has Σ_j x_j·p_ij = 0 for every row i; None if infeasible.

    `points` has one row per shift-0 condition and one column per support position.

    :raises HullTestError: the solver stopped for any reason other than an optimum or proven infeasibility.
    """
    rows, size = points.shape
    # variables: x_0..x_{size-1}, s; maximise s
    cost = np.zeros(size + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([-np.eye(size), np.ones((size, 1))])
    b_ub = np.zeros(size)
    a_eq = np.vstack(
        [
            np.append(np.ones(size), 0.0),
            np.hstack([points.real, np.zeros((rows, 1))]),
            np.hstack([points.imag, np.zeros((rows, 1))]),
        ]
    )
    b_eq = np.zeros(1 + 2 * rows)
    b_eq[0] = 1.0
    result = linprog(
        cost,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=[(0.0, None)] * size + [(None, 1.0)],
        method="highs",
    )
    if result.status == 2:
        return None
    if not result.success:
        raise HullTestError(f"positive-combination LP ended with status {result.status}: {result.message}")
    return float(-result.fun)


def halfplane_certificate(d: int, e: int, support: Sequence[int]) -> int | None:
    """Boundary angle π·q/d of a closed half-plane holding every w^(e·j), j in support, one of them strictly inside.

    Such a q rules out Σ_j x_j w^(e·j) = 0 with every x_j > 0. When none exists the origin lies in the relative
    interior of the points' hull, so the answer is exact for a single shift-0 condition.
    """
    if not support:
        return None
    for q in range(2 * d):
        offsets = [(2 * e * j - q) % (2 * d) for j in support]
        if all(offset <= d for offset in offsets) and any(0 < offset < d for offset in offsets):
            return q
    return None


def shift_zero_points(d: int, exponents: Sequence[int], support: Sequence[int]) -> NDArray[np.complex128]:
    roots = roots_of_unity(d)
    return np.array([[roots[(e * j) % d] for j in support] for e in exponents], dtype=np.complex128).reshape(
        len(exponents), len(support)
    )


def correlation_system(
    table: ConditionTable, t: int, support: frozenset[int]
) -> tuple[list[int], NDArray[np.complex128]]:
    """Unknowns φ_j φ*_(j+t) that survive on `support` and the character rows acting on them."""
    d = table.d
    positions = [j for j in range(d) if j in support and (j + t) % d in support]
    roots = roots_of_unity(d)
    exponents = sorted(table.exponents_at(t))
    matrix = np.array([[roots[(e * j) % d] for j in positions] for e in exponents], dtype=np.complex128)
    return positions, matrix.reshape(len(exponents), len(positions))


def forced_zero_position(positions: list[int], matrix: NDArray[np.complex128]) -> int | None:
    """A position whose unknown vanishes in every solution of matrix @ y = 0, if any."""
    if not positions or not matrix.size:
        return None
    _, singular, vh = np.linalg.svd(matrix)
    rank = int(np.sum(singular > _RANK_TOLERANCE * max(1.0, float(singular[0]))))
    kernel = vh[rank:].conj().T
    if kernel.shape[1] == 0:
        return positions[0]
    for j, row in zip(positions, kernel, strict=True):
        if np.linalg.norm(row) <= _RANK_TOLERANCE:
            return j
    return None


def refute_support(table: ConditionTable, pattern: SupportPattern) -> ProofStep | None:
    """Applies normalization, then the shift-0 tests (one half-plane per condition, then all jointly), then the
    per-shift rank test.
    """
    d = table.d
    mask = pattern.mask
    if not pattern.support:
        return ProofStep("refuted_normalization", {"support": mask})

    support = sorted(pattern.support)
    exponents = table.shift_zero_exponents()
    for e in exponents:
        q = halfplane_certificate(d, e, support)
        if q is not None:
            return ProofStep("refuted_halfplane", {"support": mask, "e": e, "q": q})
    if len(exponents) > 1:
        try:
            margin = positive_combination_margin(shift_zero_points(d, exponents, support))
        except HullTestError as error:
            logger.warning("support %s: joint shift-0 test skipped: %s", bin(mask), error)
        else:
            if margin is None:
                return ProofStep("refuted_shift0", {"support": mask, "exponents": tuple(exponents)})

    for t in range(1, d // 2 + 1):
        positions, matrix = correlation_system(table, t, pattern.support)
        forced = forced_zero_position(positions, matrix)
        if forced is not None:
            return ProofStep("refuted_rank", {"support": mask, "t": t, "forced": forced})
    return None


def refute_lambda_zero(table: ConditionTable, t0: int) -> tuple[list[ProofStep], SupportPattern | None]:
    """Refutes every support allowed by φ_j φ_(j+t0) = 0; returns the steps and the first surviving support.

    :return: steps (a `support_branches` header, then one refutation per support up to the first open one)
        and the open support, or None when every branch is refuted.
    """
    patterns = independent_supports(table.d, t0)
    steps = [ProofStep("support_branches", {"t0": t0, "count": len(patterns)})]
    for pattern in patterns:
        step = refute_support(table, pattern)
        if step is None:
            logger.debug("support %s survives every test", bin(pattern.mask))
            return steps, pattern
        steps.append(step)
    return steps, None


def _prove_with_anchor(table: ConditionTable, anchor: ForcedProportionality) -> tuple[list[ProofStep], bool]:
    """Both λ cases for one anchor; the bool is True when every branch is refuted."""
    if anchor.complete:
        steps = [
            ProofStep("anchor_complete", {"t0": anchor.t0, "count": table.d}),
            ProofStep("lambda_forced_zero", {"t0": anchor.t0}),
        ]
    else:
        assert anchor.n4 is not None
        steps = [ProofStep("anchor", {"t0": anchor.t0, "n4": anchor.n4, "count": table.d - 1})]
        refutation = refute_lambda_nonzero(table, anchor.t0, anchor.n4)
        if refutation is None:
            steps.append(ProofStep("open_lambda_nonzero", {"t0": anchor.t0, "n4": anchor.n4}))
            return steps, False
        steps.append(refutation)

    branch_steps, open_support = refute_lambda_zero(table, anchor.t0)
    steps.extend(branch_steps)
    if open_support is not None:
        steps.append(ProofStep("open_support", {"support": open_support.mask}))
        return steps, False
    return steps, True


def prove_infeasible(indices: Sequence[WeylIndex]) -> ProofTrace:
    """Tries to certify that no witness exists; INCONCLUSIVE is the only other outcome.

    Each coprime anchor is tried in turn; the trace keeps the first that refutes everything, or the first
    anchor's attempt (ending at its first open branch) when none does.

    :raises InvalidIndexSetError: repeated indices, mixed d, or N outside [2, d].
    """
    table = build_condition_table(indices)
    d = table.d
    preamble = [ProofStep("setup", {"d": d, "n": len(indices)})]
    preamble += [ProofStep("index", {"k": k, "n": idx.n, "m": idx.m}) for k, idx in enumerate(indices)]
    preamble += [
        ProofStep("condition", {"k": k, "l": l, "t": c.t, "e": c.e})
        for c, (k, l) in zip(table.conditions, table.sources, strict=True)
    ]

    candidates = anchor_candidates(table)
    if not candidates:
        logger.info("no anchor shift for %s: inconclusive", ",".join(str(idx) for idx in indices))
        return ProofTrace(tuple([*preamble, ProofStep("no_anchor", {"required": d - 1})]), Outcome.INCONCLUSIVE)

    first_attempt: list[ProofStep] | None = None
    for anchor in candidates:
        steps, refuted = _prove_with_anchor(table, anchor)
        if refuted:
            logger.info("infeasible with anchor t0=%d", anchor.t0)
            return ProofTrace(tuple(preamble + steps), Outcome.INFEASIBLE)
        first_attempt = first_attempt or steps
    assert first_attempt is not None
    return ProofTrace(tuple(preamble + first_attempt), Outcome.INCONCLUSIVE)
