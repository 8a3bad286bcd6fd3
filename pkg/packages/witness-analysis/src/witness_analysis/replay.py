"""Re-checks a ProofTrace step by step against the Weyl indices it claims to be about.

Nothing here calls the prover's search. Conditions are re-derived pair by pair, character counts and the
alignment arithmetic are recomputed with plain integers, every independent support is re-enumerated, and
each refutation is re-established on its own terms: half-plane steps by integer offsets, joint shift-0 steps
by a fixed-margin LP feasibility problem and rank steps by a row-space membership test.
"""

import itertools
import math
from collections.abc import Sequence

import numpy as np
from core.config import settings
from core.states import WeylIndex, roots_of_unity
from scipy.optimize import linprog

from witness_analysis.prover import Outcome, ProofStep, ProofTrace

_OPEN_KINDS = {"no_anchor", "open_lambda_nonzero", "open_support"}


class ReplayError(ValueError):
    """A proof trace step does not hold for the given Weyl indices."""


class _Cursor:
    def __init__(self, steps: tuple[ProofStep, ...]) -> None:
        self.steps = steps
        self.position = 0

    def peek(self) -> ProofStep | None:
        return self.steps[self.position] if self.position < len(self.steps) else None

    def take(self, kind: str) -> ProofStep:
        step = self.peek()
        if step is None:
            raise ReplayError(f"trace ended early: expected a {kind} step")
        if step.kind != kind:
            raise ReplayError(f"step {self.position + 1}: expected {kind}, found {step.kind}")
        self.position += 1
        return step

    def fail(self, message: str) -> ReplayError:
        return ReplayError(f"step {self.position}: {message}")


def _value(step: ProofStep, key: str) -> int:
    value = step.payload.get(key)
    if not isinstance(value, int):
        raise ReplayError(f"{step.kind} step is missing integer field {key!r}")
    return value


def _pair_conditions(indices: Sequence[WeylIndex], d: int) -> set[tuple[int, int]]:
    """Every pairwise condition in both orientations."""
    conditions = set()
    for a, b in itertools.permutations(indices, 2):
        conditions.add(((b.m - a.m) % d, (b.n - a.n) % d))
    return conditions


def _exponents(conditions: set[tuple[int, int]], t: int) -> set[int]:
    return {e for shift, e in conditions if shift == t}


def _independent(mask: int, d: int, t0: int) -> bool:
    return all(not (mask >> j & 1 and mask >> ((j + t0) % d) & 1) for j in range(d))


def _check_shift0(d: int, exponents: tuple[int, ...], support: list[int]) -> bool:
    """True when no x >= DELTA_HULL on the support sums to 1 and annihilates every listed character."""
    roots = roots_of_unity(d)
    rows = [np.ones(len(support))]
    for e in exponents:
        points = np.array([roots[(e * j) % d] for j in support])
        rows += [points.real, points.imag]
    b_eq = np.zeros(len(rows))
    b_eq[0] = 1.0
    result = linprog(
        np.zeros(len(support)),
        A_eq=np.array(rows),
        b_eq=b_eq,
        bounds=[(settings.DELTA_HULL, None)] * len(support),
        method="highs",
    )
    return result.status == 2


def _check_halfplane(d: int, e: int, q: int, support: list[int]) -> bool:
    """Every w^(e·j) at angle within [π·q/d, π·q/d + π], at least one strictly between."""
    if not 0 <= q < 2 * d:
        return False
    offsets = [(2 * e * j - q) % (2 * d) for j in support]
    return all(offset <= d for offset in offsets) and any(0 < offset < d for offset in offsets)


def _check_rank(d: int, conditions: set[tuple[int, int]], support: set[int], t: int, forced: int) -> bool:
    """True when the unit vector at `forced` lies in the row space of the surviving character rows."""
    positions = [j for j in range(d) if j in support and (j + t) % d in support]
    if forced not in positions:
        return False
    roots = roots_of_unity(d)
    exponents = sorted(_exponents(conditions, t))
    if not exponents:
        return False
    matrix = np.array([[roots[(e * j) % d] for j in positions] for e in exponents])
    unit = np.zeros((1, len(positions)))
    unit[0, positions.index(forced)] = 1.0
    tol = 1e-9
    return bool(np.linalg.matrix_rank(matrix, tol=tol) == np.linalg.matrix_rank(np.vstack([matrix, unit]), tol=tol))


def _replay_support_step(step: ProofStep, d: int, conditions: set[tuple[int, int]], shift_zero: set[int]) -> None:
    mask = _value(step, "support")
    support = [j for j in range(d) if mask >> j & 1]
    if step.kind == "refuted_normalization":
        if support:
            raise ReplayError(f"normalization only refutes the empty support, not {bin(mask)}")
    elif step.kind == "refuted_halfplane":
        e, q = _value(step, "e"), _value(step, "q")
        if e not in shift_zero:
            raise ReplayError(f"support {bin(mask)}: e={e} is not a shift-0 exponent of this set")
        if not support or not _check_halfplane(d, e, q, support):
            raise ReplayError(f"support {bin(mask)}: half-plane q={q} does not separate the shift-0 points")
    elif step.kind == "refuted_shift0":
        exponents = step.payload.get("exponents")
        if not isinstance(exponents, tuple) or not set(exponents) <= shift_zero:
            raise ReplayError(f"support {bin(mask)}: shift-0 exponents {exponents} are not conditions of this set")
        if not support or not _check_shift0(d, exponents, support):
            raise ReplayError(f"support {bin(mask)}: shift-0 conditions admit a positive solution")
    elif step.kind == "refuted_rank":
        t, forced = _value(step, "t"), _value(step, "forced")
        if not _check_rank(d, conditions, set(support), t, forced):
            raise ReplayError(f"support {bin(mask)}: shift-{t} conditions do not force position {forced} to zero")
    else:
        raise ReplayError(f"unexpected {step.kind} step among support refutations")


def replay_trace(indices: Sequence[WeylIndex], trace: ProofTrace) -> None:
    """Raises ReplayError on the first step that does not hold; returns quietly when the whole trace checks out.

    :param indices: the Weyl indices the trace was produced for, in the same order.
    :type indices: Sequence[WeylIndex]
    :param trace: a trace, typically parsed back with ProofTrace.from_text.
    :type trace: ProofTrace
    :raises ReplayError: naming the offending step.
    """
    if not indices:
        raise ReplayError("no Weyl indices given")
    d = indices[0].d
    cursor = _Cursor(trace.steps)

    setup = cursor.take("setup")
    if _value(setup, "d") != d or _value(setup, "n") != len(indices):
        raise cursor.fail(f"setup says d={setup.payload.get('d')} n={setup.payload.get('n')}")
    for k, idx in enumerate(indices):
        step = cursor.take("index")
        if (_value(step, "k"), _value(step, "n"), _value(step, "m")) != (k, idx.n, idx.m):
            raise cursor.fail(f"index {k} is {idx}, trace says {step.payload}")

    conditions = _pair_conditions(indices, d)
    listed: set[tuple[int, int]] = set()
    while (step := cursor.peek()) is not None and step.kind == "condition":
        cursor.take("condition")
        k, l, t, e = (_value(step, key) for key in ("k", "l", "t", "e"))
        if not (0 <= k < l < len(indices)):
            raise cursor.fail(f"condition names pair ({k}, {l}) outside the index list")
        a, b = indices[k], indices[l]
        derived = ((b.m - a.m) % d, (b.n - a.n) % d)
        if (t, e) not in {derived, ((-derived[0]) % d, (-derived[1]) % d)}:
            raise cursor.fail(f"pair ({k}, {l}) gives condition {derived}, trace says ({t}, {e})")
        listed |= {(t, e), ((-t) % d, (-e) % d)}
    if listed != conditions:
        raise cursor.fail("condition steps do not cover every pair of indices")

    step = cursor.peek()
    if step is None:
        raise ReplayError("trace has no anchor step")
    if step.kind == "no_anchor":
        cursor.take("no_anchor")
    else:
        _replay_anchor(cursor, d, conditions)

    trailing = cursor.peek()
    if trailing is not None:
        raise cursor.fail(f"unexpected trailing step {trailing.kind}")
    last = trace.steps[-1].kind
    if trace.outcome is Outcome.INFEASIBLE and last in _OPEN_KINDS:
        raise ReplayError(f"INFEASIBLE trace ends with an open branch ({last})")
    if trace.outcome is Outcome.INCONCLUSIVE and last not in _OPEN_KINDS:
        raise ReplayError(f"INCONCLUSIVE trace ends with {last} instead of an open branch")


def _replay_anchor(cursor: _Cursor, d: int, conditions: set[tuple[int, int]]) -> None:
    step = cursor.peek()
    assert step is not None
    if step.kind == "anchor_complete":
        cursor.take("anchor_complete")
        t0 = _value(step, "t0")
        if math.gcd(t0, d) != 1 or _exponents(conditions, t0) != set(range(d)):
            raise cursor.fail(f"shift {t0} does not carry all {d} exponents with gcd(t0, d) = 1")
        if _value(cursor.take("lambda_forced_zero"), "t0") != t0:
            raise cursor.fail("lambda_forced_zero names a different anchor")
    else:
        cursor.take("anchor")
        t0, n4 = _value(step, "t0"), _value(step, "n4")
        if math.gcd(t0, d) != 1:
            raise cursor.fail(f"anchor shift {t0} is not coprime to {d}")
        missing = set(range(d)) - {n4} - _exponents(conditions, t0)
        if missing:
            raise cursor.fail(f"anchor n4={n4}: shift {t0} lacks exponents {sorted(missing)}")
        nonzero = cursor.peek()
        if nonzero is not None and nonzero.kind == "open_lambda_nonzero":
            cursor.take("open_lambda_nonzero")
            return
        nonzero = cursor.take("lambda_nonzero_refuted")
        t, e, k = _value(nonzero, "t"), _value(nonzero, "e"), _value(nonzero, "k")
        if (t, e) not in conditions:
            raise cursor.fail(f"({t}, {e}) is not a condition of this set")
        if not 2 <= k <= d - 1 or (k * t0) % d != t % d:
            raise cursor.fail(f"{k} anchor steps of {t0} do not make shift {t}")
        if (e - k * n4) % d != 0:
            raise cursor.fail(f"alignment fails: {e} - {k}*{n4} = {(e - k * n4) % d} mod {d}")

    header = cursor.take("support_branches")
    if _value(header, "t0") != t0:
        raise cursor.fail("support_branches names a different anchor")
    expected = [mask for mask in range(1 << d) if _independent(mask, d, t0)]
    if _value(header, "count") != len(expected):
        raise cursor.fail(f"{len(expected)} independent supports, trace says {header.payload.get('count')}")

    shift_zero = _exponents(conditions, 0)
    for mask in expected:
        step = cursor.peek()
        if step is None:
            raise ReplayError(f"support {bin(mask)} is never refuted")
        if step.kind == "open_support":
            cursor.take("open_support")
            if _value(step, "support") != mask:
                raise cursor.fail(f"open support {bin(_value(step, 'support'))} out of order, expected {bin(mask)}")
            return
        cursor.position += 1
        if _value(step, "support") != mask:
            raise cursor.fail(f"refutation for {bin(_value(step, 'support'))}, expected {bin(mask)}")
        _replay_support_step(step, d, conditions, shift_zero)
