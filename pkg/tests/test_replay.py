import numpy as np
import pytest
from conftest import BOUNDARY_D8, EXAMPLE1, EXAMPLE2, EXAMPLE3, weyl_indices
from core.states import transpose_weyl_index
from witness_analysis.prover import Outcome, ProofStep, ProofTrace, prove_infeasible
from witness_analysis.replay import ReplayError, replay_trace

PURE_SHIFTS = [(0, 0), (0, 1), (0, 2), (0, 3)]
COMPLETE_AT_SHIFT1 = [(0, 0), (1, 2), (1, 1)]


def _text_trace(d: int, pairs: list[tuple[int, int]]) -> ProofTrace:
    return ProofTrace.from_text(prove_infeasible(weyl_indices(d, pairs)).to_text())


def _replace_step(trace: ProofTrace, kind: str, **changes: int) -> ProofTrace:
    steps = list(trace.steps)
    position = next(i for i, step in enumerate(steps) if step.kind == kind)
    steps[position] = ProofStep(kind, {**steps[position].payload, **changes})
    return ProofTrace(tuple(steps), trace.outcome)


@pytest.mark.parametrize(
    ("d", "pairs"),
    [
        (4, EXAMPLE1),
        (5, EXAMPLE2),
        (6, EXAMPLE3),
        (4, PURE_SHIFTS),
        (2, [(0, 0), (0, 1)]),
        (3, COMPLETE_AT_SHIFT1),
        (8, BOUNDARY_D8),
    ],
)
def test_prover_traces_replay(d: int, pairs: list[tuple[int, int]]) -> None:
    replay_trace(weyl_indices(d, pairs), _text_trace(d, pairs))


def test_transposed_trace_replays() -> None:
    indices = [transpose_weyl_index(idx) for idx in weyl_indices(5, EXAMPLE2)]
    replay_trace(indices, ProofTrace.from_text(prove_infeasible(indices).to_text()))


def test_hull_edge_support_is_certified_and_replays() -> None:
    trace = _text_trace(8, BOUNDARY_D8)
    assert trace.outcome is Outcome.INFEASIBLE
    assert ProofStep("refuted_halfplane", {"support": 0b100101, "e": 2, "q": 0}) in trace.steps
    replay_trace(weyl_indices(8, BOUNDARY_D8), trace)


@pytest.mark.slow
def test_random_d8_traces_replay(rng: np.random.Generator) -> None:
    for _ in range(150):
        n = int(rng.integers(4, 9))
        labels = rng.choice(64, size=n, replace=False)
        pairs = [divmod(int(label), 8) for label in labels]
        replay_trace(weyl_indices(8, pairs), _text_trace(8, pairs))


class TestTampering:
    def test_wrong_missing_exponent(self) -> None:
        trace = _replace_step(_text_trace(5, EXAMPLE2), "anchor", n4=2)
        with pytest.raises(ReplayError, match=r"anchor n4=2: shift 1 lacks exponents \[1\]"):
            replay_trace(weyl_indices(5, EXAMPLE2), trace)

    def test_misaligned_condition(self) -> None:
        trace = _replace_step(_text_trace(6, EXAMPLE3), "lambda_nonzero_refuted", k=2)
        with pytest.raises(ReplayError):
            replay_trace(weyl_indices(6, EXAMPLE3), trace)

    def test_forged_rank_refutation(self) -> None:
        trace = _replace_step(_text_trace(6, EXAMPLE3), "refuted_rank", t=1)
        with pytest.raises(ReplayError, match="do not force"):
            replay_trace(weyl_indices(6, EXAMPLE3), trace)

    def test_halfplane_through_the_point(self) -> None:
        trace = _replace_step(_text_trace(4, EXAMPLE1), "refuted_halfplane", q=4)
        with pytest.raises(ReplayError, match="q=4 does not separate"):
            replay_trace(weyl_indices(4, EXAMPLE1), trace)

    def test_halfplane_for_a_missing_condition(self) -> None:
        trace = _replace_step(_text_trace(4, EXAMPLE1), "refuted_halfplane", e=1)
        with pytest.raises(ReplayError, match="e=1 is not a shift-0 exponent"):
            replay_trace(weyl_indices(4, EXAMPLE1), trace)

    def test_forged_shift_zero_refutation(self) -> None:
        trace = _text_trace(6, EXAMPLE3)
        forged = ProofStep("refuted_shift0", {"support": 0b10101, "exponents": (4,)})
        steps = [forged if step.kind == "refuted_rank" else step for step in trace.steps]
        with pytest.raises(ReplayError, match="positive solution"):
            replay_trace(weyl_indices(6, EXAMPLE3), ProofTrace(tuple(steps), trace.outcome))

    def test_upgraded_outcome(self) -> None:
        trace = _text_trace(4, PURE_SHIFTS)
        with pytest.raises(ReplayError, match="open branch"):
            replay_trace(weyl_indices(4, PURE_SHIFTS), ProofTrace(trace.steps, Outcome.INFEASIBLE))

    def test_dropped_support(self) -> None:
        trace = _text_trace(4, EXAMPLE1)
        with pytest.raises(ReplayError, match="never refuted"):
            replay_trace(weyl_indices(4, EXAMPLE1), ProofTrace(trace.steps[:-1], trace.outcome))

    def test_trace_for_other_indices(self) -> None:
        with pytest.raises(ReplayError):
            replay_trace(weyl_indices(5, EXAMPLE2), _text_trace(4, EXAMPLE1))
