import itertools

import numpy as np
import pytest
from conftest import BOUNDARY_D8, EXAMPLE1, EXAMPLE2, EXAMPLE3, weyl_indices
from core.states import WeylIndex, make_weyl, random_state_vector, transpose_weyl_index
from scipy.optimize import OptimizeResult
from witness_analysis import prover
from witness_analysis.prover import (
    Condition,
    ConditionTable,
    ForcedProportionality,
    HullTestError,
    InvalidIndexSetError,
    Outcome,
    ProofStep,
    ProofTrace,
    SupportPattern,
    TraceFormatError,
    anchor_candidates,
    build_condition_table,
    chain_length,
    evaluate_condition,
    forced_proportionality,
    halfplane_certificate,
    independent_supports,
    positive_combination_margin,
    prove_infeasible,
    refute_lambda_nonzero,
    refute_lambda_zero,
    refute_support,
    shift_zero_points,
)

COMPLETE_AT_SHIFT1 = [(0, 0), (1, 2), (1, 1)]


class TestConditionTable:
    def test_example1_table(self) -> None:
        table = build_condition_table(weyl_indices(4, EXAMPLE1))
        assert table.exponents_at(1) == frozenset({0, 1, 2, 3})
        assert table.direct_exponents_at(1) == frozenset({1, 2, 3})
        assert table.direct_exponents_at(3) == frozenset({0})
        assert table.shift_zero_exponents() == (2,)
        assert all(c.t <= 2 for c in table.conditions)
        assert table.folded == (False, False, False, False, False, True)

    def test_duplicates_are_dropped_in_both_orientations(self) -> None:
        table = build_condition_table(weyl_indices(4, [(0, 0), (0, 1), (0, 2), (0, 3)]))
        # once folded, (1, 0) comes from four pairs and (2, 0) from two
        assert table.conditions == (Condition(1, 0), Condition(2, 0))
        assert table.sources == ((0, 1), (0, 2))

    def test_conditions_are_the_pairwise_residuals(self, rng: np.random.Generator) -> None:
        indices = weyl_indices(6, EXAMPLE3)
        phi = random_state_vector(6, rng)
        for a, b in itertools.combinations(indices, 2):
            residual = np.vdot(phi, make_weyl(a).conj().T @ make_weyl(b) @ phi)
            condition = Condition((b.m - a.m) % 6, (b.n - a.n) % 6)
            assert abs(residual) == pytest.approx(abs(evaluate_condition(condition, phi)), abs=1e-12)

    def test_conjugate_condition_has_the_same_modulus(self, rng: np.random.Generator) -> None:
        for d in (4, 5, 6):
            phi = random_state_vector(d, rng)
            for t, e in itertools.product(range(d), repeat=2):
                condition = Condition(t, e)
                assert abs(evaluate_condition(condition.conjugate(d), phi)) == pytest.approx(
                    abs(evaluate_condition(condition, phi)), abs=1e-12
                )

    @pytest.mark.parametrize(
        "pairs",
        [
            [(0, 0)],
            [(0, 0), (0, 0)],
            [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)],
        ],
    )
    def test_invalid_index_sets(self, pairs: list[tuple[int, int]]) -> None:
        with pytest.raises(InvalidIndexSetError):
            build_condition_table(weyl_indices(4, pairs))

    def test_mixed_dimensions(self) -> None:
        with pytest.raises(InvalidIndexSetError):
            build_condition_table([WeylIndex(0, 0, 3), WeylIndex(0, 1, 4)])


class TestAnchors:
    def test_example1_anchor_reads_the_direct_shift(self) -> None:
        table = build_condition_table(weyl_indices(4, EXAMPLE1))
        assert forced_proportionality(table) == ForcedProportionality(t0=1, n4=0)
        assert anchor_candidates(table) == [
            ForcedProportionality(t0=1, n4=0),
            ForcedProportionality(t0=1, n4=None, complete=True),
            ForcedProportionality(t0=3, n4=None, complete=True),
        ]

    def test_example2_anchor(self) -> None:
        table = build_condition_table(weyl_indices(5, EXAMPLE2))
        assert forced_proportionality(table) == ForcedProportionality(t0=1, n4=1)

    def test_example3_anchors(self) -> None:
        table = build_condition_table(weyl_indices(6, EXAMPLE3))
        assert anchor_candidates(table) == [ForcedProportionality(t0=1, n4=5), ForcedProportionality(t0=5, n4=1)]

    def test_pure_shifts_have_no_anchor(self) -> None:
        table = build_condition_table(weyl_indices(4, [(0, 0), (0, 1), (0, 2), (0, 3)]))
        assert forced_proportionality(table) is None

    @pytest.mark.parametrize(("t", "t0", "d", "k"), [(3, 1, 4, 3), (2, 1, 5, 2), (4, 3, 5, 3), (2, 5, 6, 4)])
    def test_chain_length(self, t: int, t0: int, d: int, k: int) -> None:
        assert chain_length(t, t0, d) == k
        assert (k * t0) % d == t


class TestLambdaNonzero:
    @pytest.mark.parametrize(
        ("d", "pairs", "n4", "expected"),
        [
            (5, EXAMPLE2, 1, {"t0": 1, "n4": 1, "t": 2, "e": 2, "k": 2}),
            (6, EXAMPLE3, 5, {"t0": 1, "n4": 5, "t": 3, "e": 3, "k": 3}),
        ],
    )
    def test_aligned_condition(self, d: int, pairs: list[tuple[int, int]], n4: int, expected: dict[str, int]) -> None:
        table = build_condition_table(weyl_indices(d, pairs))
        step = refute_lambda_nonzero(table, 1, n4)
        assert step == ProofStep("lambda_nonzero_refuted", expected)

    def test_conjugate_orientation_is_used(self) -> None:
        table = build_condition_table(weyl_indices(4, EXAMPLE1))
        step = refute_lambda_nonzero(table, 1, 0)
        assert step is not None
        assert (step.payload["t"], step.payload["e"], step.payload["k"]) == (3, 0, 3)

    def test_no_alignment_in_d2(self) -> None:
        table = build_condition_table(weyl_indices(2, [(0, 0), (0, 1)]))
        assert refute_lambda_nonzero(table, 1, 1) is None


class TestLambdaZero:
    def test_independent_supports(self) -> None:
        masks = [pattern.mask for pattern in independent_supports(4, 1)]
        assert masks == [0b0, 0b1, 0b10, 0b100, 0b101, 0b1000, 0b1010]
        assert len(independent_supports(5, 1)) == 11
        assert len(independent_supports(6, 1)) == 18

    def test_support_pattern_mask(self) -> None:
        pattern = SupportPattern.from_mask(0b10101, 6)
        assert pattern.support == frozenset({0, 2, 4})
        assert pattern.mask == 0b10101

    def test_positive_combination_margin(self) -> None:
        # the cube roots of unity balance with equal weights
        assert positive_combination_margin(shift_zero_points(6, [4], [0, 2, 4])) == pytest.approx(1 / 3)
        # two equal points never cancel
        assert positive_combination_margin(shift_zero_points(4, [2], [0, 2])) is None

    @pytest.mark.parametrize(
        ("d", "e", "support", "q"),
        [
            (4, 2, [0], 5),
            (8, 2, [0, 2, 5], 0),
            (6, 4, [0, 2, 4], None),
            (4, 2, [0, 1], None),
            (8, 1, [], None),
        ],
    )
    def test_halfplane_certificate(self, d: int, e: int, support: list[int], q: int | None) -> None:
        assert halfplane_certificate(d, e, support) == q

    def test_halfplane_matches_the_positive_combination_margin(self) -> None:
        cases = [(d, e) for d in (3, 4, 5, 6) for e in range(1, d)] + [(8, 2), (8, 3)]
        for d, e in cases:
            for mask in range(1, 1 << d):
                support = [j for j in range(d) if mask >> j & 1]
                margin = positive_combination_margin(shift_zero_points(d, [e], support))
                balanced = margin is not None and margin > 1e-9
                assert (halfplane_certificate(d, e, support) is None) == balanced, (d, e, support)

    def test_example1_supports_fall_to_a_halfplane(self) -> None:
        table = build_condition_table(weyl_indices(4, EXAMPLE1))
        steps, open_support = refute_lambda_zero(table, 1)
        assert open_support is None
        kinds = [step.kind for step in steps]
        assert kinds == ["support_branches", "refuted_normalization"] + ["refuted_halfplane"] * 6

    def test_origin_on_the_hull_edge_is_refuted_exactly(self) -> None:
        table = build_condition_table(weyl_indices(8, BOUNDARY_D8))
        assert table.shift_zero_exponents() == (2,)
        assert positive_combination_margin(shift_zero_points(8, [2], [0, 2, 5])) == pytest.approx(0.0, abs=1e-9)
        assert refute_support(table, SupportPattern(frozenset({0, 2, 5}))) == ProofStep(
            "refuted_halfplane", {"support": 0b100101, "e": 2, "q": 0}
        )

    def test_example3_rank_refutations(self) -> None:
        table = build_condition_table(weyl_indices(6, EXAMPLE3))
        assert refute_support(table, SupportPattern(frozenset({0, 2, 4}))) == ProofStep(
            "refuted_rank", {"support": 0b10101, "t": 2, "forced": 0}
        )
        step = refute_support(table, SupportPattern(frozenset({1, 3, 5})))
        assert step is not None and step.kind == "refuted_rank"

    def test_unconstrained_support_stays_open(self) -> None:
        table = build_condition_table(weyl_indices(4, [(0, 0), (0, 1)]))
        assert refute_support(table, SupportPattern(frozenset({0}))) is None


def _stalled_linprog(*args: object, **kwargs: object) -> OptimizeResult:
    return OptimizeResult(status=4, success=False, message="Numerical difficulties encountered.", fun=np.nan)


class TestJointShiftZero:
    # shift-0 conditions e=1 and e=2 on the full support: neither has a half-plane, uniform weights satisfy both
    TABLE = ConditionTable(d=4, conditions=(Condition(0, 1), Condition(0, 2)), sources=((0, 1), (0, 2)))
    FULL = SupportPattern(frozenset(range(4)))

    def test_balanced_support_stays_open(self) -> None:
        assert refute_support(self.TABLE, self.FULL) is None

    def test_joint_infeasibility_is_refuted(self) -> None:
        # d=6 on {0, 1, 2, 4}: e=2 alone needs x0 = x2 = x1 + x4, e=3 alone needs x1 = x0 + x2 + x4
        table = ConditionTable(d=6, conditions=(Condition(0, 2), Condition(0, 3)), sources=((0, 1), (0, 2)))
        pattern = SupportPattern(frozenset({0, 1, 2, 4}))
        assert halfplane_certificate(6, 2, [0, 1, 2, 4]) is None
        assert halfplane_certificate(6, 3, [0, 1, 2, 4]) is None
        assert refute_support(table, pattern) == ProofStep("refuted_shift0", {"support": 0b10111, "exponents": (2, 3)})

    def test_solver_failure_raises(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setattr(prover, "linprog", _stalled_linprog)
        with pytest.raises(HullTestError, match="status 4"):
            positive_combination_margin(shift_zero_points(4, [1, 2], [0, 1, 2, 3]))

    def test_solver_failure_leaves_the_branch_open(
        self, monkeypatch: pytest.MonkeyPatch, caplog: pytest.LogCaptureFixture
    ) -> None:
        monkeypatch.setattr(prover, "linprog", _stalled_linprog)
        assert refute_support(self.TABLE, self.FULL) is None
        assert "joint shift-0 test skipped" in caplog.text

    def test_solver_failure_never_certifies(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setattr(prover, "linprog", _stalled_linprog)
        # this set has a witness
        assert prove_infeasible(weyl_indices(4, [(0, 0), (0, 1), (0, 2), (1, 1)])).outcome is Outcome.INCONCLUSIVE


class TestProveInfeasible:
    @pytest.mark.parametrize(("d", "pairs"), [(4, EXAMPLE1), (5, EXAMPLE2), (6, EXAMPLE3)])
    def test_examples_are_infeasible(self, d: int, pairs: list[tuple[int, int]]) -> None:
        trace = prove_infeasible(weyl_indices(d, pairs))
        assert trace.outcome is Outcome.INFEASIBLE
        assert trace.kinds()[0] == "setup"
        assert not {"open_support", "open_lambda_nonzero", "no_anchor"} & set(trace.kinds())

    def test_example1_refutes_lambda_nonzero_with_the_shift3_condition(self) -> None:
        trace = prove_infeasible(weyl_indices(4, EXAMPLE1))
        assert trace.steps[11] == ProofStep("anchor", {"t0": 1, "n4": 0, "count": 3})
        assert trace.steps[12] == ProofStep("lambda_nonzero_refuted", {"t0": 1, "n4": 0, "t": 3, "e": 0, "k": 3})
        assert "anchor_complete" not in trace.kinds()

    def test_transposed_example2_is_infeasible(self) -> None:
        indices = [transpose_weyl_index(idx) for idx in weyl_indices(5, EXAMPLE2)]
        trace = prove_infeasible(indices)
        assert trace.outcome is Outcome.INFEASIBLE
        assert ProofStep("anchor", {"t0": 1, "n4": 4, "count": 4}) in trace.steps

    def test_complete_anchor_forces_lambda_zero(self) -> None:
        # shift 1 carries every exponent but only one of them directly; e_0 is a witness
        trace = prove_infeasible(weyl_indices(3, COMPLETE_AT_SHIFT1))
        assert trace.outcome is Outcome.INCONCLUSIVE
        assert trace.steps[7:] == (
            ProofStep("anchor_complete", {"t0": 1, "count": 3}),
            ProofStep("lambda_forced_zero", {"t0": 1}),
            ProofStep("support_branches", {"t0": 1, "count": 4}),
            ProofStep("refuted_normalization", {"support": 0b0}),
            ProofStep("open_support", {"support": 0b1}),
        )

    def test_pure_shifts_are_inconclusive(self) -> None:
        trace = prove_infeasible(weyl_indices(4, [(0, 0), (0, 1), (0, 2), (0, 3)]))
        assert trace.outcome is Outcome.INCONCLUSIVE
        assert trace.steps[-1] == ProofStep("no_anchor", {"required": 3})

    def test_bell_pair_stops_at_the_open_lambda_branch(self) -> None:
        trace = prove_infeasible(weyl_indices(2, [(0, 0), (0, 1)]))
        assert trace.outcome is Outcome.INCONCLUSIVE
        assert trace.steps[-1].kind == "open_lambda_nonzero"

    def test_outcome_does_not_depend_on_index_order(self) -> None:
        indices = weyl_indices(6, EXAMPLE3)
        for permutation in itertools.islice(itertools.permutations(indices), 0, 120, 17):
            assert prove_infeasible(permutation).outcome is Outcome.INFEASIBLE


class TestTraceText:
    def test_text_parses_back(self) -> None:
        trace = prove_infeasible(weyl_indices(6, EXAMPLE3))
        assert ProofTrace.from_text(trace.to_text()) == trace

    def test_line_format(self) -> None:
        text = prove_infeasible(weyl_indices(4, EXAMPLE1)).to_text()
        lines = text.splitlines()
        assert lines[0] == "STEP 1: setup | d=4 n=4"
        assert "STEP 15: refuted_normalization | support=0b0" in lines
        assert "STEP 16: refuted_halfplane | support=0b1 e=2 q=5" in lines
        assert lines[-1] == "OUTCOME: INFEASIBLE"

    def test_missing_outcome(self) -> None:
        with pytest.raises(TraceFormatError):
            ProofTrace.from_text("STEP 1: setup | d=4 n=2\n")

    def test_out_of_order_step_numbers(self) -> None:
        with pytest.raises(TraceFormatError, match="expected step 2"):
            ProofTrace.from_text("STEP 1: setup | d=2 n=2\nSTEP 3: no_anchor | required=1\nOUTCOME: INCONCLUSIVE\n")

    def test_non_integer_payload(self) -> None:
        with pytest.raises(TraceFormatError):
            ProofTrace.from_text("STEP 1: setup | d=four\nOUTCOME: INCONCLUSIVE\n")
