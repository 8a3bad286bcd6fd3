"""The decision pipeline behind `locclab decide` and `locclab sweep`.

bound check -> witness search -> infeasibility prover (Weyl sets) -> witness basis -> protocol evaluation
"""

import itertools
import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from core.config import settings
from core.states import (
    Side,
    StateSet,
    WeylIndex,
    commutation_defect,
    make_weyl_state_set,
    phi_plus,
    weyl_product_index,
)
from locc_protocol.simulator import build_protocol, evaluate_protocol
from pydantic import BaseModel, Field
from tqdm import tqdm
from witness_analysis.prover import Outcome, ProofTrace, prove_infeasible
from witness_analysis.solver import Verdict, check_nd_bound, find_witness_basis, solve_witness

logger = logging.getLogger(__name__)

SKIPPED = "SKIPPED"

SWEEP_COLUMNS = [
    "indices",
    "canonical",
    "bound_violated",
    "solver_verdict",
    "best_f",
    "prover_outcome",
    "basis_completeness",
    "success_probability",
]


class InconsistentVerdictError(RuntimeError):
    """The prover certified infeasibility but the solver found a witness. This is a bug, not a result."""


class InvalidSweepError(ValueError):
    """Sweep parameters must satisfy 2 <= N <= d <= SWEEP_MAX_D and limit >= 1."""


@dataclass(frozen=True)
class DecideOptions:
    restarts: int = settings.RESTARTS
    seed: int = settings.SEED
    max_iters: int = settings.MAX_ITERS
    skip_prover: bool = False
    skip_sim: bool = False
    progress: bool = False
    workers: int | None = None


class SolverSummary(BaseModel):
    verdict: Verdict
    best_f: float
    restarts: int
    seed: int
    best_phi: list[tuple[float, float]]
    note: str


class ProverSummary(BaseModel):
    outcome: str
    steps: int = 0
    trace_path: str | None = None


class BasisSummary(BaseModel):
    completeness: int
    method: str


class ProtocolSummary(BaseModel):
    success_probability: float
    worst_case_success: float


class VerdictReport(BaseModel):
    source: str
    d: int
    n_states: int
    direction: str
    bound_violated: bool
    solver: SolverSummary | None = None
    prover: ProverSummary | None = None
    basis: BasisSummary | None = None
    protocol: ProtocolSummary | None = None
    notes: list[str] = Field(default_factory=list)
    trace_text: str | None = Field(default=None, exclude=True)

    @property
    def decided(self) -> bool:
        """Bound violated, witness found or infeasibility certified."""
        if self.bound_violated:
            return True
        if self.solver is not None and self.solver.verdict is Verdict.WITNESS_FOUND:
            return True
        return self.prover is not None and self.prover.outcome == Outcome.INFEASIBLE


def _first_party_dim(ss: StateSet) -> int:
    return ss.dA if ss.receiver_side is Side.B else ss.dB


def _is_phi_plus(ss: StateSet) -> bool:
    return ss.dA == ss.dB and bool(
        np.allclose(ss.base.amplitudes, phi_plus(ss.dA).amplitudes, rtol=0, atol=settings.EPS_NORM)
    )


def decide_state_set(ss: StateSet, options: DecideOptions, source: str = "") -> VerdictReport:
    """Runs the whole pipeline on an oriented state set (transpose_set already applied for BtoA).

    :raises InconsistentVerdictError: prover INFEASIBLE together with solver WITNESS_FOUND.
    """
    report = VerdictReport(
        source=source,
        d=ss.receiver_dim,
        n_states=ss.n_states,
        direction=str(ss.direction),
        bound_violated=check_nd_bound(ss),
    )
    if report.bound_violated:
        report.notes.append(
            f"N = {ss.n_states} exceeds the measuring dimension {ss.receiver_dim}: not perfectly distinguishable"
        )
        logger.info("%s: N > d, pipeline stops", source)
        return report

    witness = solve_witness(
        ss,
        restarts=options.restarts,
        seed=options.seed,
        max_iters=options.max_iters,
        stop_on_witness=True,
        workers=options.workers,
        progress=options.progress,
    )
    report.solver = SolverSummary(
        verdict=witness.verdict,
        best_f=witness.best_f,
        restarts=witness.restarts,
        seed=witness.seed,
        best_phi=[(float(z.real), float(z.imag)) for z in witness.best_phi],
        note=witness.note,
    )

    if options.skip_prover or ss.weyl_indices is None or ss.n_states < 2:
        report.prover = ProverSummary(outcome=SKIPPED)
    else:
        trace = prove_infeasible(ss.weyl_indices)
        report.prover = ProverSummary(outcome=str(trace.outcome), steps=len(trace.steps))
        report.trace_text = trace.to_text()

    if report.prover.outcome == Outcome.INFEASIBLE and witness.verdict is Verdict.WITNESS_FOUND:
        raise InconsistentVerdictError(
            f"{source}: prover certified INFEASIBLE but the solver found a witness with f = {witness.best_f:.3e}"
        )

    if witness.verdict is Verdict.WITNESS_FOUND and not options.skip_sim:
        basis = find_witness_basis(ss, restarts=options.restarts, seed=options.seed, max_iters=options.max_iters)
        report.basis = BasisSummary(completeness=basis.completeness, method=basis.method)
        if basis.completeness == ss.receiver_dim and _is_phi_plus(ss):
            transcript = evaluate_protocol(ss, build_protocol(ss, basis))
            report.protocol = ProtocolSummary(
                success_probability=transcript.success_probability,
                worst_case_success=transcript.worst_case_success,
            )
        elif basis.completeness < ss.receiver_dim:
            report.notes.append(
                f"only {basis.completeness} of {ss.receiver_dim} orthonormal witnesses found; "
                "a lone witness is necessary for one-way distinguishability, not sufficient"
            )

    report.notes.extend(_applicability_notes(ss, report))
    return report


def _applicability_notes(ss: StateSet, report: VerdictReport) -> list[str]:
    notes = []
    no_witness = report.solver is not None and report.solver.verdict is Verdict.NO_WITNESS_FOUND
    certified = report.prover is not None and report.prover.outcome == Outcome.INFEASIBLE
    if _first_party_dim(ss) == 2 and (no_witness or certified):
        if certified:
            notes.append(
                "first party is a qubit: with no witness, LOCC protocols started by that party fail "
                "even with two-way communication"
            )
        else:
            notes.append(
                "first party is a qubit: if no witness exists, two-way LOCC protocols started by that party fail too"
            )
    if commutation_defect(ss) <= settings.EPS_UNIT:
        notes.append("the unitaries commute: a witness φ for this direction gives the witness conj(φ) for the other")
    if no_witness and not certified and report.solver is not None:
        notes.append(report.solver.note)
    return notes


def canonical_indices(indices: Sequence[WeylIndex]) -> tuple[WeylIndex, ...]:
    """Left-multiplies every unitary by U_first† (moving the first index to (0, 0)), then sorts."""
    first = indices[0]
    return tuple(sorted(weyl_product_index(first, idx) for idx in indices))


def format_indices(indices: Sequence[WeylIndex]) -> str:
    return ";".join(str(idx) for idx in indices)


def _sweep_row(report: VerdictReport) -> dict[str, object]:
    solver = report.solver
    return {
        "bound_violated": report.bound_violated,
        "solver_verdict": str(solver.verdict) if solver is not None else SKIPPED,
        "best_f": solver.best_f if solver is not None else np.nan,
        "prover_outcome": report.prover.outcome if report.prover is not None else SKIPPED,
        "basis_completeness": report.basis.completeness if report.basis is not None else 0,
        "success_probability": report.protocol.success_probability if report.protocol is not None else np.nan,
    }


def sweep(
    d: int,
    n: int,
    options: DecideOptions,
    *,
    limit: int | None = None,
    canonical: bool = True,
) -> pd.DataFrame:
    """One row per N-subset of the d² Weyl indices, in lexicographic order of the sorted index lists.

    With `canonical`, the pipeline runs once per canonical form and every subset sharing it reuses the verdict.

    :raises InvalidSweepError: parameters out of range.
    """
    if not 2 <= n <= d <= settings.SWEEP_MAX_D:
        raise InvalidSweepError(f"need 2 <= N <= d <= {settings.SWEEP_MAX_D}, got d={d} N={n}")
    if limit is not None and limit < 1:
        raise InvalidSweepError(f"limit must be >= 1, got {limit}")

    all_indices = [WeylIndex(a, b, d) for a in range(d) for b in range(d)]
    subsets = list(itertools.islice(itertools.combinations(all_indices, n), limit))
    keys = [canonical_indices(subset) if canonical else subset for subset in subsets]
    unique = list(dict.fromkeys(keys))
    logger.info("sweep d=%d N=%d: %d subsets, %d distinct runs", d, n, len(subsets), len(unique))

    # The pool parallelises over subsets, so each solver runs single-threaded.
    row_options = DecideOptions(
        restarts=options.restarts,
        seed=options.seed,
        max_iters=options.max_iters,
        skip_prover=options.skip_prover,
        skip_sim=options.skip_sim,
        workers=1,
    )

    def run(key: tuple[WeylIndex, ...]) -> dict[str, object]:
        return _sweep_row(decide_state_set(make_weyl_state_set(key), row_options, format_indices(key)))

    with ThreadPoolExecutor(max_workers=options.workers or settings.THREADS) as pool:
        results = list(
            tqdm(
                pool.map(run, unique),
                total=len(unique),
                desc=f"🧮 Sweep d={d} N={n}",
                unit="set",
                disable=not options.progress,
            )
        )
    verdicts = dict(zip(unique, results, strict=True))
    rows = [
        {"indices": format_indices(subset), "canonical": format_indices(key), **verdicts[key]}
        for subset, key in zip(subsets, keys, strict=True)
    ]
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def trace_for(ss: StateSet) -> ProofTrace:
    """Proof trace for a Weyl-labelled oriented state set."""
    if ss.weyl_indices is None:
        raise ValueError("trace needs Weyl-typed unitaries; matrix-typed sets have no condition table")
    return prove_infeasible(ss.weyl_indices)
