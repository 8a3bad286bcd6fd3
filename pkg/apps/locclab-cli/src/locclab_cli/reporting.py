"""Text and CSV renderings of verdict reports and sweep tables."""

import logging
from pathlib import Path

import pandas as pd

from locclab_cli.pipeline import VerdictReport

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def report_to_text(report: VerdictReport) -> str:
    lines = [
        f"source: {report.source}",
        f"d: {report.d}",
        f"states: {report.n_states}",
        f"direction: {report.direction}",
        f"bound_violated: {str(report.bound_violated).lower()}",
    ]
    if report.solver is not None:
        lines += [
            f"solver: {report.solver.verdict}",
            f"best_f: {report.solver.best_f:.17g}",
            f"restarts: {report.solver.restarts}",
            f"seed: {report.solver.seed}",
        ]
    if report.prover is not None:
        lines.append(f"prover: {report.prover.outcome}")
        if report.prover.trace_path is not None:
            lines.append(f"trace: {report.prover.trace_path}")
    if report.basis is not None:
        lines.append(f"basis_completeness: {report.basis.completeness} ({report.basis.method})")
    if report.protocol is not None:
        lines += [
            f"success_probability: {report.protocol.success_probability:.17g}",
            f"worst_case_success: {report.protocol.worst_case_success:.17g}",
        ]
    lines += [f"note: {note}" for note in report.notes]
    return "\n".join(lines) + "\n"


def report_to_frame(report: VerdictReport) -> pd.DataFrame:
    row = {
        "source": report.source,
        "d": report.d,
        "n_states": report.n_states,
        "direction": report.direction,
        "bound_violated": report.bound_violated,
        "solver_verdict": str(report.solver.verdict) if report.solver is not None else "",
        "best_f": report.solver.best_f if report.solver is not None else None,
        "prover_outcome": report.prover.outcome if report.prover is not None else "",
        "basis_completeness": report.basis.completeness if report.basis is not None else None,
        "success_probability": report.protocol.success_probability if report.protocol is not None else None,
        "worst_case_success": report.protocol.worst_case_success if report.protocol is not None else None,
    }
    return pd.DataFrame([row])


def frame_to_csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def frame_to_text(df: pd.DataFrame) -> str:
    return df.to_string(index=False, float_format=lambda x: f"{x:.6g}") + "\n"


def render_report(report: VerdictReport, fmt: str) -> str:
    return frame_to_csv(report_to_frame(report)) if fmt == "csv" else report_to_text(report)


def render_sweep(df: pd.DataFrame, fmt: str) -> str:
    return frame_to_csv(df) if fmt == "csv" else frame_to_text(df)


def emit(text: str, out: Path | None) -> None:
    """Writes to `out` (creating parent folders) or to stdout."""
    if out is None:
        print(text, end="")
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    logger.info("wrote %s", out)
