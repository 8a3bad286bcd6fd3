"""script reproduces the three impossibility examples and the positive controls end to end."""

from core.config import settings
from core.spec_schema import load_state_set
from locclab_cli.pipeline import DecideOptions, decide_state_set
from witness_analysis.prover import Outcome, ProofTrace
from witness_analysis.replay import replay_trace

EXAMPLES = ["example1_d4.json", "example2_d5.json", "example3_d6.json", "example2_d5_btoa.json"]
CONTROLS = ["bell_pair_d2.json", "pure_shift_d4.json", "identity_and_z_d2_matrix.json", "five_states_d4.json"]


def main() -> None:
    """Runs decide on every shipped example, writes the proof traces and replays them."""
    print("📁 Setting up data directories...")
    settings.setup_folders()
    options = DecideOptions(progress=True)

    print("🔒 Impossibility examples...")
    for name in EXAMPLES:
        _, ss = load_state_set(settings.STATE_SETS_DIR / name)
        report = decide_state_set(ss, options, source=name)
        assert report.solver is not None and report.prover is not None
        solver, prover = report.solver, report.prover
        print(f"   {name}: solver {solver.verdict} (best f {solver.best_f:.3e}), prover {prover.outcome}")
        if report.trace_text is not None and ss.weyl_indices is not None:
            trace_path = settings.RESULTS_DIR / name.replace(".json", ".trace")
            trace_path.write_text(report.trace_text)
            replay_trace(ss.weyl_indices, ProofTrace.from_text(report.trace_text))
            print(f"   ↳ trace replayed and saved to {trace_path}")
        if report.prover.outcome != Outcome.INFEASIBLE:
            print(f"   ⚠️ {name} was not certified")

    print("✅ Positive controls...")
    for name in CONTROLS:
        _, ss = load_state_set(settings.STATE_SETS_DIR / name)
        report = decide_state_set(ss, options, source=name)
        if report.bound_violated:
            print(f"   {name}: N > d, indistinguishable outright")
            continue
        success = report.protocol.success_probability if report.protocol is not None else float("nan")
        assert report.solver is not None
        print(f"   {name}: solver {report.solver.verdict}, protocol success {success:.12f}")

    print(f"🏁 Finished! Traces are in {settings.RESULTS_DIR}")


if __name__ == "__main__":
    main()
