import os
from pathlib import Path

from dotenv import load_dotenv


class InvalidThreadCountError(Exception):
    """LOCCLAB_THREADS must be a positive integer. Fix it in your .env file or environment."""


def _read_thread_count() -> int:
    raw = os.getenv("LOCCLAB_THREADS")
    if raw is None or not raw.strip():
        return os.cpu_count() or 1
    try:
        threads = int(raw)
    except ValueError as e:
        raise InvalidThreadCountError from e
    if threads < 1:
        raise InvalidThreadCountError
    return threads


class Config:
    # Find the Workspace Root (Climb up from this file)
    # config.py -> core -> src -> core -> packages -> locclab
    ROOT_DIR = Path(__file__).resolve().parent.parent.parent.parent.parent

    # Data directories
    DATA_DIR = ROOT_DIR / "data"
    STATE_SETS_DIR = DATA_DIR / "state_sets"
    RESULTS_DIR = DATA_DIR / "results"

    # Load .env file into environment variables
    load_dotenv()
    THREADS = _read_thread_count()
    LOG_LEVEL = os.getenv("LOCCLAB_LOG_LEVEL", "WARNING").upper()

    # Tolerances
    EPS_NORM = 1e-9
    EPS_ORTH = 1e-9
    EPS_UNIT = 1e-9  # max-entry norm of U†U - I
    EPS_FEAS = 1e-18  # on f, i.e. 1e-9 per residual
    DELTA_HULL = 1e-7

    # Witness search defaults
    RESTARTS = 200
    MAX_ITERS = 2000
    SEED = 0
    ARMIJO_SHRINK = 0.5
    ARMIJO_INITIAL_STEP = 1.0
    ARMIJO_C1 = 1e-4
    BASIS_PENALTY = 10.0
    BASIS_ATTEMPTS = 8

    # Largest dimension the sweep accepts
    SWEEP_MAX_D = 8

    @classmethod
    def setup_folders(cls) -> None:
        """Call this once to ensure the results directory exists."""
        for path in [cls.STATE_SETS_DIR, cls.RESULTS_DIR]:
            path.mkdir(parents=True, exist_ok=True)


# Create a singleton instance for easy import
settings = Config()
