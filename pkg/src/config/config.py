import os
from pathlib import Path
from dotenv import load_dotenv
from joblib import cpu_count

# =======================
# === CONFIGURATION   ===
# =======================

# Load optional overrides from a .env file in the working directory
load_dotenv(Path(".env"))

# Off-pulse count scanned by the solver (m = 1..DEFAULT_M_MAX)
DEFAULT_M_MAX = 8

# Bisection abscissa tolerance on tau3
DEFAULT_TOL = 1e-12

# Number of Roland-Cerf resonances listed by default
DEFAULT_K_MAX = 10

# Default Rabi frequency; all physical times are reported in units of 1/Omega
DEFAULT_OMEGA_RABI = 1.0

# tau3 scan: grid size, distance kept from the interval ends, bisection cap
SCAN_POINTS = 2000
SCAN_EPS = 1e-9
MAX_BISECTIONS = 200

# Default resonance scans start where 1 - cos(omega tau3) first reaches this
SCAN_A_MIN = 1e-10

# A bracketed root is kept only if |Im a_y| falls below this after bisection
ROOT_ACCEPT = 1e-10

# Candidates closer than this in total duration are considered tied
TIE_TOL = 1e-9

# |A|, |B| below this count as zero in the optimality relation
BRANCH_EPS = 1e-14

# ODE tolerances for the Schrodinger integrations
ODE_RTOL = 1e-10
ODE_ATOL = 1e-12

# Minimum number of uniformly spaced trajectory samples
MIN_SAMPLES = 400

# log10(1 - F) is floored here so perfect transfer stays finite
FIDELITY_FLOOR = -16.0

# Field angles closer than this to 0 or pi are rejected (detuning diverges)
ANGLE_EDGE = 1e-9

# Output folders (overridable through the environment)
OUTPUT_DIR = Path(os.getenv("APFORGE_OUTPUT_DIR", "output"))
LOGS = Path(os.getenv("APFORGE_LOG_DIR", "logs"))


def get_thread_count() -> int:
    """Number of sweep workers: every core, capped by APFORGE_THREADS when set.

    Returns:
        int: Number of worker processes (at least 1).
    """
    cores = max(1, cpu_count())

    # Re-read on every call so tests and shells can change it at runtime
    raw = os.getenv("APFORGE_THREADS")
    if raw is None:
        return cores

    try:
        return max(1, min(int(raw), cores))
    except ValueError:
        # Malformed caps are ignored
        return cores
