# src/config.py
import logging
import os

from dotenv import load_dotenv

load_dotenv()

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

CONTACTFLOW_LOG = os.getenv("CONTACTFLOW_LOG", "warn").strip().lower()
if CONTACTFLOW_LOG not in LOG_LEVELS:
    print(f"Warning: CONTACTFLOW_LOG='{CONTACTFLOW_LOG}' is not one of {sorted(LOG_LEVELS)}. Using 'warn'.")
    CONTACTFLOW_LOG = "warn"

# --- Root solver ---
RESIDUAL_TOL = 1e-12
MAX_ITER = 200
BRACKET_XTOL = 1e-8
DEGENERATE_DX_DY = 1e-9
CRITICAL_BAND = 1e-12

# --- Curves ---
DEFAULT_Y_MIN = -0.999
DEFAULT_Y_MAX = 0.999
DEFAULT_Y_POINTS = 2001
MIN_SPLIT_POINTS = 512
RESIDUAL_INTERIOR_Y = 0.9
RESIDUAL_STEP_FACTOR = 10.0

# --- Integrator ---
DEFAULT_STEP = 1e-3
DEFAULT_T_MAX = 200.0
TERMINAL_TOL = 1e-13
TERMINAL_WINDOW = 10
BLOWUP_BOUND = 1e6

# --- Experiments ---
ANALYSIS_STEP = 1e-2
ANALYSIS_T_MAX = 500.0
REMOVED_PLANE_MARGIN = 0.02
LYAPUNOV_REL_TOL = 1e-12

FLOAT_FORMAT = ".17g"


def configure_logging(level_name: str | None = None) -> None:
    """Installs a stderr handler at the level named by CONTACTFLOW_LOG."""
    name = (level_name or CONTACTFLOW_LOG).lower()
    level = LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)
