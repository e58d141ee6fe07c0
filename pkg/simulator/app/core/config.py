import os
from pathlib import Path

from dotenv import load_dotenv

# Simulator root (simulator/) – load .env here first so it works regardless of cwd
SIMULATOR_ROOT = Path(__file__).resolve().parents[2]
DATA_DIR = SIMULATOR_ROOT / "data"
_env_path = SIMULATOR_ROOT / ".env"

load_dotenv(_env_path, override=False)
if Path.cwd() / ".env" != _env_path:
    load_dotenv(Path.cwd() / ".env", override=False)


def _read_env(key_name: str) -> str | None:
    """Return a stripped env value, treating empty strings and stray quotes as missing."""
    raw = os.environ.get(key_name)
    value = (raw or "").strip().strip("'\"").strip()
    return value or None


def _read_int(key_name: str, default: int, minimum: int = 1) -> int:
    raw = _read_env(key_name)
    if raw is None:
        return default
    try:
        return max(minimum, int(raw))
    except ValueError:
        return default


# Default output directory for run / sweep / solve when --out is not given
OUTPUT_DIR = Path(_read_env("NASH_OUTPUT_DIR") or "runs")

LOG_LEVEL = (_read_env("NASH_LOG_LEVEL") or "INFO").upper()

# Process-pool size for multi-seed sweeps
SWEEP_WORKERS = _read_int("NASH_SWEEP_WORKERS", os.cpu_count() or 1)

BUNDLED_SCENARIOS = {
    "cournot": DATA_DIR / "cournot.toml",
    "quadratic": DATA_DIR / "quadratic.toml",
}
