"""abcdkit configuration module."""

import os
from pathlib import Path
from typing import Optional

from abcdkit.logger import logger

ABCD_PROJECT_ROOT = Path(__file__).parent.parent


def get_abcd_data_path() -> Path:
    """Get the path to the abcdkit data root.

    That's where we store the user config.
    """
    if data := os.getenv("ABCD_DATA"):
        return Path(data)

    return Path("~").expanduser().absolute() / ".config" / "abcdkit"


def get_abcd_config_path() -> Path:
    """Get the path to the abcdkit config file.

    It needs not exist.
    """
    return get_abcd_data_path() / "config.toml"


def get_env_seed() -> Optional[int]:
    """Seed from the ABCD_SEED envvar, if set."""
    raw = os.getenv("ABCD_SEED")
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"ignoring ABCD_SEED={raw!r}: not an integer.")
        return None
