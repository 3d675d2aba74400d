from importlib import metadata
from importlib.metadata import PackageNotFoundError

import toml

from abcdkit.config import ABCD_PROJECT_ROOT


def print_abcd_version():
    """Print the currently installed abcdkit version and exit."""
    print(f"abcdkit {get_abcd_version()}")


def get_abcd_version():
    try:
        abcd_version = metadata.version("abcdkit")
    except PackageNotFoundError:
        # not installed but being used from sources:
        pyproject = ABCD_PROJECT_ROOT / "pyproject.toml"
        if pyproject.exists():
            abcd_version = (
                toml.load(pyproject).get("project", {}).get("version", "<unknown version>")
            )
        else:
            abcd_version = "<unknown version>"
    return abcd_version


VERSION = get_abcd_version()
