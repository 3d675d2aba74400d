"""User configuration: a TOML profile layered over the shipped defaults."""

import sys
from pathlib import Path
from typing import Any, Optional

import toml

from abcdkit.config import get_abcd_config_path, get_env_seed
from abcdkit.errors import ConfigError
from abcdkit.logger import logger as abcd_logger

logger = abcd_logger.getChild("conf")


class Config:
    """Lazily loaded TOML profile.

    Keys missing from a user profile are looked up in the shipped defaults; keys missing
    from the defaults are a ConfigError.
    """

    _DEFAULTS = Path(__file__).parent / "abcd_config_defaults.toml"

    def __init__(self, path: Optional[Path] = None):
        is_default = False
        if not path:
            path, is_default = self._locate()
        self._path = Path(path)
        self.is_default = is_default or self._path == self._DEFAULTS
        self._data: Optional[dict] = None

    def _locate(self):
        conf = get_abcd_config_path()
        try:
            if conf.exists():
                return conf, False
        except PermissionError:
            logger.warning(f"cannot stat {conf}; using the built-in defaults")
            return self._DEFAULTS, True

        try:
            conf.parent.mkdir(parents=True, exist_ok=True)
            conf.write_text(self._DEFAULTS.read_text())
            logger.info(f"initialized default user config in {conf}.")
            return conf, False
        except OSError:
            logger.exception(f"could not write a default config to {conf}; create it manually")
        return self._DEFAULTS, True

    def _load(self):
        try:
            with self._path.open() as f:
                self._data = toml.load(f)
        except toml.TomlDecodeError as e:
            raise ConfigError(f"{self._path} is not valid TOML: {e}")
        except PermissionError:
            logger.error(f"Unable to open config file at {self._path}.")
            raise

    @property
    def data(self) -> dict:
        if self._data is None:
            self._load()
        return self._data

    def pprint(self):
        try:
            print(self._path.read_text())
        except FileNotFoundError:
            sys.exit(f"No config file found at {self._path}.")

    def get(self, *path: str) -> Any:
        data = self.data
        for item in path:
            try:
                data = data[item]
            except (KeyError, TypeError):
                if self.is_default:
                    raise ConfigError(f"no {'.'.join(path)} in the default config")
                logger.info(f"{'.'.join(path)} not in {self._path}; using the default")
                return self.get_default(*path)
        return data

    def get_float(self, *path: str) -> float:
        value = self.get(*path)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{'.'.join(path)} must be a number, not {value!r}")
        return float(value)

    def get_int(self, *path: str) -> int:
        value = self.get(*path)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{'.'.join(path)} must be an integer, not {value!r}")
        return value

    @staticmethod
    def get_default(*path: str) -> Any:
        return Config(Config._DEFAULTS).get(*path)


def get_default_seed() -> int:
    """Seed used when none is passed: ABCD_SEED, then ``[simulate] seed``."""
    env_seed = get_env_seed()
    if env_seed is not None:
        return env_seed
    return CONFIG.get_int("simulate", "seed")


def print_defaults():
    """Print abcdkit's built-in default config profile."""
    Config(Config._DEFAULTS).pprint()


def print_current_config():
    """Show the current config.

    Unless you have a `~/.config/abcdkit/config.toml` file, this will be the default config.
    """
    CONFIG.pprint()


class _LazyConfig:
    """Defers locating the user config until first use."""

    def __init__(self):
        self._config: Optional[Config] = None

    def _resolve(self) -> Config:
        if self._config is None:
            self._config = Config()
        return self._config

    def reset(self):
        self._config = None

    def __getattr__(self, item):
        return getattr(self._resolve(), item)


CONFIG = _LazyConfig()
