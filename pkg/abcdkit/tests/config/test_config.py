from pathlib import Path
from textwrap import dedent

import pytest

from abcdkit.conf.conf import CONFIG, Config, get_default_seed
from abcdkit.config import get_abcd_config_path, get_env_seed
from abcdkit.errors import ConfigError


def test_config(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(
        dedent(
            """
    [iv]
    f_threshold = 12.5
    default_coding = "dummies"
    """
        )
    )

    cfg = Config(path)
    assert cfg._data is None
    cfg.data  # noqa
    assert cfg._data

    assert cfg.get("iv", "f_threshold") == 12.5
    assert cfg.get("iv", "default_coding") == "dummies"


def test_missing_keys_fall_back_to_defaults(tmp_path):
    defaults = tmp_path / "defaults.toml"
    defaults.write_text(
        dedent(
            """
    [design]
    degree = 3
    min_baseline = 20
    """
        )
    )
    user = tmp_path / "config.toml"
    user.write_text(
        dedent(
            """
    [design]
    degree = 2
    """
        )
    )

    old_defaults = Config._DEFAULTS
    Config._DEFAULTS = defaults
    try:
        cfg = Config(user)
        assert cfg.get("design", "degree") == 2
        assert cfg.get("design", "min_baseline") == 20
    finally:
        Config._DEFAULTS = old_defaults


def test_user_config_initialized_from_defaults():
    path = get_abcd_config_path()
    assert not path.exists()

    assert CONFIG.get("iv", "f_threshold") == 10.0
    assert path.exists()
    assert path.read_text() == Config._DEFAULTS.read_text()


def test_shipped_defaults():
    assert Config.get_default("diagnostics", "lag_bins") == "5-9,10-14"
    assert Config.get_default("curves", "kde_points") == 512
    assert Config.get_default("curves", "smoother_points") == 101
    assert Config.get_default("iv", "default_coding") == "auto"


def test_unknown_default_key_raises():
    with pytest.raises(ConfigError):
        Config(Config._DEFAULTS).get("iv", "nonexistent")


def test_typed_getters(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(
        dedent(
            """
    [curves]
    kde_points = "many"
    smoother_points = 51
    [iv]
    f_threshold = 12
    """
        )
    )
    cfg = Config(path)
    assert cfg.get_int("curves", "smoother_points") == 51
    assert cfg.get_float("iv", "f_threshold") == 12.0
    assert cfg.get_float("diagnostics", "placebo_alpha") == 0.05
    with pytest.raises(ConfigError):
        cfg.get_int("curves", "kde_points")
    with pytest.raises(ConfigError):
        cfg.get_float("curves", "kde_points")


def test_invalid_toml(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text("[iv\nf_threshold = ")
    with pytest.raises(ConfigError):
        Config(path).get("iv", "f_threshold")


@pytest.mark.parametrize(
    "raw, expected",
    (
        ("42", 42),
        ("", None),
        ("not-a-number", None),
    ),
)
def test_env_seed(monkeypatch, raw, expected):
    monkeypatch.setenv("ABCD_SEED", raw)
    assert get_env_seed() == expected


def test_default_seed_prefers_env(monkeypatch):
    assert get_default_seed() == 20240723
    monkeypatch.setenv("ABCD_SEED", "7")
    assert get_default_seed() == 7


def test_data_path_follows_env(monkeypatch, tmp_path):
    monkeypatch.setenv("ABCD_DATA", str(tmp_path))
    assert get_abcd_config_path() == Path(tmp_path) / "config.toml"
