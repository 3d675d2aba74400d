import json
import math

import numpy as np
import pytest

from abcdkit.errors import ConfigError, DomainError
from abcdkit.simulate.dgp import (
    CONFOUNDER,
    OUTCOME,
    SimConfig,
    anchor_response,
    calibrate_tau,
    decay_apply,
    expected_anchoring_effect,
    generate_placebo_panel,
    generate_population,
    plausibility,
    simulate_waves,
)
from abcdkit.simulate.rng import stable_key, substream


def test_anchor_response():
    assert anchor_response(40, 60, 0.5, (0, 100)) == 50.0
    assert anchor_response(40, 60, 0.0, (0, 100)) == 40.0
    assert anchor_response(40, 60, 1.0, (0, 100)) == 60.0
    np.testing.assert_allclose(anchor_response([40, 80], [60, 0], 0.5, (0, 100)), [50, 40])
    with pytest.raises(DomainError):
        anchor_response(40, 60, 1.5, (0, 100))


def test_plausibility_tapers_outside_the_window():
    np.testing.assert_allclose(
        plausibility([-60, -25, 0, 50, 100, 125, 150, 1e6], (0, 100)),
        [0, 0.5, 1, 1, 1, 0.5, 0, 0],
    )
    # implausible anchors do not pull
    assert anchor_response(40, 1e6, 0.8, (0, 100)) == 40.0


def test_decay_apply():
    assert decay_apply(2.0, 7.2, 7.2) == pytest.approx(2.0 / math.e, abs=1e-12)
    assert decay_apply(2.0, 0, 7.2) == 2.0
    with pytest.raises(DomainError):
        decay_apply(1.0, -1, 7.2)
    with pytest.raises(DomainError):
        decay_apply(1.0, 1, 0.0)


def test_calibrate_tau():
    tau = calibrate_tau(4.71 / 16.09, 8.8)
    assert round(tau, 1) == 7.2
    assert math.exp(-8.8 / tau) == pytest.approx(4.71 / 16.09, abs=1e-12)
    for ratio in (0.0, 1.0, 1.5):
        with pytest.raises(DomainError):
            calibrate_tau(ratio, 8.8)
    with pytest.raises(DomainError):
        calibrate_tau(0.5, 0)


def test_expected_anchoring_effect():
    assert expected_anchoring_effect(SimConfig()) == pytest.approx(48.0)
    assert expected_anchoring_effect(SimConfig(anchors=(30, 70))) == pytest.approx(24.0)
    # the high anchor sits at the far edge of the taper
    assert expected_anchoring_effect(SimConfig(anchors=(10, 150))) == pytest.approx(24.0)


def test_population_is_deterministic():
    cfg = SimConfig(n=50, seed=123)
    assert generate_population(cfg).records == generate_population(cfg).records
    other = generate_population(cfg.with_overrides(seed=124))
    assert other.records != generate_population(cfg).records


def test_replicates_differ():
    cfg = SimConfig(n=50)
    (first,) = simulate_waves(cfg, replicate=0)
    (second,) = simulate_waves(cfg, replicate=1)
    assert not np.array_equal(first.beliefs, second.beliefs)


def test_population_layout():
    ds = generate_population(SimConfig(n=30, wave_days=(0, 9)))
    assert len(ds) == 60
    wave2 = ds.wave(2)
    assert {r.interview_day for r in wave2.records} == {9}
    assert wave2.ids == ds.wave(1).ids
    assert ds.schema.outcome_cols == [OUTCOME]
    assert CONFOUNDER in ds.records[0].covariates


def test_theta_moves_only_high_anchor_outcomes():
    cfg = SimConfig(n=200)
    (base,) = simulate_waves(cfg)
    (shifted,) = simulate_waves(cfg.with_overrides(theta=5.0))
    np.testing.assert_allclose(shifted.outcomes - base.outcomes, 5.0 * base.high())
    np.testing.assert_array_equal(shifted.beliefs, base.beliefs)


def test_no_anchor_arm():
    ds = generate_population(SimConfig(n=300, no_anchor=True))
    assert ds.has_no_anchor
    assert ds.anchor_levels() == [10.0, 90.0]
    no_anchor = ds.filter(lambda r: not r.condition.is_anchor)
    assert 50 < len(no_anchor) < 150


def test_placebo_panel_shares_the_confounder():
    panel = generate_placebo_panel(SimConfig(n=100), ("a", "b", "c"))
    assert list(panel) == ["a", "b", "c"]
    a, b = panel["a"], panel["b"]
    np.testing.assert_array_equal(a.column(CONFOUNDER), b.column(CONFOUNDER))
    assert not np.array_equal(a.anchors, b.anchors)
    with pytest.raises(ConfigError):
        generate_placebo_panel(SimConfig(n=10), ("a", "a"))


@pytest.mark.parametrize(
    "overrides",
    (
        {"n": 3},
        {"lam": 1.5},
        {"tau": 0.0},
        {"window": (5.0, 5.0)},
        {"anchors": (10.0, 10.0)},
        {"anchors": (-1.0, 10.0)},
        {"sigma_belief": -1.0},
        {"wave_days": (0, (9, 5))},
        {"wave_days": ()},
    ),
)
def test_invalid_configs(overrides):
    with pytest.raises(ConfigError):
        SimConfig(**overrides)


def test_config_from_json(tmp_path):
    path = tmp_path / "sim.json"
    path.write_text(json.dumps({"n": 80, "lambda": 0.3, "wave_days": [0, [5, 14]]}))
    cfg = SimConfig.from_json(path)
    assert (cfg.n, cfg.lam, cfg.wave_days) == (80, 0.3, (0, (5, 14)))
    assert SimConfig.from_dict(cfg.to_dict()) == cfg

    path.write_text(json.dumps({"sample_size": 80}))
    with pytest.raises(ConfigError):
        SimConfig.from_json(path)
    path.write_text("{")
    with pytest.raises(ConfigError):
        SimConfig.from_json(path)
    with pytest.raises(ConfigError):
        SimConfig.from_json(tmp_path / "missing.json")


def test_stable_keys():
    assert stable_key("") == 0xCBF29CE484222325
    assert stable_key("a") == 0xAF63DC4C8601EC8C
    assert stable_key(7) == 7
    assert stable_key(-1) == 0xFFFFFFFFFFFFFFFF


def test_substreams():
    draw = substream(1, 0, "baseline").normal(size=5)
    np.testing.assert_array_equal(draw, substream(1, 0, "baseline").normal(size=5))
    assert not np.array_equal(draw, substream(1, 0, "anchor").normal(size=5))
    assert not np.array_equal(draw, substream(1, 1, "baseline").normal(size=5))
    assert not np.array_equal(draw, substream(2, 0, "baseline").normal(size=5))


@pytest.mark.slow
def test_calibrated_decay_reproduces_the_lagged_ratio():
    tau = calibrate_tau(4.71 / 16.09, 8.8)
    cfg = SimConfig(tau=tau, wave_days=(0, 9), seed=31)
    instantaneous, lagged = [], []
    for replicate in range(1000):
        first, second = simulate_waves(cfg, replicate)
        high = first.high()
        instantaneous.append(first.beliefs[high].mean() - first.beliefs[~high].mean())
        lagged.append(second.beliefs[high].mean() - second.beliefs[~high].mean())
    assert np.mean(lagged) / np.mean(instantaneous) == pytest.approx(0.293, abs=0.05)
