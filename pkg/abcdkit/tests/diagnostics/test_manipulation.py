import numpy as np
import pytest

from abcdkit.diagnostics.manipulation import manipulation_check
from abcdkit.estimate.iv import GateVerdict


def test_strong_manipulation(binary_dataset):
    check = manipulation_check(binary_dataset, unit="pp")
    assert check.verdict is GateVerdict.passed
    assert check.text.startswith("belief: anchoring effect ")
    assert " pp***" in check.text
    assert check.text.endswith("passes the F > 10 criterion")

    out = check.to_dict()
    assert out["verdict"] == "pass"
    assert out["threshold"] == 10.0
    assert out["effect"] == check.effect.effect


def test_weak_manipulation(dataset_factory):
    rng = np.random.default_rng(2)
    base = rng.normal(50, 10, size=30)
    ds = dataset_factory([10.0] * 30 + [90.0] * 30, np.concatenate([base, base + 1.0]))
    check = manipulation_check(ds)
    assert check.verdict is GateVerdict.failed
    assert check.text.endswith("does not pass the F > 10 criterion")
    assert check.effect.effect == pytest.approx(1.0)


def test_custom_threshold(binary_dataset):
    f = manipulation_check(binary_dataset).effect.f
    check = manipulation_check(binary_dataset, threshold=f + 1)
    assert not check.verdict
    assert f"F > {f + 1:g}" in check.text
