import math

import numpy as np
import pytest

from abcdkit.conf.conf import CONFIG
from abcdkit.data.datamodel import AnchorCondition, ExperimentDataset, ParticipantRecord
from abcdkit.data.schema import DatasetSchema, OutcomeSpec

SCHEMA = DatasetSchema(
    condition_col="anchor",
    belief_col="belief",
    outcomes=(OutcomeSpec("y"),),
    id_col="id",
    covariate_cols=("w",),
)


@pytest.fixture(autouse=True)
def isolated_config(tmp_path_factory, monkeypatch):
    monkeypatch.setenv("ABCD_DATA", str(tmp_path_factory.mktemp("abcd_data")))
    monkeypatch.delenv("ABCD_SEED", raising=False)
    CONFIG.reset()
    yield
    CONFIG.reset()


def build_dataset(anchors, beliefs, outcomes=None, covariates=None, schema=SCHEMA):
    """Dataset from parallel arrays; None or NaN anchors are the no-anchor condition."""
    records = []
    for i, (anchor, belief) in enumerate(zip(anchors, beliefs)):
        if anchor is None or (isinstance(anchor, float) and math.isnan(anchor)):
            condition = AnchorCondition.none()
        else:
            condition = AnchorCondition.at(anchor)
        records.append(
            ParticipantRecord(
                id=f"r{i}",
                condition=condition,
                belief=float(belief),
                outcomes={"y": float(outcomes[i])} if outcomes is not None else {},
                covariates={"w": float(covariates[i])} if covariates is not None else {},
            )
        )
    return ExperimentDataset(records=tuple(records), schema=schema)


@pytest.fixture
def dataset_factory():
    return build_dataset


@pytest.fixture
def binary_dataset():
    """200 participants, anchors 10/90; a confounder moves both belief and outcome."""
    rng = np.random.default_rng(7)
    n = 200
    high = rng.permutation(np.repeat([0, 1], n // 2))
    confounder = rng.normal(size=n)
    beliefs = 40 + 20 * high + 5 * confounder + rng.normal(scale=3, size=n)
    outcomes = 1 + 0.5 * beliefs + 2 * confounder + rng.normal(size=n)
    anchors = np.where(high == 1, 90.0, 10.0)
    return build_dataset(anchors, beliefs, outcomes, confounder)
