"""Selectiveness of anchoring treatments across co-administered experiments."""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from abcdkit.data.datamodel import BELIEF, ExperimentDataset
from abcdkit.errors import AlignmentError, CodingError
from abcdkit.estimate.iv import LOW, InstrumentCoding, code_instruments
from abcdkit.estimate.linreg import DesignMatrix, ols_fit, stars
from abcdkit.logger import logger as abcd_logger

logger = abcd_logger.getChild("placebo")

PLACEBO_ALPHA = 0.05


@dataclass(frozen=True)
class PlaceboExperiment:
    """One experiment of a round: its belief and the anchor conditions that target it."""

    name: str
    dataset: ExperimentDataset
    belief: str = BELIEF
    coding: Optional[InstrumentCoding] = None

    def resolved_coding(self) -> InstrumentCoding:
        if self.coding is not None:
            return self.coding
        if len(self.dataset.anchor_levels()) == 2:
            return InstrumentCoding.dummies(LOW)
        return InstrumentCoding.continuous()


@dataclass(frozen=True)
class PlaceboCell:
    belief: str
    treatment: str
    coefficient: float
    se: float
    p: float
    # the treatment targets this row's belief
    own: bool
    flagged: bool

    def to_dict(self) -> dict:
        return {
            "belief": self.belief,
            "treatment": self.treatment,
            "coefficient": self.coefficient,
            "se": self.se,
            "p": self.p,
            "stars": stars(self.p),
            "own": self.own,
            "flagged": self.flagged,
        }


@dataclass(frozen=True)
class PlaceboMatrix:
    rows: Tuple[str, ...]
    columns: Tuple[str, ...]
    cells: Dict[Tuple[str, str], PlaceboCell]
    n: Dict[str, int]
    adj_r2: Dict[str, float]
    alpha: float = PLACEBO_ALPHA

    def cell(self, belief: str, treatment: str) -> PlaceboCell:
        return self.cells[(belief, treatment)]

    def placebo_cells(self) -> List[PlaceboCell]:
        return [c for c in self.cells.values() if not c.own]

    def flagged(self) -> List[PlaceboCell]:
        return [c for c in self.placebo_cells() if c.flagged]

    def false_positive_share(self) -> float:
        cells = self.placebo_cells()
        return len([c for c in cells if c.flagged]) / len(cells) if cells else 0.0

    def to_dict(self) -> dict:
        return {
            "rows": list(self.rows),
            "columns": list(self.columns),
            "cells": [c.to_dict() for c in self.cells.values()],
            "n": dict(self.n),
            "adj_r2": dict(self.adj_r2),
            "alpha": self.alpha,
        }


def _align(experiments: Sequence[PlaceboExperiment]) -> List[ExperimentDataset]:
    if len(experiments) < 2:
        raise AlignmentError(
            f"placebo tests need at least two experiments, got {len(experiments)}"
        )
    names = [e.name for e in experiments]
    if len(set(names)) != len(names):
        raise AlignmentError(f"experiment names must be unique: {names}")

    ids = experiments[0].dataset.ids
    reference = set(ids)
    aligned = []
    for experiment in experiments:
        ds = experiment.dataset
        if set(ds.ids) != reference or len(ds) != len(ids):
            raise AlignmentError(
                f"experiment {experiment.name!r} is not measured on the same participants"
            )
        by_id = {r.id: r for r in ds.records}
        aligned.append(ds.with_records(by_id[i] for i in ids))
    return aligned


def placebo_matrix(
    experiments: Sequence[PlaceboExperiment], alpha: float = PLACEBO_ALPHA
) -> PlaceboMatrix:
    """Regress every experiment's belief on the treatment dummies of all experiments at once.

    Each row is a single multiple regression with a constant; the low-anchor condition of every
    experiment is the reference. Off-diagonal cells with ``p < alpha`` are flagged.
    """
    datasets = _align(experiments)

    treatments: Dict[str, np.ndarray] = {}
    owner: Dict[str, str] = {}
    mask = np.ones(len(datasets[0]), dtype=bool)
    for experiment, ds in zip(experiments, datasets):
        coding = experiment.resolved_coding()
        try:
            coded = code_instruments(ds, coding)
        except CodingError as e:
            raise CodingError(f"experiment {experiment.name!r}: {e}")
        mask &= coded.mask
        for label, column in coded.columns.items():
            name = f"{experiment.name}:{label}"
            treatments[name] = column
            owner[name] = experiment.name

    cells: Dict[Tuple[str, str], PlaceboCell] = {}
    n: Dict[str, int] = {}
    adj_r2: Dict[str, float] = {}
    for experiment, ds in zip(experiments, datasets):
        y = ds.column(experiment.belief)
        row_mask = mask & np.isfinite(y)
        X = DesignMatrix.from_columns({k: v[row_mask] for k, v in treatments.items()})
        fit = ols_fit(X, y[row_mask])
        n[experiment.name] = fit.n
        adj_r2[experiment.name] = fit.adj_r2
        for treatment in treatments:
            own = owner[treatment] == experiment.name
            p = fit.p_values[treatment]
            cells[(experiment.name, treatment)] = PlaceboCell(
                belief=experiment.name,
                treatment=treatment,
                coefficient=fit.coefficients[treatment],
                se=fit.std_errors[treatment],
                p=p,
                own=own,
                flagged=not own and p < alpha,
            )

    matrix = PlaceboMatrix(
        rows=tuple(e.name for e in experiments),
        columns=tuple(treatments),
        cells=cells,
        n=n,
        adj_r2=adj_r2,
        alpha=alpha,
    )
    for cell in matrix.flagged():
        logger.warning(
            f"placebo effect of {cell.treatment} on {cell.belief}: "
            f"{cell.coefficient:.3g} (p={cell.p:.3g})"
        )
    return matrix
