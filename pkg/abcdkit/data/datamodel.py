"""Experiment datasets: records, CSV ingestion, exclusions and belief transforms."""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from abcdkit.data.schema import DatasetSchema
from abcdkit.errors import DegenerateScaleError, DomainError, ParseError, SchemaError
from abcdkit.logger import logger as abcd_logger

logger = abcd_logger.getChild("datamodel")

BELIEF = "belief"
ANCHOR = "anchor"


class ConditionKind(str, Enum):
    no_anchor = "none"
    anchor = "anchor"


class BeliefTransform(str, Enum):
    identity = "identity"
    log10p1 = "log10p1"


@dataclass(frozen=True)
class AnchorCondition:
    kind: ConditionKind
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind is ConditionKind.no_anchor:
            if self.value is not None:
                raise DomainError("the no-anchor condition carries no value")
        elif self.value is None or not math.isfinite(self.value) or self.value < 0:
            raise DomainError(f"anchor value must be finite and >= 0, not {self.value!r}")

    @classmethod
    def none(cls) -> "AnchorCondition":
        return cls(ConditionKind.no_anchor)

    @classmethod
    def at(cls, value: float) -> "AnchorCondition":
        return cls(ConditionKind.anchor, float(value))

    @property
    def is_anchor(self) -> bool:
        return self.kind is ConditionKind.anchor

    def __str__(self):
        return "none" if not self.is_anchor else f"{self.value:g}"


@dataclass(frozen=True)
class ParticipantRecord:
    id: str
    condition: AnchorCondition
    belief: float
    # missing outcomes/covariates are absent from the mapping
    outcomes: Mapping[str, float] = field(default_factory=dict)
    covariates: Mapping[str, float] = field(default_factory=dict)
    wave: int = 1
    interview_day: Optional[int] = None

    def __post_init__(self):
        if not math.isfinite(self.belief):
            raise DomainError(f"record {self.id}: belief must be finite")
        for name, value in self.outcomes.items():
            if not math.isfinite(value):
                raise DomainError(f"record {self.id}: outcome {name!r} must be finite")
        if self.wave < 1:
            raise DomainError(f"record {self.id}: wave must be >= 1")


@dataclass(frozen=True)
class ExperimentDataset:
    records: Tuple[ParticipantRecord, ...]
    schema: DatasetSchema
    belief_transform: BeliefTransform = BeliefTransform.identity
    exclusion_report: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "exclusion_report", tuple(self.exclusion_report))
        known = set(self.schema.outcome_cols)
        for record in self.records:
            if extra := set(record.outcomes) - known:
                raise SchemaError(f"record {record.id} has outcomes outside the schema: {extra}")
        excluded = {rid for rid, _ in self.exclusion_report}
        if excluded & set(self.ids):
            raise SchemaError("excluded ids must not appear among the records")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> List[str]:
        return [r.id for r in self.records]

    @property
    def beliefs(self) -> np.ndarray:
        return np.array([r.belief for r in self.records], dtype=float)

    @property
    def anchors(self) -> np.ndarray:
        """Anchor value per record, NaN under the no-anchor condition."""
        return np.array(
            [r.condition.value if r.condition.is_anchor else np.nan for r in self.records],
            dtype=float,
        )

    @property
    def has_no_anchor(self) -> bool:
        return any(not r.condition.is_anchor for r in self.records)

    def anchor_levels(self) -> List[float]:
        """Distinct anchor values, ascending."""
        return sorted({r.condition.value for r in self.records if r.condition.is_anchor})

    def column(self, name: str) -> np.ndarray:
        """Belief, anchor, outcome or covariate values as floats; NaN where missing."""
        if name in (BELIEF, self.schema.belief_col):
            return self.beliefs
        if name == ANCHOR:
            return self.anchors
        if name in self.schema.outcome_cols:
            return np.array([r.outcomes.get(name, np.nan) for r in self.records], dtype=float)
        if name in self.schema.covariate_cols or any(name in r.covariates for r in self.records):
            return np.array([r.covariates.get(name, np.nan) for r in self.records], dtype=float)
        raise SchemaError(f"unknown column {name!r}", column=name)

    def no_anchor_beliefs(self) -> np.ndarray:
        return np.array([r.belief for r in self.records if not r.condition.is_anchor])

    def by_condition(self) -> Dict[str, "ExperimentDataset"]:
        groups: Dict[str, List[ParticipantRecord]] = {}
        for record in self.records:
            groups.setdefault(str(record.condition), []).append(record)
        return {label: self.with_records(recs) for label, recs in groups.items()}

    def with_records(self, records: Iterable[ParticipantRecord]) -> "ExperimentDataset":
        return replace(self, records=tuple(records))

    def filter(self, predicate) -> "ExperimentDataset":
        return self.with_records(r for r in self.records if predicate(r))

    def restrict(self, ids: Iterable[str]) -> "ExperimentDataset":
        keep = set(ids)
        return self.filter(lambda r: r.id in keep)

    def wave(self, k: int) -> "ExperimentDataset":
        return self.filter(lambda r: r.wave == k)

    def anchored(self) -> "ExperimentDataset":
        return self.filter(lambda r: r.condition.is_anchor)


def _parse_float(cell: str, row: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"row {row}: {column}={cell!r} is not numeric", row=row, column=column)
    if not math.isfinite(value):
        raise ParseError(f"row {row}: {column}={cell!r} is not finite", row=row, column=column)
    return value


def _parse_int(cell: str, row: int, column: str) -> int:
    value = _parse_float(cell, row, column)
    if not value.is_integer():
        raise ParseError(f"row {row}: {column}={cell!r} is not an integer", row=row, column=column)
    return int(value)


def _parse_condition(cell: str, row: int, schema: DatasetSchema) -> AnchorCondition:
    if schema.is_none(cell):
        return AnchorCondition.none()
    value = _parse_float(cell, row, schema.condition_col)
    if value < 0:
        raise ParseError(
            f"row {row}: anchor value {cell!r} is negative", row=row, column=schema.condition_col
        )
    return AnchorCondition.at(value)


def _parse_row(cells: Mapping[str, str], row: int, schema: DatasetSchema) -> ParticipantRecord:
    outcomes = {
        name: _parse_float(cells[name], row, name)
        for name in schema.outcome_cols
        if cells[name].strip()
    }
    covariates = {
        name: _parse_float(cells[name], row, name)
        for name in schema.covariate_cols
        if cells[name].strip()
    }
    wave = 1
    if schema.wave_col and cells[schema.wave_col].strip():
        wave = _parse_int(cells[schema.wave_col], row, schema.wave_col)
        if wave < 1:
            raise ParseError(f"row {row}: wave must be >= 1", row=row, column=schema.wave_col)
    day = None
    if schema.day_col and cells[schema.day_col].strip():
        day = _parse_int(cells[schema.day_col], row, schema.day_col)

    return ParticipantRecord(
        id=cells[schema.id_col].strip() if schema.id_col else str(row),
        condition=_parse_condition(cells[schema.condition_col], row, schema),
        belief=_parse_float(cells[schema.belief_col], row, schema.belief_col),
        outcomes=outcomes,
        covariates=covariates,
        wave=wave,
        interview_day=day,
    )


def load_csv(path: Union[str, Path], schema: DatasetSchema) -> ExperimentDataset:
    """Read one record per data row, in file order.

    Row numbers in errors count data rows from 1 (the header is not counted).
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise SchemaError(f"{path} is empty; a header row is required")

    for column in schema.columns:
        if column not in frame.columns:
            raise SchemaError(f"{path}: missing column {column!r}", column=column)

    records = [
        _parse_row(cells, i + 1, schema)
        for i, cells in enumerate(frame[schema.columns].to_dict("records"))
    ]
    keys = [(r.id, r.wave) for r in records]
    if len(set(keys)) != len(keys):
        raise SchemaError(
            f"{path}: participant ids are not unique within a wave", column=schema.id_col
        )

    logger.info(f"loaded {len(records)} records from {path}")
    return ExperimentDataset(records=tuple(records), schema=schema)


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def write_csv(ds: ExperimentDataset, path: Union[str, Path]) -> Path:
    """Write ``ds`` in the column layout of its schema; ``load_csv`` reads it back unchanged."""
    schema = ds.schema
    none_label = schema.none_label if ds.has_no_anchor else ""
    rows = []
    for record in ds.records:
        row = {}
        if schema.id_col:
            row[schema.id_col] = record.id
        condition = record.condition
        row[schema.condition_col] = _fmt(condition.value) if condition.is_anchor else none_label
        row[schema.belief_col] = _fmt(record.belief)
        for name in schema.outcome_cols:
            row[name] = _fmt(record.outcomes.get(name))
        for name in schema.covariate_cols:
            row[name] = _fmt(record.covariates.get(name))
        if schema.wave_col:
            row[schema.wave_col] = str(record.wave)
        if schema.day_col:
            row[schema.day_col] = "" if record.interview_day is None else str(record.interview_day)
        rows.append(row)

    path = Path(path)
    frame = pd.DataFrame(rows, columns=schema.columns, dtype=str)
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


def write_exclusions(ds: ExperimentDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    frame = pd.DataFrame(list(ds.exclusion_report), columns=["id", "reason"], dtype=str)
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


@dataclass(frozen=True)
class ExclusionRule:
    """Excludes records whose belief exceeds ``threshold``."""

    threshold: float

    def __post_init__(self):
        if math.isnan(self.threshold):
            raise DomainError("exclusion threshold must not be NaN")

    def violates(self, record: ParticipantRecord) -> bool:
        return record.belief > self.threshold

    @property
    def reason(self) -> str:
        return f"belief > {self.threshold:g}"


def apply_exclusions(
    ds: ExperimentDataset, rule: Union[ExclusionRule, float]
) -> ExperimentDataset:
    if not isinstance(rule, ExclusionRule):
        rule = ExclusionRule(float(rule))

    kept, excluded = [], []
    for record in ds.records:
        (excluded if rule.violates(record) else kept).append(record)

    share = len(excluded) / len(ds) if len(ds) else 0.0
    logger.info(f"excluded {len(excluded)} of {len(ds)} records ({share:.1%}): {rule.reason}")
    return replace(
        ds,
        records=tuple(kept),
        exclusion_report=ds.exclusion_report + tuple((r.id, rule.reason) for r in excluded),
    )


def _log10p1(x: float) -> float:
    return math.log1p(x) / math.log(10)


def transform_belief(ds: ExperimentDataset, t: BeliefTransform) -> ExperimentDataset:
    """Apply ``t`` to every belief and anchor value.

    Applying log10p1 twice transforms twice.
    """
    t = BeliefTransform(t)
    if t is BeliefTransform.identity:
        return ds

    for record in ds.records:
        if record.belief < 0:
            raise DomainError(
                f"record {record.id}: log10p1 needs beliefs >= 0, got {record.belief}"
            )

    def _transform(record: ParticipantRecord) -> ParticipantRecord:
        condition = record.condition
        if condition.is_anchor:
            condition = AnchorCondition.at(_log10p1(condition.value))
        return replace(record, belief=_log10p1(record.belief), condition=condition)

    return replace(
        ds, records=tuple(map(_transform, ds.records)), belief_transform=BeliefTransform.log10p1
    )


def dichotomize_ordinal(values: Sequence[int]) -> Tuple[int, List[int]]:
    """Split an ordinal variable at the level closest to its median.

    The cutoff is the level ``c`` whose at-or-below share is closest to one half (ties go to
    the lower level); the binary coding is 1 for values above ``c``.
    """
    arr = np.asarray(values)
    if arr.size == 0:
        raise DomainError("cannot dichotomize an empty variable")
    levels = np.unique(arr)
    if levels.size < 2:
        raise DegenerateScaleError(f"all values are {levels[0]}; nothing to split")

    best, best_distance = None, math.inf
    for level in levels[:-1]:
        distance = abs(float(np.mean(arr <= level)) - 0.5)
        if distance < best_distance - 1e-12:
            best, best_distance = level, distance

    cutoff = int(best)
    return cutoff, [int(v > cutoff) for v in arr]
