"""Column mapping between experiment CSV files and abcdkit datasets."""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from abcdkit.errors import SchemaError

DEFAULT_NONE_SENTINELS = ("", "none")


class OutcomeKind(str, Enum):
    continuous = "continuous"
    ordinal = "ordinal"


@dataclass(frozen=True)
class OutcomeSpec:
    name: str
    kind: OutcomeKind = OutcomeKind.continuous
    # number of levels of an ordinal scale; higher level = more of the named construct
    levels: Optional[int] = None

    @property
    def is_ordinal(self) -> bool:
        return self.kind is OutcomeKind.ordinal


@dataclass(frozen=True)
class DatasetSchema:
    """Maps CSV columns to the fields of a participant record.

    The NoAnchor condition is written as an empty cell or one of ``none_sentinels``
    (case-insensitive) in the condition column.
    """

    condition_col: str
    belief_col: str
    outcomes: Tuple[OutcomeSpec, ...] = ()
    wave_col: Optional[str] = None
    day_col: Optional[str] = None
    id_col: Optional[str] = None
    covariate_cols: Tuple[str, ...] = ()
    none_sentinels: Tuple[str, ...] = DEFAULT_NONE_SENTINELS

    def __post_init__(self):
        names = [self.condition_col, self.belief_col, *self.outcome_cols, *self.covariate_cols]
        names += [c for c in (self.wave_col, self.day_col, self.id_col) if c]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SchemaError(f"columns mapped more than once: {sorted(dupes)}")

    @property
    def outcome_cols(self) -> List[str]:
        return [o.name for o in self.outcomes]

    def outcome(self, name: str) -> OutcomeSpec:
        for spec in self.outcomes:
            if spec.name == name:
                return spec
        raise SchemaError(f"unknown outcome {name!r}", column=name)

    @property
    def columns(self) -> List[str]:
        """All mapped columns, in the order datasets are written."""
        cols = [self.id_col] if self.id_col else []
        cols += [self.condition_col, self.belief_col, *self.outcome_cols, *self.covariate_cols]
        cols += [c for c in (self.wave_col, self.day_col) if c]
        return cols

    def is_none(self, cell: str) -> bool:
        return cell.strip().lower() in {s.lower() for s in self.none_sentinels}

    @property
    def none_label(self) -> str:
        """The cell written for NoAnchor records; ``is_none`` accepts it."""
        for sentinel in self.none_sentinels:
            if sentinel.strip():
                return sentinel
        if "" in self.none_sentinels:
            return ""
        raise SchemaError("no none_sentinels configured; NoAnchor records cannot be written")

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "DatasetSchema":
        for key in ("condition_col", "belief_col"):
            if key not in raw:
                raise SchemaError(f"schema is missing required key {key!r}")

        ordinal: Dict[str, int] = raw.get("ordinal", {}) or {}
        outcome_cols = raw.get("outcome_cols", []) or []
        unknown = set(ordinal) - set(outcome_cols)
        if unknown:
            raise SchemaError(f"ordinal levels given for unknown outcomes {sorted(unknown)}")

        outcomes = tuple(
            OutcomeSpec(name, OutcomeKind.ordinal, int(ordinal[name]))
            if name in ordinal
            else OutcomeSpec(name)
            for name in outcome_cols
        )
        return cls(
            condition_col=raw["condition_col"],
            belief_col=raw["belief_col"],
            outcomes=outcomes,
            wave_col=raw.get("wave_col"),
            day_col=raw.get("day_col"),
            id_col=raw.get("id_col"),
            covariate_cols=tuple(raw.get("covariate_cols", []) or []),
            none_sentinels=tuple(raw.get("none_sentinels", DEFAULT_NONE_SENTINELS)),
        )

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "condition_col": self.condition_col,
            "belief_col": self.belief_col,
            "outcome_cols": self.outcome_cols,
        }
        ordinal = {o.name: o.levels for o in self.outcomes if o.is_ordinal}
        if ordinal:
            out["ordinal"] = ordinal
        for key in ("wave_col", "day_col", "id_col"):
            if value := getattr(self, key):
                out[key] = value
        if self.covariate_cols:
            out["covariate_cols"] = list(self.covariate_cols)
        if self.none_sentinels != DEFAULT_NONE_SENTINELS:
            out["none_sentinels"] = list(self.none_sentinels)
        return out


def load_schema(path: Union[str, Path]) -> DatasetSchema:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SchemaError(f"schema file not found: {path}")
    except json.JSONDecodeError as e:
        raise SchemaError(f"schema file {path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise SchemaError(f"schema file {path} must hold a JSON object")
    return DatasetSchema.from_dict(raw)


def write_schema(schema: DatasetSchema, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path
