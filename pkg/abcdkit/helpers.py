from pathlib import Path
from typing import List, Literal, Optional, Tuple

import typer

try:
    from enum import StrEnum
except ImportError:
    from enum import Enum

    class StrEnum(str, Enum):
        pass


RichSupportedColorOptions = Optional[
    Literal["auto", "standard", "256", "truecolor", "windows", "no"]
]
ColorOption = typer.Option(
    "auto",
    "-c",
    "--color",
    help="Color scheme to adopt. Supported options: "
    "['auto', 'standard', '256', 'truecolor', 'windows', 'no'] "
    "no: disable colors entirely.",
)


class CodingChoice(StrEnum):
    binary = "binary"
    dummies = "dummies"
    continuous = "continuous"


class TransformChoice(StrEnum):
    identity = "identity"
    log10p1 = "log10p1"


class RuleChoice(StrEnum):
    percentile = "percentile"
    extrema = "extrema"


DataOption = typer.Option(
    ..., "--data", "-d", help="Dataset CSV. Repeat for commands taking several datasets."
)
SchemaOption = typer.Option(
    None,
    "--schema",
    "-s",
    help="JSON column mapping. Repeat to pair one schema per --data; "
    "a single schema is reused for all datasets.",
)
BeliefOption = typer.Option("belief", "--belief", help="Belief column (or covariate name).")
OutcomeOption = typer.Option(
    None, "--outcome", "-y", help="Outcome column. Repeat for several; default: all outcomes."
)
CodingOption = typer.Option(None, "--coding", help="Instrument coding.")
BinsOption = typer.Option(
    None, "--bins", help="Lag bins as inclusive day ranges, e.g. '5-9,10-14'."
)
ExcludeAboveOption = typer.Option(
    None, "--exclude-above", help="Exclude records whose belief exceeds this value."
)
TransformOption = typer.Option(
    TransformChoice.identity, "--transform", help="Belief transform applied after exclusions."
)
SeedOption = typer.Option(
    None, "--seed", envvar="ABCD_SEED", help="Master seed (falls back to $ABCD_SEED)."
)
OutOption = typer.Option(Path("abcd-out"), "--out", "-o", help="Output directory.")


def parse_bins(raw: str) -> List[Tuple[int, int]]:
    """Parse '5-9,10-14' into [(5, 9), (10, 14)]."""
    bins = []
    for chunk in filter(None, (c.strip() for c in raw.split(","))):
        lo, sep, hi = chunk.partition("-")
        if not sep:
            raise typer.BadParameter(f"invalid bin {chunk!r}: expected 'lo-hi'")
        try:
            bins.append((int(lo), int(hi)))
        except ValueError:
            raise typer.BadParameter(f"invalid bin {chunk!r}: bounds must be integers")
    return bins


def parse_pair(raw: str) -> Tuple[float, float]:
    """Parse 'lo,hi' into (lo, hi)."""
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise typer.BadParameter(f"invalid pair {raw!r}: expected 'low,high'")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise typer.BadParameter(f"invalid pair {raw!r}: values must be numbers")
