"""Typer-facing commands; each builds a RunConfig and hands it to ``run``."""

from pathlib import Path
from typing import List, Optional, Tuple

import typer
from rich.console import Console

from abcdkit.conf.conf import CONFIG
from abcdkit.design.anchors import AnchorScale, PlanRule
from abcdkit.errors import AbcdError
from abcdkit.estimate.iv import CodingScheme
from abcdkit.helpers import (
    BeliefOption,
    BinsOption,
    CodingChoice,
    CodingOption,
    ColorOption,
    DataOption,
    ExcludeAboveOption,
    OutcomeOption,
    OutOption,
    RichSupportedColorOptions,
    RuleChoice,
    SchemaOption,
    SeedOption,
    TransformChoice,
    TransformOption,
    parse_bins,
    parse_pair,
)
from abcdkit.logger import logger as abcd_logger
from abcdkit.report.run import ERROR_FILE, REPORT_FILE, TABLES_FILE, Command, RunConfig, run

logger = abcd_logger.getChild("commands")

UnitOption = typer.Option("", "--unit", help="Unit appended to anchoring effects, e.g. 'pp'.")
CovariateOption = typer.Option(
    None, "--covariate", help="Exogenous control column. Repeat for several."
)
SvgOption = typer.Option(False, "--svg", is_flag=True, help="Also render figures/*.svg.")
FThresholdOption = typer.Option(
    None, "--f-threshold", help="Weak-instrument gate (default: config [iv] f_threshold)."
)


def _coding(coding: Optional[CodingChoice]) -> Optional[CodingScheme]:
    choice = coding.value if coding else CONFIG.get("iv", "default_coding")
    if choice == "auto":
        return None
    return CodingScheme(choice)


def _bins(bins: Optional[str]) -> Tuple[Tuple[int, int], ...]:
    return tuple(parse_bins(bins or CONFIG.get("diagnostics", "lag_bins")))


def _threshold(f_threshold: Optional[float]) -> float:
    if f_threshold is not None:
        return f_threshold
    return CONFIG.get_float("iv", "f_threshold")


def _common(
    data: List[Path],
    schema: Optional[List[Path]],
    exclude_above: Optional[float],
    transform: TransformChoice,
) -> dict:
    return {
        "data": tuple(data),
        "schemas": tuple(schema or ()),
        "exclude_above": exclude_above,
        "transform": transform.value,
        "kde_points": CONFIG.get_int("curves", "kde_points"),
        "smoother_points": CONFIG.get_int("curves", "smoother_points"),
    }


def _execute(command: Command, color: RichSupportedColorOptions = "auto", **options):
    """Run ``command`` and print its tables; exits with the run's status."""
    console = Console(color_system=None if color == "no" else color)
    try:
        config = RunConfig(command=command, **options)
    except AbcdError as e:
        console.print(f"[red]invalid options:[/] {e}")
        raise typer.Exit(1)
    status = run(config)
    if status:
        console.print(f"[red]{config.command.value} failed[/]; see {config.out / ERROR_FILE}")
        raise typer.Exit(status)

    tables = config.out / TABLES_FILE
    console.print(tables.read_text(encoding="utf-8"), highlight=False, markup=False)
    console.print(f"report written to [bold]{config.out / REPORT_FILE}[/]")


def ingest(
    data: List[Path] = DataOption,
    schema: Optional[List[Path]] = SchemaOption,
    exclude_above: Optional[float] = ExcludeAboveOption,
    transform: TransformChoice = TransformOption,
    out: Path = OutOption,
    color: Optional[str] = ColorOption,
):
    """Validate datasets, apply exclusions and transforms, and write them in standard form."""
    _execute(Command.ingest, color, out=out, **_common(data, schema, exclude_above, transform))


def describe(
    data: List[Path] = DataOption,
    schema: Optional[List[Path]] = SchemaOption,
    belief: str = BeliefOption,
    exclude_above: Optional[float] = ExcludeAboveOption,
    transform: TransformChoice = TransformOption,
    unit: str = UnitOption,
    out: Path = OutOption,
    color: Optional[str] = ColorOption,
):
    """Per-condition belief statistics, anchoring effects and ordinal cut-offs."""
    _execute(
        Command.describe,
        color,
        out=out,
        belief=belief,
        unit=unit,
        **_common(data, schema, exclude_above, transform),
    )


def first_stage(
    data: List[Path] = DataOption,
    schema: Optional[List[Path]] = SchemaOption,
    belief: str = BeliefOption,
    coding: Optional[CodingChoice] = CodingOption,
    covariate: Optional[List[str]] = CovariateOption,
    exclude_above: Optional[float] = ExcludeAboveOption,
    transform: TransformChoice = TransformOption,
    f_threshold: Optional[float] = FThresholdOption,
    unit: str = UnitOption,
    out: Path = OutOption,
    color: Optional[str] = ColorOption,
):
    """First-stage regression of the belief on the anchor instruments, with manipulation check."""
    _execute(
        Command.first_stage,
        color,
        out=out,
        belief=belief,
        coding=_coding(coding),
        covariates=tuple(covariate or ()),
        f_threshold=_threshold(f_threshold),
        unit=unit,
        **_common(data, schema, exclude_above, transform),
    )


def iv(
    data: List[Path] = DataOption,
    schema: Optional[List[Path]] = SchemaOption,
    belief: str = BeliefOption,
    outcome: Optional[List[str]] = OutcomeOption,
    coding: Optional[CodingChoice] = CodingOption,
    covariate: Optional[List[str]] = CovariateOption,
    robust: bool = typer.Option(
        False, "--robust", is_flag=True, help="HC1 heteroskedasticity-robust standard errors."
    ),
    exclude_above: Optional[float] = ExcludeAboveOption,
    transform: TransformChoice = TransformOption,
    f_threshold: Optional[float] = FThresholdOption,
    unit: str = UnitOption,
    out: Path = OutOption,
    color: Optional[str] = ColorOption,
):
    """OLS and IV belief effects for each outcome.

    IV estimates are suppressed (not an error) when the first stage fails the F gate.
    """
    _execute(
        Command.iv,
        color,
        out=out,
        belief=belief,
        outcomes=tuple(outcome or ()),
        coding=_coding(coding),
        covariates=tuple(covariate or ()),
        cov_type="hc1" if robust else "classical",
        f_threshold=_threshold(f_threshold),
        unit=unit,
        **_common(data, schema, exclude_above, transform),
    )


def placebo(
    data: List[Path] = DataOption,
    schema: Optional[List[Path]] = SchemaOption,
    belief: str = BeliefOption,
    coding: Optional[CodingChoice] = CodingOption,
    experiment: Optional[List[str]] = typer.Option(
        None, "--experiment", "-e", help="Experiment name per --data (default: file stems)."
    ),
    alpha: Optional[float] = typer.Option(
        None, "--alpha", help="Flag placebo cells below this p (default: config)."
    ),
    exclude_above: Optional[float] = ExcludeAboveOption,
    transform: TransformChoice = TransformOption,
    out: Path = OutOption,
    color: Optional[str] = ColorOption,
):
    """Regress every experiment's belief on every experiment's anchors."""
    if alpha is None:
        alpha = CONFIG.get_float("diagnostics", "placebo_alpha")
    _execute(
        Command.placebo,
        color,
        out=out,
        belief=belief,
        # an explicit --coding applies to every experiment
        coding=CodingScheme(coding.value) if coding else None,
        experiments=tuple(experiment or ()),
        placebo_alpha=alpha,
        **_common(data, schema, exclude_above, transform),
    )


def decay(
    data: List[Path] = DataOption,
    schema: Optional[List[Path]] = SchemaOption,
    belief: str = BeliefOption,
    bins: Optional[str] = BinsOption,
    exclude_above: Optional[float] = ExcludeAboveOption,
    transform: TransformChoice = TransformOption,
    unit: str = UnitOption,
    svg: bool = SvgOption,
    out: Path = OutOption,
    color: Optional[str] = ColorOption,
):
    """Instantaneous versus lagged anchoring effects.

    Pass the two waves as two --data files, or one file with a wave column.
    """
    _execute(
        Command.decay,
        color,
        out=out,
        belief=belief,
        bins=_bins(bins),
        unit=unit,
        svg=svg,
        **_common(data, schema, exclude_above, transform),
    )


def design_anchors(
    data: List[Path] = typer.Option(
        ..., "--data", "-d", help="Dataset whose no-anchor beliefs form the baseline."
    ),
    schema: Optional[List[Path]] = SchemaOption,
    rule: RuleChoice = typer.Option(RuleChoice.percentile, "--rule", help="Anchor rule."),
    pilot: Optional[Path] = typer.Option(
        None, "--pilot", help="Multivalued pilot dataset for the response curve."
    ),
    scale: AnchorScale = typer.Option(
        AnchorScale.raw, "--scale", help="Anchor scale the response curve is fitted on."
    ),
    degree: Optional[int] = typer.Option(None, "--degree", help="Response curve degree."),
    low_percentile: Optional[float] = typer.Option(None, "--low-percentile"),
    high_percentile: Optional[float] = typer.Option(None, "--high-percentile"),
    reference: Optional[str] = typer.Option(
        None, "--reference", help="Anchor pair 'low,high' to compare the plan against."
    ),
    grid: Optional[str] = typer.Option(
        None, "--grid", help="Bundled anchor grid (recession, donation) to pick a pair from."
    ),
    out: Path = OutOption,
    color: Optional[str] = ColorOption,
):
    """Recommend a low and a high anchor."""
    section = "design"
    if low_percentile is None:
        low_percentile = CONFIG.get_float(section, "low_percentile")
    if high_percentile is None:
        high_percentile = CONFIG.get_float(section, "high_percentile")
    _execute(
        Command.design_anchors,
        color,
        out=out,
        data=tuple(data),
        schemas=tuple(schema or ()),
        rule=PlanRule(rule.value),
        pilot=pilot,
        scale=scale,
        degree=degree or CONFIG.get_int(section, "degree"),
        percentiles=(low_percentile, high_percentile),
        min_baseline=CONFIG.get_int(section, "min_baseline"),
        reference=parse_pair(reference) if reference else None,
        grid=grid,
    )


def simulate(
    sim_config: Optional[Path] = typer.Option(
        None, "--config", help="JSON file of simulation parameters (default: built-in)."
    ),
    seed: Optional[int] = SeedOption,
    replicates: int = typer.Option(
        0, "--replicates", "-n", help="Monte Carlo replicates; 0 only writes one dataset."
    ),
    n_jobs: Optional[int] = typer.Option(
        None, "--jobs", "-j", help="Parallel workers (default: config)."
    ),
    out: Path = OutOption,
    color: Optional[str] = ColorOption,
):
    """Generate a synthetic experiment and, optionally, run the Monte Carlo harness."""
    _execute(
        Command.simulate,
        color,
        out=out,
        sim_config=sim_config,
        seed=seed,
        replicates=replicates,
        n_jobs=n_jobs or CONFIG.get_int("simulate", "n_jobs"),
        failure_warning_share=CONFIG.get_float("simulate", "failure_warning_share"),
    )


def plot(
    data: List[Path] = DataOption,
    schema: Optional[List[Path]] = SchemaOption,
    belief: str = BeliefOption,
    bins: Optional[str] = BinsOption,
    exclude_above: Optional[float] = ExcludeAboveOption,
    transform: TransformChoice = TransformOption,
    svg: bool = SvgOption,
    out: Path = OutOption,
    color: Optional[str] = ColorOption,
):
    """Belief densities, anchor-response smooths and decay effect bars as CSV."""
    _execute(
        Command.plot,
        color,
        out=out,
        belief=belief,
        bins=_bins(bins),
        svg=svg,
        **_common(data, schema, exclude_above, transform),
    )
