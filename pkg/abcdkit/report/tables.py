"""Plain-text tables for ``tables.txt``, rendered with rich."""

import io
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from rich.console import Console
from rich.table import Table
from rich.text import Text

from abcdkit.data.datamodel import ExperimentDataset
from abcdkit.design.anchors import AnchorPlan
from abcdkit.diagnostics.decay import DecayReport
from abcdkit.diagnostics.manipulation import ManipulationCheck
from abcdkit.diagnostics.placebo import PlaceboMatrix
from abcdkit.estimate.iv import FirstStage, OutcomeResult
from abcdkit.estimate.linreg import stars
from abcdkit.simulate.monte_carlo import McSummary, summary_rows

TABLE_WIDTH = 110

Renderable = Union[Table, Text, str]


def _num(value: Optional[float], digits: int = 3) -> str:
    if value is None or not np.isfinite(value):
        return "-"
    return f"{value:.{digits}f}"


def _coef(estimate: float, se: float, p: float, digits: int = 3) -> str:
    return f"{estimate:.{digits}f}{stars(p)} ({se:.{digits}f})"


def render(tables: Iterable[Renderable], width: int = TABLE_WIDTH) -> str:
    """Render ``tables`` as uncoloured text, one after the other."""
    buffer = io.StringIO()
    console = Console(file=buffer, width=width, color_system=None, force_terminal=False)
    for table in tables:
        console.print(table)
        console.print()
    return buffer.getvalue()


def condition_key(label: str):
    return (label == "none", float(label) if label != "none" else 0.0)


def describe_table(ds: ExperimentDataset, title: str = "conditions") -> Table:
    table = Table(title=title)
    table.add_column(header="condition")
    table.add_column(header="n", justify="right")
    table.add_column(header="mean belief", justify="right")
    table.add_column(header="sd", justify="right")
    table.add_column(header="median", justify="right")
    for outcome in ds.schema.outcome_cols:
        table.add_column(header=f"mean {outcome}", justify="right")

    groups = ds.by_condition()
    for label in sorted(groups, key=condition_key):
        group = groups[label]
        beliefs = group.beliefs
        row = [
            label,
            str(len(group)),
            _num(beliefs.mean()),
            _num(beliefs.std(ddof=1) if len(group) > 1 else None),
            _num(float(np.median(beliefs))),
        ]
        for outcome in ds.schema.outcome_cols:
            values = group.column(outcome)
            values = values[np.isfinite(values)]
            row.append(_num(values.mean() if values.size else None))
        table.add_row(*row)
    return table


def results_block(results: Sequence[OutcomeResult], unit: str = "", title: str = "") -> Table:
    """OLS, IV, anchoring effect, first-stage F and descriptives, one column per outcome."""
    table = Table(title=title or "belief effects")
    table.add_column(header="")
    for result in results:
        table.add_column(header=result.outcome, justify="right")

    def _row(label: str, cells: List[str]):
        table.add_row(label, *cells)

    ols_cells = []
    for r in results:
        b = r.belief
        ols_cells.append(_coef(r.ols.coefficients[b], r.ols.std_errors[b], r.ols.p_values[b]))
    _row("OLS", ols_cells)
    iv_cells = []
    for r in results:
        if r.iv is None:
            iv_cells.append("not calculated (F <= 10)")
        else:
            iv_cells.append(_coef(r.iv.coefficient, r.iv.se, r.iv.p))
    _row("IV", iv_cells)

    unit = f" {unit}" if unit else ""
    anchoring = []
    for r in results:
        a = r.anchoring
        anchoring.append("-" if a is None else _coef(a.effect, a.se, a.p, 2) + unit)
    _row("anchoring effect", anchoring)
    _row("first-stage F", [_num(r.first_stage_f, 2) for r in results])
    _row("N", [str(r.n) for r in results])
    _row("mean", [_num(r.mean) for r in results])
    _row("SD", [_num(r.sd) for r in results])
    return table


def first_stage_table(stage: FirstStage, title: str = "first stage") -> Table:
    table = Table(title=title)
    table.add_column(header="term")
    table.add_column(header="estimate", justify="right")
    table.add_column(header="se", justify="right")
    table.add_column(header="p", justify="right")
    fit = stage.fit
    for name in fit.names:
        table.add_row(
            name,
            f"{fit.coefficients[name]:.4f}{stars(fit.p_values[name])}",
            _num(fit.std_errors[name], 4),
            _num(fit.p_values[name], 4),
        )
    table.caption = f"F({len(stage.instruments)}, {fit.df_resid}) = {stage.f:.2f}, n = {fit.n}"
    return table


def placebo_table(matrix: PlaceboMatrix, title: str = "selectiveness") -> Table:
    table = Table(title=title)
    table.add_column(header="belief")
    for column in matrix.columns:
        table.add_column(header=column, justify="right")
    table.add_column(header="N", justify="right")
    table.add_column(header="adj. R2", justify="right")
    for row in matrix.rows:
        cells = []
        for column in matrix.columns:
            cell = matrix.cell(row, column)
            text = _coef(cell.coefficient, cell.se, cell.p)
            cells.append(f"{text} !" if cell.flagged else text)
        table.add_row(row, *cells, str(matrix.n[row]), _num(matrix.adj_r2[row]))
    table.caption = f"! placebo effect with p < {matrix.alpha:g}"
    return table


def decay_table(report: DecayReport, unit: str = "", title: str = "durability") -> Table:
    unit = f" {unit}" if unit else ""
    table = Table(title=title)
    for header in ("effect", "lag (days)", "mean lag", "estimate", "F", "N", "ratio"):
        table.add_column(header=header, justify="left" if header == "effect" else "right")

    inst = report.instantaneous
    table.add_row(
        "instantaneous",
        "0",
        "0",
        _coef(inst.effect, inst.se, inst.p, 2) + unit,
        _num(inst.f, 2),
        str(inst.n),
        "1",
    )
    for lag, ratio in zip(report.lagged, report.bin_ratios()):
        e = lag.effect
        table.add_row(
            "lagged",
            f"{lag.lag_bin[0]}-{lag.lag_bin[1]}",
            _num(lag.mean_lag, 2),
            _coef(e.effect, e.se, e.p, 2) + unit,
            _num(e.f, 2),
            str(e.n),
            _num(ratio),
        )
    if report.pooled is not None:
        pooled = report.pooled
        e = pooled.effect
        table.add_row(
            "pooled",
            f"{pooled.lag_bin[0]}-{pooled.lag_bin[1]}",
            _num(pooled.mean_lag, 2),
            _coef(e.effect, e.se, e.p, 2) + unit,
            _num(e.f, 2),
            str(e.n),
            _num(report.decay_ratio),
        )
    notes = [f"attrition {report.attrition:.1%}", report.note]
    if comparison := report.bin_comparison():
        notes.append(f"first vs last bin: z = {comparison.z:.2f}, p = {comparison.p:.3f}")
    if comparison := report.decay_comparison():
        notes.append(f"instantaneous vs lagged: z = {comparison.z:.2f}, p = {comparison.p:.3g}")
    table.caption = "; ".join(notes)
    return table


def plan_table(plan: AnchorPlan, variance_ratio: Optional[float] = None) -> Table:
    table = Table(title=f"anchor plan ({plan.rule.value})")
    table.add_column(header="")
    table.add_column(header="low", justify="right")
    table.add_column(header="high", justify="right")
    table.add_row("anchor", f"{plan.low:.4g}", f"{plan.high:.4g}")
    if plan.percentiles:
        table.add_row("baseline percentile", *(f"{p:.1f}" for p in plan.percentiles))
    if plan.predicted_beliefs:
        table.add_row("predicted mean belief", *(f"{b:.4g}" for b in plan.predicted_beliefs))
    captions = []
    if plan.predicted_delta is not None:
        captions.append(f"predicted difference {plan.predicted_delta:.4g}")
    if variance_ratio is not None:
        captions.append(f"IV variance vs reference x{variance_ratio:.3f}")
    table.caption = "; ".join(captions) or None
    return table


def monte_carlo_table(summary: McSummary) -> Table:
    table = Table(title=f"Monte Carlo ({summary.replicates} replicates, truth {summary.truth:g})")
    for header in ("estimator", "mean", "bias", "MC se", "sd", "mean se", "coverage", "failures"):
        table.add_column(header=header, justify="left" if header == "estimator" else "right")
    for row in summary_rows(summary):
        table.add_row(*row)
    table.caption = (
        f"analytic OLS bias {summary.analytic_ols_bias:.4f}; "
        f"analytic IV bias {summary.analytic_iv_bias:.4f}; "
        f"mean first-stage F {summary.mean_first_stage_f:.1f}"
    )
    return table


def manipulation_lines(checks: Iterable[ManipulationCheck]) -> Text:
    return Text("\n".join(check.text for check in checks))


def ordinal_cutoffs_text(cutoffs: Dict[str, int]) -> Text:
    return Text(
        "\n".join(f"{name}: values above {cut} coded 1" for name, cut in sorted(cutoffs.items()))
    )
