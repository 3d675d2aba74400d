"""Command pipelines: datasets in, ``report.json``, ``tables.txt`` and curve files out."""

import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from abcdkit.data.datamodel import (
    BeliefTransform,
    ExperimentDataset,
    apply_exclusions,
    dichotomize_ordinal,
    load_csv,
    transform_belief,
    write_csv,
    write_exclusions,
)
from abcdkit.data.schema import DatasetSchema, load_schema, write_schema
from abcdkit.design.anchors import (
    AnchorPlan,
    AnchorScale,
    PlanRule,
    calibrate_grid_plan,
    compare_plans,
    load_grid,
    predicted_mean_belief,
    recommend_anchors,
    to_scale,
)
from abcdkit.diagnostics.decay import DEFAULT_BINS, DecayReport, decay_analysis
from abcdkit.diagnostics.manipulation import manipulation_check
from abcdkit.diagnostics.placebo import PLACEBO_ALPHA, PlaceboExperiment, placebo_matrix
from abcdkit.errors import AbcdError, ConfigError, GroupingError, SchemaError
from abcdkit.estimate.iv import (
    F_THRESHOLD,
    CodingScheme,
    InstrumentCoding,
    anchoring_effect,
    default_coding,
    first_stage,
    results_table,
)
from abcdkit.logger import logger as abcd_logger
from abcdkit.report import tables
from abcdkit.report.curves import (
    KDE_POINTS,
    SMOOTHER_POINTS,
    CurveSeries,
    effect_bars,
    kde,
    local_linear_smooth,
    write_series_csv,
)
from abcdkit.report.svg import render_svg
from abcdkit.simulate.dgp import SIM_SCHEMA, SimConfig, generate_population
from abcdkit.simulate.monte_carlo import FAILURE_WARNING_SHARE, monte_carlo
from abcdkit.version import VERSION

logger = abcd_logger.getChild("run")

REPORT_FILE = "report.json"
ERROR_FILE = "error.json"
TABLES_FILE = "tables.txt"
SCHEMA_FILE = "schema.json"
REPORT_SCHEMA = Path(__file__).parent / "report_schema.json"


class Command(str, Enum):
    ingest = "ingest"
    describe = "describe"
    first_stage = "first-stage"
    iv = "iv"
    placebo = "placebo"
    decay = "decay"
    design_anchors = "design-anchors"
    simulate = "simulate"
    plot = "plot"


@dataclass(frozen=True)
class RunConfig:
    command: Command
    out: Path
    data: Tuple[Path, ...] = ()
    schemas: Tuple[Path, ...] = ()
    belief: str = "belief"
    outcomes: Tuple[str, ...] = ()
    covariates: Tuple[str, ...] = ()
    coding: Optional[CodingScheme] = None
    cov_type: str = "classical"
    bins: Optional[Tuple[Tuple[int, int], ...]] = None
    exclude_above: Optional[float] = None
    transform: BeliefTransform = BeliefTransform.identity
    f_threshold: float = F_THRESHOLD
    placebo_alpha: float = PLACEBO_ALPHA
    seed: Optional[int] = None
    # percent-scale beliefs are reported as "pp"
    unit: str = ""
    experiments: Tuple[str, ...] = ()
    rule: PlanRule = PlanRule.percentile
    pilot: Optional[Path] = None
    scale: AnchorScale = AnchorScale.raw
    degree: int = 3
    percentiles: Tuple[float, float] = (5.0, 95.0)
    min_baseline: int = 20
    reference: Optional[Tuple[float, float]] = None
    grid: Optional[str] = None
    sim_config: Optional[Path] = None
    replicates: int = 0
    n_jobs: int = 1
    failure_warning_share: float = FAILURE_WARNING_SHARE
    kde_points: int = KDE_POINTS
    smoother_points: int = SMOOTHER_POINTS
    svg: bool = False

    def __post_init__(self):
        object.__setattr__(self, "command", Command(self.command))
        object.__setattr__(self, "out", Path(self.out))
        object.__setattr__(self, "data", tuple(Path(p) for p in self.data))
        object.__setattr__(self, "schemas", tuple(Path(p) for p in self.schemas))
        if self.command is not Command.simulate and not self.data:
            raise ConfigError(f"{self.command.value} needs at least one --data file")
        if len(self.schemas) > 1 and len(self.schemas) != len(self.data):
            raise ConfigError(f"{len(self.schemas)} schemas for {len(self.data)} data files")
        if self.replicates < 0 or self.n_jobs == 0:
            raise ConfigError("replicates must be >= 0 and n_jobs nonzero")

    def check_columns(self, schema: DatasetSchema):
        """Every referenced column must be mapped by ``schema``."""
        known = {"belief", schema.belief_col, *schema.outcome_cols, *schema.covariate_cols}
        for column in (self.belief, *self.outcomes, *self.covariates):
            if column not in known:
                raise SchemaError(f"column {column!r} is not in the schema", column=column)

    def to_dict(self) -> Dict[str, Any]:
        return json.loads(json.dumps(asdict(self), default=_jsonable, sort_keys=True))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(_dumps(self.to_dict()).encode()).hexdigest()[:16]


def _jsonable(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"not serializable: {value!r}")


def _clean(value):
    """Replace non-finite floats by None and tuples by lists, recursively."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _dumps(payload) -> str:
    return json.dumps(_clean(payload), default=_jsonable, sort_keys=True, indent=2) + "\n"


@dataclass
class RunOutput:
    results: Dict[str, Any] = field(default_factory=dict)
    rendered: List[tables.Renderable] = field(default_factory=list)
    files: List[Path] = field(default_factory=list)


class _WarningCollector(logging.Handler):
    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.messages: List[str] = []

    def emit(self, record: logging.LogRecord):
        self.messages.append(record.getMessage())


def _schema_for(config: RunConfig, index: int, data: Path) -> DatasetSchema:
    if config.schemas:
        return load_schema(config.schemas[index if len(config.schemas) > 1 else 0])
    sibling = data.parent / SCHEMA_FILE
    if sibling.exists():
        logger.info(f"using schema {sibling}")
        return load_schema(sibling)
    raise SchemaError(f"no --schema given and no {SCHEMA_FILE} next to {data}")


def _prepare(config: RunConfig, ds: ExperimentDataset) -> ExperimentDataset:
    if config.exclude_above is not None:
        ds = apply_exclusions(ds, config.exclude_above)
    return transform_belief(ds, config.transform)


def load_datasets(config: RunConfig, all_waves: bool = False) -> List[ExperimentDataset]:
    """Prepared datasets named by ``config.data``; only their first wave unless ``all_waves``."""
    datasets = []
    for i, path in enumerate(config.data):
        schema = _schema_for(config, i, path)
        config.check_columns(schema)
        ds = load_csv(path, schema)
        if not all_waves and any(r.wave > 1 for r in ds.records):
            logger.info(f"{path}: analysing wave 1 only")
            ds = ds.wave(1)
        datasets.append(_prepare(config, ds))
    return datasets


def _coding(config: RunConfig, ds: ExperimentDataset) -> InstrumentCoding:
    if config.coding is None:
        return default_coding(ds)
    scheme = CodingScheme(config.coding)
    if scheme is CodingScheme.continuous:
        return InstrumentCoding.continuous()
    return InstrumentCoding(scheme)


def _outcomes(config: RunConfig, ds: ExperimentDataset) -> List[str]:
    return list(config.outcomes) or ds.schema.outcome_cols


def _ordinal_cutoffs(ds: ExperimentDataset) -> Dict[str, int]:
    cutoffs = {}
    for spec in ds.schema.outcomes:
        if not spec.is_ordinal:
            continue
        values = ds.column(spec.name)
        values = values[np.isfinite(values)].astype(int)
        if values.size:
            cutoffs[spec.name], _ = dichotomize_ordinal(values)
    return cutoffs


def _write_curve(config: RunConfig, out: RunOutput, name: str, series: CurveSeries) -> Path:
    path = write_series_csv(series, config.out / "curves" / f"{name}.csv")
    out.files.append(path)
    return path


def _ingest(config: RunConfig) -> RunOutput:
    out = RunOutput()
    data_dir = config.out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for i, path in enumerate(config.data):
        schema = _schema_for(config, i, path)
        raw = load_csv(path, schema)
        ds = _prepare(config, raw)
        target = data_dir / path.name
        out.files.append(write_csv(ds, target))
        out.files.append(write_exclusions(ds, data_dir / f"{path.stem}.exclusions.csv"))
        summary.append(
            {
                "source": str(path),
                "written": str(target),
                "records": len(raw),
                "kept": len(ds),
                "excluded": len(ds.exclusion_report),
                "transform": ds.belief_transform.value,
                "ordinal_cutoffs": _ordinal_cutoffs(ds),
            }
        )
        out.rendered.append(tables.describe_table(ds, title=path.name))
        write_schema(schema, data_dir / SCHEMA_FILE)
    out.files.append(data_dir / SCHEMA_FILE)
    out.results["datasets"] = summary
    return out


def _describe(config: RunConfig) -> RunOutput:
    out = RunOutput()
    described = []
    for path, ds in zip(config.data, load_datasets(config)):
        entry: Dict[str, Any] = {
            "source": str(path),
            "n": len(ds),
            "anchor_levels": ds.anchor_levels(),
            "no_anchor": int(sum(not r.condition.is_anchor for r in ds.records)),
            "ordinal_cutoffs": _ordinal_cutoffs(ds),
            "conditions": {},
        }
        for label, group in ds.by_condition().items():
            beliefs = group.beliefs
            entry["conditions"][label] = {
                "n": len(group),
                "mean": float(beliefs.mean()),
                "sd": float(beliefs.std(ddof=1)) if len(group) > 1 else None,
                "median": float(np.median(beliefs)),
            }
        try:
            entry["anchoring_effect"] = anchoring_effect(ds, config.belief).to_dict()
        except GroupingError:
            entry["anchoring_effect"] = None
        described.append(entry)
        out.rendered.append(tables.describe_table(ds, title=path.name))
        if entry["ordinal_cutoffs"]:
            out.rendered.append(tables.ordinal_cutoffs_text(entry["ordinal_cutoffs"]))
    out.results["datasets"] = described
    return out


def _first_stage(config: RunConfig) -> RunOutput:
    out = RunOutput()
    entries = []
    for path, ds in zip(config.data, load_datasets(config)):
        coding = _coding(config, ds)
        stage = first_stage(ds, coding, config.belief, config.covariates)
        entry = {
            "source": str(path),
            "coding": coding.scheme.value,
            "first_stage": stage.fit.to_dict(),
            "F": stage.f,
            "p": stage.p,
            "instruments": list(stage.instruments),
        }
        out.rendered.append(tables.first_stage_table(stage, title=f"first stage: {path.name}"))
        if len(ds.anchor_levels()) == 2:
            check = manipulation_check(ds, config.belief, config.f_threshold, config.unit)
            entry["manipulation_check"] = check.to_dict()
            out.rendered.append(tables.manipulation_lines([check]))
        entries.append(entry)
    out.results["datasets"] = entries
    return out


def _iv(config: RunConfig) -> RunOutput:
    out = RunOutput()
    entries = []
    for path, ds in zip(config.data, load_datasets(config)):
        coding = _coding(config, ds)
        results = results_table(
            ds,
            _outcomes(config, ds),
            config.belief,
            coding,
            config.covariates,
            config.cov_type,
            config.f_threshold,
        )
        entries.append(
            {
                "source": str(path),
                "coding": coding.scheme.value,
                "f_threshold": config.f_threshold,
                "outcomes": [r.to_dict() for r in results],
            }
        )
        out.rendered.append(tables.results_block(results, config.unit, title=path.name))
    out.results["datasets"] = entries
    return out


def _placebo(config: RunConfig) -> RunOutput:
    out = RunOutput()
    datasets = load_datasets(config)
    names = list(config.experiments) or [p.stem for p in config.data]
    if len(names) != len(datasets):
        raise ConfigError(f"{len(names)} experiment names for {len(datasets)} datasets")
    experiments = [
        PlaceboExperiment(name, ds, config.belief, _coding(config, ds) if config.coding else None)
        for name, ds in zip(names, datasets)
    ]
    matrix = placebo_matrix(experiments, config.placebo_alpha)
    out.results["placebo"] = matrix.to_dict()
    out.rendered.append(tables.placebo_table(matrix))
    return out


def _waves(config: RunConfig) -> Tuple[ExperimentDataset, ExperimentDataset]:
    datasets = load_datasets(config, all_waves=True)
    if len(datasets) == 2:
        return datasets[0], datasets[1]
    if len(datasets) == 1 and datasets[0].schema.wave_col:
        ds = datasets[0]
        return ds.wave(1), ds.wave(2)
    raise ConfigError("decay needs two --data files, or one file with a wave column")


def _decay(config: RunConfig) -> RunOutput:
    out = RunOutput()
    wave1, wave2 = _waves(config)
    report = decay_analysis(wave1, wave2, config.bins or DEFAULT_BINS, config.belief)
    out.results["decay"] = report.to_dict()
    out.rendered.append(tables.decay_table(report, config.unit))
    _decay_bars(config, out, report, "decay_effects")
    return out


def _decay_bars(config: RunConfig, out: RunOutput, report: DecayReport, name: str) -> str:
    effects = [("instantaneous", report.instantaneous)]
    effects += [(f"{lag.lag_bin[0]}-{lag.lag_bin[1]} days", lag.effect) for lag in report.lagged]
    bars = effect_bars(effects)
    _write_curve(config, out, name, bars)
    if config.svg:
        _svg(config, out, name, [bars], ylabel="anchoring effect")
    return f"curves/{name}.csv"


def _reference_plan(config: RunConfig, plan: AnchorPlan) -> Optional[AnchorPlan]:
    if config.reference is None or plan.curve is None:
        return None
    low, high = config.reference
    curve = plan.curve
    b_low = predicted_mean_belief(curve, float(to_scale(low, curve.anchor_scale)))
    b_high = predicted_mean_belief(curve, float(to_scale(high, curve.anchor_scale)))
    return AnchorPlan(low, high, plan.rule, predicted_beliefs=(b_low, b_high), curve=curve)


def _design_anchors(config: RunConfig) -> RunOutput:
    out = RunOutput()
    baseline_ds = load_datasets(config)[0]
    baseline = baseline_ds.no_anchor_beliefs()
    if baseline.size == 0:
        logger.warning("no no-anchor records; using every belief as the baseline")
        baseline = baseline_ds.beliefs

    pilot = None
    if config.pilot is not None:
        raw = load_csv(config.pilot, _schema_for(config, 0, config.pilot))
        pilot = _prepare(config, raw).anchored()
    plan = recommend_anchors(
        baseline,
        config.rule,
        pilot=pilot,
        scale=config.scale,
        degree=config.degree,
        percentiles=config.percentiles,
        min_baseline=config.min_baseline,
    )
    ratio = None
    reference = _reference_plan(config, plan)
    if reference is not None and plan.predicted_delta:
        ratio = compare_plans(reference, plan)
    out.results["plan"] = plan.to_dict()
    out.results["reference"] = reference.to_dict() if reference else None
    out.results["variance_ratio_vs_reference"] = ratio
    out.rendered.append(tables.plan_table(plan, ratio))

    if config.grid is not None and plan.curve is not None:
        low, high, delta = calibrate_grid_plan(load_grid(config.grid), plan.curve)
        out.results["grid_best_pair"] = {
            "grid": config.grid,
            "low": low,
            "high": high,
            "delta": delta,
        }
    return out


def _resolve_seed(config: RunConfig) -> int:
    if config.seed is not None:
        return int(config.seed)
    from abcdkit.conf.conf import get_default_seed

    return get_default_seed()


def _simulate(config: RunConfig) -> RunOutput:
    out = RunOutput()
    cfg = SimConfig.from_json(config.sim_config) if config.sim_config else SimConfig()
    cfg = cfg.with_overrides(seed=_resolve_seed(config))
    data_dir = config.out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    ds = generate_population(cfg)
    out.files.append(write_csv(ds, data_dir / "simulated.csv"))
    out.files.append(write_schema(SIM_SCHEMA, data_dir / SCHEMA_FILE))
    out.results["config"] = cfg.to_dict()
    out.results["records"] = len(ds)
    if config.replicates:
        summary = monte_carlo(
            cfg,
            config.replicates,
            n_jobs=config.n_jobs,
            failure_warning_share=config.failure_warning_share,
        )
        out.results["monte_carlo"] = summary.to_dict()
        out.rendered.append(tables.monte_carlo_table(summary))
    else:
        out.rendered.append(tables.describe_table(ds.wave(1), title="simulated (wave 1)"))
    return out


def _svg(config: RunConfig, out: RunOutput, name: str, series, **labels):
    path = render_svg(series, config.out / "figures" / f"{name}.svg", title=name, **labels)
    if path is not None:
        out.files.append(path)


def _plot(config: RunConfig) -> RunOutput:
    out = RunOutput()
    curves: Dict[str, str] = {}
    for path, waves in zip(config.data, load_datasets(config, all_waves=True)):
        stem = path.stem
        ds = waves.wave(1)
        levels = ds.anchor_levels()
        groups = ds.by_condition()
        densities = []
        if len(levels) <= 2 or ds.has_no_anchor:
            for label in sorted(groups, key=tables.condition_key):
                group = groups[label]
                if len(levels) > 2 and label != "none":
                    continue
                if len(group) < 2 or np.ptp(group.beliefs) == 0:
                    logger.warning(f"{stem}: condition {label} is too narrow for a density")
                    continue
                series = kde(group.beliefs, points=config.kde_points)
                series = replace(series, name=f"anchor {label}")
                name = f"{stem}_kde_{label}"
                _write_curve(config, out, name, series)
                curves[name] = f"curves/{name}.csv"
                densities.append(series)
        if densities and config.svg:
            _svg(config, out, f"{stem}_kde", densities, xlabel=config.belief, ylabel="density")
        if len(levels) > 2:
            anchored = ds.anchored()
            smooth = local_linear_smooth(
                anchored.anchors, anchored.beliefs, points=config.smoother_points
            )
            _write_curve(config, out, f"{stem}_smooth", smooth)
            curves[f"{stem}_smooth"] = f"curves/{stem}_smooth.csv"
            if config.svg:
                labels = {"xlabel": "anchor", "ylabel": config.belief}
                _svg(config, out, f"{stem}_smooth", [smooth], **labels)
        if any(r.wave == 2 for r in waves.records):
            report = decay_analysis(
                ds, waves.wave(2), config.bins or DEFAULT_BINS, config.belief
            )
            curves[f"{stem}_effects"] = _decay_bars(config, out, report, f"{stem}_effects")
    out.results["curves"] = curves
    return out


PIPELINES: Dict[Command, Callable[[RunConfig], RunOutput]] = {
    Command.ingest: _ingest,
    Command.describe: _describe,
    Command.first_stage: _first_stage,
    Command.iv: _iv,
    Command.placebo: _placebo,
    Command.decay: _decay,
    Command.design_anchors: _design_anchors,
    Command.simulate: _simulate,
    Command.plot: _plot,
}


def _meta(config: RunConfig, seed: Optional[int]) -> Dict[str, Any]:
    return {
        "command": config.command.value,
        "config_hash": config.config_hash,
        "version": VERSION,
        "seed": seed,
    }


def _relative(paths: Sequence[Path], root: Path) -> List[str]:
    out = []
    for p in paths:
        try:
            out.append(str(Path(p).relative_to(root)))
        except ValueError:
            out.append(str(p))
    return sorted(set(out))


def run(config: RunConfig) -> int:
    """Execute ``config.command``; returns the process exit status.

    Success writes ``report.json`` and ``tables.txt`` into ``config.out``; failure writes
    ``error.json`` there and returns nonzero.
    """
    collector = _WarningCollector()
    abcd_logger.addHandler(collector)
    seed = None
    try:
        config.out.mkdir(parents=True, exist_ok=True)
        if not os.access(config.out, os.W_OK):
            raise ConfigError(f"output directory {config.out} is not writable")
        seed = _resolve_seed(config)
        output = PIPELINES[config.command](config)
        report = {
            "meta": _meta(config, seed),
            "config": config.to_dict(),
            "results": output.results,
            "warnings": collector.messages,
            "files": _relative(output.files, config.out),
        }
        (config.out / REPORT_FILE).write_text(_dumps(report), encoding="utf-8")
        (config.out / TABLES_FILE).write_text(tables.render(output.rendered), encoding="utf-8")
        return 0
    except AbcdError as e:
        logger.error(f"{config.command.value} failed: {e}")
        return _write_error(config, seed, e, 1)
    except OSError as e:
        logger.error(f"{config.command.value} failed: {e}")
        return _write_error(config, seed, e, 2)
    finally:
        abcd_logger.removeHandler(collector)


def _write_error(config: RunConfig, seed: Optional[int], error: Exception, status: int) -> int:
    details = error.details() if isinstance(error, AbcdError) else {}
    payload = {
        "meta": _meta(config, seed),
        "error": {"type": type(error).__name__, "message": str(error), "details": details},
    }
    try:
        config.out.mkdir(parents=True, exist_ok=True)
        (config.out / ERROR_FILE).write_text(_dumps(payload), encoding="utf-8")
    except OSError:
        logger.exception(f"unable to write {ERROR_FILE} into {config.out}")
    return status


_JSON_TYPES = {
    "object": dict,
    "array": list,
    "string": str,
    "integer": int,
    "number": (int, float),
    "boolean": bool,
    "null": type(None),
}


def _is_json_type(value, name: str) -> bool:
    if isinstance(value, bool) and name in ("integer", "number"):
        return False
    return isinstance(value, _JSON_TYPES[name])


def _check_node(value, node: Dict[str, Any], schema: Dict[str, Any], where: str) -> List[str]:
    if "$ref" in node:
        node = schema["definitions"][node["$ref"].rsplit("/", 1)[-1]]
    allowed = node.get("type")
    if allowed is not None:
        allowed = [allowed] if isinstance(allowed, str) else allowed
        if not any(_is_json_type(value, name) for name in allowed):
            return [f"{where} must be a JSON {' or '.join(allowed)}"]
    problems = []
    if "enum" in node and value not in node["enum"]:
        problems.append(f"{where} is {value!r}, not one of the known values")
    if isinstance(value, dict):
        required = node.get("required", ())
        problems += [f"{where} is missing {key!r}" for key in required if key not in value]
        for key, sub in node.get("properties", {}).items():
            if key in value:
                problems += _check_node(value[key], sub, schema, f"{where}.{key}")
    if isinstance(value, list) and "items" in node:
        for i, item in enumerate(value):
            problems += _check_node(item, node["items"], schema, f"{where}[{i}]")
    return problems


def validate_report(payload: Dict[str, Any]) -> List[str]:
    """Check a report or error payload against ``report_schema.json``; returns the problems.

    Understands the keywords that schema uses: ``type``, ``required``, ``properties``,
    ``items``, ``enum``, local ``$ref`` and the top-level report/error ``oneOf``.
    """
    schema = json.loads(REPORT_SCHEMA.read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        return ["report must be a JSON object"]
    branch = schema["oneOf"][1 if "error" in payload else 0]
    return _check_node(payload, branch, schema, "report")
