"""Static SVG rendering of curve series (needs the ``svg`` extra)."""

from pathlib import Path
from typing import Optional, Sequence, Union

from abcdkit.logger import logger as abcd_logger
from abcdkit.report.curves import CurveKind, CurveSeries

logger = abcd_logger.getChild("svg")

HASH_SALT = "abcdkit"


def _pyplot():
    try:
        import matplotlib
    except ModuleNotFoundError:
        return None
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = HASH_SALT
    from matplotlib import pyplot

    return pyplot


def render_svg(
    series: Sequence[CurveSeries],
    path: Union[str, Path],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> Optional[Path]:
    """Draw ``series`` into one SVG; returns None when matplotlib is not installed."""
    plt = _pyplot()
    if plt is None:
        logger.warning("matplotlib is not installed; skipping SVG output (install abcdkit[svg])")
        return None

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        for s in series:
            if s.kind is CurveKind.effect_bar:
                err = None
                if s.ci_lo is not None:
                    err = [s.y - s.ci_lo, s.ci_hi - s.y]
                ax.bar(s.x, s.y, yerr=err, capsize=4, label=s.name or None)
                ax.set_xticks(s.x, list(s.labels))
                continue
            ax.plot(s.x, s.y, label=s.name or None)
            if s.ci_lo is not None and s.ci_hi is not None:
                ax.fill_between(s.x, s.ci_lo, s.ci_hi, alpha=0.2)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if any(s.name for s in series):
            ax.legend()
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return path
