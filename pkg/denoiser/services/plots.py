"""Static SVG line plots of experiment records.

Each series is drawn as its mean across seeds with a +-1 standard deviation
band; reference and baseline series are dashed. Output is byte-stable for
identical records: fixed SVG hash salt, no date metadata.
"""

import logging
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from denoiser.exceptions import DataIOError  # noqa: E402
from denoiser.models.records import MetricsRecord  # noqa: E402

logger = logging.getLogger(__name__)

SVG_HASH_SALT = "particle-denoiser"

XAxis = Callable[[MetricsRecord], float]


def by_time(record: MetricsRecord) -> float:
    return record.time


def by_sweep(record: MetricsRecord) -> float:
    return record.sweep_value


def series_stats(records: Sequence[MetricsRecord], x: XAxis) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean and standard deviation across seeds at each x, x ascending."""
    grouped: Dict[float, List[float]] = {}
    for record in records:
        if np.isfinite(record.value):
            grouped.setdefault(x(record), []).append(record.value)
    xs = np.array(sorted(grouped))
    means = np.array([np.mean(grouped[v]) for v in xs])
    stds = np.array([np.std(grouped[v]) for v in xs])
    return xs, means, stds


def line_plot(
    path: Path,
    series: Dict[str, Sequence[MetricsRecord]],
    x: XAxis,
    xlabel: str,
    ylabel: str,
    title: str,
    dashed: Sequence[str] = (),
    log_x: bool = False,
) -> Path:
    """Draw one SVG with a line per series.

    Raises:
        DataIOError: If the file cannot be written.
    """
    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.4))
        for name in sorted(series):
            xs, means, stds = series_stats(series[name], x)
            if xs.size == 0:
                continue
            style = "--" if name in dashed else "-"
            (line,) = ax.plot(xs, means, style, marker="o" if xs.size < 30 else None, label=name)
            if name not in dashed and np.any(stds > 0):
                ax.fill_between(xs, means - stds, means + stds, color=line.get_color(), alpha=0.2)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        if log_x:
            ax.set_xscale("log")
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as e:
            logger.error(f"Failed to write plot {path}: {e}")
            raise DataIOError(f"Cannot write {path}: {e}") from e
        finally:
            plt.close(fig)
    logger.debug(f"Wrote plot {path}")
    return path
