#
# Report figures. Rendered with the Agg backend straight to PNG files.
#

from __future__ import annotations

import re
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import CensusRow  # noqa: E402
from .search import TraceRow  # noqa: E402

# PNG metadata is pinned so repeated runs give byte-identical files.
_PNG_METADATA = {"Software": None}


def use_report_style():
    """
    Adjust the matplotlib configuration for report figures.
    """
    matplotlib.rcParams["font.size"] = 10.0
    matplotlib.rcParams["axes.spines.top"] = False
    matplotlib.rcParams["axes.spines.right"] = False
    matplotlib.rcParams["legend.frameon"] = False
    matplotlib.rcParams["lines.linewidth"] = 0.8
    matplotlib.rcParams["savefig.dpi"] = 120


def safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text) or "event"


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def plot_census(rows: Sequence[CensusRow], path) -> Path:
    """Eligible-drug count against event headcount, one point per event."""
    use_report_style()
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    heads = [r.headcount for r in rows]
    elig = [r.p_eligible for r in rows]
    ax.scatter(heads, elig, s=14, color="0.2")
    if heads and max(heads) > 0 and min(h for h in heads) > 0:
        ax.set_xscale("log")
    ax.set_xlabel("reports with the event (headcount)")
    ax.set_ylabel("eligible drugs")
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_trace(rows: Sequence[TraceRow], path, title: str = "") -> Path:
    """Current and running-best BIC per chain against iteration."""
    use_report_style()
    by_chain: dict[int, list[TraceRow]] = defaultdict(list)
    for row in rows:
        by_chain[row.chain].append(row)
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6.0, 5.0), sharex=True)
    for chain in sorted(by_chain):
        series = by_chain[chain]
        it = [r.iter for r in series]
        top.plot(it, [r.bic_current for r in series], color="C0", alpha=0.3)
        bottom.plot(it, [r.bic_best for r in series], color="C3", alpha=0.3)
    top.set_ylabel("BIC (current)")
    bottom.set_ylabel("BIC (best so far)")
    bottom.set_xlabel("iteration")
    if title:
        top.set_title(title)
    fig.tight_layout()
    return _save(fig, Path(path))
