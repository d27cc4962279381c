"""Report emission: JSON records, a plain-text table and matplotlib figures."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Dict, List

import numpy as np

from .metrics import BenchmarkSummary

COLUMNS = ("variant", "pairs", "RR", "FMR", "IR", "RRE(deg)", "RTE(m)")


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.3f}"
    return str(x)


def summary_table(summaries: Dict[str, BenchmarkSummary]) -> str:
    rows = [COLUMNS]
    for name, s in summaries.items():
        rows.append((name, s.n_pairs, s.rr, s.fmr, s.mean_ir, s.median_rre, s.median_rte))
    cells = [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(COLUMNS))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in cells]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _clean(o):
    # JSON has no inf/nan; write them as strings so the file stays standard
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, default=_json_default)
        fh.write("\n")


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_summaries(summaries: Dict[str, BenchmarkSummary], path) -> None:
    plt = _plt()
    names = list(summaries)
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(max(5, 1.4 * len(names)), 3.5))
    ax.bar(x - 0.2, [summaries[n].rr for n in names], 0.4, label="RR")
    ax.bar(x + 0.2, [summaries[n].mean_ir for n in names], 0.4, label="IR")
    ax.set_xticks(x, names, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_errors(summaries: Dict[str, BenchmarkSummary], path) -> None:
    plt = _plt()
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for name, s in summaries.items():
        rre = np.array([r.rre for r in s.records])
        rte = np.array([r.rte for r in s.records])
        axes[0].plot(np.sort(rre), np.linspace(0, 1, len(rre)), label=name)
        axes[1].plot(np.sort(rte), np.linspace(0, 1, len(rte)), label=name)
    axes[0].set_xscale("symlog", linthresh=1.0)
    axes[0].set_xlabel("RRE (deg)")
    axes[1].set_xscale("symlog", linthresh=0.01)
    axes[1].set_xlabel("RTE (m)")
    axes[0].set_ylabel("fraction of pairs")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_nodes(points: np.ndarray, salient: np.ndarray, non_salient: np.ndarray, path) -> None:
    """Top-down view of a cloud with its salient and non-salient nodes."""
    plt = _plt()
    # project on the two principal directions so arbitrary world poses still read as a floor plan
    c = points.mean(axis=0)
    _, _, Vt = np.linalg.svd(points - c, full_matrices=False)
    proj = lambda a: (np.asarray(a).reshape(-1, 3) - c) @ Vt[:2].T
    fig, ax = plt.subplots(figsize=(5, 5))
    p = proj(points)
    ax.scatter(p[:, 0], p[:, 1], s=0.3, c="0.7")
    ns = proj(non_salient)
    ax.scatter(ns[:, 0], ns[:, 1], s=8, c="tab:blue", label=f"non-salient ({len(ns)})")
    sa = proj(salient)
    ax.scatter(sa[:, 0], sa[:, 1], s=14, c="tab:red", label=f"salient ({len(sa)})")
    ax.set_aspect("equal")
    ax.legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def write_suite_report(report, out_dir, figures: bool = True) -> List[Path]:
    """Write ``report.json``, ``summary.txt`` and (optionally) PNG figures into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.json", out / "summary.txt"]
    write_json(report.to_dict(), written[0])
    table = summary_table(report.summaries)
    written[1].write_text(f"mode: {report.mode}  ({report.seconds:.1f} s)\n" + table)
    if figures:
        written.append(out / "summary.png")
        plot_summaries(report.summaries, written[-1])
        written.append(out / "errors.png")
        plot_errors(report.summaries, written[-1])
    return written
