"""Figure builders over the simulator's CSV outputs.

Reads results.csv (per-episode metrics keyed by variant, M, seed) and
learning_curve.csv (per-epoch training returns keyed by variant) and
renders one figure per id: the RL convergence curves and the total /
controlling / stability cost versus the number of systems. Rendering is
read-only and idempotent; each figure is written as a lossless raster
(png) plus a vector export (svg).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "wncs-figures"  # deterministic ids

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGURE_IDS = ("convergence", "total_cost", "controlling_cost", "stability_cost")

_COST_COLUMN = {
    "total_cost": "objective",
    "controlling_cost": "controlling_cost",
    "stability_cost": "stability_cost",
}

_COST_LABEL = {
    "total_cost": "objective (comm + control cost)",
    "controlling_cost": "cost related to controlling",
    "stability_cost": "cost related to stability",
}


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    out_dir: str
    results_csv: str | None = None
    curve_csv: str | None = None

    def __post_init__(self):
        if self.figure_id not in FIGURE_IDS:
            raise ValueError(
                f"unknown figure id {self.figure_id!r}; valid: {FIGURE_IDS}"
            )


def _read_csv(path, required):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise ValueError(f"{path}: missing column(s) {missing}")
        return list(reader)


def load_curve(path):
    """Learning-curve rows grouped by variant, ordered by epoch."""
    rows = _read_csv(path, ("epoch", "mean_return", "std_return", "variant"))
    series: dict = {}
    for row in rows:
        series.setdefault(row["variant"], []).append(
            (int(row["epoch"]), float(row["mean_return"]), float(row["std_return"]))
        )
    if not series:
        raise ValueError(f"{path}: no learning-curve rows")
    return {name: sorted(vals) for name, vals in series.items()}


def load_results(path, metric):
    """Per-(variant, M) samples of one metric, completed rows only."""
    rows = _read_csv(path, ("variant", "M", "seed", metric))
    grouped: dict = {}
    for row in rows:
        if row.get("status", "ok") != "ok":
            continue
        value = float(row[metric])
        grouped.setdefault((row["variant"], int(row["M"])), []).append(value)
    if not grouped:
        raise ValueError(f"{path}: no completed rows for metric {metric!r}")
    return grouped


def _save(fig, out_dir, name):
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for ext in ("png", "svg"):
        path = os.path.join(out_dir, f"{name}.{ext}")
        metadata = {"Date": None} if ext == "svg" else None
        fig.savefig(path, bbox_inches="tight", metadata=metadata)
        paths.append(path)
    plt.close(fig)
    return paths


def _render_convergence(spec: FigureSpec):
    if spec.curve_csv is None:
        raise ValueError("convergence figure needs --curve")
    series = load_curve(spec.curve_csv)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for name in sorted(series):
        data = np.array(series[name], dtype=float)
        epochs, mean, std = data[:, 0], data[:, 1], data[:, 2]
        ax.plot(epochs, mean, label=name)
        ax.fill_between(epochs, mean - std, mean + std, alpha=0.25)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean return")
    ax.set_yscale("symlog")
    ax.legend()
    ax.set_title("policy training convergence")
    paths = _save(fig, spec.out_dir, "convergence")
    return {"figure": "convergence", "series": sorted(series), "paths": paths}


def _render_cost(spec: FigureSpec):
    if spec.results_csv is None:
        raise ValueError(f"{spec.figure_id} figure needs --results")
    metric = _COST_COLUMN[spec.figure_id]
    grouped = load_results(spec.results_csv, metric)
    variants = sorted({v for v, _ in grouped})
    m_values = sorted({m for _, m in grouped})
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for variant in variants:
        ms, means, cis = [], [], []
        for m in m_values:
            vals = grouped.get((variant, m))
            if not vals:
                continue
            vals = np.asarray(vals, dtype=float)
            ms.append(m)
            means.append(vals.mean())
            n = len(vals)
            cis.append(1.96 * vals.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0)
        ax.errorbar(ms, means, yerr=cis, marker="o", capsize=3, label=variant)
    ax.set_xlabel("number of control systems M")
    ax.set_ylabel(_COST_LABEL[spec.figure_id])
    ax.set_xticks(m_values)
    if spec.figure_id == "stability_cost" or _needs_log(grouped):
        ax.set_yscale("log")
    ax.legend()
    paths = _save(fig, spec.out_dir, spec.figure_id)
    return {"figure": spec.figure_id, "series": variants, "paths": paths}


def _needs_log(grouped) -> bool:
    means = [np.mean(v) for v in grouped.values()]
    positive = [m for m in means if m > 0]
    return bool(positive) and max(positive) / min(positive) > 1e3


def render(spec: FigureSpec) -> dict:
    """Render one figure; returns its series labels and written paths."""
    if spec.figure_id == "convergence":
        return _render_convergence(spec)
    return _render_cost(spec)
