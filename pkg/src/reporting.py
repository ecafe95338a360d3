"""
Report files: per-interval CSV, episode summary, loss curves, comparison
and sweep tables, and their SVG charts.

CSV is authoritative. SVGs use a fixed hash salt and no date so that the
same inputs give the same bytes; timestamps live only in `_meta.json`.
"""
import json
import logging
import os
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .data_classes import IntervalRecord  # noqa: E402
from .exceptions import EmptyEpisodeError  # noqa: E402
from .metrics import METRIC_NAMES, metrics_report, total_objective  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "metanet-report"
plt.rcParams["svg.fonttype"] = "none"

RECORD_COLUMNS = ["interval", "policy", "k", "phi", "omega", "selector_time", "objective", "energy",
                  "arrivals", "completions", "sum_response", "sum_response_sq", "sum_wait",
                  "sla_violations", "mean_cpu_pct", "active_hosts", "migrations", "unplaced",
                  "inference_host"]


def _ensure_dir(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def _save_svg(fig, path: str):
    _ensure_dir(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def records_frame(log: Sequence[IntervalRecord], policies: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """One row per interval; `pred_<policy>` columns hold the selector's score per policy when present."""
    rows = []
    for record in log:
        row = {col: getattr(record, col) for col in RECORD_COLUMNS}
        if policies is not None:
            for name, value in zip(policies, record.predicted or [np.nan] * len(policies)):
                row[f"pred_{name}"] = value
        rows.append(row)
    columns = RECORD_COLUMNS + [f"pred_{p}" for p in (policies or [])]
    return pd.DataFrame(rows, columns=columns)


def summary_from_frame(df: pd.DataFrame) -> Dict[str, float]:
    """The seven episode metrics recomputed from interval rows."""
    if df.empty:
        raise EmptyEpisodeError("Cannot summarise an empty report")
    T = len(df)

    def total(col: str) -> float:
        return sum(df[col].tolist())

    completions = int(total("completions"))
    sum_response = total("sum_response")
    sum_response_sq = total("sum_response_sq")
    if completions == 0:
        avg_response = avg_wait = sla_rate = 0.0
        fairness = 1.0
    else:
        avg_response = sum_response / completions
        avg_wait = total("sum_wait") / completions
        sla_rate = total("sla_violations") / completions
        fairness = (sum_response ** 2) / (completions * sum_response_sq) if sum_response_sq > 0 else 1.0
    return {
        "avg_cost": total("phi") / T,
        "energy": total("energy"),
        "avg_response": avg_response,
        "avg_wait": avg_wait,
        "sla_rate": sla_rate,
        "fairness": fairness,
        "avg_cpu": total("mean_cpu_pct") / T,
    }


def read_report(path: str) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def selection_frequencies(log: Sequence[IntervalRecord], policies: Sequence[str]) -> Dict[str, float]:
    counts = {name: 0 for name in policies}
    for record in log:
        counts[record.policy] = counts.get(record.policy, 0) + 1
    n = max(len(log), 1)
    return {name: counts[name] / n for name in counts}


def plot_predictions(df: pd.DataFrame, policies: Sequence[str], path: str):
    """Predicted denormalised score per policy over time, with the selected policy underneath."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(10, 6), sharex=True,
                                      gridspec_kw={"height_ratios": [3, 1]})
    for name in policies:
        col = f"pred_{name}"
        if col in df and df[col].notna().any():
            top.plot(df["interval"], df[col], label=name, linewidth=1)
    top.set_ylabel("predicted cost")
    top.legend(fontsize=7, ncol=2)
    bottom.scatter(df["interval"], df["k"], s=4, c=df["k"], cmap="tab10", vmin=0, vmax=9)
    bottom.set_yticks(range(len(policies)))
    bottom.set_yticklabels(policies, fontsize=6)
    bottom.set_xlabel("interval")
    _save_svg(fig, path)


def write_report(log: Sequence[IntervalRecord],
                 prefix: str,
                 policies: Sequence[str],
                 metadata: Optional[Dict[str, Any]] = None) -> Dict[str, float]:
    """
    Write `<prefix>.csv`, `<prefix>_summary.json`, `<prefix>_meta.json` and,
    when the selector produced predictions, `<prefix>_predictions.svg`.

    Returns:
        the summary metrics plus total_objective
    """
    df = records_frame(log, policies)
    _ensure_dir(prefix + ".csv")
    df.to_csv(prefix + ".csv", index=False)
    summary = metrics_report(list(log))
    summary["total_objective"] = total_objective(list(log))
    summary["selection_frequency"] = selection_frequencies(log, policies)
    with open(prefix + "_summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    meta = {"created_at": datetime.now(timezone.utc).isoformat(), "intervals": len(log)}
    meta.update(metadata or {})
    with open(prefix + "_meta.json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    if any(r.predicted for r in log):
        plot_predictions(df, policies, prefix + "_predictions.svg")
    logger.info(f"Report written to {prefix}.csv")
    return summary


def loss_curve_frame(history) -> pd.DataFrame:
    return pd.DataFrame([vars(h) for h in history],
                        columns=["epoch", "train_loss", "val_loss", "train_cost", "train_time",
                                 "val_cost", "val_time"])


def write_loss_curve(history, prefix: str) -> pd.DataFrame:
    """Training curves: `<prefix>.csv` and `<prefix>.svg` (loss, cost part, time part)."""
    df = loss_curve_frame(history)
    _ensure_dir(prefix + ".csv")
    df.to_csv(prefix + ".csv", index=False)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for ax, part in zip(axes, ("loss", "cost", "time")):
        ax.plot(df["epoch"], df[f"train_{part}"], label="train")
        ax.plot(df["epoch"], df[f"val_{part}"], label="validation")
        ax.set_title(part)
        ax.set_xlabel("epoch")
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save_svg(fig, prefix + ".svg")
    return df


def comparison_frame(summaries: Dict[str, Dict[str, Any]]) -> pd.DataFrame:
    """One row per selector, sorted by name."""
    rows = []
    for name in sorted(summaries):
        row = {"selector": name}
        row.update({m: summaries[name][m] for m in METRIC_NAMES + ["total_objective"]})
        rows.append(row)
    return pd.DataFrame(rows, columns=["selector"] + METRIC_NAMES + ["total_objective"])


def plot_metric_bars(df: pd.DataFrame, label_col: str, path: str):
    """Bars per metric; each bar carries its value as a text label with gid `<metric>/<label>`."""
    metrics = METRIC_NAMES + ["total_objective"]
    fig, axes = plt.subplots(2, 4, figsize=(14, 6))
    for ax, metric in zip(axes.flat, metrics):
        names = df[label_col].astype(str)
        bars = ax.bar(names, df[metric])
        for text, name in zip(ax.bar_label(bars, fmt="%.6g", fontsize=6), names):
            text.set_gid(f"{metric}/{name}")
        ax.set_title(metric, fontsize=9)
        ax.tick_params(axis="x", labelrotation=45, labelsize=7)
    fig.tight_layout()
    _save_svg(fig, path)


def write_comparison(summaries: Dict[str, Dict[str, Any]], prefix: str) -> pd.DataFrame:
    df = comparison_frame(summaries)
    _ensure_dir(prefix + ".csv")
    df.to_csv(prefix + ".csv", index=False)
    plot_metric_bars(df, "selector", prefix + ".svg")
    logger.info(f"Comparison of {len(df)} selectors written to {prefix}.csv")
    return df


def write_sweep(results: Dict[int, Dict[str, Any]],
                frequencies: Dict[int, Dict[str, float]],
                prefix: str) -> pd.DataFrame:
    """
    Sensitivity to the host count: metrics per count in `<prefix>.csv`,
    selection frequency per (count, policy) in `<prefix>_selection.csv`.
    """
    rows = []
    for hosts in sorted(results):
        row = {"hosts": hosts}
        row.update({m: results[hosts][m] for m in METRIC_NAMES + ["total_objective"]})
        rows.append(row)
    df = pd.DataFrame(rows, columns=["hosts"] + METRIC_NAMES + ["total_objective"])
    _ensure_dir(prefix + ".csv")
    df.to_csv(prefix + ".csv", index=False)
    freq_rows = [{"hosts": hosts, "policy": policy, "frequency": value}
                 for hosts in sorted(frequencies)
                 for policy, value in frequencies[hosts].items()]
    pd.DataFrame(freq_rows, columns=["hosts", "policy", "frequency"]).to_csv(prefix + "_selection.csv", index=False)

    fig, axes = plt.subplots(2, 4, figsize=(14, 6))
    for ax, metric in zip(axes.flat, METRIC_NAMES + ["total_objective"]):
        ax.plot(df["hosts"], df[metric], marker="o")
        ax.set_title(metric, fontsize=9)
        ax.set_xlabel("hosts")
    fig.tight_layout()
    _save_svg(fig, prefix + ".svg")
    return df


def summary_table(summaries: Dict[str, Dict[str, Any]]) -> List[str]:
    """Plain-text lines for the console."""
    lines = [f"{'selector':<22}" + "".join(f"{m:>14}" for m in METRIC_NAMES)]
    for name in sorted(summaries):
        lines.append(f"{name:<22}" + "".join(f"{summaries[name][m]:>14.5g}" for m in METRIC_NAMES))
    return lines
