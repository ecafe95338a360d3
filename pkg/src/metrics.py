"""
Episode metrics and SLA calibration.
"""
import logging
import math
from collections import defaultdict
from typing import Dict, List, Sequence

import numpy as np

from .data_classes import IntervalRecord
from .exceptions import ConfigError, EmptyEpisodeError

logger = logging.getLogger(__name__)

METRIC_NAMES = ["avg_cost", "energy", "avg_response", "avg_wait", "sla_rate", "fairness", "avg_cpu"]


def jain_fairness(values: Sequence[float]) -> float:
    """
    Jain's fairness index (sum x)^2 / (N * sum x^2).

    Returns 1.0 for an empty or all-zero vector.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return 1.0
    sq = float(np.sum(arr * arr))
    if sq == 0.0:
        return 1.0
    return float(np.sum(arr)) ** 2 / (arr.size * sq)


def metrics_report(episode_log: List[IntervalRecord]) -> Dict[str, float]:
    """
    Compute the seven QoS metrics of an episode.

    Task-level metrics run over the tasks completed during the episode.
    Energy is total joules; avg_cpu is a percentage.

    Args:
        episode_log: one record per interval

    Returns:
        Dictionary of metrics
    """
    if not episode_log:
        raise EmptyEpisodeError("Cannot compute metrics of an empty episode")

    T = len(episode_log)
    completions = sum(r.completions for r in episode_log)
    sum_response = sum(r.sum_response for r in episode_log)
    sum_response_sq = sum(r.sum_response_sq for r in episode_log)
    sum_wait = sum(r.sum_wait for r in episode_log)
    violations = sum(r.sla_violations for r in episode_log)

    if completions == 0:
        logger.warning(f"No task completed in {T} intervals; task metrics set to 0")
        avg_response = avg_wait = sla_rate = 0.0
        fairness = 1.0
    else:
        avg_response = sum_response / completions
        avg_wait = sum_wait / completions
        sla_rate = violations / completions
        fairness = (sum_response ** 2) / (completions * sum_response_sq) if sum_response_sq > 0 else 1.0

    return {
        "avg_cost": sum(r.phi for r in episode_log) / T,
        "energy": sum(r.energy for r in episode_log),
        "avg_response": avg_response,
        "avg_wait": avg_wait,
        "sla_rate": sla_rate,
        "fairness": fairness,
        "avg_cpu": sum(r.mean_cpu_pct for r in episode_log) / T,
    }


def total_objective(episode_log: List[IntervalRecord]) -> float:
    """Sum of phi + rho * omega over the episode."""
    return float(sum(r.objective for r in episode_log))


def nearest_rank(values: Sequence[float], percentile: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * N)-th smallest value."""
    if not values:
        raise ValueError("Percentile of an empty sample")
    if not 0 < percentile <= 100:
        raise ValueError(f"Percentile must be in (0, 100], got {percentile}")
    ordered = sorted(values)
    rank = max(1, math.ceil(percentile / 100.0 * len(ordered)))
    return float(ordered[rank - 1])


def calibrate_sla(reference_run: List[IntervalRecord],
                  app_types: Sequence[str],
                  percentile: float = 90.0) -> Dict[str, float]:
    """
    Derive per-application SLA deadlines from a reference episode.

    Args:
        reference_run: episode log holding completed response times
        app_types: applications that need a deadline
        percentile: nearest-rank percentile of response time

    Returns:
        Mapping app type -> deadline (s)

    Raises:
        ConfigError: if some application never completed in the reference run
    """
    samples: Dict[str, List[float]] = defaultdict(list)
    for record in reference_run:
        for app, rt in zip(record.completed_apps, record.completed_response):
            samples[app].append(rt)
    missing = [a for a in app_types if not samples.get(a)]
    if missing:
        raise ConfigError(f"Reference run has no completed tasks for application types: {missing}")
    deadlines = {app: nearest_rank(samples[app], percentile) for app in app_types}
    for app, psi in deadlines.items():
        logger.info(f"SLA deadline {app}: {psi:.3f}s ({len(samples[app])} samples)")
    return deadlines
