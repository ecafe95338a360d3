"""
Cheap placement heuristics.
"""
import logging
from typing import Tuple

import numpy as np

from ..data_classes import SchedulingProblem
from .base import Policy, problem_arrays

logger = logging.getLogger(__name__)


def round_robin(n: int, m: int) -> np.ndarray:
    """Host for the i-th task (tasks in id order): i mod m."""
    return np.arange(n, dtype=np.int64) % m


def best_fit(demands: np.ndarray, capacities: np.ndarray) -> np.ndarray:
    """
    Place tasks in descending IPS demand on the feasible host with the least
    residual IPS.

    Feasible means RAM and disk fit and residual IPS covers the demand. When
    no host is feasible, the RAM/disk-feasible host with the most residual IPS
    is used, and failing that the least-loaded host.
    """
    n, m = demands.shape[0], capacities.shape[0]
    residual = capacities.astype(np.float64).copy()
    assign = np.zeros(n, dtype=np.int64)
    # stable sort keeps id order among equal demands
    order = np.argsort(-demands[:, 0], kind="stable")
    for i in order:
        c, r, s = demands[i]
        fits_mem = (residual[:, 1] >= r) & (residual[:, 2] >= s)
        fits_all = fits_mem & (residual[:, 0] >= c)
        if fits_all.any():
            candidates = np.where(fits_all)[0]
            host = int(candidates[np.argmin(residual[candidates, 0])])
        elif fits_mem.any():
            candidates = np.where(fits_mem)[0]
            host = int(candidates[np.argmax(residual[candidates, 0])])
        else:
            load = 1.0 - residual[:, 0] / capacities[:, 0]
            host = int(np.argmin(load))
        residual[host] -= demands[i]
        assign[i] = host
    return assign


class RoundRobinPolicy(Policy):
    name = "round_robin"

    def decide(self, problem: SchedulingProblem, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
        order = np.argsort([t.id for t in problem.tasks], kind="stable")
        hosts = round_robin(problem.n, problem.m)
        assign = np.empty(problem.n, dtype=np.int64)
        assign[order] = hosts
        return assign, 1

    def work_units(self, n: int, m: int) -> float:
        return float(n)


class BestFitPolicy(Policy):
    name = "best_fit"

    def decide(self, problem: SchedulingProblem, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
        arrays = problem_arrays(problem)
        return best_fit(arrays.demands, arrays.capacities), 1

    def work_units(self, n: int, m: int) -> float:
        return float(n * m)
