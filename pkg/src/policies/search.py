"""
Single-pass and iterative-improvement placement policies.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..data_classes import SchedulingProblem
from .base import ObjectiveWeights, Policy, PolicyParams, host_loads, placement_objective, problem_arrays
from .cost_model import pretrained_cost_model
from .heuristics import best_fit

logger = logging.getLogger(__name__)


@dataclass
class GreedySurrogateParams(PolicyParams):
    model_seed: int = 0
    model_hidden: int = 16
    overhead_s: float = 0.02
    unit_s: float = 2e-4


@dataclass
class LocalSearchParams(PolicyParams):
    sweeps: int = 5
    overhead_s: float = 0.02
    unit_s: float = 1e-4


class GreedySurrogatePolicy(Policy):
    """
    Place tasks one at a time (largest IPS first) on the host whose
    predicted cost increase is smallest.
    """

    name = "greedy_surrogate"
    params_class = GreedySurrogateParams

    def decide(self, problem: SchedulingProblem, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
        arrays = problem_arrays(problem)
        model = pretrained_cost_model(self.params.model_seed, self.params.model_hidden)
        loads = np.zeros((arrays.m, 3))
        fractions = arrays.demands[:, None, :] / arrays.capacities[None, :, :]
        assign = np.zeros(arrays.n, dtype=np.int64)
        evaluations = 0
        for i in np.argsort(-arrays.demands[:, 0], kind="stable"):
            best_host, best_cost = 0, np.inf
            for j in range(arrays.m):
                trial = loads.copy()
                trial[j] += fractions[i, j]
                if np.any(trial[j, 1:] > 1.0):
                    continue
                cost = model.discrete_cost(trial, arrays)
                evaluations += 1
                if cost < best_cost:
                    best_host, best_cost = j, cost
            if best_cost == np.inf:
                best_host = int(np.argmin(loads[:, 0]))
            assign[i] = best_host
            loads[best_host] += fractions[i, best_host]
        return assign, evaluations

    def work_units(self, n: int, m: int) -> float:
        return float(n * m)


class LocalSearchPolicy(Policy):
    """
    Start from the current placement (best fit for new tasks) and apply the
    best single-task move while it lowers the placement objective.
    """

    name = "local_search"
    params_class = LocalSearchParams

    def decide(self, problem: SchedulingProblem, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
        arrays = problem_arrays(problem)
        weights = ObjectiveWeights()
        assign = best_fit(arrays.demands, arrays.capacities)
        running = arrays.previous >= 0
        assign[running] = arrays.previous[running]
        score = placement_objective(assign, arrays, weights)
        sweeps = 0
        for _ in range(self.params.sweeps):
            sweeps += 1
            improved = False
            for i in range(arrays.n):
                current = assign[i]
                best_host, best_score = current, score
                for j in range(arrays.m):
                    if j == current:
                        continue
                    assign[i] = j
                    trial = placement_objective(assign, arrays, weights)
                    if trial < best_score - 1e-12:
                        best_host, best_score = j, trial
                assign[i] = best_host
                if best_host != current:
                    score, improved = best_score, True
            if not improved:
                break
        logger.debug(f"Local search: objective {score:.4f} after {sweeps} sweeps, max load "
                     f"{host_loads(assign, arrays)[:, 0].max():.2f}")
        return assign, sweeps

    def work_units(self, n: int, m: int) -> float:
        return float(self.params.sweeps * n * m)
