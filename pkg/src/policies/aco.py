"""
Ant colony optimisation over task-to-host assignments, driven by a host
utilisation forecast.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..data_classes import SchedulingProblem
from .base import ObjectiveWeights, Policy, PolicyParams, ProblemArrays, placement_objective, problem_arrays
from .forecasting import ar_forecast, smoothing_forecast

logger = logging.getLogger(__name__)


@dataclass
class AcoParams(PolicyParams):
    ants: int = 10
    iters: int = 20
    evaporation: float = 0.1
    alpha: float = 1.0
    beta: float = 2.0
    overhead_s: float = 0.01
    unit_s: float = 2e-5


@dataclass
class ForecastAcoParams(AcoParams):
    forecaster: str = "ar"  # ar | smoothing
    ar_order: int = 2
    smoothing_alpha: float = 0.5
    window: int = 20


def _heuristic(arrays: ProblemArrays, predicted: np.ndarray) -> np.ndarray:
    """Desirability per host: cheap hosts and hosts expected to be on anyway."""
    active_bonus = np.where(predicted > 0, 2.0, 1.0)
    crowding = 1.0 + np.maximum(predicted - 1.0, 0.0)
    return active_bonus / ((0.1 + arrays.price_rel) * crowding)


def aco_optimize(arrays: ProblemArrays,
                 predicted: np.ndarray,
                 params: AcoParams,
                 rng: np.random.Generator,
                 weights: ObjectiveWeights = ObjectiveWeights()) -> Tuple[np.ndarray, float, int]:
    """
    Pheromone-guided search for the assignment minimising the placement objective.

    Each ant draws exactly one uniform number per task, so the random stream
    of the first k iterations does not depend on the iteration budget and the
    best-so-far objective never gets worse with more iterations.

    Args:
        arrays: dense problem
        predicted: forecast CPU fraction per host
        params: colony size, iterations, evaporation, alpha, beta
        rng: random stream
        weights: objective weights

    Returns:
        (best assignment, its objective, iterations run)
    """
    if params.ants < 1 or params.iters < 1:
        raise ValueError("ACO needs ants >= 1 and iters >= 1")
    n, m = arrays.n, arrays.m
    eta = _heuristic(arrays, predicted) ** params.beta
    tau = np.ones((n, m))
    best_assign: Optional[np.ndarray] = None
    best_score = np.inf

    for _ in range(params.iters):
        iter_best, iter_score = None, np.inf
        for _ in range(params.ants):
            draws = rng.random(n)
            assign = np.empty(n, dtype=np.int64)
            used = np.zeros((m, 3))
            for i in range(n):
                room = arrays.capacities[:, 1:] - used[:, 1:]
                feasible = np.all(arrays.demands[i, 1:] <= room + 1e-12, axis=1)
                if feasible.any():
                    weight = np.where(feasible, (tau[i] ** params.alpha) * eta, 0.0)
                    cdf = np.cumsum(weight / weight.sum())
                    host = int(min(np.searchsorted(cdf, draws[i], side="right"), m - 1))
                    while not feasible[host]:
                        host -= 1
                else:
                    host = int(np.argmin(used[:, 0] / arrays.capacities[:, 0]))
                assign[i] = host
                used[host] += arrays.demands[i]
            score = placement_objective(assign, arrays, weights)
            if score < iter_score:
                iter_best, iter_score = assign, score
        if iter_score < best_score:
            best_assign, best_score = iter_best.copy(), iter_score

        tau *= (1.0 - params.evaporation)
        rows = np.arange(n)
        tau[rows, iter_best] += 1.0 / (1.0 + iter_score)
        tau[rows, best_assign] += 1.0 / (1.0 + best_score)

    return best_assign, float(best_score), params.iters


class ForecastAcoPolicy(Policy):
    """Forecast next-interval host load, then search placements with ACO."""

    name = "ar_aco"
    params_class = ForecastAcoParams

    def predict(self, arrays: ProblemArrays) -> np.ndarray:
        p = self.params
        history = arrays.history[-p.window:] if p.window > 0 else arrays.history
        if p.forecaster == "smoothing":
            if history.shape[0] == 0:
                return np.zeros(arrays.m)
            return smoothing_forecast(history, p.smoothing_alpha, capacity=2.0)
        if history.shape[0] < p.ar_order + 1:
            return history[-1].copy() if history.shape[0] else np.zeros(arrays.m)
        return ar_forecast(history, p.ar_order, capacity=2.0)

    def decide(self, problem: SchedulingProblem, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
        arrays = problem_arrays(problem)
        predicted = self.predict(arrays)
        assign, score, iterations = aco_optimize(arrays, predicted, self.params, rng)
        logger.debug(f"{self.name}: objective {score:.4f} after {iterations} iterations")
        return assign, iterations

    def work_units(self, n: int, m: int) -> float:
        p = self.params
        forecast = m * p.window * (p.ar_order + 1 if p.forecaster == "ar" else 1)
        return float(forecast + p.ants * p.iters * n * m)


@dataclass
class SmoothingAcoParams(ForecastAcoParams):
    forecaster: str = "smoothing"


class SmoothingAcoPolicy(ForecastAcoPolicy):
    name = "smooth_aco"
    params_class = SmoothingAcoParams
