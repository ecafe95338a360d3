"""
Gradient-based schedulers over a relaxed assignment matrix.

The decision variable is an n x m logit matrix; its row softmax is a
relaxed assignment scored by the differentiable cost model. Descent uses
momentum; the annealed variant adds noisy restarts and a decaying noise
temperature. The final decision is the row argmax of the best logits.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .. import tensor as tn
from ..data_classes import SchedulingProblem
from ..exceptions import NonFiniteError
from ..tensor import Tensor
from .base import Policy, PolicyParams, ProblemArrays, problem_arrays
from .cost_model import CostModel, pretrained_cost_model

logger = logging.getLogger(__name__)

LossFn = Callable[[Tensor], Tensor]


@dataclass
class GradientParams(PolicyParams):
    steps: int = 100
    lr: float = 0.5
    momentum: float = 0.9
    restarts: int = 0
    temperature: float = 0.0
    temperature_decay: float = 0.95
    restart_noise: float = 1.0
    init_bias: float = 1.0
    migration_weight: float = 0.05
    balance_weight: float = 0.1
    model_seed: int = 0
    model_hidden: int = 16
    overhead_s: float = 0.05
    unit_s: float = 1e-4


@dataclass
class AnnealedGradientParams(GradientParams):
    restarts: int = 3
    temperature: float = 0.5


@dataclass
class GraphGradientParams(GradientParams):
    steps: int = 60
    init_bias: float = 3.0
    migration_weight: float = 0.2
    unit_s: float = 1.5e-4


def momentum_descent(x0: np.ndarray,
                     loss_fn: LossFn,
                     steps: int,
                     lr: float,
                     momentum: float,
                     rng: np.random.Generator,
                     restarts: int = 0,
                     temperature: float = 0.0,
                     temperature_decay: float = 0.95,
                     restart_noise: float = 1.0) -> Tuple[np.ndarray, float, int]:
    """
    Minimise loss_fn from x0 by heavy-ball descent, keeping the best point seen.

    Restart r > 0 starts from x0 plus Gaussian noise. Each step adds noise
    scaled by a temperature that decays geometrically; with zero temperature
    and no restarts this is plain momentum descent. Non-finite values end the
    current run and the best point so far is kept.

    Returns:
        (best x, best loss, steps taken)
    """
    best_x = x0.astype(np.float64).copy()
    best_loss = np.inf
    taken = 0
    for run in range(restarts + 1):
        start_noise = rng.standard_normal(x0.shape)
        x = x0.astype(np.float64) + (restart_noise * start_noise if run > 0 else 0.0)
        velocity = np.zeros_like(x)
        temp = temperature
        for _ in range(steps):
            step_noise = rng.standard_normal(x.shape)
            try:
                var = Tensor.parameter(x)
                loss = loss_fn(var)
                value = loss.item()
                grad = tn.backward(loss, [var])[0].astype(np.float64)
                if not np.isfinite(grad).all():
                    raise NonFiniteError("non-finite gradient")
            except NonFiniteError as e:
                logger.warning(f"Gradient descent stopped early: {e}; keeping best-so-far")
                break
            if value < best_loss:
                best_loss, best_x = value, x.copy()
            velocity = momentum * velocity - lr * grad
            x = x + velocity + temp * step_noise
            temp *= temperature_decay
            taken += 1
        else:
            try:
                value = loss_fn(Tensor(x)).item()
            except NonFiniteError:
                continue
            if value < best_loss:
                best_loss, best_x = value, x.copy()
    return best_x, float(best_loss), taken


def initial_logits(arrays: ProblemArrays, init_bias: float) -> np.ndarray:
    """Zero logits, with init_bias on each running task's current host."""
    logits = np.zeros((arrays.n, arrays.m))
    running = np.where(arrays.previous >= 0)[0]
    logits[running, arrays.previous[running]] = init_bias
    return logits


def surrogate_loss(arrays: ProblemArrays,
                   cost_model: CostModel,
                   migration_weight: float,
                   balance_weight: float) -> LossFn:
    """Relaxed objective: predicted cost + migration share + CPU load variance."""
    moved_mask = np.zeros((arrays.n, arrays.m))
    running = np.where(arrays.previous >= 0)[0]
    moved_mask[running, arrays.previous[running]] = 1.0
    mask = Tensor(moved_mask)
    n_running = float(len(running))
    cpu = Tensor(arrays.demands[None, :, 0])
    inv_ips = Tensor(1.0 / arrays.capacities[:, 0])
    m = arrays.m

    def loss_fn(logits: Tensor) -> Tensor:
        relaxed = tn.softmax_rows(logits)
        total = cost_model.relaxed_cost(relaxed, arrays)
        if n_running:
            stay = tn.sum_all(tn.mul(relaxed, mask))
            moved = tn.scale(tn.sub(Tensor(n_running), stay), migration_weight / max(arrays.n, 1))
            total = tn.add(total, moved)
        if balance_weight:
            load = tn.mul(tn.matmul(cpu, relaxed), inv_ips)
            mean_sq = tn.scale(tn.sum_all(tn.mul(load, load)), 1.0 / m)
            mean = tn.scale(tn.sum_all(load), 1.0 / m)
            variance = tn.sub(mean_sq, tn.mul(mean, mean))
            total = tn.add(total, tn.scale(variance, balance_weight))
        return total

    return loss_fn


def surrogate_gradient_schedule(arrays: ProblemArrays,
                                cost_model: CostModel,
                                params: GradientParams,
                                rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    """
    Optimise a relaxed assignment against the cost model and round it.

    Returns:
        (host index per task, steps taken)
    """
    loss_fn = surrogate_loss(arrays, cost_model, params.migration_weight, params.balance_weight)
    x0 = initial_logits(arrays, params.init_bias)
    best, value, taken = momentum_descent(x0, loss_fn, params.steps, params.lr, params.momentum, rng,
                                          restarts=params.restarts,
                                          temperature=params.temperature,
                                          temperature_decay=params.temperature_decay,
                                          restart_noise=params.restart_noise)
    logger.debug(f"Gradient schedule: relaxed loss {value:.4f} after {taken} steps")
    return np.argmax(best, axis=1).astype(np.int64), taken


class GradientPolicy(Policy):
    """Momentum descent on the surrogate cost."""

    name = "gradient"
    params_class = GradientParams

    @property
    def cost_model(self) -> CostModel:
        return pretrained_cost_model(self.params.model_seed, self.params.model_hidden)

    def decide(self, problem: SchedulingProblem, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
        return surrogate_gradient_schedule(problem_arrays(problem), self.cost_model, self.params, rng)

    def work_units(self, n: int, m: int) -> float:
        p = self.params
        return float(p.steps * (p.restarts + 1) * n * m)


class AnnealedGradientPolicy(GradientPolicy):
    """Gradient descent with noisy restarts and temperature annealing."""

    name = "annealed_gradient"
    params_class = AnnealedGradientParams


class GraphGradientPolicy(GradientPolicy):
    """Gradient descent anchored on the previous schedule graph."""

    name = "graph_gradient"
    params_class = GraphGradientParams

    def work_units(self, n: int, m: int) -> float:
        # one message-passing sweep over the bipartite graph per step
        p = self.params
        return float(p.steps * (p.restarts + 1) * (n * m + n + m))
