"""
Small differentiable cost model used by the surrogate-driven policies.

A two-layer network maps per-host features (CPU load fraction, RAM load
fraction, relative price) to that host's contribution to next-interval
cost. It is pretrained on the simulator's own accounting: an active host
is charged its relative price, overload and memory overflow are penalised.
"""
import logging
from functools import lru_cache
from typing import Dict

import numpy as np

from .. import tensor as tn
from ..tensor import AdamWConfig, AdamWState, Tensor
from .base import ProblemArrays

logger = logging.getLogger(__name__)

FEATURES = 3


def accounting_target(features: np.ndarray) -> np.ndarray:
    """Per-host cost the network learns to imitate (rows of features)."""
    load, ram, price = features[:, 0], features[:, 1], features[:, 2]
    active = (load > 0).astype(np.float64)
    return price * active + 2.0 * np.maximum(load - 1.0, 0.0) ** 2 + 0.5 * np.maximum(ram - 1.0, 0.0) ** 2


def _sample_features(rng: np.random.Generator, count: int) -> np.ndarray:
    load = rng.uniform(0.0, 1.6, count)
    load[rng.random(count) < 0.3] = 0.0
    ram = np.minimum(load * rng.uniform(0.2, 1.2, count), 1.4)
    price = rng.uniform(0.1, 1.0, count)
    return np.stack([load, ram, price], axis=1)


class CostModel:
    """Per-host cost network with a numpy forward and a tensor forward."""

    def __init__(self, params: Dict[str, np.ndarray]):
        self.params = params

    @classmethod
    def initialise(cls, rng: np.random.Generator, hidden: int = 16) -> "CostModel":
        return cls({
            "w1": tn.glorot_uniform(rng, FEATURES, hidden),
            "b1": np.zeros(hidden, dtype=np.float32),
            "w2": tn.glorot_uniform(rng, hidden, 1),
            "b2": np.zeros(1, dtype=np.float32),
        })

    def pretrain(self, rng: np.random.Generator, steps: int = 400, batch: int = 256, lr: float = 0.01) -> float:
        """Fit the accounting target on random host states; returns the final MSE."""
        state = AdamWState(AdamWConfig(lr=lr))
        loss_value = float("nan")
        for _ in range(steps):
            x = _sample_features(rng, batch)
            y = accounting_target(x)
            weights = {k: Tensor.parameter(v, name=k) for k, v in self.params.items()}
            pred = self._forward_tensor(Tensor(x), weights)
            diff = tn.sub(pred, Tensor(y[:, None]))
            loss = tn.scale(tn.squared_norm(diff), 1.0 / batch)
            grads = tn.backward(loss, list(weights.values()))
            tn.adamw_step(self.params, dict(zip(weights.keys(), grads)), state)
            loss_value = loss.item()
        logger.debug(f"Cost model pretrained: mse={loss_value:.5f}")
        return loss_value

    @staticmethod
    def _forward_tensor(x: Tensor, weights: Dict[str, Tensor]) -> Tensor:
        hidden = tn.relu(tn.linear(x, weights["w1"], weights["b1"]))
        return tn.linear(hidden, weights["w2"], weights["b2"])

    def host_costs(self, features: np.ndarray) -> np.ndarray:
        p = self.params
        hidden = np.maximum(features @ p["w1"] + p["b1"], 0.0)
        return (hidden @ p["w2"] + p["b2"])[:, 0]

    def discrete_cost(self, loads: np.ndarray, arrays: ProblemArrays) -> float:
        """Predicted cost of hosts at the given (m x 3) load fractions."""
        features = np.stack([loads[:, 0], loads[:, 1], arrays.price_rel], axis=1)
        return float(self.host_costs(features).sum())

    def relaxed_cost(self, assignment: Tensor, arrays: ProblemArrays) -> Tensor:
        """
        Predicted cost of a relaxed (row-stochastic, n x m) assignment.

        Loads are the expected demand per host under the assignment.
        """
        cpu = Tensor(arrays.demands[None, :, 0])
        ram = Tensor(arrays.demands[None, :, 1])
        cpu_load = tn.mul(tn.matmul(cpu, assignment), Tensor(1.0 / arrays.capacities[:, 0]))
        ram_load = tn.mul(tn.matmul(ram, assignment), Tensor(1.0 / arrays.capacities[:, 1]))
        price = Tensor(arrays.price_rel[None, :])
        features = tn.transpose(tn.concat_rows([cpu_load, ram_load, price]))
        weights = {k: Tensor(v) for k, v in self.params.items()}
        return tn.sum_all(self._forward_tensor(features, weights))


@lru_cache(maxsize=8)
def pretrained_cost_model(seed: int = 0, hidden: int = 16, steps: int = 400) -> CostModel:
    """Cost model pretrained once per (seed, hidden, steps) in this process."""
    rng = np.random.default_rng(seed)
    model = CostModel.initialise(rng, hidden)
    model.pretrain(rng, steps)
    return model
