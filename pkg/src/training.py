"""
Offline training and online fine-tuning of the MetaNet surrogate.

Per datapoint of policy k only the k-th output components are scored:
    L = norm(phi - phi_max[k] * phi_hat[k]) + norm(omega - omega_max[k] * omega_hat[k])
The dual ablation scores its single head against phi + rho * omega instead.
"""
import copy
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import tensor as tn
from .data_classes import Datapoint
from .dataset import denorm_coeffs, split_dataset
from .exceptions import ConfigError, NonFiniteError
from .experiment_config import TrainConfig
from .surrogate import SurrogateConfig, SurrogateParams, as_parameters, forward, init_weights
from .tensor import AdamWConfig, AdamWState, Tensor

logger = logging.getLogger(__name__)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    train_cost: float
    train_time: float
    val_cost: float
    val_time: float


@dataclass
class TrainResult:
    params: SurrogateParams
    history: List[EpochStats] = field(default_factory=list)
    epochs_run: int = 0
    best_epoch: int = 0
    early_stopped: bool = False


def early_stop_point(val_losses: Sequence[float]) -> Optional[int]:
    """1-based epoch whose validation loss first rises above the previous one."""
    for i in range(1, len(val_losses)):
        if val_losses[i] > val_losses[i - 1]:
            return i + 1
    return None


def optimizer_state(config: TrainConfig) -> AdamWState:
    return AdamWState(AdamWConfig(lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                                  eps=config.eps, weight_decay=config.weight_decay))


def _norm(x: Tensor, loss_norm: str) -> Tensor:
    return tn.l2_norm(x) if loss_norm == "l2" else tn.squared_norm(x)


def _component(vector: Tensor, k: int) -> Tensor:
    mask = np.zeros(vector.shape[0])
    mask[k] = 1.0
    return tn.sum_all(tn.mul(vector, Tensor(mask)))


def datapoint_loss(theta: Dict[str, Tensor],
                   params: SurrogateParams,
                   dp: Datapoint,
                   rho: float,
                   loss_norm: str = "l2") -> Tuple[Tensor, float, float]:
    """
    Loss of one datapoint and its cost / time parts.

    Returns:
        (loss tensor, cost part, time part); the dual ablation reports its
        whole loss as the cost part
    """
    out = forward(dp.W, dp.H, dp.S, theta, params.config)
    k = dp.k
    if params.config.single_head_output:
        target = dp.phi + rho * dp.omega
        diff = tn.sub(Tensor(np.array([target])),
                      tn.reshape(tn.scale(_component(out.score, k), float(params.score_max[k])), (1,)))
        loss = _norm(diff, loss_norm)
        return loss, loss.item(), 0.0
    cost_diff = tn.sub(Tensor(np.array([dp.phi])),
                       tn.reshape(tn.scale(_component(out.phi_hat, k), float(params.phi_max[k])), (1,)))
    time_diff = tn.sub(Tensor(np.array([dp.omega])),
                       tn.reshape(tn.scale(_component(out.omega_hat, k), float(params.omega_max[k])), (1,)))
    cost_loss, time_loss = _norm(cost_diff, loss_norm), _norm(time_diff, loss_norm)
    return tn.add(cost_loss, time_loss), cost_loss.item(), time_loss.item()


def evaluate(params: SurrogateParams,
             data: Sequence[Datapoint],
             rho: float,
             loss_norm: str = "l2") -> Tuple[float, float, float]:
    """Mean (loss, cost part, time part) over data; NaNs when data is empty."""
    if not data:
        return float("nan"), float("nan"), float("nan")
    theta = {name: Tensor(value) for name, value in params.weights.items()}
    parts = np.array([datapoint_loss(theta, params, dp, rho, loss_norm)[1:] for dp in data])
    cost, time_ = parts.mean(axis=0)
    return float(cost + time_), float(cost), float(time_)


def _batch_step(params: SurrogateParams,
                batch: Sequence[Datapoint],
                state: AdamWState,
                rho: float,
                loss_norm: str) -> Tuple[float, float, float]:
    theta = as_parameters(params.weights)
    total: Optional[Tensor] = None
    cost_sum = time_sum = 0.0
    for dp in batch:
        loss, cost, time_ = datapoint_loss(theta, params, dp, rho, loss_norm)
        total = loss if total is None else tn.add(total, loss)
        cost_sum += cost
        time_sum += time_
    total = tn.scale(total, 1.0 / len(batch))
    names = list(theta)
    grads = tn.backward(total, [theta[n] for n in names])
    tn.adamw_step(params.weights, dict(zip(names, grads)), state)
    return total.item(), cost_sum / len(batch), time_sum / len(batch)


def train(data: Sequence[Datapoint],
          config: TrainConfig,
          surrogate_config: SurrogateConfig,
          policies: Sequence[str],
          rho: float) -> TrainResult:
    """
    Fit the surrogate on a dataset.

    Coefficients come from LOF-filtered per-policy maxima and stay fixed.
    Training stops at the first epoch whose validation loss rises and
    returns the weights of the epoch before it.

    Raises:
        ConfigError: empty dataset or policy count mismatch
        NonFiniteError: the training loss became NaN or Inf
    """
    config.validate()
    surrogate_config.validate()
    if not data:
        raise ConfigError("Cannot train on an empty dataset")
    if len(policies) != surrogate_config.q:
        raise ConfigError(f"Surrogate built for q={surrogate_config.q} but {len(policies)} policies given")
    rng = np.random.default_rng(config.seed)
    phi_max, omega_max, score_max = denorm_coeffs(data, surrogate_config.q, rho,
                                                  config.lof_neighbors, config.lof_threshold,
                                                  config.lof_standardize)
    params = SurrogateParams(config=surrogate_config,
                             weights=init_weights(surrogate_config, np.random.default_rng(surrogate_config.seed)),
                             phi_max=phi_max, omega_max=omega_max, score_max=score_max,
                             policies=list(policies))
    if len(data) > 1:
        train_part, val_part = split_dataset(data, config.train_fraction, rng)
    else:
        train_part, val_part = list(data), []
    logger.info(f"Training on {len(train_part)} datapoints, validating on {len(val_part)} "
                f"(ablation={surrogate_config.ablation})")

    state = optimizer_state(config)
    result = TrainResult(params=params)
    val_history: List[float] = []
    previous_weights = copy.deepcopy(params.weights)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_part))
        losses, costs, times = [], [], []
        for start in range(0, len(order), config.batch_size):
            batch = [train_part[i] for i in order[start:start + config.batch_size]]
            try:
                loss, cost, time_ = _batch_step(params, batch, state, rho, config.loss_norm)
            except NonFiniteError as e:
                logger.error(f"Training aborted at epoch {epoch}: {e}")
                raise
            losses.append(loss)
            costs.append(cost)
            times.append(time_)
        val_loss, val_cost, val_time = evaluate(params, val_part, rho, config.loss_norm)
        stats = EpochStats(epoch=epoch, train_loss=float(np.mean(losses)), val_loss=val_loss,
                           train_cost=float(np.mean(costs)), train_time=float(np.mean(times)),
                           val_cost=val_cost, val_time=val_time)
        result.history.append(stats)
        result.epochs_run = epoch
        logger.info(f"Epoch {epoch}: train={stats.train_loss:.6f} val={val_loss:.6f}")
        val_history.append(val_loss)
        if config.early_stopping and val_part and early_stop_point(val_history) == epoch:
            params.weights = previous_weights
            result.early_stopped = True
            result.best_epoch = epoch - 1
            logger.info(f"Early stop at epoch {epoch}; keeping epoch {epoch - 1} weights")
            break
        previous_weights = copy.deepcopy(params.weights)
        result.best_epoch = epoch
    return result


def fine_tune(params: SurrogateParams,
              dp: Datapoint,
              state: AdamWState,
              rho: float,
              loss_norm: str = "l2") -> Optional[float]:
    """
    One AdamW step on a single datapoint; coefficients are left alone.

    Returns:
        the loss before the step, or None if the step was skipped
    """
    theta = as_parameters(params.weights)
    try:
        loss, _, _ = datapoint_loss(theta, params, dp, rho, loss_norm)
        names = list(theta)
        grads = tn.backward(loss, [theta[n] for n in names])
        tn.adamw_step(params.weights, dict(zip(names, grads)), state)
    except NonFiniteError as e:
        logger.warning(f"Fine-tune step skipped at interval {dp.interval}: {e}")
        return None
    return loss.item()
