"""
Policy selectors: MetaNet, UCB1 and tabular Q-learning baselines, random
and static choice.

Every selector answers select() once per interval and learns from the
realised (phi, omega) of the policy it picked through update().
"""
import logging
import math
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .data_classes import Datapoint, HostSpec, SystemState
from .exceptions import ConfigError
from .experiment_config import SelectionConfig, TrainConfig
from .surrogate import SurrogateParams, scale_features, selection_scores
from .training import fine_tune, optimizer_state

logger = logging.getLogger(__name__)


@dataclass
class Selection:
    index: int
    selector_time: float = 0.0
    predicted: Optional[List[float]] = None


def argmin_policy(scores: Sequence[float]) -> int:
    """Index of the smallest score; the lowest index wins ties."""
    scores = np.asarray(scores, dtype=np.float64)
    return int(np.flatnonzero(scores == scores.min())[0])


def select_policy(params: SurrogateParams,
                  W: np.ndarray,
                  H: np.ndarray,
                  S,
                  rho: float,
                  rho_in_selection: bool = True) -> int:
    """Policy with the smallest denormalised objective estimate."""
    return argmin_policy(selection_scores(params, W, H, S, rho, rho_in_selection))


def ucb_index(means: Sequence[float], counts: Sequence[int], t: int, c: float = 1.0) -> int:
    """
    UCB1 choice: an unpulled arm first (lowest index), otherwise
    argmax of mean + c * sqrt(2 ln t / n_k).
    """
    counts = np.asarray(counts)
    unpulled = np.flatnonzero(counts == 0)
    if unpulled.size:
        return int(unpulled[0])
    bonus = c * np.sqrt(2.0 * math.log(max(t, 1)) / counts)
    values = np.asarray(means, dtype=np.float64) + bonus
    return int(np.flatnonzero(values == values.max())[0])


class Selector(ABC):
    """Chooses the policy index for the next interval."""

    name = "selector"
    runs_inference = False

    def __init__(self, q: int):
        if q < 1:
            raise ConfigError(f"Selector needs at least one policy, got q={q}")
        self.q = q

    @abstractmethod
    def select(self, t: int, state: SystemState, specs: Sequence[HostSpec]) -> Selection:
        pass

    def update(self, k: int, phi: float, omega: float, datapoint: Datapoint):
        """Learn from the interval just executed with policy k."""

    def pretrain(self, data: Sequence[Datapoint]):
        """Warm start from a trace dataset."""

    def __repr__(self) -> str:
        return f"{type(self).__name__}(q={self.q})"


class StaticSelector(Selector):
    name = "static"

    def __init__(self, q: int, index: int):
        super().__init__(q)
        if not 0 <= index < q:
            raise ConfigError(f"Static policy index {index} outside 0..{q - 1}")
        self.index = index

    def select(self, t: int, state: SystemState, specs: Sequence[HostSpec]) -> Selection:
        return Selection(self.index)


class RandomSelector(Selector):
    name = "random"

    def __init__(self, q: int, seed: int = 0):
        super().__init__(q)
        self.rng = np.random.default_rng(seed)

    def select(self, t: int, state: SystemState, specs: Sequence[HostSpec]) -> Selection:
        return Selection(int(self.rng.integers(self.q)))


class _CostScaled(Selector):
    """
    Rewards are -(phi + rho * omega) over a fixed cost scale. The scale is
    the largest cost in the warm-start dataset, else the first nonzero cost
    observed; once set it never changes, so equal costs earn equal rewards.
    """

    def __init__(self, q: int, rho: float):
        super().__init__(q)
        self.rho = rho
        self.cost_scale: Optional[float] = None

    def cost(self, phi: float, omega: float) -> float:
        return phi + self.rho * omega

    def fix_scale(self, data: Sequence[Datapoint]):
        if self.cost_scale is not None:
            return
        largest = max((abs(self.cost(dp.phi, dp.omega)) for dp in data), default=0.0)
        if largest > 0:
            self.cost_scale = largest

    def reward(self, phi: float, omega: float) -> float:
        cost = self.cost(phi, omega)
        if self.cost_scale is None:
            if cost == 0:
                return 0.0
            self.cost_scale = abs(cost)
        return -cost / self.cost_scale


class UCBSelector(_CostScaled):
    name = "ucb"

    def __init__(self, q: int, rho: float, c: float = 1.0):
        super().__init__(q, rho)
        self.c = c
        self.counts = np.zeros(q, dtype=np.int64)
        self.means = np.zeros(q)

    @property
    def t(self) -> int:
        return int(self.counts.sum())

    def select(self, t: int, state: SystemState, specs: Sequence[HostSpec]) -> Selection:
        return Selection(ucb_index(self.means, self.counts, self.t, self.c))

    def observe_reward(self, k: int, reward: float):
        self.counts[k] += 1
        self.means[k] += (reward - self.means[k]) / self.counts[k]

    def update(self, k: int, phi: float, omega: float, datapoint: Optional[Datapoint] = None):
        self.observe_reward(k, self.reward(phi, omega))

    def pretrain(self, data: Sequence[Datapoint]):
        self.fix_scale(data)
        for dp in data:
            if 0 <= dp.k < self.q:
                self.update(dp.k, dp.phi, dp.omega)
        logger.info(f"UCB warm start: pulls {self.counts.tolist()}")


class QLearningSelector(_CostScaled):
    """
    Tabular Q-learning; the state is the previously selected policy, so the
    table is q x q. Epsilon-greedy with linear annealing.
    """

    name = "qlearn"

    def __init__(self,
                 q: int,
                 rho: float,
                 alpha: float = 0.1,
                 gamma: float = 0.9,
                 epsilon_start: float = 0.3,
                 epsilon_end: float = 0.01,
                 anneal_steps: int = 300,
                 seed: int = 0):
        super().__init__(q, rho)
        self.alpha = alpha
        self.gamma = gamma
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.anneal_steps = max(1, anneal_steps)
        self.table = np.zeros((q, q))
        self.state = 0
        self.steps = 0
        self.rng = np.random.default_rng(seed)

    @property
    def epsilon(self) -> float:
        frac = min(self.steps / self.anneal_steps, 1.0)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def select(self, t: int, state: SystemState, specs: Sequence[HostSpec]) -> Selection:
        explore = self.rng.random() < self.epsilon
        random_action = int(self.rng.integers(self.q))
        if explore:
            return Selection(random_action)
        return Selection(int(np.argmax(self.table[self.state])))

    def learn(self, state: int, action: int, reward: float):
        target = reward + self.gamma * self.table[action].max()
        self.table[state, action] += self.alpha * (target - self.table[state, action])

    def update(self, k: int, phi: float, omega: float, datapoint: Optional[Datapoint] = None):
        self.learn(self.state, k, self.reward(phi, omega))
        self.state = k
        self.steps += 1

    def pretrain(self, data: Sequence[Datapoint]):
        self.fix_scale(data)
        # each trace episode repeats one policy, so its transitions are k -> k
        for dp in sorted(data, key=lambda d: (d.k, d.interval)):
            if 0 <= dp.k < self.q:
                self.learn(dp.k, dp.k, self.reward(dp.phi, dp.omega))
        logger.info(f"Q-learning warm start from {len(data)} transitions")


class MetaNetSelector(Selector):
    """
    Surrogate-driven selection with online fine-tuning.

    Inference time is charged as selector time: the configured constant in
    synthetic mode, the measured time in wallclock mode.
    """

    name = "metanet"
    runs_inference = True

    def __init__(self,
                 params: SurrogateParams,
                 rho: float,
                 selection: SelectionConfig,
                 training: TrainConfig):
        super().__init__(params.config.q)
        self.params = params
        self.rho = rho
        self.selection = selection
        self.loss_norm = training.loss_norm
        self.optimizer = optimizer_state(training)
        self.fine_tune_losses: List[Optional[float]] = []

    def select(self, t: int, state: SystemState, specs: Sequence[HostSpec]) -> Selection:
        start = time.perf_counter()
        W, H = scale_features(state, specs)
        scores = selection_scores(self.params, W, H, state.S, self.rho, self.selection.rho_in_selection)
        index = argmin_policy(scores)
        elapsed = time.perf_counter() - start
        spent = self.selection.selector_time_s if self.selection.timing_mode == "synthetic" else elapsed
        return Selection(index, selector_time=float(spent), predicted=[float(s) for s in scores])

    def update(self, k: int, phi: float, omega: float, datapoint: Datapoint):
        if not self.selection.fine_tune:
            return
        self.fine_tune_losses.append(fine_tune(self.params, datapoint, self.optimizer, self.rho, self.loss_norm))


SELECTOR_KINDS = ("metanet", "ucb", "qlearn", "random", "static")


def build_selector(spec: str,
                   policies: Sequence[str],
                   rho: float,
                   selection: SelectionConfig,
                   training: TrainConfig,
                   params: Optional[SurrogateParams] = None) -> Selector:
    """
    Selector from its command-line name: metanet, ucb, qlearn, random or
    static:<policy name or index>.

    Raises:
        ConfigError: unknown selector, unknown static policy, or metanet
            without a model
    """
    q = len(policies)
    if spec.startswith("static:"):
        target = spec.split(":", 1)[1]
        if target in policies:
            return StaticSelector(q, list(policies).index(target))
        if target.isdigit():
            return StaticSelector(q, int(target))
        raise ConfigError(f"Static selector names unknown policy '{target}'; policy set is {list(policies)}")
    if spec == "metanet":
        if params is None:
            raise ConfigError("The metanet selector needs a trained model file")
        if list(params.policies) != list(policies):
            raise ConfigError(f"Model was trained for policies {params.policies}, config lists {list(policies)}")
        return MetaNetSelector(params, rho, selection, training)
    if spec == "ucb":
        return UCBSelector(q, rho, selection.ucb_c)
    if spec == "qlearn":
        return QLearningSelector(q, rho, selection.q_alpha, selection.q_gamma, selection.q_epsilon_start,
                                 selection.q_epsilon_end, selection.q_anneal_steps, selection.seed)
    if spec == "random":
        return RandomSelector(q, selection.seed)
    raise ConfigError(f"Unknown selector '{spec}'; expected one of {SELECTOR_KINDS} (static as static:<name>)")
