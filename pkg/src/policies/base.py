"""
Policy base class, parameter blocks and the placement objective shared by
the search-based policies.
"""
from __future__ import annotations

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, fields
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..data_classes import PolicyOutput, ScheduleGraph, SchedulingProblem
from ..exceptions import ConfigError, PolicyError

logger = logging.getLogger(__name__)

TIMING_MODES = ("synthetic", "wallclock")


@dataclass
class PolicyParams:
    """Synthetic timing: omega = overhead_s + unit_s * work_units(n, m)."""
    overhead_s: float = 0.001
    unit_s: float = 1e-5

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]], policy: str = ""):
        data = data or {}
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"Unknown parameters for policy '{policy}': {unknown}")
        return cls(**data)


@dataclass
class ObjectiveWeights:
    """Weights of the placement objective."""
    cost: float = 1.0
    overload: float = 4.0
    balance: float = 0.1
    migration: float = 0.05
    infeasible: float = 10.0


@dataclass
class ProblemArrays:
    """Dense view of a scheduling problem."""
    demands: np.ndarray  # n x 3
    capacities: np.ndarray  # m x 3
    prices: np.ndarray  # m
    previous: np.ndarray  # n, host index or -1
    history: np.ndarray  # intervals x m CPU fraction

    @property
    def n(self) -> int:
        return self.demands.shape[0]

    @property
    def m(self) -> int:
        return self.capacities.shape[0]

    @property
    def price_rel(self) -> np.ndarray:
        top = self.prices.max() if self.prices.size else 0.0
        return self.prices / top if top > 0 else np.ones_like(self.prices)


def problem_arrays(problem: SchedulingProblem) -> ProblemArrays:
    prev = np.array([-1 if h is None else h for h in problem.previous_hosts()], dtype=np.int64)
    return ProblemArrays(demands=problem.demands(),
                         capacities=problem.capacities(),
                         prices=problem.prices(),
                         previous=prev,
                         history=problem.util_history)


def host_loads(assign: np.ndarray, arrays: ProblemArrays) -> np.ndarray:
    """Per-host demand as a fraction of capacity (m x 3)."""
    totals = np.zeros((arrays.m, 3))
    if arrays.n:
        np.add.at(totals, assign, arrays.demands)
    return totals / arrays.capacities


def placement_objective(assign: np.ndarray,
                        arrays: ProblemArrays,
                        weights: ObjectiveWeights = ObjectiveWeights()) -> float:
    """
    Score of a discrete assignment; lower is better.

    Active-host price share, squared CPU overload, CPU balance across the
    active hosts, share of migrated tasks and RAM/disk overflow.
    """
    loads = host_loads(assign, arrays)
    cpu = loads[:, 0]
    active = cpu > 0
    total_price = arrays.prices.sum()
    cost = arrays.prices[active].sum() / total_price if total_price > 0 else float(active.sum()) / arrays.m
    overload = float(np.sum(np.maximum(cpu - 1.0, 0.0) ** 2))
    balance = float(np.var(cpu[active])) if active.any() else 0.0
    moved = (arrays.previous >= 0) & (assign != arrays.previous)
    migration = float(moved.sum()) / max(arrays.n, 1)
    infeasible = float(np.sum(np.maximum(loads[:, 1:] - 1.0, 0.0)))
    return (weights.cost * cost + weights.overload * overload + weights.balance * balance
            + weights.migration * migration + weights.infeasible * infeasible)


def least_loaded(assign_loads: np.ndarray) -> int:
    """Host with the lowest CPU load fraction; lowest index on ties."""
    return int(np.argmin(assign_loads))


def to_graph(problem: SchedulingProblem, assign: np.ndarray) -> ScheduleGraph:
    return ScheduleGraph({task.id: int(h) for task, h in zip(problem.tasks, assign)})


class Policy(ABC):
    """
    A scheduling policy. Subclasses implement decide(); schedule() times it.

    Synthetic timing makes omega a pure function of (policy, n, m, params).
    """

    name = "policy"
    params_class = PolicyParams

    def __init__(self, params: Optional[PolicyParams] = None, timing_mode: str = "synthetic", seed: int = 0):
        if timing_mode not in TIMING_MODES:
            raise ConfigError(f"Unknown timing mode '{timing_mode}'")
        self.params = params or self.params_class()
        self.timing_mode = timing_mode
        self.seed = seed

    @abstractmethod
    def decide(self, problem: SchedulingProblem, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
        """Return (host index per task, iterations)."""

    @abstractmethod
    def work_units(self, n: int, m: int) -> float:
        """Abstract compute budget for n tasks on m hosts."""

    def synthetic_time(self, n: int, m: int) -> float:
        return self.params.overhead_s + self.params.unit_s * self.work_units(n, m)

    def schedule(self, problem: SchedulingProblem) -> PolicyOutput:
        """
        Place every active task.

        Raises:
            PolicyError: if the policy fails to produce a decision
        """
        rng = np.random.default_rng([self.seed, problem.interval])
        start = time.perf_counter()
        if problem.n == 0:
            assign, iterations = np.zeros(0, dtype=np.int64), 0
        else:
            try:
                assign, iterations = self.decide(problem, rng)
            except (ArithmeticError, ValueError, IndexError) as e:
                raise PolicyError(f"Policy '{self.name}' failed at interval {problem.interval}: {e}") from e
        elapsed = time.perf_counter() - start
        if len(assign) != problem.n:
            raise PolicyError(f"Policy '{self.name}' placed {len(assign)} of {problem.n} tasks")
        omega = self.synthetic_time(problem.n, problem.m) if self.timing_mode == "synthetic" else elapsed
        return PolicyOutput(decision=to_graph(problem, assign), omega=float(omega), iterations=int(iterations))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name})"
