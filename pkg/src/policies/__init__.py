"""
Scheduling policies and the name registry.
"""
from typing import Any, Dict, List, Optional, Type

from ..data_classes import PolicyOutput, SchedulingProblem
from ..exceptions import ConfigError
from .aco import ForecastAcoPolicy, SmoothingAcoPolicy, aco_optimize
from .base import Policy, PolicyParams, placement_objective, problem_arrays
from .forecasting import ar_forecast, fit_ar, smoothing_forecast
from .gradient import AnnealedGradientPolicy, GradientPolicy, GraphGradientPolicy, surrogate_gradient_schedule
from .heuristics import BestFitPolicy, RoundRobinPolicy, best_fit, round_robin
from .search import GreedySurrogatePolicy, LocalSearchPolicy

POLICY_REGISTRY: Dict[str, Type[Policy]] = {
    cls.name: cls for cls in (
        ForecastAcoPolicy,
        SmoothingAcoPolicy,
        GreedySurrogatePolicy,
        LocalSearchPolicy,
        GraphGradientPolicy,
        GradientPolicy,
        AnnealedGradientPolicy,
        RoundRobinPolicy,
        BestFitPolicy,
    )
}


def build_policy(name: str,
                 params: Optional[Dict[str, Any]] = None,
                 timing_mode: str = "synthetic",
                 seed: int = 0) -> Policy:
    """
    Instantiate a registered policy.

    Raises:
        ConfigError: unknown policy name or parameter
    """
    if name not in POLICY_REGISTRY:
        raise ConfigError(f"Unknown policy '{name}'; known: {sorted(POLICY_REGISTRY)}")
    cls = POLICY_REGISTRY[name]
    return cls(cls.params_class.from_dict(params, name), timing_mode=timing_mode, seed=seed)


def build_policy_set(names: List[str],
                     params: Optional[Dict[str, Dict[str, Any]]] = None,
                     timing_mode: str = "synthetic",
                     seed: int = 0) -> List[Policy]:
    params = params or {}
    return [build_policy(name, params.get(name), timing_mode, seed) for name in names]


def schedule(policy, problem: SchedulingProblem, mode: Optional[str] = None) -> PolicyOutput:
    """Run a policy (instance or registered name) on a problem."""
    if isinstance(policy, str):
        policy = build_policy(policy, timing_mode=mode or "synthetic")
    elif mode is not None and mode != policy.timing_mode:
        policy = type(policy)(policy.params, timing_mode=mode, seed=policy.seed)
    return policy.schedule(problem)


__all__ = [
    "POLICY_REGISTRY",
    "Policy",
    "PolicyParams",
    "build_policy",
    "build_policy_set",
    "schedule",
    "aco_optimize",
    "ar_forecast",
    "fit_ar",
    "smoothing_forecast",
    "surrogate_gradient_schedule",
    "best_fit",
    "round_robin",
    "placement_objective",
    "problem_arrays",
]
