"""
Tests for the scheduling policies and their building blocks.
"""
from typing import Tuple

import numpy as np
import pytest

from src import tensor as tn
from src.data_classes import ScheduleGraph, SchedulingProblem
from src.environment import CloudEnvironment
from src.exceptions import ConfigError, PolicyError
from src.experiment_config import EnvConfig
from src.policies import POLICY_REGISTRY, Policy, aco_optimize, ar_forecast, best_fit, build_policy, \
    fit_ar, placement_objective, problem_arrays, round_robin, schedule, smoothing_forecast
from src.policies.aco import AcoParams
from src.policies.base import ProblemArrays, host_loads
from src.policies.gradient import momentum_descent


@pytest.fixture
def busy_problem(specs, apps):
    env = CloudEnvironment(EnvConfig(arrival_rate=4.0, seed=11), specs, apps)
    policy = build_policy("best_fit")
    for _ in range(4):
        env.begin_interval()
        env.step(policy.schedule(env.problem()).decision)
    env.begin_interval()
    problem = env.problem()
    assert problem.n > 0
    return problem


def test_round_robin_cycles_hosts():
    assert round_robin(5, 2).tolist() == [0, 1, 0, 1, 0]


def test_best_fit_prefers_tightest_host():
    demands = np.array([[3000.0, 1.0, 1.0], [1000.0, 1.0, 1.0]])
    capacities = np.array([[4000.0, 4.0, 32.0], [8000.0, 16.0, 64.0]])
    # largest first: 3000 fits both, host 0 leaves less residual; 1000 then fits host 0 exactly
    assert best_fit(demands, capacities).tolist() == [0, 0]


def test_best_fit_falls_back_when_nothing_fits():
    demands = np.array([[9000.0, 1.0, 1.0]])
    capacities = np.array([[4000.0, 4.0, 32.0], [8000.0, 16.0, 64.0]])
    assert best_fit(demands, capacities).tolist() == [1]


def test_fit_ar_recovers_coefficient():
    series = 0.9 ** np.arange(20)
    coeffs = fit_ar(series, 1)
    assert coeffs[0] == pytest.approx(0.9)


def test_fit_ar_constant_series_falls_back():
    assert fit_ar(np.full(10, 0.3), 2) is None
    assert ar_forecast(np.full((10, 2), 0.3)).tolist() == pytest.approx([0.3, 0.3])


def test_fit_ar_too_short():
    with pytest.raises(ValueError):
        fit_ar(np.array([0.1, 0.2]), 2)


def test_smoothing_forecast_hand_computed():
    history = np.array([[0.0], [1.0], [1.0]])
    assert smoothing_forecast(history, alpha=0.5)[0] == pytest.approx(0.75)


def test_placement_objective_penalises_overload():
    arrays = ProblemArrays(demands=np.array([[3000.0, 1.0, 1.0], [3000.0, 1.0, 1.0]]),
                           capacities=np.array([[4000.0, 4.0, 32.0], [8000.0, 16.0, 64.0]]),
                           prices=np.array([1.0, 4.0]), previous=np.array([-1, -1]), history=np.zeros((0, 2)))
    piled = np.array([0, 0])
    assert host_loads(piled, arrays)[0, 0] == pytest.approx(1.5)
    assert placement_objective(piled, arrays) > placement_objective(np.array([0, 1]), arrays)


def test_aco_more_iterations_never_worse(busy_problem):
    arrays = problem_arrays(busy_problem)
    predicted = np.zeros(arrays.m)
    _, short, _ = aco_optimize(arrays, predicted, AcoParams(ants=4, iters=3), np.random.default_rng(5))
    _, long, _ = aco_optimize(arrays, predicted, AcoParams(ants=4, iters=12), np.random.default_rng(5))
    assert long <= short


def test_aco_rejects_empty_colony(busy_problem):
    with pytest.raises(ValueError):
        aco_optimize(problem_arrays(busy_problem), np.zeros(2), AcoParams(ants=0), np.random.default_rng(0))


def test_momentum_descent_minimises_quadratic():
    target = tn.Tensor(np.array([1.0, -2.0]))

    def loss(x):
        return tn.squared_norm(tn.sub(x, target))

    best, value, taken = momentum_descent(np.zeros(2), loss, steps=200, lr=0.05, momentum=0.9,
                                          rng=np.random.default_rng(0))
    assert taken == 200
    assert value < 1e-3
    assert np.allclose(best, [1.0, -2.0], atol=0.05)


def test_annealed_without_noise_matches_plain_gradient(busy_problem):
    plain = build_policy("gradient", {"steps": 15}).schedule(busy_problem)
    annealed = build_policy("annealed_gradient", {"steps": 15, "restarts": 0, "temperature": 0.0}) \
        .schedule(busy_problem)
    assert plain.decision.edges == annealed.decision.edges


@pytest.mark.parametrize("name", sorted(POLICY_REGISTRY))
def test_every_policy_places_every_task(name, busy_problem):
    params = {"steps": 5} if "gradient" in name else None
    if name in ("ar_aco", "smooth_aco"):
        params = {"ants": 3, "iters": 3}
    policy = build_policy(name, params)
    out = policy.schedule(busy_problem)
    out.decision.validate([t.id for t in busy_problem.tasks], busy_problem.m)
    assert out.omega == pytest.approx(policy.synthetic_time(busy_problem.n, busy_problem.m))
    again = policy.schedule(busy_problem)
    assert again.decision.edges == out.decision.edges


@pytest.mark.parametrize("name", sorted(POLICY_REGISTRY))
def test_no_tasks_gives_empty_decision(name, specs):
    problem = SchedulingProblem(tasks=[], specs=specs, host_usage=np.zeros((2, 3)), previous=ScheduleGraph(),
                                util_history=np.zeros((0, 2)), interval=0, interval_s=10.0)
    out = build_policy(name).schedule(problem)
    assert len(out.decision) == 0


def test_synthetic_time_ordering():
    n, m = 10, 10
    times = {name: build_policy(name).synthetic_time(n, m) for name in POLICY_REGISTRY}
    assert max(times["round_robin"], times["best_fit"]) < min(times["ar_aco"], times["smooth_aco"])
    assert times["ar_aco"] < min(times["gradient"], times["annealed_gradient"], times["graph_gradient"])


def test_build_policy_errors():
    with pytest.raises(ConfigError):
        build_policy("no_such_policy")
    with pytest.raises(ConfigError):
        build_policy("gradient", {"bogus": 1})


def test_schedule_by_name(busy_problem):
    out = schedule("round_robin", busy_problem, mode="synthetic")
    assert len(out.decision) == busy_problem.n


class _Broken(Policy):
    name = "broken"

    def decide(self, problem: SchedulingProblem, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
        raise ValueError("boom")

    def work_units(self, n: int, m: int) -> float:
        return 0.0


def test_policy_failure_is_wrapped(busy_problem):
    with pytest.raises(PolicyError, match="broken"):
        _Broken().schedule(busy_problem)


def test_problem_arrays_previous_hosts(busy_problem):
    arrays: ProblemArrays = problem_arrays(busy_problem)
    expected = [-1 if h is None else h for h in busy_problem.previous_hosts()]
    assert arrays.previous.tolist() == expected
    assert arrays.demands.shape == (busy_problem.n, 3)
    assert (arrays.previous >= 0).any()
