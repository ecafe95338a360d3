"""
Tests for the policy selectors.
"""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.data_classes import Datapoint, SystemState
from src.exceptions import ConfigError
from src.experiment_config import SelectionConfig, TrainConfig
from src.policy_selection import MetaNetSelector, QLearningSelector, RandomSelector, StaticSelector, \
    UCBSelector, argmin_policy, build_selector, select_policy, ucb_index
from src.surrogate import SurrogateConfig, new_params

POLICIES = ["round_robin", "best_fit", "gradient"]


def metanet_params():
    return new_params(SurrogateConfig(embed_dim=8, heads=2, hidden=8, q=3), POLICIES)


def busy_state():
    W = np.array([[1000.0, 0.5, 1.0], [2500.0, 1.0, 2.0]])
    H = np.array([[1000.0, 0.5, 1.0], [2500.0, 1.0, 2.0]])
    return SystemState(task_ids=[4, 9], W=W, H=H, S=[(0, 0), (1, 1)])


def test_argmin_breaks_ties_by_lowest_index():
    assert argmin_policy([1.0, 0.5, 0.5]) == 1
    assert argmin_policy([2.0]) == 0


@given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=1, max_size=9))
def test_argmin_matches_brute_force(scores):
    k = argmin_policy(scores)
    assert scores[k] == min(scores)
    assert all(s > scores[k] for s in scores[:k])


def test_ucb_index_pulls_unpulled_arm_first():
    assert ucb_index([0.0, 0.0, 0.0], [1, 0, 0], t=1) == 1


def test_ucb_index_adds_exploration_bonus():
    # arm 1 has the lower mean but far fewer pulls
    assert ucb_index([-0.5, -0.6], [100, 2], t=102) == 1
    assert ucb_index([-0.5, -0.6], [100, 2], t=102, c=0.0) == 0


def test_ucb_finds_cheapest_arm_on_stationary_costs():
    costs = [1.0, 0.5, 0.9]
    selector = UCBSelector(3, rho=0.0)
    picks = []
    for t in range(1000):
        k = selector.select(t, None, []).index
        picks.append(k)
        selector.update(k, costs[k], 0.0)
    assert picks[-100:].count(1) >= 90
    assert selector.counts.sum() == 1000


def test_ucb_pretrain_counts_datapoints():
    selector = UCBSelector(2, rho=1.0)
    data = [Datapoint(k=k, policy="p", interval=0, W=np.zeros((0, 3)), H=np.zeros((1, 3)), S=[],
                      phi=1.0 + k, omega=0.0) for k in (0, 0, 1)]
    selector.pretrain(data)
    assert selector.counts.tolist() == [2, 1]
    assert selector.means[1] < selector.means[0]
    assert selector.cost_scale == 2.0
    assert selector.means.tolist() == pytest.approx([-0.5, -1.0])


def test_cost_scaled_reward():
    selector = UCBSelector(2, rho=2.0)
    assert selector.reward(1.0, 0.5) == pytest.approx(-1.0)
    assert selector.reward(0.5, 0.25) == pytest.approx(-0.5)
    # a larger cost later does not rescale earlier rewards
    assert selector.reward(2.0, 1.0) == pytest.approx(-2.0)
    assert selector.reward(1.0, 0.5) == pytest.approx(-1.0)


def test_reward_scale_waits_for_a_nonzero_cost():
    selector = QLearningSelector(2, rho=1.0)
    assert selector.reward(0.0, 0.0) == 0.0
    assert selector.cost_scale is None
    assert selector.reward(0.0, 4.0) == pytest.approx(-1.0)
    assert selector.cost_scale == 4.0


def test_ucb_prefers_cheaper_arm_after_mixed_updates():
    selector = UCBSelector(2, rho=1.0)
    for k, phi in [(0, 1.0), (0, 1.0), (1, 2.0)]:
        selector.update(k, phi, 0.0)
    assert selector.means.tolist() == pytest.approx([-1.0, -2.0])
    assert selector.select(3, None, []).index == 0


def test_ucb_means_do_not_depend_on_update_order():
    updates = [(0, 1.0), (1, 0.5), (0, 3.0), (1, 2.0), (1, 1.5)]
    data = [Datapoint(k=k, policy="p", interval=i, W=np.zeros((0, 3)), H=np.zeros((1, 3)), S=[], phi=phi, omega=0.0)
            for i, (k, phi) in enumerate(updates)]
    forward, backward = UCBSelector(2, rho=1.0), UCBSelector(2, rho=1.0)
    forward.pretrain(data)
    backward.pretrain(data[::-1])
    assert forward.means.tolist() == pytest.approx(backward.means.tolist())
    assert forward.means.tolist() == pytest.approx([-2.0 / 3.0, -4.0 / 9.0])


def test_qlearning_update_rule():
    selector = QLearningSelector(3, rho=1.0, alpha=0.1, gamma=0.9)
    selector.learn(0, 1, -1.0)
    assert selector.table[0, 1] == pytest.approx(-0.1)
    selector.table[1] = [0.0, 0.0, 2.0]
    selector.learn(0, 1, -1.0)
    assert selector.table[0, 1] == pytest.approx(-0.1 + 0.1 * (-1.0 + 0.9 * 2.0 + 0.1))
    assert selector.table.shape == (3, 3)


def test_qlearning_epsilon_anneals_linearly():
    selector = QLearningSelector(2, rho=1.0, epsilon_start=0.3, epsilon_end=0.01, anneal_steps=100)
    assert selector.epsilon == pytest.approx(0.3)
    selector.steps = 50
    assert selector.epsilon == pytest.approx(0.155)
    selector.steps = 500
    assert selector.epsilon == pytest.approx(0.01)


def test_qlearning_greedy_follows_previous_choice():
    selector = QLearningSelector(3, rho=1.0, epsilon_start=0.0, epsilon_end=0.0)
    selector.table[0] = [-1.0, -0.2, -0.5]
    selector.table[2] = [-0.1, -0.9, -0.9]
    assert selector.select(0, None, []).index == 1
    selector.update(2, 1.0, 0.0)
    assert selector.state == 2
    assert selector.select(1, None, []).index == 0


def test_random_selector_is_seeded():
    def draws():
        selector = RandomSelector(4, seed=3)
        return [selector.select(t, None, []).index for t in range(200)]

    assert draws() == draws()
    assert set(draws()) == {0, 1, 2, 3}


def test_static_selector_bounds():
    assert StaticSelector(3, 2).select(0, None, []).index == 2
    with pytest.raises(ConfigError):
        StaticSelector(3, 3)


def test_metanet_selects_argmin_and_charges_synthetic_time(specs):
    params = metanet_params()
    selector = MetaNetSelector(params, 1.0, SelectionConfig(selector_time_s=0.07), TrainConfig())
    state = busy_state()
    choice = selector.select(0, state, specs)
    assert choice.selector_time == 0.07
    assert len(choice.predicted) == 3
    assert choice.index == argmin_policy(choice.predicted)
    W = state.W / np.array([8000.0, 16.0, 64.0])
    H = state.H / np.array([s.capacity for s in specs])
    assert choice.index == select_policy(params, W, H, state.S, 1.0)


def test_metanet_fine_tunes_on_update(specs):
    params = metanet_params()
    before = params.weights["phi_head.b2"].copy()
    selector = MetaNetSelector(params, 1.0, SelectionConfig(), TrainConfig())
    dp = Datapoint(k=1, policy="best_fit", interval=0, W=np.full((1, 3), 0.2), H=np.full((2, 3), 0.1),
                   S=[(0, 1)], phi=0.001, omega=0.01)
    selector.update(1, dp.phi, dp.omega, dp)
    assert len(selector.fine_tune_losses) == 1
    assert not np.array_equal(params.weights["phi_head.b2"], before)

    frozen = MetaNetSelector(metanet_params(), 1.0, SelectionConfig(fine_tune=False), TrainConfig())
    frozen.update(1, dp.phi, dp.omega, dp)
    assert frozen.fine_tune_losses == []


def test_build_selector_variants():
    sel, train = SelectionConfig(), TrainConfig()
    assert build_selector("static:best_fit", POLICIES, 1.0, sel, train).index == 1
    assert build_selector("static:2", POLICIES, 1.0, sel, train).index == 2
    assert isinstance(build_selector("ucb", POLICIES, 1.0, sel, train), UCBSelector)
    assert isinstance(build_selector("qlearn", POLICIES, 1.0, sel, train), QLearningSelector)
    assert isinstance(build_selector("metanet", POLICIES, 1.0, sel, train, metanet_params()), MetaNetSelector)


@pytest.mark.parametrize("spec,params", [
    ("metanet", None),
    ("static:nope", None),
    ("static:7", None),
    ("thompson", None),
])
def test_build_selector_errors(spec, params):
    with pytest.raises(ConfigError):
        build_selector(spec, POLICIES, 1.0, SelectionConfig(), TrainConfig(), params)


def test_build_selector_rejects_model_for_other_policies():
    params = metanet_params()
    params.policies = ["a", "b", "c"]
    with pytest.raises(ConfigError, match="trained for"):
        build_selector("metanet", POLICIES, 1.0, SelectionConfig(), TrainConfig(), params)
