"""
Tests for the surrogate network and its model file.
"""
import numpy as np
import pytest

from src import tensor as tn
from src.data_classes import Datapoint, SystemState
from src.exceptions import ConfigError, DimensionError
from src.policy_selection import select_policy
from src.state import load_metadata, load_model, model_bytes, params_from_bytes, save_model
from src.surrogate import ABLATIONS, SurrogateConfig, SurrogateParams, as_parameters, gat_global, init_weights, \
    new_params, predict, scale_features, selection_scores, weight_shapes
from src.training import datapoint_loss

POLICIES = ["round_robin", "best_fit", "gradient"]


def small_config(**flags):
    return SurrogateConfig(embed_dim=8, heads=2, hidden=8, q=3, **flags)


def sample_state(rng, n=4, m=3):
    W = rng.uniform(0.05, 0.5, size=(n, 3))
    H = rng.uniform(0.0, 0.9, size=(m, 3))
    S = [(i, i % m) for i in range(n)]
    return W, H, S


def test_zero_weights_predict_one_half(rng):
    params = new_params(small_config(), POLICIES)
    params.weights = {k: np.zeros_like(v) for k, v in params.weights.items()}
    W, H, S = sample_state(rng)
    out = predict(params, W, H, S)
    assert np.allclose(out.phi_hat.data, 0.5)
    assert np.allclose(out.omega_hat.data, 0.5)
    params.phi_max = np.array([1.0, 2.0, 3.0])
    params.omega_max = np.array([10.0, 10.0, 10.0])
    assert np.allclose(selection_scores(params, W, H, S, rho=0.1), [1.0, 1.5, 2.0])


def test_predictions_lie_in_unit_interval(rng):
    params = new_params(small_config(), POLICIES)
    out = predict(params, *sample_state(rng))
    for values in (out.phi_hat.data, out.omega_hat.data):
        assert values.shape == (3,)
        assert np.all((values > 0) & (values < 1))
    assert len(out.attention) == 2


def test_empty_task_set_is_supported(rng):
    params = new_params(small_config(), POLICIES)
    out = predict(params, np.zeros((0, 3)), rng.uniform(size=(3, 3)), [])
    assert out.phi_hat.shape == (3,)
    assert np.all(np.isfinite(out.omega_hat.data))


def test_no_hosts_rejected():
    params = new_params(small_config(), POLICIES)
    with pytest.raises(DimensionError):
        predict(params, np.zeros((0, 3)), np.zeros((0, 3)), [])


def test_edges_outside_rows_rejected(rng):
    params = new_params(small_config(), POLICIES)
    W, H, _ = sample_state(rng)
    with pytest.raises(DimensionError):
        predict(params, W, H, [(0, 7)])


def test_task_order_does_not_matter(rng):
    params = new_params(small_config(), POLICIES)
    W, H, S = sample_state(rng)
    perm = np.array([2, 0, 3, 1])
    inverse = np.argsort(perm)
    S_perm = [(int(inverse[i]), j) for i, j in S]
    with tn.use_dtype(np.float64):
        a = selection_scores(params, W, H, S, rho=0.5)
        b = selection_scores(params, W[perm], H, S_perm, rho=0.5)
    assert np.allclose(a, b, rtol=0.0, atol=1e-6)


@pytest.mark.parametrize("perm", [[1, 2, 0], [2, 1, 0], [0, 2, 1]])
def test_host_order_does_not_matter(rng, perm):
    params = new_params(small_config(), POLICIES)
    W, H, S = sample_state(rng)
    perm = np.array(perm)
    inverse = np.argsort(perm)
    S_perm = [(i, int(inverse[j])) for i, j in S]
    with tn.use_dtype(np.float64):
        a = selection_scores(params, W, H, S, rho=0.5)
        b = selection_scores(params, W, H[perm], S_perm, rho=0.5)
    assert np.allclose(a, b, rtol=0.0, atol=1e-6)


def test_disabled_graph_gives_zero_global_node(rng):
    config = small_config(**ABLATIONS["gnn"])
    theta = as_parameters(init_weights(config))
    W, H, S = sample_state(rng)
    assert np.all(gat_global(W, H, S, theta, config).data == 0.0)
    assert "gat.theta_w" not in theta


def test_global_node_uses_all_rows(rng):
    config = small_config()
    theta = as_parameters(init_weights(config))
    W, H, _ = sample_state(rng)
    expected = 1.0 / (1.0 + np.exp(-(W.mean(axis=0) @ theta["gat.theta_w"].data
                                     + H.mean(axis=0) @ theta["gat.theta_h"].data)))
    assert np.allclose(gat_global(W, H, [], theta, config).data, expected, atol=1e-5)


def test_dual_ablation_scores_with_single_head(rng):
    config = small_config(**ABLATIONS["dual"])
    params = new_params(config, POLICIES)
    params.score_max = np.array([2.0, 4.0, 8.0])
    W, H, S = sample_state(rng)
    out = predict(params, W, H, S)
    assert out.phi_hat is None and out.omega_hat is None
    assert np.allclose(selection_scores(params, W, H, S, rho=3.0), params.score_max * out.score.data)


def test_ff_ablation_has_no_attention_maps(rng):
    config = small_config(**ABLATIONS["attn"])
    params = new_params(config, POLICIES)
    assert "attn.wq" not in params.weights and "ff.w" in params.weights
    assert predict(params, *sample_state(rng)).attention == []


def test_selection_weight_follows_rho_switch(rng):
    params = new_params(small_config(), POLICIES)
    W, H, S = sample_state(rng)
    params.omega_max = np.array([2.0, 2.0, 2.0])
    with_rho = selection_scores(params, W, H, S, rho=0.5)
    without_rho = selection_scores(params, W, H, S, rho=1.0, rho_in_selection=False)
    out = predict(params, W, H, S)
    assert np.allclose(with_rho, out.phi_hat.data + out.omega_hat.data, atol=1e-6)
    assert np.allclose(without_rho, out.phi_hat.data + 2 * out.omega_hat.data, atol=1e-6)


@pytest.mark.parametrize("ablation", sorted(ABLATIONS))
def test_gradients_match_finite_differences(rng, ablation):
    config = small_config(**ABLATIONS[ablation])
    W, H, S = sample_state(rng)
    dp = Datapoint(k=1, policy=POLICIES[1], interval=0, W=W, H=H, S=S, phi=0.7, omega=1.9)
    init = np.random.default_rng(4)
    weights = {}
    for name, value in init_weights(config, init).items():
        if value.ndim == 1:
            value = value + init.normal(0.0, 0.1, size=value.shape)
        weights[name] = value.astype(np.float64)
    coeffs = np.array([0.8, 1.3, 2.1])
    params = SurrogateParams(config=config, weights=weights, phi_max=coeffs, omega_max=coeffs[::-1].copy(),
                             score_max=coeffs * 2, policies=POLICIES)
    rho = 0.5

    with tn.use_dtype(np.float64):
        def loss_of(values):
            theta = {k: tn.Tensor(v) for k, v in values.items()}
            return datapoint_loss(theta, params, dp, rho, "squared")[0].item()

        theta = as_parameters(weights)
        loss, _, _ = datapoint_loss(theta, params, dp, rho, "squared")
        names = list(weight_shapes(config))
        grads = tn.backward(loss, [theta[n] for n in names])
        eps = 1e-6
        for name, grad in zip(names, grads):
            assert grad.shape == weights[name].shape
            for idx in np.ndindex(weights[name].shape):
                plus = dict(weights)
                minus = dict(weights)
                plus[name] = weights[name].copy()
                minus[name] = weights[name].copy()
                plus[name][idx] += eps
                minus[name][idx] -= eps
                numeric = (loss_of(plus) - loss_of(minus)) / (2 * eps)
                assert grad[idx] == pytest.approx(numeric, rel=1e-3, abs=1e-6), f"{name}{idx}"


def test_scale_features_uses_capacities(specs):
    state = SystemState(task_ids=[0], W=np.array([[4000.0, 8.0, 32.0]]),
                        H=np.array([[2000.0, 1.0, 16.0], [8000.0, 16.0, 0.0]]), S=[(0, 0)])
    W, H = scale_features(state, specs)
    assert np.allclose(W, [[0.5, 0.5, 0.5]])
    assert np.allclose(H, [[0.5, 0.25, 0.5], [1.0, 1.0, 0.0]])
    with pytest.raises(DimensionError):
        scale_features(state, specs[:1])


def test_config_validation():
    with pytest.raises(ConfigError):
        SurrogateConfig(embed_dim=10, heads=4).validate()
    with pytest.raises(ConfigError):
        SurrogateConfig(q=1).validate()
    assert small_config(**ABLATIONS["dual"]).ablation == "dual"
    assert small_config().ablation == "none"


def test_new_params_checks_policy_count():
    with pytest.raises(ConfigError):
        new_params(small_config(), POLICIES[:2])


def test_weight_shapes_follow_ablations():
    assert "score_head.w2" in weight_shapes(small_config(single_head_output=True))
    assert weight_shapes(small_config())["phi_head.w2"] == (8, 3)


def test_params_validation_catches_bad_coefficients():
    params = new_params(small_config(), POLICIES)
    params.phi_max = np.array([1.0, 0.0, 1.0])
    with pytest.raises(ConfigError):
        params.validate()
    params = new_params(small_config(), POLICIES)
    params.weights["norm.gain"] = np.ones(5, dtype=np.float32)
    with pytest.raises(DimensionError):
        params.validate()


def test_model_bytes_round_trip():
    params = new_params(small_config(**ABLATIONS["attn"]), POLICIES)
    params.phi_max = np.array([0.01, 0.02, 0.03])
    blob = model_bytes(params)
    assert blob[:4] == b"MNET"
    assert model_bytes(params) == blob
    loaded = params_from_bytes(blob)
    assert loaded.config == params.config
    assert loaded.policies == POLICIES
    assert np.allclose(loaded.phi_max, params.phi_max.astype(np.float32))
    for name, value in params.weights.items():
        assert np.array_equal(loaded.weights[name], value)


def test_corrupt_model_files_rejected():
    blob = model_bytes(new_params(small_config(), POLICIES))
    with pytest.raises(ConfigError, match="magic"):
        params_from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ConfigError, match="truncated"):
        params_from_bytes(blob[:-8])
    with pytest.raises(ConfigError, match="trailing"):
        params_from_bytes(blob + b"\x00\x00\x00\x00")
    with pytest.raises(ConfigError, match="version"):
        params_from_bytes(blob[:4] + b"\x07\x00" + blob[6:])


def test_save_and_load_model(tmp_path):
    params = new_params(small_config(), POLICIES)
    path = str(tmp_path / "models" / "metanet.bin")
    save_model(params, path, {"epochs": 3})
    loaded = load_model(path)
    assert loaded.config == params.config
    meta = load_metadata(path)
    assert meta["epochs"] == 3 and "created_at" in meta
    with pytest.raises(ConfigError):
        load_model(str(tmp_path / "missing.bin"))


def test_attention_rows_sum_to_one(rng):
    params = new_params(small_config(), POLICIES)
    for att in predict(params, *sample_state(rng, n=3, m=2)).attention:
        assert att.shape == (5, 5)
        assert np.allclose(att.data.sum(axis=1), 1.0, atol=1e-6)


def test_positive_rescaling_keeps_selection(rng):
    params = new_params(small_config(), POLICIES)
    W, H, S = sample_state(rng)
    params.phi_max = np.array([0.02, 0.01, 0.03])
    params.omega_max = np.array([0.5, 2.0, 1.0])
    before = select_policy(params, W, H, S, 0.3)
    brute = min(range(3), key=lambda k: selection_scores(params, W, H, S, 0.3)[k])
    params.phi_max = params.phi_max * 7.5
    params.omega_max = params.omega_max * 7.5
    assert select_policy(params, W, H, S, 0.3) == before == brute
