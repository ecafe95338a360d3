"""
MetaNet surrogate: predicts normalised execution cost and scheduling time of
every policy from the tasks, the hosts and their assignment graph.

Pipeline: row-wise encoders for tasks and hosts, a global graph node fed by
the nodes on the assignment graph, multi-head attention over the task and
host tokens with the global node as value, layer norm on the residual sum,
mean pooling, then two sigmoid heads.
"""
from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import tensor as tn
from .data_classes import HostSpec, SystemState
from .exceptions import ConfigError, DimensionError
from .tensor import AttentionWeights, Tensor

logger = logging.getLogger(__name__)

ABLATIONS = {
    "none": {"disable_graph": False, "single_head_output": False, "replace_attention_with_ff": False},
    "gnn": {"disable_graph": True, "single_head_output": False, "replace_attention_with_ff": False},
    "dual": {"disable_graph": False, "single_head_output": True, "replace_attention_with_ff": False},
    "attn": {"disable_graph": False, "single_head_output": False, "replace_attention_with_ff": True},
}


@dataclass
class SurrogateConfig:
    """Architecture sizes and ablation flags."""
    embed_dim: int = 32
    heads: int = 4
    hidden: int = 32
    q: int = 7
    disable_graph: bool = False
    single_head_output: bool = False
    replace_attention_with_ff: bool = False
    seed: int = 0

    def validate(self):
        if self.embed_dim < 1 or self.hidden < 1:
            raise ConfigError("surrogate.embed_dim and surrogate.hidden must be >= 1")
        if self.heads < 1 or self.embed_dim % self.heads != 0:
            raise ConfigError(f"Embedding width {self.embed_dim} is not divisible by {self.heads} heads")
        if self.q < 2:
            raise ConfigError(f"Policy count q must be >= 2, got {self.q}")

    @property
    def ablation(self) -> str:
        for name, flags in ABLATIONS.items():
            if all(getattr(self, k) == v for k, v in flags.items()):
                return name
        return "custom"


@dataclass
class SurrogateParams:
    """Weights theta plus the denormalisation coefficients."""
    config: SurrogateConfig
    weights: Dict[str, np.ndarray]
    phi_max: np.ndarray
    omega_max: np.ndarray
    score_max: np.ndarray
    policies: List[str] = field(default_factory=list)

    def validate(self):
        shapes = weight_shapes(self.config)
        if set(shapes) != set(self.weights):
            raise DimensionError(f"Weights {sorted(self.weights)} do not match architecture {sorted(shapes)}")
        for name, shape in shapes.items():
            if self.weights[name].shape != shape:
                raise DimensionError(f"Weight '{name}' has shape {self.weights[name].shape}, expected {shape}")
        q = self.config.q
        for label, coeff in (("phi_max", self.phi_max), ("omega_max", self.omega_max), ("score_max", self.score_max)):
            if coeff.shape != (q,):
                raise DimensionError(f"{label} must have shape ({q},)")
            if not np.all(coeff > 0):
                raise ConfigError(f"{label} coefficients must be > 0")


@dataclass
class SurrogateOutput:
    """Normalised predictions; the dual ablation fills only `score`."""
    phi_hat: Optional[Tensor]
    omega_hat: Optional[Tensor]
    score: Optional[Tensor]
    attention: List[Tensor] = field(default_factory=list)


def weight_shapes(config: SurrogateConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    d, h, q = config.embed_dim, config.hidden, config.q
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
    for enc in ("task_enc", "host_enc"):
        shapes[f"{enc}.w1"] = (3, d)
        shapes[f"{enc}.b1"] = (d,)
        shapes[f"{enc}.w2"] = (d, d)
        shapes[f"{enc}.b2"] = (d,)
    if not config.disable_graph:
        shapes["gat.theta_w"] = (3, d)
        shapes["gat.theta_h"] = (3, d)
    if config.replace_attention_with_ff:
        shapes["ff.w"] = (d, d)
        shapes["ff.b"] = (d,)
    else:
        for proj in ("wq", "wk", "wv", "wo"):
            shapes[f"attn.{proj}"] = (d, d)
    shapes["norm.gain"] = (d,)
    shapes["norm.bias"] = (d,)
    heads = ("score_head",) if config.single_head_output else ("phi_head", "omega_head")
    for head in heads:
        shapes[f"{head}.w1"] = (d, h)
        shapes[f"{head}.b1"] = (h,)
        shapes[f"{head}.w2"] = (h, q)
        shapes[f"{head}.b2"] = (q,)
    return shapes


def init_weights(config: SurrogateConfig, rng: Optional[np.random.Generator] = None) -> Dict[str, np.ndarray]:
    """Glorot-uniform matrices, zero biases, unit layer-norm gain."""
    config.validate()
    rng = rng or np.random.default_rng(config.seed)
    weights = {}
    for name, shape in weight_shapes(config).items():
        if name == "norm.gain":
            weights[name] = np.ones(shape, dtype=np.float32)
        elif len(shape) == 1:
            weights[name] = np.zeros(shape, dtype=np.float32)
        else:
            weights[name] = tn.glorot_uniform(rng, shape[0], shape[1])
    return weights


def scale_features(state: SystemState, specs: Sequence[HostSpec]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Bring features into [0, 1]: task demands by the largest host capacities,
    host usage by each host's own capacities.
    """
    caps = np.array([s.capacity for s in specs], dtype=np.float64)
    if caps.shape[0] != state.m:
        raise DimensionError(f"State has {state.m} hosts, roster has {caps.shape[0]}")
    W = state.W / caps.max(axis=0) if state.n else np.zeros((0, 3))
    H = state.H / caps
    return W, H


def as_parameters(weights: Dict[str, np.ndarray]) -> Dict[str, Tensor]:
    return {name: Tensor.parameter(value, name=name) for name, value in weights.items()}


def as_constants(weights: Dict[str, np.ndarray]) -> Dict[str, Tensor]:
    return {name: Tensor(value, name=name) for name, value in weights.items()}


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

def _fcn(x: Tensor, theta: Dict[str, Tensor], prefix: str) -> Tensor:
    hidden = tn.relu(tn.linear(x, theta[f"{prefix}.w1"], theta[f"{prefix}.b1"]))
    return tn.relu(tn.linear(hidden, theta[f"{prefix}.w2"], theta[f"{prefix}.b2"]))


def encode_features(W: np.ndarray, H: np.ndarray, theta: Dict[str, Tensor]) -> Tuple[Tensor, Tensor]:
    """Row-wise encoders: E^W (n x d) and E^H (m x d). n may be 0."""
    if W.ndim != 2 or W.shape[1] != 3 or H.ndim != 2 or H.shape[1] != 3:
        raise DimensionError(f"Expected n x 3 and m x 3 features, got {W.shape} and {H.shape}")
    return _fcn(Tensor(W), theta, "task_enc"), _fcn(Tensor(H), theta, "host_enc")


def gat_global(W: np.ndarray,
               H: np.ndarray,
               S: Sequence[Tuple[int, int]],
               theta: Dict[str, Tensor],
               config: SurrogateConfig) -> Tensor:
    """
    Global node embedding E^S.

    The node is linked to every task and every host; its embedding is
    sigmoid(mean_W @ theta_W + mean_H @ theta_H). With no tasks the task
    term is zero. The graph ablation returns zeros.
    """
    d = config.embed_dim
    if any(i < 0 or i >= W.shape[0] or j < 0 or j >= H.shape[0] for i, j in S):
        raise DimensionError("Assignment graph references rows outside W or H")
    if config.disable_graph:
        return Tensor(np.zeros(d))
    total = Tensor(np.zeros((1, d)))
    if W.shape[0]:
        mean_w = tn.reshape(tn.mean_rows(Tensor(W)), (1, 3))
        total = tn.add(total, tn.matmul(mean_w, theta["gat.theta_w"]))
    if H.shape[0]:
        mean_h = tn.reshape(tn.mean_rows(Tensor(H)), (1, 3))
        total = tn.add(total, tn.matmul(mean_h, theta["gat.theta_h"]))
    return tn.reshape(tn.sigmoid(total), (d,))


def fuse(e_w: Tensor,
         e_h: Tensor,
         e_s: Tensor,
         theta: Dict[str, Tensor],
         config: SurrogateConfig) -> Tuple[Tensor, List[Tensor]]:
    """
    Fused state vector E (length d) and the attention maps.

    Tokens are the task rows followed by the host rows. Queries and keys are
    the tokens, values the global node broadcast to every token.
    """
    d = config.embed_dim
    if e_w.shape[1] != d or e_h.shape[1] != d or e_s.shape != (d,):
        raise DimensionError(f"Embeddings do not share width {d}")
    parts = [e for e in (e_w, e_h) if e.shape[0]]
    if not parts:
        raise DimensionError("fuse needs at least one task or host token")
    tokens = tn.concat_rows(parts) if len(parts) > 1 else parts[0]
    values = tn.broadcast_rows(e_s, tokens.shape[0])
    if config.replace_attention_with_ff:
        mixed = tn.relu(tn.linear(tn.add(tokens, values), theta["ff.w"], theta["ff.b"]))
        maps: List[Tensor] = []
    else:
        weights = AttentionWeights(theta["attn.wq"], theta["attn.wk"], theta["attn.wv"], theta["attn.wo"])
        mixed, maps = tn.multi_head_attention(tokens, tokens, values, weights, config.heads)
    normed = tn.layer_norm(tn.add(tokens, mixed), theta["norm.gain"], theta["norm.bias"])
    return tn.mean_rows(normed), maps


def _head(e: Tensor, theta: Dict[str, Tensor], prefix: str) -> Tensor:
    hidden = tn.relu(tn.linear(e, theta[f"{prefix}.w1"], theta[f"{prefix}.b1"]))
    out = tn.sigmoid(tn.linear(hidden, theta[f"{prefix}.w2"], theta[f"{prefix}.b2"]))
    return tn.reshape(out, (out.shape[1],))


def predict_heads(e: Tensor, theta: Dict[str, Tensor], config: SurrogateConfig) -> SurrogateOutput:
    """Sigmoid heads on the fused vector: (phi_hat, omega_hat), or one score for the dual ablation."""
    row = tn.reshape(e, (1, e.shape[0]))
    if config.single_head_output:
        return SurrogateOutput(phi_hat=None, omega_hat=None, score=_head(row, theta, "score_head"))
    return SurrogateOutput(phi_hat=_head(row, theta, "phi_head"),
                           omega_hat=_head(row, theta, "omega_head"),
                           score=None)


def forward(W: np.ndarray,
            H: np.ndarray,
            S: Sequence[Tuple[int, int]],
            theta: Dict[str, Tensor],
            config: SurrogateConfig) -> SurrogateOutput:
    """Full surrogate on scaled features W (n x 3), H (m x 3) and edges S."""
    if H.shape[0] < 1:
        raise DimensionError("At least one host is required")
    e_w, e_h = encode_features(W, H, theta)
    e_s = gat_global(W, H, S, theta, config)
    e, maps = fuse(e_w, e_h, e_s, theta, config)
    out = predict_heads(e, theta, config)
    out.attention = maps
    return out


# ---------------------------------------------------------------------------
# Inference helpers
# ---------------------------------------------------------------------------

def predict(params: SurrogateParams, W: np.ndarray, H: np.ndarray, S: Sequence[Tuple[int, int]]) -> SurrogateOutput:
    return forward(W, H, S, as_constants(params.weights), params.config)


def selection_scores(params: SurrogateParams,
                     W: np.ndarray,
                     H: np.ndarray,
                     S: Sequence[Tuple[int, int]],
                     rho: float,
                     rho_in_selection: bool = True) -> np.ndarray:
    """
    Denormalised objective estimate per policy.

    phi_max * phi_hat + rho * omega_max * omega_hat; without rho when
    rho_in_selection is off. The dual ablation returns score_max * score.
    """
    out = predict(params, W, H, S)
    if params.config.single_head_output:
        return params.score_max * out.score.data.astype(np.float64)
    weight = rho if rho_in_selection else 1.0
    return (params.phi_max * out.phi_hat.data.astype(np.float64)
            + weight * params.omega_max * out.omega_hat.data.astype(np.float64))


def new_params(config: SurrogateConfig, policies: Sequence[str]) -> SurrogateParams:
    """Freshly initialised surrogate with unit coefficients."""
    if len(policies) != config.q:
        raise ConfigError(f"Surrogate built for q={config.q} but {len(policies)} policies given")
    ones = np.ones(config.q)
    return SurrogateParams(config=config, weights=init_weights(config), phi_max=ones.copy(),
                           omega_max=ones.copy(), score_max=ones.copy(), policies=list(policies))
