"""
Dense tensor kernel with reverse-mode differentiation and the AdamW update.

Only the operations needed by the MetaNet surrogate and the gradient-based
scheduling policies are implemented. Values are 32-bit floats; reductions
accumulate in 64-bit.
"""
from __future__ import annotations

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ConfigError, DimensionError, NonFiniteError

logger = logging.getLogger(__name__)

LN_EPS = 1e-5

_dtype = np.float32

BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


@contextmanager
def use_dtype(dtype) -> Iterator[None]:
    """
    Temporarily switch the element type of newly created tensors.

    Gradient checks run under float64 so that finite differences are not
    swamped by rounding.
    """
    global _dtype
    previous = _dtype
    _dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _dtype = previous


def current_dtype():
    return _dtype


class Tensor:
    """A node of the computation graph: a value plus how to differentiate it."""

    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op", "name")

    def __init__(self,
                 data,
                 requires_grad: bool = False,
                 parents: Tuple["Tensor", ...] = (),
                 backward_fn: Optional[BackwardFn] = None,
                 op: str = "input",
                 name: Optional[str] = None):
        arr = np.asarray(data, dtype=_dtype)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"Non-finite values produced by '{op}'")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.name = name

    @classmethod
    def parameter(cls, data, name: Optional[str] = None) -> "Tensor":
        return cls(data, requires_grad=True, op="parameter", name=name)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        label = self.name or self.op
        return f"Tensor({label}, shape={self.shape})"


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=tuple(parents), backward_fn=backward_fn, op=op)
    return Tensor(data, op=op)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    if a.shape == b.shape:
        return
    if b.data.ndim == 0:
        return
    if a.data.ndim == 2 and b.data.ndim == 1 and b.shape[0] == a.shape[1]:
        return
    raise DimensionError(f"{op}: cannot combine shapes {a.shape} and {b.shape}")


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return np.asarray(grad.sum(dtype=np.float64), dtype=grad.dtype)
    return grad.sum(axis=0, dtype=np.float64).astype(grad.dtype)


# ---------------------------------------------------------------------------
# Linear algebra and elementwise ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an m x k and a k x n tensor."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    out = a.data @ b.data

    def backward_fn(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), backward_fn, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; b may be a row vector broadcast over the rows of a."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")
    out = a.data + b.data

    def backward_fn(g):
        return g, _reduce_to(g, b.shape)

    return _make(out, (a, b), backward_fn, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")
    out = a.data - b.data

    def backward_fn(g):
        return g, -_reduce_to(g, b.shape)

    return _make(out, (a, b), backward_fn, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with the same broadcasting rule as add."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")
    out = a.data * b.data

    def backward_fn(g):
        return g * b.data, _reduce_to(g * a.data, b.shape)

    return _make(out, (a, b), backward_fn, "mul")


def scale(a: Tensor, factor: float) -> Tensor:
    out = a.data * factor

    def backward_fn(g):
        return (g * factor,)

    return _make(out, (a,), backward_fn, "scale")


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def backward_fn(g):
        return (g * (x.data > 0),)

    return _make(out, (x,), backward_fn, "relu")


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, clamped so results stay strictly inside (0, 1)."""
    e = np.exp(-np.abs(x.data))
    s = np.where(x.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.data.dtype)
    upper = np.nextafter(np.array(1, dtype=s.dtype), np.array(0, dtype=s.dtype))
    s = np.clip(s, np.finfo(s.dtype).tiny, upper)

    def backward_fn(g):
        return (g * s * (1 - s),)

    return _make(s, (x,), backward_fn, "sigmoid")


def transpose(x: Tensor) -> Tensor:
    out = x.data.T

    def backward_fn(g):
        return (g.T,)

    return _make(out, (x,), backward_fn, "transpose")


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack 2-D tensors with equal column counts along the row axis."""
    if not tensors:
        raise DimensionError("concat_rows needs at least one tensor")
    cols = {t.shape[1] if t.data.ndim == 2 else None for t in tensors}
    if len(cols) != 1 or None in cols:
        raise DimensionError(f"concat_rows: incompatible shapes {[t.shape for t in tensors]}")
    out = np.concatenate([t.data for t in tensors], axis=0)
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])

    def backward_fn(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _make(out, tuple(tensors), backward_fn, "concat_rows")


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise DimensionError("concat_cols needs at least one tensor")
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1:
        raise DimensionError(f"concat_cols: incompatible shapes {[t.shape for t in tensors]}")
    out = np.concatenate([t.data for t in tensors], axis=1)
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward_fn(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _make(out, tuple(tensors), backward_fn, "concat_cols")


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    out = x.data[:, start:stop]

    def backward_fn(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return _make(out, (x,), backward_fn, "slice_cols")


def mean_rows(x: Tensor) -> Tensor:
    """Average the rows of an n x d tensor into a length-d vector."""
    if x.data.ndim != 2 or x.shape[0] == 0:
        raise DimensionError(f"mean_rows needs a non-empty 2-D tensor, got {x.shape}")
    n = x.shape[0]
    out = x.data.mean(axis=0, dtype=np.float64).astype(x.data.dtype)

    def backward_fn(g):
        return (np.broadcast_to(g / n, x.shape).astype(x.data.dtype),)

    return _make(out, (x,), backward_fn, "mean_rows")


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(dtype=np.float64), dtype=x.data.dtype)

    def backward_fn(g):
        return (np.full_like(x.data, g),)

    return _make(out, (x,), backward_fn, "sum_all")


def broadcast_rows(v: Tensor, n: int) -> Tensor:
    """Repeat a length-d vector as n identical rows."""
    if v.data.ndim != 1:
        raise DimensionError(f"broadcast_rows expects a vector, got {v.shape}")
    out = np.broadcast_to(v.data, (n, v.shape[0])).copy()

    def backward_fn(g):
        return (g.sum(axis=0, dtype=np.float64).astype(v.data.dtype),)

    return _make(out, (v,), backward_fn, "broadcast_rows")


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)

    def backward_fn(g):
        return (g.reshape(x.shape),)

    return _make(out, (x,), backward_fn, "reshape")


def elementwise(op: str, *args: Tensor) -> Tensor:
    """Dispatch by name: relu, sigmoid, add, mul, concat_rows, mean_rows."""
    table = {
        "relu": relu,
        "sigmoid": sigmoid,
        "add": add,
        "mul": mul,
        "concat_rows": lambda *xs: concat_rows(list(xs)),
        "mean_rows": mean_rows,
    }
    if op not in table:
        raise ConfigError(f"Unknown elementwise op '{op}'")
    return table[op](*args)


def softmax_rows(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted.astype(np.float64))
    s = (e / e.sum(axis=1, keepdims=True)).astype(x.data.dtype)

    def backward_fn(g):
        inner = (g * s).sum(axis=1, keepdims=True, dtype=np.float64).astype(s.dtype)
        return (s * (g - inner),)

    return _make(s, (x,), backward_fn, "softmax_rows")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Normalise each row to zero mean and unit variance, then apply gain and bias."""
    if x.data.ndim != 2 or x.shape[1] < 1:
        raise DimensionError(f"layer_norm needs an n x d tensor with d >= 1, got {x.shape}")
    d = x.shape[1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: gain/bias must have shape ({d},)")
    x64 = x.data.astype(np.float64)
    mean = x64.mean(axis=1, keepdims=True)
    var = x64.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x64 - mean) * inv_std
    out = (xhat * gain.data + bias.data).astype(x.data.dtype)

    def backward_fn(g):
        g64 = g.astype(np.float64)
        dxhat = g64 * gain.data
        dx = inv_std / d * (d * dxhat
                            - dxhat.sum(axis=1, keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=1, keepdims=True))
        dgain = (g64 * xhat).sum(axis=0)
        dbias = g64.sum(axis=0)
        dtype = x.data.dtype
        return dx.astype(dtype), dgain.astype(dtype), dbias.astype(dtype)

    return _make(out, (x, gain, bias), backward_fn, "layer_norm")


def l2_norm(x: Tensor) -> Tensor:
    """Euclidean norm of all elements; the gradient at zero is taken as zero."""
    norm = float(np.sqrt((x.data.astype(np.float64) ** 2).sum()))
    out = np.asarray(norm, dtype=x.data.dtype)

    def backward_fn(g):
        if norm == 0.0:
            return (np.zeros_like(x.data),)
        return ((g * x.data / norm).astype(x.data.dtype),)

    return _make(out, (x,), backward_fn, "l2_norm")


def squared_norm(x: Tensor) -> Tensor:
    out = np.asarray((x.data.astype(np.float64) ** 2).sum(), dtype=x.data.dtype)

    def backward_fn(g):
        return ((2 * g * x.data).astype(x.data.dtype),)

    return _make(out, (x,), backward_fn, "squared_norm")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


# ---------------------------------------------------------------------------
# Attention
# ---------------------------------------------------------------------------

@dataclass
class AttentionWeights:
    """Query/key/value projections and the output projection, each d x d."""
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor) -> Tuple[Tensor, Tensor]:
    d = q.shape[1]
    scores = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(d))
    weights = softmax_rows(scores)
    return matmul(weights, v), weights


def multi_head_attention(q: Tensor,
                         k: Tensor,
                         v: Tensor,
                         weights: AttentionWeights,
                         heads: int) -> Tuple[Tensor, List[Tensor]]:
    """
    Multi-head attention over s tokens of width d.

    Args:
        q, k, v: s x d inputs
        weights: learned projections
        heads: number of heads z; d must be divisible by z

    Returns:
        (s x d output, list of per-head s x s attention weight tensors)
    """
    d = q.shape[1]
    if heads < 1 or d % heads != 0:
        raise ConfigError(f"Embedding width {d} is not divisible by {heads} heads")
    if k.shape != v.shape or k.shape[1] != d:
        raise DimensionError(f"attention: key {k.shape} / value {v.shape} do not match query width {d}")
    q_proj = matmul(q, weights.wq)
    k_proj = matmul(k, weights.wk)
    v_proj = matmul(v, weights.wv)
    head_dim = d // heads
    outputs, maps = [], []
    for i in range(heads):
        lo, hi = i * head_dim, (i + 1) * head_dim
        out, att = scaled_dot_product_attention(slice_cols(q_proj, lo, hi),
                                                slice_cols(k_proj, lo, hi),
                                                slice_cols(v_proj, lo, hi))
        outputs.append(out)
        maps.append(att)
    merged = outputs[0] if heads == 1 else concat_cols(outputs)
    return matmul(merged, weights.wo), maps


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------

def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Optional[Sequence[Tensor]] = None) -> List[np.ndarray]:
    """
    Reverse-mode differentiation from a scalar loss.

    Args:
        loss: scalar tensor
        params: tensors whose gradients should be returned

    Returns:
        One gradient array per entry of params (zeros where unreachable).
        Every reachable tensor also gets its .grad populated.
    """
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topological_order(loss)
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.backward_fn is None:
            continue
        for parent, parent_grad in zip(node.parents, node.backward_fn(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + parent_grad if key in grads else parent_grad
    for node in order:
        if node.requires_grad:
            node.grad = grads.get(id(node))
    if params is None:
        return []
    return [grads[id(p)] if id(p) in grads else np.zeros_like(p.data) for p in params]


# ---------------------------------------------------------------------------
# Initialisation and optimisation
# ---------------------------------------------------------------------------

def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: Optional[Tuple[int, ...]] = None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    shape = shape or (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


@dataclass
class AdamWConfig:
    """Optimizer hyperparameters."""
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5


@dataclass
class AdamWState:
    """Moment accumulators and the step counter."""
    config: AdamWConfig = field(default_factory=AdamWConfig)
    step_count: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: Dict[str, np.ndarray],
               grads: Dict[str, np.ndarray],
               state: AdamWState) -> Dict[str, np.ndarray]:
    """
    One AdamW update with decoupled weight decay, applied in place.

    Args:
        params: named parameter arrays
        grads: gradients with the same names and shapes
        state: optimizer state (mutated)

    Returns:
        The same params mapping, updated
    """
    for name, p in params.items():
        if name not in grads:
            raise DimensionError(f"Missing gradient for parameter '{name}'")
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"Gradient for '{name}' has shape {g.shape}, parameter has {p.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"Non-finite gradient for parameter '{name}'")
        m = state.first_moment.get(name)
        if m is not None and m.shape != p.shape:
            raise DimensionError(f"Optimizer state for '{name}' has shape {m.shape}, parameter has {p.shape}")

    cfg = state.config
    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - cfg.beta1 ** t
    bias2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        g = grads[name].astype(np.float64)
        m = state.first_moment.setdefault(name, np.zeros(p.shape, dtype=np.float64))
        v = state.second_moment.setdefault(name, np.zeros(p.shape, dtype=np.float64))
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        updated = p.astype(np.float64) * (1.0 - cfg.lr * cfg.weight_decay) - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        p[...] = updated.astype(p.dtype)
    return params
