"""
Minimal dense-tensor reverse-mode differentiation.

Ops record a vector-Jacobian closure on the active Tape; Tape.backward walks
the records in reverse creation order, which is a valid topological order
because every op's inputs exist before the op does. Outside a tape (or inside
no_grad) ops compute values only.

Also holds the binary cross-entropy loss, Adam, a finite-difference gradient
checker and the checkpoint format for named parameters.
"""

import json
import logging
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import CheckpointError, ContractViolation, DimensionError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
BCE_EPS = 1e-7

_active_tape: ContextVar[Optional["Tape"]] = ContextVar("tempograph_tape", default=None)

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """Dense float64 array with an optional accumulated gradient."""

    __slots__ = ("values", "grad", "requires_grad", "name", "_parents", "_vjp")

    def __init__(self, values: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._vjp: Optional[VJP] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def is_leaf(self) -> bool:
        return self._vjp is None

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy())

    def numpy(self) -> np.ndarray:
        return self.values

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.values.reshape(-1)[0]) if self.values.size == 1 else float("nan")

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x: Union[Tensor, ArrayLike]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(values: ArrayLike, name: Optional[str] = None) -> Tensor:
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True, name=name)


def xavier_normal(rng: np.random.Generator, fan_in: int, fan_out: int,
                  shape: Optional[Tuple[int, ...]] = None) -> np.ndarray:
    std = np.sqrt(2.0 / max(fan_in + fan_out, 1))
    return rng.normal(0.0, std, size=shape or (fan_in, fan_out))


class Tape:
    """Records differentiable ops for one execution context (one batch)."""

    def __init__(self):
        self.nodes: List[Tensor] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _active_tape.reset(self._token)
        self._token = None
        return False

    def record(self, node: Tensor) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        for node in self.nodes:
            node._parents = ()
            node._vjp = None
        self.nodes.clear()

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1:
            raise ContractViolation(f"backward needs a scalar loss, got shape {loss.shape}")
        pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
        if loss.is_leaf:
            if loss.requires_grad:
                _accumulate_leaf(loss, pending.pop(id(loss)))
            return
        for node in reversed(self.nodes):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.is_leaf:
                    _accumulate_leaf(parent, pg)
                elif id(parent) in pending:
                    pending[id(parent)] = pending[id(parent)] + pg
                else:
                    pending[id(parent)] = pg


def _accumulate_leaf(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True).reshape(t.shape)
    else:
        t.grad += g.reshape(t.shape)


def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    tape = tape or _active_tape.get()
    if tape is None:
        raise ContractViolation("backward called outside a Tape")
    tape.backward(loss)


@contextmanager
def no_grad() -> Iterator[None]:
    token = _active_tape.set(None)
    try:
        yield
    finally:
        _active_tape.reset(token)


def recording() -> bool:
    return _active_tape.get() is not None


def _make(values: np.ndarray, parents: Tuple[Tensor, ...], vjp: VJP) -> Tensor:
    tape = _active_tape.get()
    if tape is None or not any(p.requires_grad for p in parents):
        return Tensor(values)
    out = Tensor(values, requires_grad=True)
    out._parents = parents
    out._vjp = vjp
    tape.record(out)
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(op, f"cannot broadcast {a.shape} with {b.shape}") from None


# Elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _make(a.values + b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _make(a.values - b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    av, bv = a.values, b.values
    return _make(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


# Affine and activations

def linear(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """x @ W + b over the last axis of x; W has shape (in, out)."""
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise DimensionError("linear", f"input {x.shape} does not match weight {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise DimensionError("linear", f"bias {b.shape} does not match weight {W.shape}")
    xv, Wv = x.values, W.values
    out = xv @ Wv
    if b is not None:
        out = out + b.values

    def vjp(g):
        gx = g @ Wv.T
        gW = xv.reshape(-1, Wv.shape[0]).T @ g.reshape(-1, Wv.shape[1])
        if b is None:
            return gx, gW
        return gx, gW, g.reshape(-1, Wv.shape[1]).sum(axis=0)

    return _make(out, (x, W) if b is None else (x, W, b), vjp)


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0
    return _make(np.where(mask, x.values, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(x.values > 0, 1.0, slope)
    return _make(x.values * scale, (x,), lambda g: (g * scale,))


def sigmoid(x: Tensor) -> Tensor:
    out = np.exp(-np.logaddexp(0.0, -x.values))
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.values)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),))


def cosine(x: Tensor) -> Tensor:
    xv = x.values
    return _make(np.cos(xv), (x,), lambda g: (-g * np.sin(xv),))


# Structural ops

def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise DimensionError("concat", "nothing to concatenate")
    ndim = xs[0].ndim
    axis = axis % ndim
    for x in xs[1:]:
        if x.ndim != ndim or any(
                x.shape[d] != xs[0].shape[d] for d in range(ndim) if d != axis):
            raise DimensionError("concat", f"incompatible shapes {xs[0].shape} and {x.shape}")
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([x.values for x in xs], axis=axis), tuple(xs),
                 lambda g: tuple(np.split(g, cuts, axis=axis)))


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    shape = xs[0].shape
    if any(x.shape != shape for x in xs):
        raise DimensionError("stack", "all inputs must share a shape")
    return _make(np.stack([x.values for x in xs], axis=axis), tuple(xs),
                 lambda g: tuple(np.moveaxis(g, axis, 0)))


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        out = x.values.reshape(shape)
    except ValueError:
        raise DimensionError("reshape", f"cannot reshape {x.shape} to {shape}") from None
    return _make(out, (x,), lambda g: (g.reshape(x.shape),))


def take_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Gather x[index] along the first axis; index may have any shape."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < -x.shape[0] or index.max() >= x.shape[0]):
        raise DimensionError("take_rows", f"index out of range for {x.shape[0]} rows")

    def vjp(g):
        gx = np.zeros_like(x.values)
        np.add.at(gx, index, g)
        return (gx,)

    return _make(x.values[index], (x,), vjp)


# Reductions

def sum_rows(x: Tensor) -> Tensor:
    return _make(x.values.sum(axis=0), (x,),
                 lambda g: (np.broadcast_to(g, x.shape).copy(),))


def sum_all(x: Tensor) -> Tensor:
    return _make(np.array(x.values.sum()), (x,),
                 lambda g: (np.full(x.shape, float(g)),))


def mean(x: Tensor) -> Tensor:
    n = max(x.size, 1)
    return _make(np.array(x.values.mean()), (x,),
                 lambda g: (np.full(x.shape, float(g) / n),))


def weighted_sum(xs: Tensor, weights: Tensor) -> Tensor:
    """Sum over the second-to-last axis of xs (..., K, d) weighted by (..., K)."""
    if xs.shape[:-1] != weights.shape:
        raise DimensionError("weighted_sum", f"values {xs.shape} vs weights {weights.shape}")
    xv, wv = xs.values, weights.values
    out = np.einsum("...kd,...k->...d", xv, wv)
    return _make(out, (xs, weights),
                 lambda g: (wv[..., None] * g[..., None, :],
                            np.einsum("...kd,...d->...k", xv, g)))


def softmax(x: Tensor, mask: Optional[np.ndarray] = None, axis: int = -1) -> Tensor:
    """Softmax along axis; entries where mask is False get probability 0."""
    xv = x.values
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != xv.shape:
            raise DimensionError("softmax", f"mask {mask.shape} vs logits {xv.shape}")
        if not mask.any(axis=axis).all():
            raise ContractViolation("softmax over a fully masked row")
        xv = np.where(mask, xv, -np.inf)
    shifted = xv - xv.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), vjp)


# Loss

def bce_loss(p: Tensor, y: ArrayLike, eps: float = BCE_EPS) -> Tensor:
    """Mean binary cross-entropy of probabilities p against labels y."""
    y = np.asarray(y, dtype=np.float64).reshape(p.shape)
    pv = np.clip(p.values, eps, 1.0 - eps)
    inside = (p.values >= eps) & (p.values <= 1.0 - eps)
    n = max(p.size, 1)
    loss = -np.mean(y * np.log(pv) + (1.0 - y) * np.log(1.0 - pv))

    def vjp(g):
        return (float(g) * inside * (-(y / pv) + (1.0 - y) / (1.0 - pv)) / n,)

    return _make(np.array(loss), (p,), vjp)


# Gradient check

def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5,
               floor: float = 1e-4, max_entries: Optional[int] = None,
               rng: Optional[np.random.Generator] = None) -> float:
    """
    Largest relative error between tape gradients and central differences.

    f must rebuild its graph on each call. Relative error is
    |a - n| / max(|a| + |n|, floor).
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        backward(f(), tape)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.values) for p in params]

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.values.reshape(-1)
            entries = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                entries = rng.choice(flat.size, size=max_entries, replace=False)
            for idx in entries:
                original = flat[idx]
                flat[idx] = original + step
                up = f().item()
                flat[idx] = original - step
                down = f().item()
                flat[idx] = original
                numeric = (up - down) / (2.0 * step)
                analytic_value = a.reshape(-1)[idx]
                err = abs(analytic_value - numeric) / max(abs(analytic_value) + abs(numeric), floor)
                worst = max(worst, err)
    for p in params:
        p.zero_grad()
    return worst


# Optimizer

@dataclass
class AdamState:
    """Adam moments per named parameter."""
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update; gradients are zeroed afterwards."""
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.values)
        m = state.m.get(name)
        if m is None or m.shape != p.shape:
            m = state.m[name] = np.zeros_like(p.values)
            state.v[name] = np.zeros_like(p.values)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.values -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad = None


class Adam:
    def __init__(self, params: Dict[str, Tensor], lr: float = 1e-4, **kwargs):
        self.params = params
        self.state = AdamState(lr=lr, **kwargs)

    def step(self) -> None:
        adam_step(self.params, self.state)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


# Checkpoints

def count_parameters(params: Dict[str, Tensor]) -> int:
    return int(sum(p.size for p in params.values()))


def save_checkpoint(path: Union[str, Path], params: Dict[str, Tensor],
                    metadata: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {name: p.values for name, p in params.items()}
    if any(name.startswith("__") for name in arrays):
        raise CheckpointError("parameter names may not start with '__'")
    arrays["__format_version__"] = np.array(CHECKPOINT_VERSION)
    arrays["__metadata__"] = np.array(json.dumps(metadata or {}, sort_keys=True))
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    logger.debug(f"Saved {len(params)} parameters to {path}")
    return path


def read_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {name: archive[name] for name in archive.files}
    except (OSError, ValueError) as e:
        raise CheckpointError(f"unreadable checkpoint {path}: {e}") from e
    version = int(arrays.pop("__format_version__", -1))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    metadata = json.loads(str(arrays.pop("__metadata__", "{}")))
    return arrays, metadata


def load_checkpoint(path: Union[str, Path], params: Dict[str, Tensor]) -> dict:
    """Copy stored arrays into params after validating names and shapes."""
    arrays, metadata = read_checkpoint(path)
    missing = sorted(set(params) - set(arrays))
    extra = sorted(set(arrays) - set(params))
    if missing or extra:
        raise CheckpointError(f"parameter names differ: missing={missing} unexpected={extra}")
    for name, p in params.items():
        if arrays[name].shape != p.shape:
            logger.warning(f"Shape mismatch for {name}: {arrays[name].shape} vs {p.shape}")
            raise CheckpointError(f"{name}: stored shape {arrays[name].shape}, model {p.shape}")
    for name, p in params.items():
        p.values[...] = arrays[name]
    return metadata
