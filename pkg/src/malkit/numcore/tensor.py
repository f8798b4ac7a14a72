"""Reverse-mode autodiff over float64 numpy arrays.

Ops execute eagerly. While a Tape is active (``with recording(tape):``),
every op whose inputs carry gradients appends a vector-Jacobian closure to
the tape. ``accumulate_grads`` walks one tape exactly once, in reverse
recording order, which is a valid topological order of the forward graph.

Every op output is validated to be finite; a nonfinite value raises
NumericError at the op that produced it rather than poisoning the run.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, DimensionError, FeatureError, NumericError

Array = np.ndarray

ACTIVATIONS = ("identity", "relu", "sigmoid", "swish", "softmax")


class Tensor:
    """A float64 array plus a flag marking it as gradient-carrying."""

    __slots__ = ("data", "track")

    def __init__(self, data, track: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        # bound-method reduction; this guard runs on every op output
        if not np.isfinite(arr).all():
            raise NumericError("tensor holds nonfinite values")
        self.data = arr
        self.track = track

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, track={self.track})"


class Tape:
    """Recorded forward ops; supports exactly one backward pass."""

    __slots__ = ("_nodes", "_outputs", "consumed")

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._outputs: set[int] = set()
        self.consumed = False

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable) -> None:
        self._nodes.append((out, inputs, vjp))
        self._outputs.add(id(out))

    def __len__(self) -> int:
        return len(self._nodes)


_STACK: list[Tape] = []


class recording:
    """Context manager activating a tape for ops run inside it."""

    def __init__(self, tape: Tape):
        self.tape = tape

    def __enter__(self) -> Tape:
        _STACK.append(self.tape)
        return self.tape

    def __exit__(self, *exc) -> None:
        _STACK.pop()


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data: Array, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    track = False
    for t in inputs:
        if t.track:
            track = True
            break
    out = Tensor(data, track=track)
    if track and _STACK:
        _STACK[-1]._record(out, inputs, vjp)
    return out


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _stable_sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# elementwise / structural primitives


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _emit(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _emit(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _emit(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def neg(a) -> Tensor:
    a = _wrap(a)
    return _emit(-a.data, (a,), lambda g: (-g,))


def scale(a, s: float) -> Tensor:
    a = _wrap(a)
    s = float(s)
    return _emit(a.data * s, (a,), lambda g: (g * s,))


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul needs (n,k)@(k,m); got {a.shape} @ {b.shape}")
    return _emit(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0
    return _emit(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    s = _stable_sigmoid(a.data)
    return _emit(s, (a,), lambda g: (g * s * (1.0 - s),))


def swish(a) -> Tensor:
    a = _wrap(a)
    s = _stable_sigmoid(a.data)
    return _emit(a.data * s, (a,), lambda g: (g * s * (1.0 + a.data * (1.0 - s)),))


def exp(a) -> Tensor:
    a = _wrap(a)
    e = np.exp(a.data)
    return _emit(e, (a,), lambda g: (g * e,))


def log(a) -> Tensor:
    a = _wrap(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _emit(out, (a,), lambda g: (g / a.data,))


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = _wrap(a)
    orig = a.data.shape
    return _emit(a.data.reshape(shape), (a,), lambda g: (g.reshape(orig),))


def broadcast_to(a, shape: Sequence[int]) -> Tensor:
    a = _wrap(a)
    orig = a.data.shape
    data = np.broadcast_to(a.data, tuple(shape)).copy()
    return _emit(data, (a,), lambda g: (_unbroadcast(g, orig),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [_wrap(p) for p in parts]
    if not parts:
        raise ContractError("concat of zero tensors")
    data = np.concatenate([p.data for p in parts], axis=axis)
    ax = axis if axis >= 0 else data.ndim + axis
    sizes = [p.data.shape[ax] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=ax))

    return _emit(data, tuple(parts), vjp)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    orig = a.data.shape
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, orig).copy(),)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        if not keepdims:
            g = np.expand_dims(g, tuple(ax if ax >= 0 else len(orig) + ax for ax in axes))
        return (np.broadcast_to(g, orig).copy(),)

    return _emit(data, (a,), vjp)


def mean_(a) -> Tensor:
    a = _wrap(a)
    n = a.size
    if n == 0:
        raise ContractError("mean of an empty tensor")
    return scale(sum_(a), 1.0 / n)


def clip_(a, lo: float, hi: float) -> Tensor:
    a = _wrap(a)
    passthrough = (a.data >= lo) & (a.data <= hi)
    return _emit(np.clip(a.data, lo, hi), (a,), lambda g: (g * passthrough,))


def detach(a) -> Tensor:
    a = _wrap(a)
    return Tensor(a.data, track=False)


def softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit(out, (a,), vjp)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    m = a.data.max(axis=axis, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    sm = np.exp(out)

    def vjp(g):
        return (g - sm * g.sum(axis=axis, keepdims=True),)

    return _emit(out, (a,), vjp)


def masked_softmax(a, mask: Array) -> Tensor:
    """Row softmax over positions where mask is True.

    A row with no valid position yields all zeros (not a simplex); its
    gradient is likewise zero.
    """
    a = _wrap(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.data.shape:
        raise DimensionError(f"mask shape {mask.shape} != scores shape {a.data.shape}")
    neg_inf = np.where(mask, a.data, -np.inf)
    m = neg_inf.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.where(mask, np.exp(np.where(mask, a.data - m, 0.0)), 0.0)
    z = e.sum(axis=-1, keepdims=True)
    out = np.divide(e, z, out=np.zeros_like(e), where=z > 0)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _emit(out, (a,), vjp)


def select_index(a, idx) -> Tensor:
    """Pick one column per row: out[i] = a[i, idx[i]]."""
    a = _wrap(a)
    idx = np.asarray(idx)
    if a.ndim != 2 or idx.ndim != 1 or idx.shape[0] != a.shape[0]:
        raise DimensionError(f"select_index needs (n,c) rows with (n,) indices; got {a.shape}, {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[1]):
        raise ContractError("select_index column out of range")
    rows = np.arange(a.shape[0])
    out = a.data[rows, idx]

    def vjp(g):
        gx = np.zeros_like(a.data)
        gx[rows, idx] = g
        return (gx,)

    return _emit(out, (a,), vjp)


# ---------------------------------------------------------------------------
# fused layers


def dense_forward(x, w, b, activation: str = "identity") -> Tensor:
    """act(x @ w + b) as one taped node; x is (n, in), w (in, out), b (out,)."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    if activation not in ACTIVATIONS:
        raise ContractError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"dense input {x.shape} does not match weight {w.shape}")
    if b.data.shape != (w.shape[1],):
        raise DimensionError(f"dense bias {b.data.shape} does not match weight {w.shape}")
    z = x.data @ w.data + b.data
    if activation == "identity":
        out = z
        dact = None
    elif activation == "relu":
        out = np.where(z > 0, z, 0.0)
        dact = None
    elif activation == "sigmoid":
        out = _stable_sigmoid(z)
        dact = None
    elif activation == "swish":
        s = _stable_sigmoid(z)
        out = z * s
        dact = s * (1.0 + z * (1.0 - s))
    else:  # softmax over the output units
        m = z.max(axis=-1, keepdims=True)
        e = np.exp(z - m)
        out = e / e.sum(axis=-1, keepdims=True)
        dact = None

    def vjp(g):
        if activation == "identity":
            gz = g
        elif activation == "relu":
            gz = g * (z > 0)
        elif activation == "sigmoid":
            gz = g * out * (1.0 - out)
        elif activation == "swish":
            gz = g * dact
        else:
            gz = out * (g - (g * out).sum(axis=-1, keepdims=True))
        return (gz @ w.data.T, x.data.T @ gz, gz.sum(axis=0))

    return _emit(out, (x, w, b), vjp)


def embedding_lookup(table, ids, field: str = "ids") -> Tensor:
    """Gather rows of an embedding table; gradients scatter-add back.

    ids may have any shape (including empty); output shape is ids.shape + (dim,).
    """
    table = _wrap(table)
    if table.ndim != 2:
        raise DimensionError(f"embedding table must be 2-D, got {table.shape}")
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise ContractError(f"embedding ids for {field} must be integers, got dtype {ids.dtype}")
    vocab, dim = table.shape
    if ids.size:
        lo, hi = int(ids.min()), int(ids.max())
        if lo < 0 or hi >= vocab:
            bad = lo if lo < 0 else hi
            raise FeatureError(f"feature {field}: id {bad} outside vocabulary [0, {vocab})")
    out = table.data[ids.reshape(-1)].reshape(ids.shape + (dim,))

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, dim))
        return (gt,)

    return _emit(out, (table,), vjp)


# ---------------------------------------------------------------------------
# backward walk


def accumulate_multi(tape: Tape, losses: Sequence[Tensor]) -> list[dict[int, Array]]:
    """One reverse walk computing independent adjoints for several scalar losses.

    Consumes the tape; the result holds one grads-by-id dict per loss. This
    is how per-task gradients come out of a single forward recording.
    """
    if tape.consumed:
        raise ContractError("tape already consumed by a backward pass")
    if not losses:
        raise ContractError("need at least one loss")
    for loss in losses:
        if loss.data.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
        if id(loss) not in tape._outputs:
            raise ContractError("loss was not produced under this tape")
    tape.consumed = True
    gradses: list[dict[int, Array]] = [
        {id(loss): np.ones_like(loss.data)} for loss in losses
    ]
    for out, inputs, vjp in reversed(tape._nodes):
        for grads in gradses:
            g = grads.get(id(out))
            if g is None:
                continue
            parts = vjp(g.reshape(out.data.shape))
            for t, p in zip(inputs, parts):
                if p is None or not t.track:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + p
                else:
                    grads[key] = p
    return gradses


def accumulate_grads(tape: Tape, loss: Tensor) -> dict[int, Array]:
    """Reverse-walk one tape from a scalar loss; returns grads keyed by id()."""
    return accumulate_multi(tape, [loss])[0]
