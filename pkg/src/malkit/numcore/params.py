"""Named parameters with group tags, gradients, and the Adam update.

Groups follow the convention "shared", "task:<mechanism>", "head:<name>";
gradient surgery operates on the flattened view of one group.
"""
from __future__ import annotations

from typing import Iterable, Iterator, Sequence

import numpy as np

from ..errors import ContractError, NumericError
from ..util import rng_for
from .tensor import Tape, Tensor, accumulate_multi


def _valid_group(group: str) -> bool:
    return group == "shared" or group.startswith("task:") or group.startswith("head:")


class Parameter:
    __slots__ = ("name", "group", "tensor", "m", "v", "step")

    def __init__(self, name: str, group: str, tensor: Tensor):
        self.name = name
        self.group = group
        self.tensor = tensor
        self.m = np.zeros_like(tensor.data)
        self.v = np.zeros_like(tensor.data)
        self.step = 0


class ParamStore:
    """Insertion-ordered parameter registry with per-parameter Adam state."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, group: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        if not _valid_group(group):
            raise ContractError(f"parameter group {group!r} must be 'shared', 'task:<m>' or 'head:<n>'")
        t = Tensor(np.array(value, dtype=np.float64), track=True)
        self._params[name] = Parameter(name, group, t)
        return t

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def param(self, name: str) -> Parameter:
        try:
            return self._params[name]
        except KeyError:
            raise ContractError(f"unknown parameter {name!r}") from None

    def names(self, group: str | None = None) -> tuple[str, ...]:
        if group is None:
            return tuple(self._params)
        return tuple(n for n, p in self._params.items() if p.group == group)

    def groups(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for p in self._params.values():
            seen.setdefault(p.group, None)
        return tuple(seen)

    def n_values(self) -> int:
        return sum(p.tensor.size for p in self._params.values())


class GradientSet:
    """Per-parameter gradients plus the group structure they live in."""

    __slots__ = ("_grads", "_groups", "_order")

    def __init__(self, grads: dict[str, np.ndarray], groups: dict[str, str], order: Sequence[str]):
        self._grads = grads
        self._groups = groups
        self._order = tuple(order)

    @classmethod
    def zeros_like(cls, store: ParamStore) -> "GradientSet":
        grads = {p.name: np.zeros_like(p.tensor.data) for p in store}
        groups = {p.name: p.group for p in store}
        return cls(grads, groups, store.names())

    def names(self) -> tuple[str, ...]:
        return self._order

    def get(self, name: str) -> np.ndarray:
        return self._grads[name]

    def group_of(self, name: str) -> str:
        return self._groups[name]

    def names_in_group(self, group: str) -> tuple[str, ...]:
        return tuple(n for n in self._order if self._groups[n] == group)

    def flat(self, group: str) -> np.ndarray:
        """1-D concatenation of this group's gradients, in parameter order."""
        parts = [self._grads[n].ravel() for n in self.names_in_group(group)]
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)

    def with_group_flat(self, group: str, vec: np.ndarray) -> "GradientSet":
        """Copy of this set with one group's gradients replaced from a flat vector."""
        names = self.names_in_group(group)
        total = sum(self._grads[n].size for n in names)
        if vec.shape != (total,):
            raise ContractError(f"flat vector for group {group!r} must have shape ({total},), got {vec.shape}")
        grads = dict(self._grads)
        offset = 0
        for n in names:
            size = self._grads[n].size
            grads[n] = vec[offset : offset + size].reshape(self._grads[n].shape)
            offset += size
        return GradientSet(grads, dict(self._groups), self._order)

    @classmethod
    def combine(cls, sets: Sequence["GradientSet"], coeffs: Sequence[float]) -> "GradientSet":
        """Linear combination sum_i coeffs[i] * sets[i], parameterwise."""
        if len(sets) != len(coeffs) or not sets:
            raise ContractError("combine needs matching, nonempty sets and coeffs")
        base = sets[0]
        grads: dict[str, np.ndarray] = {}
        for n in base._order:
            acc = coeffs[0] * base._grads[n]
            for s, c in zip(sets[1:], coeffs[1:]):
                acc = acc + c * s._grads[n]
            grads[n] = acc
        return cls(grads, dict(base._groups), base._order)


def backward_multi(tape: Tape, losses: Sequence[Tensor], params: ParamStore) -> list[GradientSet]:
    """Per-loss gradient sets from one backward walk of one tape.

    Parameters a loss never touched get zero gradients in its set.
    """
    raws = accumulate_multi(tape, losses)
    order = params.names()
    groups = {p.name: p.group for p in params}
    sets = []
    for raw in raws:
        grads = {}
        for p in params:
            g = raw.get(id(p.tensor))
            grads[p.name] = np.zeros_like(p.tensor.data) if g is None else g
        sets.append(GradientSet(grads, dict(groups), order))
    return sets


def backward(tape: Tape, loss: Tensor, params: ParamStore) -> GradientSet:
    """d(loss)/d(p) for every parameter; params the loss never touched get zeros."""
    return backward_multi(tape, [loss], params)[0]


def adam_step(
    params: ParamStore,
    grads: GradientSet,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamStore:
    """Bias-corrected Adam, applied in place to the parameters present in grads."""
    for name in grads.names():
        p = params.param(name)
        g = grads.get(name)
        if g.shape != p.tensor.data.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter {name!r} shape {p.tensor.data.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"nonfinite gradient for parameter group {p.group!r} ({name})")
        p.step += 1
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * (g * g)
        m_hat = p.m / (1.0 - beta1**p.step)
        v_hat = p.v / (1.0 - beta2**p.step)
        p.tensor.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


# ---------------------------------------------------------------------------
# initialization

def glorot_uniform(seed: int, name: str, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng_for(seed, name).uniform(-limit, limit, size=(fan_in, fan_out))


def embedding_init(seed: int, name: str, vocab: int, dim: int) -> np.ndarray:
    return rng_for(seed, name).normal(0.0, 0.01, size=(vocab, dim))
