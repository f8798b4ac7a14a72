"""Conversion-credit assignment over click paths.

Four mechanisms label every click of a path: last-click and first-click put
one unit of credit on a single click per conversion, linear splits the unit
evenly, and the data-driven surrogate splits it by engagement-weighted
exponential time decay. Credits from multiple conversions accumulate, so
per-click weights above 1.0 are legal.

A conversion only credits clicks inside the attribution window, i.e. clicks
with 0 <= (conversion time - click time) <= window. A conversion with no
in-window click credits nothing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError

MECHANISMS = ("last", "first", "linear", "dda")

DAY_SECONDS = 86_400.0
DEFAULT_WINDOW = 7 * DAY_SECONDS


@dataclass(frozen=True)
class Click:
    click_id: int
    time: float
    engagement: float


@dataclass(frozen=True)
class ConversionPath:
    """Time-ordered clicks by one user on one item, plus conversion times."""

    user_id: int
    item_id: int
    clicks: tuple[Click, ...]
    conversions: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.clicks:
            raise ContractError("conversion path needs at least one click")
        times = [c.time for c in self.clicks]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ContractError("click times must be strictly increasing")
        for c in self.clicks:
            if not 0.0 <= c.engagement <= 1.0:
                raise ContractError(f"engagement {c.engagement} outside [0, 1]")
        first = times[0]
        if any(t < first for t in self.conversions):
            raise ContractError("conversion precedes the first click")

    @property
    def times(self) -> np.ndarray:
        return np.array([c.time for c in self.clicks], dtype=np.float64)

    @property
    def engagements(self) -> np.ndarray:
        return np.array([c.engagement for c in self.clicks], dtype=np.float64)


@dataclass(frozen=True)
class AttributionWeights:
    """Per-click credit under each mechanism, aligned with path.clicks."""

    weights: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, mechanism: str) -> np.ndarray:
        return self.weights[mechanism]


def _in_window(path: ConversionPath, conversion: float, window: float) -> np.ndarray:
    delta = conversion - path.times
    return (delta >= 0.0) & (delta <= window)


def attribute_last_click(path: ConversionPath, window: float = DEFAULT_WINDOW) -> np.ndarray:
    w = np.zeros(len(path.clicks))
    for conv in path.conversions:
        idx = np.nonzero(_in_window(path, conv, window))[0]
        if idx.size:
            w[idx[-1]] += 1.0
    return w


def attribute_first_click(path: ConversionPath, window: float = DEFAULT_WINDOW) -> np.ndarray:
    w = np.zeros(len(path.clicks))
    for conv in path.conversions:
        idx = np.nonzero(_in_window(path, conv, window))[0]
        if idx.size:
            w[idx[0]] += 1.0
    return w


def attribute_linear(path: ConversionPath, window: float = DEFAULT_WINDOW) -> np.ndarray:
    w = np.zeros(len(path.clicks))
    for conv in path.conversions:
        idx = np.nonzero(_in_window(path, conv, window))[0]
        if idx.size:
            w[idx] += 1.0 / idx.size
    return w


def attribute_dda_surrogate(
    path: ConversionPath,
    window: float = DEFAULT_WINDOW,
    gamma: float = 0.0,
) -> np.ndarray:
    """Credit in-window clicks by engagement * exp(-gamma * time-to-conversion).

    Each conversion hands out exactly one unit of credit. When every
    in-window click has zero engagement the unit falls back to a linear
    split, so credit is conserved no matter the engagements.
    """
    if gamma < 0:
        raise ContractError(f"decay rate must be >= 0, got {gamma}")
    w = np.zeros(len(path.clicks))
    for conv in path.conversions:
        mask = _in_window(path, conv, window)
        idx = np.nonzero(mask)[0]
        if not idx.size:
            continue
        raw = path.engagements[idx] * np.exp(-gamma * (conv - path.times[idx]))
        total = raw.sum()
        if total > 0:
            w[idx] += raw / total
        else:
            w[idx] += 1.0 / idx.size
    return w


def attribute_all(
    path: ConversionPath,
    window: float = DEFAULT_WINDOW,
    gamma: float = 0.0,
) -> AttributionWeights:
    return AttributionWeights(
        {
            "last": attribute_last_click(path, window),
            "first": attribute_first_click(path, window),
            "linear": attribute_linear(path, window),
            "dda": attribute_dda_surrogate(path, window, gamma),
        }
    )


def binarize(w: float) -> int:
    if w < 0:
        raise ContractError(f"attribution weight must be >= 0, got {w}")
    return 1 if w > 0 else 0


def cat_encode(bits: Sequence[int]) -> int:
    """Joint class index of N binary labels: O = sum_i bits[i] * 2**i."""
    if len(bits) < 1:
        raise ContractError("cat_encode needs at least one label")
    value = 0
    for i, b in enumerate(bits):
        if b not in (0, 1):
            raise ContractError(f"cat label element at position {i} must be 0 or 1, got {b!r}")
        value += int(b) << i
    return value


def cat_decode(value: int, n: int) -> tuple[int, ...]:
    if n < 1:
        raise ContractError("cat_decode needs n >= 1")
    if not 0 <= value < (1 << n):
        raise ContractError(f"class index {value} outside [0, {1 << n})")
    return tuple((value >> i) & 1 for i in range(n))


def cat_encode_rows(label_rows: np.ndarray) -> np.ndarray:
    """Vectorized cat_encode over an (n, N) matrix of 0/1 labels."""
    rows = np.asarray(label_rows)
    if rows.ndim != 2 or rows.shape[1] < 1:
        raise ContractError(f"label matrix must be (n, N>=1), got {rows.shape}")
    if not np.isin(rows, (0, 1)).all():
        raise ContractError("cat labels must be 0 or 1")
    powers = 1 << np.arange(rows.shape[1])
    return (rows.astype(np.int64) * powers).sum(axis=1)
