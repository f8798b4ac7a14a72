"""Seed derivation, stable hashing, and optional process parallelism."""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError


def stable_hash64(*parts: Any) -> int:
    """Platform-independent 64-bit hash of *parts.

    repr keeps 1, "1", and 1.5 distinct; strings carry their quotes.
    """
    text = ":".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(*parts: Any) -> int:
    # keep seeds in the non-negative 63-bit range numpy accepts everywhere
    return stable_hash64(*parts) & 0x7FFF_FFFF_FFFF_FFFF


def rng_for(*parts: Any) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_id(obj: Any) -> str:
    """Short content-addressed id for artifact directories."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def worker_count() -> int:
    raw = os.environ.get("MALKIT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MALKIT_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def run_tasks(fn: Callable, items: Sequence, max_workers: int | None = None) -> list:
    """Map fn over items, in processes when MALKIT_THREADS allows.

    Results come back in input order regardless of scheduling, so callers
    stay deterministic.
    """
    workers = worker_count() if max_workers is None else max_workers
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
