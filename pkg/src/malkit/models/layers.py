"""Reusable building blocks: dense stacks, feature embedding, similarity tiers."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..datagen import Dataset
from ..numcore import (
    ParamStore,
    Tensor,
    concat,
    dense_forward,
    embedding_init,
    embedding_lookup,
    glorot_uniform,
)
from .spec import CTX_FIELDS, FeatureSchema, ITEM_FIELDS, USER_FIELDS


class Dense:
    def __init__(self, store: ParamStore, name: str, group: str, fan_in: int, fan_out: int, activation: str, seed: int):
        self.activation = activation
        self.w = store.add(f"{name}.w", group, glorot_uniform(seed, f"{name}.w", fan_in, fan_out))
        self.b = store.add(f"{name}.b", group, np.zeros(fan_out))

    def __call__(self, x: Tensor) -> Tensor:
        return dense_forward(x, self.w, self.b, self.activation)


class MLP:
    """Dense stack; hidden layers share one activation, the last its own."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        group: str,
        fan_in: int,
        widths: Sequence[int],
        seed: int,
        activation: str = "relu",
        final_activation: str | None = None,
    ):
        self.layers: list[Dense] = []
        d = fan_in
        last = len(widths) - 1
        for i, width in enumerate(widths):
            act = (final_activation or activation) if i == last else activation
            self.layers.append(Dense(store, f"{name}.l{i}", group, d, width, act, seed))
            d = width
        self.out_dim = d

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class FeatureEmbedder:
    """Embedding tables for every id column, shared by all tasks.

    The behavior sequence reuses the item-id, shop and category tables so a
    clicked item and a historical item land in the same space.
    """

    def __init__(self, store: ParamStore, schema: FeatureSchema, dim: int, seed: int):
        self.schema = schema
        self.dim = dim
        self.tables: dict[str, Tensor] = {}
        spec = list(zip(USER_FIELDS, schema.user_vocabs)) + list(
            zip(ITEM_FIELDS, schema.item_vocabs)
        ) + list(zip(CTX_FIELDS, schema.ctx_vocabs))
        for field, vocab in spec:
            name = f"shared.emb.{field}"
            self.tables[field] = store.add(name, "shared", embedding_init(seed, name, vocab, dim))

    @property
    def n_fields(self) -> int:
        return len(self.tables)

    def _lookup(self, field: str, ids: np.ndarray) -> Tensor:
        return embedding_lookup(self.tables[field], ids, field)

    def field_concat(self, d: Dataset) -> Tensor:
        parts = [self._lookup(f, d.user_feats[:, j]) for j, f in enumerate(USER_FIELDS)]
        parts += [self._lookup(f, d.item_feats[:, j]) for j, f in enumerate(ITEM_FIELDS)]
        parts += [self._lookup(f, d.ctx_feats[:, j]) for j, f in enumerate(CTX_FIELDS)]
        return concat(parts, axis=1)

    def sequence(self, d: Dataset) -> tuple[Tensor, Tensor, np.ndarray]:
        """(sequence tokens (B,L,3d), query (B,3d), validity mask (B,L))."""
        seq = concat(
            [
                self._lookup("i1", d.seq_items),
                self._lookup("i2", d.seq_shops),
                self._lookup("i3", d.seq_cats),
            ],
            axis=2,
        )
        query = concat(
            [self._lookup(f"i{j + 1}", d.item_feats[:, j]) for j in range(3)], axis=1
        )
        mask = np.arange(d.max_seq_len)[None, :] < d.seq_len[:, None]
        return seq, query, mask


class SimTier:
    """Histogram of behavior-similarity scores over fixed tiers, embedded.

    Similarities in [0,1] fall into n_tiers equal bins (1.0 joins the top
    bin); counts are normalized by the sequence cap and linearly projected.
    """

    def __init__(self, store: ParamStore, dim: int, seed: int, n_tiers: int = 8):
        self.n_tiers = n_tiers
        self.proj = Dense(store, "shared.simtier", "shared", n_tiers, dim, "identity", seed)

    def counts(self, d: Dataset) -> np.ndarray:
        n = len(d)
        out = np.zeros((n, self.n_tiers))
        valid = np.arange(d.max_seq_len)[None, :] < d.seq_len[:, None]
        rows, cols = np.nonzero(valid)
        tiers = np.minimum((d.seq_sim[rows, cols] * self.n_tiers).astype(np.int64), self.n_tiers - 1)
        np.add.at(out, (rows, tiers), 1.0)
        return out / d.max_seq_len

    def __call__(self, d: Dataset) -> Tensor:
        return self.proj(Tensor(self.counts(d)))
