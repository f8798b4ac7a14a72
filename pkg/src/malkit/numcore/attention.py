"""Target attention: pool a behavior sequence against the advertised item.

Each position is scored by a two-layer net over [q, k, q*k, q-k]; scores
pass through a masked softmax and the sequence is averaged under those
weights. A row whose positions are all masked pools to a zero vector.
"""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from . import tensor as tc
from .params import ParamStore, glorot_uniform
from .tensor import Tensor


class TargetAttention:
    def __init__(
        self,
        store: ParamStore,
        name: str,
        group: str,
        key_dim: int,
        hidden: int,
        seed: int,
    ):
        self.key_dim = key_dim
        self.w0 = store.add(f"{name}.w0", group, glorot_uniform(seed, f"{name}.w0", 4 * key_dim, hidden))
        self.b0 = store.add(f"{name}.b0", group, np.zeros(hidden))
        self.w1 = store.add(f"{name}.w1", group, glorot_uniform(seed, f"{name}.w1", hidden, 1))
        self.b1 = store.add(f"{name}.b1", group, np.zeros(1))

    def __call__(self, query: Tensor, sequence: Tensor, mask: np.ndarray) -> Tensor:
        """query (B,k) or (k,); sequence (B,L,k) or (L,k); mask bools (B,L) or (L,).

        Returns pooled vectors with the batch shape of the inputs.
        """
        single = query.ndim == 1
        if single:
            query = tc.reshape(query, (1, -1))
            sequence = tc.reshape(sequence, (1,) + tuple(sequence.shape))
            mask = np.asarray(mask, dtype=bool).reshape(1, -1)
        mask = np.asarray(mask, dtype=bool)
        b, k = query.shape
        if sequence.ndim != 3 or sequence.shape[0] != b or sequence.shape[2] != k:
            raise DimensionError(f"sequence shape {sequence.shape} does not match query {query.shape}")
        length = sequence.shape[1]
        if mask.shape != (b, length):
            raise DimensionError(f"mask shape {mask.shape} != (batch, length) {(b, length)}")

        if length == 0:
            out = Tensor(np.zeros((b, k)))
        else:
            q = tc.broadcast_to(tc.reshape(query, (b, 1, k)), (b, length, k))
            feats = tc.concat([q, sequence, tc.mul(q, sequence), tc.sub(q, sequence)], axis=-1)
            flat = tc.reshape(feats, (b * length, 4 * k))
            h = tc.dense_forward(flat, self.w0, self.b0, "relu")
            s = tc.dense_forward(h, self.w1, self.b1, "identity")
            weights = tc.masked_softmax(tc.reshape(s, (b, length)), mask)
            out = tc.sum_(tc.mul(tc.reshape(weights, (b, length, 1)), sequence), axis=1)
        return tc.reshape(out, (k,)) if single else out
