"""The architecture zoo.

Every family shares the same bottom: per-field embeddings, target attention
over the behavior sequence, and the similarity-tier histogram, concatenated
into one vector. Families differ in how that vector is routed to the
per-mechanism prediction features:

  base           one tower for the target mechanism, nothing else
  shared_bottom  one shared trunk, per-mechanism towers
  mmoe           shared experts, per-mechanism softmax gates
  ple            shared + private experts, gates over shared ∪ own
  home           mmoe with per-task feature gates, per-expert self gates,
                 and swish experts
  natal          per-mechanism towers; auxiliary tower features are
                 aggregated and fed one-way into the target predictor,
                 with an optional joint-label head on the aggregate
  moae           expert layer (one shared + one private expert per
                 mechanism, gated) under the natal-style asymmetric top

Asymmetric transfer means gradients of auxiliary losses never reach
parameters in group task:<target>; the reverse direction is allowed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datagen import Dataset
from ..errors import ContractError
from ..numcore import (
    ParamStore,
    TargetAttention,
    Tensor,
    add,
    clip_,
    concat,
    detach,
    matmul,
    mul,
    reshape,
    sigmoid,
)
from .layers import Dense, FeatureEmbedder, MLP, SimTier
from .spec import FeatureSchema, ModelSpec

PRED_CLIP = 1e-7


@dataclass
class ModelOutput:
    probs: dict[str, Tensor]
    cat_logits: Tensor | None
    knowledge: dict[str, Tensor]

    def __post_init__(self):
        for m, p in self.probs.items():
            if p.data.ndim != 1:
                raise ContractError(f"prediction for {m!r} must be 1-D")


class Model:
    def __init__(self, spec: ModelSpec, schema: FeatureSchema, seed: int):
        self.spec = spec
        self.schema = schema
        self.seed = seed
        store = ParamStore()
        self.store = store
        d = spec.embed_dim
        self.embedder = FeatureEmbedder(store, schema, d, seed)
        self.attention = TargetAttention(store, "shared.attn", "shared", 3 * d, spec.attn_hidden, seed)
        self.simtier = SimTier(store, d, seed)
        self.bottom_dim = self.embedder.n_fields * d + 3 * d + d

        mechs = spec.mechanisms
        D = self.bottom_dim
        ew = spec.expert_widths
        self.experts: list[MLP] = []
        self.private_experts: dict[str, list[MLP]] = {}
        self.gates: dict[str, Dense] = {}
        self.fgates: dict[str, Dense] = {}
        self.self_gate: Tensor | None = None
        tower_in = D

        if spec.family == "shared_bottom":
            self.experts = [MLP(store, "shared.expert0", "shared", D, ew, seed)]
            tower_in = ew[-1]
        elif spec.family == "mmoe":
            self.experts = [
                MLP(store, f"shared.expert{k}", "shared", D, ew, seed) for k in range(spec.n_experts)
            ]
            for m in mechs:
                self.gates[m] = Dense(store, f"task:{m}.gate", f"task:{m}", D, spec.n_experts, "softmax", seed)
            tower_in = ew[-1]
        elif spec.family == "ple":
            self.experts = [
                MLP(store, f"shared.expert{k}", "shared", D, ew, seed) for k in range(spec.n_experts)
            ]
            for m in mechs:
                self.private_experts[m] = [
                    MLP(store, f"task:{m}.expert{j}", f"task:{m}", D, ew, seed)
                    for j in range(spec.n_private_experts)
                ]
                n_cand = spec.n_experts + spec.n_private_experts
                self.gates[m] = Dense(store, f"task:{m}.gate", f"task:{m}", D, n_cand, "softmax", seed)
            tower_in = ew[-1]
        elif spec.family == "home":
            self.experts = [
                MLP(store, f"shared.expert{k}", "shared", D, ew, seed, activation="swish")
                for k in range(spec.n_experts)
            ]
            self.self_gate = store.add("shared.self_gate", "shared", np.zeros(spec.n_experts))
            for m in mechs:
                self.fgates[m] = Dense(store, f"task:{m}.fgate", f"task:{m}", D, D, "sigmoid", seed)
                self.gates[m] = Dense(store, f"task:{m}.gate", f"task:{m}", D, spec.n_experts, "softmax", seed)
            tower_in = ew[-1]
        elif spec.family == "moae":
            self.experts = [MLP(store, "shared.expert0", "shared", D, ew, seed)]
            for m in mechs:
                self.private_experts[m] = [MLP(store, f"task:{m}.expert0", f"task:{m}", D, ew, seed)]
                self.gates[m] = Dense(store, f"task:{m}.gate", f"task:{m}", D, 2, "softmax", seed)
            tower_in = ew[-1]
        # base and natal run towers straight on the bottom vector

        self.towers = {
            m: MLP(store, f"task:{m}.tower", f"task:{m}", tower_in, spec.tower_widths, seed)
            for m in mechs
        }
        tw = spec.tower_widths[-1]
        self.heads: dict[str, Dense] = {}
        for m in mechs:
            fan_in = tw
            if spec.transfer and m == spec.target:
                fan_in = tw * (1 + len(spec.aux))
            self.heads[m] = Dense(store, f"head:{m}", f"head:{m}", fan_in, 1, "identity", seed)
        self.cat: Dense | None = None
        if spec.cat_head:
            self.cat = Dense(
                store, "head:cat", "head:cat", tw * len(spec.aux), spec.cat_classes, "identity", seed
            )

    # ------------------------------------------------------------------

    def _bottom(self, data: Dataset) -> Tensor:
        fields = self.embedder.field_concat(data)
        seq, query, mask = self.embedder.sequence(data)
        attended = self.attention(query, seq, mask)
        tiers = self.simtier(data)
        return concat([fields, attended, tiers], axis=1)

    @staticmethod
    def _gated_mix(outputs: list[Tensor], gate: Tensor) -> Tensor:
        n = len(outputs)
        eye = np.eye(n)
        mix = None
        for e, out in enumerate(outputs):
            col = matmul(gate, Tensor(eye[:, e : e + 1]))
            term = mul(out, col)
            mix = term if mix is None else add(mix, term)
        return mix

    def _task_features(self, x: Tensor, knowledge: dict[str, Tensor]) -> dict[str, Tensor]:
        spec = self.spec
        feats: dict[str, Tensor] = {}
        if spec.family in ("base", "natal"):
            for m in spec.mechanisms:
                feats[m] = self.towers[m](x)
        elif spec.family == "shared_bottom":
            h = self.experts[0](x)
            for m in spec.mechanisms:
                feats[m] = self.towers[m](h)
        elif spec.family in ("mmoe", "ple", "moae"):
            shared_out = [e(x) for e in self.experts]
            for m in spec.mechanisms:
                candidates = shared_out + [e(x) for e in self.private_experts.get(m, [])]
                gate = self.gates[m](x)
                knowledge[f"gate.{m}"] = gate
                feats[m] = self.towers[m](self._gated_mix(candidates, gate))
        elif spec.family == "home":
            sg = sigmoid(self.self_gate)
            sg_row = reshape(sg, (1, spec.n_experts))
            eye = np.eye(spec.n_experts)
            for m in spec.mechanisms:
                xm = mul(x, self.fgates[m](x))
                outputs = []
                for k, expert in enumerate(self.experts):
                    scale_k = matmul(sg_row, Tensor(eye[:, k : k + 1]))
                    outputs.append(mul(expert(xm), scale_k))
                gate = self.gates[m](xm)
                knowledge[f"gate.{m}"] = gate
                feats[m] = self.towers[m](self._gated_mix(outputs, gate))
        else:
            raise ContractError(f"unhandled family {spec.family!r}")
        for m, h in feats.items():
            knowledge[f"tower.{m}"] = h
        return feats

    def _squash(self, logit: Tensor) -> Tensor:
        flat = reshape(logit, (logit.data.shape[0],))
        return clip_(sigmoid(flat), PRED_CLIP, 1.0 - PRED_CLIP)

    def forward(self, data: Dataset) -> ModelOutput:
        if len(data) == 0:
            raise ContractError("forward needs a nonempty batch")
        self.schema.check_batch(data)
        spec = self.spec
        knowledge: dict[str, Tensor] = {}
        x = self._bottom(data)
        knowledge["bottom"] = x
        feats = self._task_features(x, knowledge)

        probs: dict[str, Tensor] = {}
        cat_logits: Tensor | None = None
        if spec.transfer and spec.aux:
            aux_feats = [feats[m] for m in spec.aux]
            if spec.stop_transfer_gradient:
                aux_feats = [detach(f) for f in aux_feats]
            aka = concat(aux_feats, axis=1)
            knowledge["aka"] = aka
            for m in spec.aux:
                probs[m] = self._squash(self.heads[m](feats[m]))
            probs[spec.target] = self._squash(
                self.heads[spec.target](concat([feats[spec.target], aka], axis=1))
            )
            if self.cat is not None:
                cat_logits = self.cat(aka)
        else:
            for m in spec.mechanisms:
                probs[m] = self._squash(self.heads[m](feats[m]))
        return ModelOutput(probs, cat_logits, knowledge)


def build(spec: ModelSpec, schema: FeatureSchema, seed: int) -> Model:
    return Model(spec, schema, seed)


def score_dataset(model: Model, data: Dataset, batch_size: int = 4096) -> dict[str, np.ndarray]:
    """Per-mechanism predicted probabilities, computed without gradient taping."""
    n = len(data)
    out = {m: np.empty(n) for m in model.spec.mechanisms}
    for lo in range(0, n, batch_size):
        idx = np.arange(lo, min(lo + batch_size, n))
        result = model.forward(data.subset(idx))
        for m, p in result.probs.items():
            out[m][lo : lo + len(idx)] = p.data
    return out
