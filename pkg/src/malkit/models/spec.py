"""Model family declarations and the feature schema they are built against."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from ..datagen import Dataset, GenConfig, N_CTX_FEATS, N_ITEM_FEATS, N_USER_FEATS
from ..errors import FeatureError, SpecError

FAMILIES = ("base", "shared_bottom", "mmoe", "ple", "home", "natal", "moae")

# families with one-way auxiliary-to-target feature transfer at the top
TRANSFER_FAMILIES = ("natal", "moae")

USER_FIELDS = tuple(f"u{i}" for i in range(1, N_USER_FEATS + 1))
ITEM_FIELDS = tuple(f"i{i}" for i in range(1, N_ITEM_FEATS + 1))
CTX_FIELDS = tuple(f"c{i}" for i in range(1, N_CTX_FEATS + 1))


@dataclass(frozen=True)
class FeatureSchema:
    user_vocabs: tuple[int, ...]
    item_vocabs: tuple[int, ...]
    ctx_vocabs: tuple[int, ...]
    max_seq_len: int = 20

    def __post_init__(self):
        if len(self.user_vocabs) != N_USER_FEATS or len(self.item_vocabs) != N_ITEM_FEATS or len(self.ctx_vocabs) != N_CTX_FEATS:
            raise SpecError("feature schema needs 7 user, 10 item, 3 context vocab sizes")
        if min(self.user_vocabs + self.item_vocabs + self.ctx_vocabs) < 1:
            raise SpecError("vocab sizes must be >= 1")
        if self.max_seq_len < 1:
            raise SpecError("max_seq_len must be >= 1")

    @classmethod
    def from_config(cls, config: GenConfig) -> "FeatureSchema":
        return cls(config.user_vocabs, config.item_vocabs, config.ctx_vocabs, config.max_seq_len)

    @classmethod
    def from_dataset(cls, d: Dataset) -> "FeatureSchema":
        """Infer vocab sizes from observed ids (ids are dense from 0).

        Behavior-sequence ids share the first three item tables, so those
        vocabs must cover the sequence columns too.
        """
        def col_max(arr: np.ndarray, j: int) -> int:
            return int(arr[:, j].max()) if len(arr) else 0

        user_vocabs = tuple(col_max(d.user_feats, j) + 1 for j in range(N_USER_FEATS))
        item_vocabs = list(col_max(d.item_feats, j) + 1 for j in range(N_ITEM_FEATS))
        if len(d):
            item_vocabs[0] = max(item_vocabs[0], int(d.seq_items.max()) + 1)
            item_vocabs[1] = max(item_vocabs[1], int(d.seq_shops.max()) + 1)
            item_vocabs[2] = max(item_vocabs[2], int(d.seq_cats.max()) + 1)
        ctx_vocabs = tuple(col_max(d.ctx_feats, j) + 1 for j in range(N_CTX_FEATS))
        return cls(user_vocabs, tuple(item_vocabs), ctx_vocabs, d.max_seq_len)

    def check_batch(self, d: Dataset) -> None:
        """Raise a feature error naming the offending column on schema drift."""
        if d.max_seq_len != self.max_seq_len:
            raise FeatureError(
                f"column beh_seq: sequence cap {d.max_seq_len} != schema cap {self.max_seq_len}"
            )
        groups = (
            (USER_FIELDS, d.user_feats, self.user_vocabs),
            (ITEM_FIELDS, d.item_feats, self.item_vocabs),
            (CTX_FIELDS, d.ctx_feats, self.ctx_vocabs),
        )
        for names, arr, vocabs in groups:
            for j, name in enumerate(names):
                if len(arr) and (arr[:, j].min() < 0 or arr[:, j].max() >= vocabs[j]):
                    raise FeatureError(
                        f"column {name}: id outside [0, {vocabs[j]}) for this schema"
                    )
        seq_cols = (("beh_seq.item", d.seq_items, self.item_vocabs[0]),
                    ("beh_seq.shop", d.seq_shops, self.item_vocabs[1]),
                    ("beh_seq.cat", d.seq_cats, self.item_vocabs[2]))
        for name, arr, vocab in seq_cols:
            if len(arr) and (arr.min() < 0 or arr.max() >= vocab):
                raise FeatureError(f"column {name}: id outside [0, {vocab}) for this schema")


@dataclass(frozen=True)
class ModelSpec:
    family: str
    target: str
    aux: tuple[str, ...] = ()
    embed_dim: int = 8
    n_experts: int = 4
    n_private_experts: int = 1
    expert_widths: tuple[int, ...] = (64,)
    tower_widths: tuple[int, ...] = (64, 32)
    attn_hidden: int = 32
    transfer: bool | None = None
    stop_transfer_gradient: bool = False
    cat_head: bool | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SpecError(f"unknown model family {self.family!r}; expected one of {FAMILIES}")
        if not self.target:
            raise SpecError("target mechanism must be a nonempty name")
        aux = tuple(self.aux)
        object.__setattr__(self, "aux", aux)
        if self.target in aux:
            raise SpecError("target mechanism cannot also be auxiliary")
        if len(set(aux)) != len(aux):
            raise SpecError("auxiliary mechanisms must be unique")
        if self.family == "base" and aux:
            raise SpecError("base family takes no auxiliary mechanisms")
        if self.transfer is None:
            object.__setattr__(self, "transfer", self.family in TRANSFER_FAMILIES)
        if self.family in TRANSFER_FAMILIES and not self.transfer:
            raise SpecError(f"{self.family} requires transfer enabled")
        if self.family not in TRANSFER_FAMILIES and self.transfer:
            raise SpecError(f"{self.family} does not support transfer")
        if self.stop_transfer_gradient and not self.transfer:
            raise SpecError("stop_transfer_gradient requires transfer")
        if self.cat_head is None:
            object.__setattr__(self, "cat_head", bool(self.transfer and aux))
        if self.cat_head:
            if not aux:
                raise SpecError("cat_head requires at least one auxiliary mechanism")
            if not self.transfer:
                raise SpecError("cat_head requires a transfer family")
        object.__setattr__(self, "expert_widths", tuple(self.expert_widths))
        object.__setattr__(self, "tower_widths", tuple(self.tower_widths))
        if self.embed_dim < 1 or self.n_experts < 1 or self.attn_hidden < 1:
            raise SpecError("embed_dim, n_experts and attn_hidden must be >= 1")
        if self.n_private_experts < 0:
            raise SpecError("n_private_experts must be >= 0")
        if not self.expert_widths or min(self.expert_widths) < 1:
            raise SpecError("expert_widths must be a nonempty tuple of positive ints")
        if not self.tower_widths or min(self.tower_widths) < 1:
            raise SpecError("tower_widths must be a nonempty tuple of positive ints")

    @property
    def mechanisms(self) -> tuple[str, ...]:
        return (self.target,) + self.aux

    @property
    def cat_classes(self) -> int:
        return 2 ** len(self.mechanisms)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SpecError(f"unknown model spec fields: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("aux", "expert_widths", "tower_widths"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)
