"""Ranking metrics for conversion prediction.

AUC is computed by the sort-and-rank identity: with average ranks assigned to
tied scores, (sum of positive ranks - n_pos(n_pos+1)/2) / (n_pos*n_neg)
equals the pairwise win rate with half credit for ties. GAUC ranks within
each user and weights users by their click count; users whose labels are all
one class have no defined AUC and are excluded (their counts are reported).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, MetricUndefinedError


@dataclass(frozen=True)
class ScoredSample:
    user_id: int
    score: float
    label: int
    weight: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ContractError(f"score must be finite, got {self.score}")
        if self.label not in (0, 1):
            raise ContractError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class UserRecord:
    user_id: int
    clicks: int
    auc: float


@dataclass(frozen=True)
class GroupLiftRow:
    bucket: int
    lo: float
    hi: float
    n_users: int
    delta_auc: float


@dataclass
class MetricReport:
    auc: float
    gauc: float
    n_users_included: int
    n_users_excluded: int
    per_user: dict[int, UserRecord]
    mml: float | None = None
    group_lift: list[GroupLiftRow] | None = None

    def to_dict(self) -> dict:
        out = {
            "auc": self.auc,
            "gauc": self.gauc,
            "n_users_included": self.n_users_included,
            "n_users_excluded": self.n_users_excluded,
            "per_user": {
                str(u): {"clicks": r.clicks, "auc": r.auc} for u, r in sorted(self.per_user.items())
            },
        }
        if self.mml is not None:
            out["mml"] = self.mml
        if self.group_lift is not None:
            out["group_lift"] = [
                {"bucket": g.bucket, "lo": g.lo, "hi": g.hi, "n_users": g.n_users, "delta_auc": g.delta_auc}
                for g in self.group_lift
            ]
        return out


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their rank span."""
    n = len(scores)
    order = np.argsort(scores, kind="mergesort")
    ss = scores[order]
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    boundary[1:] = ss[1:] != ss[:-1]
    group = np.cumsum(boundary) - 1
    base = np.arange(1, n + 1, dtype=np.float64)
    mean_rank = np.bincount(group, weights=base) / np.bincount(group)
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = mean_rank[group]
    return ranks


def auc_scores(scores: np.ndarray, labels: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ContractError("scores and labels must be 1-D arrays of equal length")
    if not np.all(np.isfinite(scores)):
        raise ContractError("scores must be finite")
    pos = labels == 1
    n_pos = int(np.count_nonzero(pos))
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError(
            f"AUC undefined: {n_pos} positives, {n_neg} negatives"
        )
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def weighted_auc_scores(scores: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> float:
    """Pairwise AUC with each positive-negative pair weighted by w_i * w_j.

    Non-default variant; reduces to auc_scores when all weights are equal.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights < 0):
        raise ContractError("weights must be >= 0")
    pos = labels == 1
    w_pos = weights[pos].sum()
    w_neg = weights[~pos].sum()
    if w_pos <= 0 or w_neg <= 0:
        raise MetricUndefinedError("weighted AUC undefined: a class has zero total weight")
    order = np.argsort(scores, kind="mergesort")
    ss, ls, ws = scores[order], labels[order], weights[order]
    boundary = np.empty(len(ss), dtype=bool)
    boundary[0] = True
    boundary[1:] = ss[1:] != ss[:-1]
    group = np.cumsum(boundary) - 1
    gp = np.bincount(group, weights=np.where(ls == 1, ws, 0.0))
    gn = np.bincount(group, weights=np.where(ls == 1, 0.0, ws))
    cum_neg_below = np.concatenate([[0.0], np.cumsum(gn)[:-1]])
    total = float(np.sum(gp * (cum_neg_below + 0.5 * gn)))
    return total / (w_pos * w_neg)


def auc(samples: Sequence[ScoredSample]) -> float:
    scores = np.array([s.score for s in samples])
    labels = np.array([s.label for s in samples])
    return auc_scores(scores, labels)


def gauc_arrays(
    user_ids: np.ndarray, scores: np.ndarray, labels: np.ndarray
) -> tuple[float, dict[int, UserRecord], int]:
    """Click-weighted mean of per-user AUCs.

    Returns (gauc, included-user records, excluded-user count). Per-user AUCs
    are accumulated in ascending user-id order so the reduction is
    deterministic regardless of input order.
    """
    user_ids = np.asarray(user_ids)
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    order = np.argsort(user_ids, kind="mergesort")
    uids, starts = np.unique(user_ids[order], return_index=True)
    bounds = np.append(starts, len(user_ids))
    records: dict[int, UserRecord] = {}
    excluded = 0
    num = 0.0
    den = 0.0
    for i, u in enumerate(uids):
        idx = order[bounds[i] : bounds[i + 1]]
        try:
            a = auc_scores(scores[idx], labels[idx])
        except MetricUndefinedError:
            excluded += 1
            continue
        clicks = len(idx)
        records[int(u)] = UserRecord(int(u), clicks, a)
        num += clicks * a
        den += clicks
    if den == 0:
        raise MetricUndefinedError("GAUC undefined: no user has both classes")
    return num / den, records, excluded


def gauc(samples: Sequence[ScoredSample]) -> tuple[float, dict[int, UserRecord]]:
    user_ids = np.array([s.user_id for s in samples])
    scores = np.array([s.score for s in samples])
    labels = np.array([s.label for s in samples])
    value, records, _ = gauc_arrays(user_ids, scores, labels)
    return value, records


def evaluate_arrays(user_ids: np.ndarray, scores: np.ndarray, labels: np.ndarray) -> MetricReport:
    value, records, excluded = gauc_arrays(user_ids, scores, labels)
    return MetricReport(
        auc=auc_scores(scores, labels),
        gauc=value,
        n_users_included=len(records),
        n_users_excluded=excluded,
        per_user=records,
    )


def evaluate(samples: Sequence[ScoredSample]) -> MetricReport:
    return evaluate_arrays(
        np.array([s.user_id for s in samples]),
        np.array([s.score for s in samples]),
        np.array([s.label for s in samples]),
    )


def mml(weights: dict[str, np.ndarray], target: str) -> float:
    """Mean label margin: mean of (time-decayed minus uniform weight) over
    the target mechanism's positive samples."""
    if target not in weights:
        raise ContractError(f"unknown target mechanism {target!r}")
    for needed in ("dda", "linear"):
        if needed not in weights:
            raise ContractError(f"mml needs weight column {needed!r}")
    pos = np.asarray(weights[target]) > 0
    if not np.any(pos):
        raise MetricUndefinedError(f"mml undefined: no positives under {target!r}")
    diff = np.asarray(weights["dda"], dtype=np.float64) - np.asarray(weights["linear"], dtype=np.float64)
    return float(diff[pos].mean())


DEFAULT_COMPLEXITY_EDGES = (1.0, 1.5, 2.5)


def group_lift(
    records_a: dict[int, UserRecord],
    records_b: dict[int, UserRecord],
    complexity: dict[int, float],
    edges: Sequence[float] = DEFAULT_COMPLEXITY_EDGES,
) -> list[GroupLiftRow]:
    """Per-complexity-bucket mean of (AUC_a,u - AUC_b,u).

    Users must be evaluable under both models and carry a complexity ratio;
    anyone missing from either side is dropped. Bucket k holds users with
    edges[k-1] < ratio <= edges[k]; empty buckets are omitted.
    """
    edges = tuple(edges)
    if any(edges[i] >= edges[i + 1] for i in range(len(edges) - 1)):
        raise ContractError("bucket edges must be strictly increasing")
    shared = sorted(set(records_a) & set(records_b) & set(complexity))
    buckets: dict[int, list[float]] = {}
    for u in shared:
        ratio = complexity[u]
        k = int(np.searchsorted(edges, ratio, side="left"))
        buckets.setdefault(k, []).append(records_a[u].auc - records_b[u].auc)
    lo_hi = lambda k: (
        edges[k - 1] if k > 0 else float("-inf"),
        edges[k] if k < len(edges) else float("inf"),
    )
    rows = []
    for k in sorted(buckets):
        lo, hi = lo_hi(k)
        deltas = buckets[k]
        rows.append(GroupLiftRow(k, lo, hi, len(deltas), float(np.mean(deltas))))
    return rows


def group_lift_csv(rows: Iterable[GroupLiftRow]) -> str:
    out = ["bucket,lo,hi,n_users,delta_auc"]
    for r in rows:
        out.append(f"{r.bucket},{r.lo:.17g},{r.hi:.17g},{r.n_users},{r.delta_auc:.17g}")
    return "\n".join(out) + "\n"
