"""Losses, auxiliary-task learning, and the day-ordered training loop.

Training makes exactly one pass over the training days in chronological
order. After finishing a day the model is scored on the next day, so the
metric logged after the second-to-last training day doubles as the
validation probe for model selection; the last day of the dataset is never
trained on and serves as the test day.

Two auxiliary-task learning modes act on the shared parameter group:
gradient-cosine scaling replaces the global auxiliary coefficient with a
per-task sigmoid of the gradient cosine against the primary task, and
gradient surgery projects conflicting gradients onto each other's normal
plane before summing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .attribution import cat_encode_rows
from .datagen import Dataset
from .errors import ContractError, MetricUndefinedError, NumericError
from .metrics import MetricReport, evaluate_arrays, mml
from .models import FeatureSchema, Model, ModelSpec, build, score_dataset
from .numcore import (
    GradientSet,
    Tape,
    Tensor,
    adam_step,
    add,
    backward,
    backward_multi,
    log,
    mean_,
    log_softmax,
    mul,
    neg,
    recording,
    scale,
    select_index,
    sub,
    sum_,
)
from .util import rng_for, run_tasks

ATL_MODES = ("none", "gcs", "pcgrad")
WEIGHTING_MODES = ("binary", "weighted")
HOLDOUTS = ("test", "validation")
CAT_CANDIDATE = "cat"


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.003
    aux_weight: float = 0.2
    batch_size: int = 256
    seed: int = 0
    atl_mode: str = "none"
    weighting: str = "binary"
    pcgrad_reduce: str = "sum"
    primary_only: bool = False
    holdout: str = "test"

    def __post_init__(self):
        if self.lr <= 0:
            raise ContractError(f"lr must be > 0, got {self.lr}")
        if self.aux_weight < 0:
            raise ContractError(f"aux_weight must be >= 0, got {self.aux_weight}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.atl_mode not in ATL_MODES:
            raise ContractError(f"atl_mode must be one of {ATL_MODES}, got {self.atl_mode!r}")
        if self.weighting not in WEIGHTING_MODES:
            raise ContractError(f"weighting must be one of {WEIGHTING_MODES}, got {self.weighting!r}")
        if self.pcgrad_reduce not in ("sum", "mean"):
            raise ContractError(f"pcgrad_reduce must be 'sum' or 'mean', got {self.pcgrad_reduce!r}")
        if self.holdout not in HOLDOUTS:
            raise ContractError(f"holdout must be one of {HOLDOUTS}, got {self.holdout!r}")


# ---------------------------------------------------------------------------
# losses


def sample_weights(labels: np.ndarray, attribution: np.ndarray, mode: str) -> np.ndarray:
    """Per-sample loss weights: negatives always weigh 1; positives weigh
    their attribution credit in weighted mode."""
    if mode not in WEIGHTING_MODES:
        raise ContractError(f"unknown weighting mode {mode!r}")
    if mode == "binary":
        return np.ones_like(np.asarray(labels, dtype=np.float64))
    return np.where(np.asarray(labels) > 0, np.asarray(attribution, dtype=np.float64), 1.0)


def bce_loss(p: Tensor, labels: np.ndarray, weights: np.ndarray | None = None) -> Tensor:
    """Weighted binary cross-entropy, normalized by total weight."""
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != p.data.shape:
        raise ContractError(f"labels shape {y.shape} != predictions shape {p.data.shape}")
    if np.any((y != 0.0) & (y != 1.0)):
        raise ContractError("labels must be 0 or 1")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ContractError("sample weights must be >= 0")
    total = float(w.sum())
    if total <= 0:
        raise ContractError("sample weights sum to zero")
    pos = mul(Tensor(w * y), log(p))
    neg_part = mul(Tensor(w * (1.0 - y)), log(sub(Tensor(np.ones_like(y)), p)))
    return neg(scale(sum_(add(pos, neg_part)), 1.0 / total))


def cat_loss(logits: Tensor, classes: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy against joint-label class ids."""
    return neg(mean_(select_index(log_softmax(logits), classes)))


def total_loss(primary: Tensor, aux_losses: Sequence[Tensor], aux_weight: float) -> Tensor:
    if aux_weight < 0:
        raise ContractError(f"aux_weight must be >= 0, got {aux_weight}")
    if not aux_losses:
        return primary
    s = aux_losses[0]
    for t in aux_losses[1:]:
        s = add(s, t)
    return add(primary, scale(s, aux_weight))


# ---------------------------------------------------------------------------
# auxiliary-task learning


def gcs_weights(primary_flat: np.ndarray, aux_flats: Sequence[np.ndarray]) -> np.ndarray:
    """Per-task coefficients: sigmoid of the gradient cosine against the
    primary gradient. Orthogonal tasks get 0.5, aligned ones more."""
    gp = np.asarray(primary_flat, dtype=np.float64)
    np_norm = float(np.linalg.norm(gp))
    alphas = np.empty(len(aux_flats))
    for k, gk in enumerate(aux_flats):
        gk = np.asarray(gk, dtype=np.float64)
        if gk.shape != gp.shape:
            raise ContractError("gradient vectors must share one flat shape")
        s = float(gp @ gk) / (np_norm * float(np.linalg.norm(gk)) + 1e-12)
        alphas[k] = 1.0 / (1.0 + math.exp(-s))
    return alphas


def pcgrad_surgery(
    flats: Sequence[np.ndarray], rng: np.random.Generator, reduce: str = "sum"
) -> tuple[np.ndarray, int]:
    """Project each gradient off the directions it conflicts with.

    Every gradient is checked against the others in random order; when the
    inner product with an original gradient is negative, that component is
    removed. Returns the aggregate of the modified gradients and the number
    of projections applied. Projections use the unmodified opposing
    gradients, and near-zero directions are skipped.
    """
    if len(flats) < 2:
        raise ContractError("gradient surgery needs >= 2 gradients")
    if reduce not in ("sum", "mean"):
        raise ContractError(f"reduce must be 'sum' or 'mean', got {reduce!r}")
    originals = [np.asarray(g, dtype=np.float64) for g in flats]
    shape = originals[0].shape
    if any(g.shape != shape for g in originals):
        raise ContractError("gradient vectors must share one flat shape")
    modified = [g.copy() for g in originals]
    conflicts = 0
    n = len(originals)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for pos in rng.permutation(len(others)):
            j = others[pos]
            d = float(modified[i] @ originals[j])
            if d < 0.0:
                denom = float(originals[j] @ originals[j])
                if denom <= 1e-24:
                    continue
                modified[i] = modified[i] - (d / denom) * originals[j]
                conflicts += 1
    merged = np.sum(modified, axis=0)
    if reduce == "mean":
        merged = merged / n
    return merged, conflicts


# ---------------------------------------------------------------------------
# the loop


@dataclass
class TrainResult:
    model: Model
    steps: list[dict]
    day_metrics: list[dict]
    final: MetricReport | None
    val_gauc: float | None

    @property
    def test_gauc(self) -> float | None:
        return self.final.gauc if self.final else None


def _batch_labels(data: Dataset, mechanisms: Sequence[str]) -> dict[str, np.ndarray]:
    labels = {}
    for m in mechanisms:
        if m not in data.weights:
            raise ContractError(f"dataset has no weight column for mechanism {m!r}")
        labels[m] = (data.weights[m] > 0).astype(np.float64)
    return labels


def _eval_day(model: Model, data: Dataset, day: int, target: str) -> dict:
    """Score one day re-based as its own slice; absent classes yield None."""
    day_slice = data.day_range(day, day)
    record: dict = {"eval_day": day, "n": len(day_slice), "gauc": None, "auc": None}
    if not len(day_slice):
        return record
    scores = score_dataset(model, day_slice)[target]
    labels = (day_slice.weights[target] > 0).astype(np.int64)
    try:
        report = evaluate_arrays(day_slice.user, scores, labels)
        record["gauc"] = report.gauc
        record["auc"] = report.auc
    except MetricUndefinedError:
        pass
    return record


def train(model: Model, dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    # overflow inside an op already surfaces as a typed numeric error from
    # the op's output check, so numpy's warnings carry no extra signal
    with np.errstate(all="ignore"):
        return _train_loop(model, dataset, cfg)


def _train_loop(model: Model, dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    spec = model.spec
    n_days = dataset.n_days
    if n_days < 3:
        raise ContractError(f"training needs >= 3 days, dataset has {n_days}")
    last_train_day = n_days - 2 if cfg.holdout == "test" else n_days - 3
    rng = rng_for(cfg.seed, "train")
    steps: list[dict] = []
    day_metrics: list[dict] = []
    step = 0
    for day in range(last_train_day + 1):
        day_idx = np.nonzero(dataset.day == day)[0]
        order = rng.permutation(len(day_idx))
        for lo in range(0, len(day_idx), cfg.batch_size):
            # within-batch order is irrelevant; sorting keeps the
            # day/user ordering invariant on the subset
            batch = dataset.subset(np.sort(day_idx[order[lo : lo + cfg.batch_size]]))
            try:
                record = _train_step(model, batch, cfg, rng)
            except NumericError as e:
                raise NumericError(f"training step {step} (day {day}): {e}") from None
            record.update(step=step, day=day, val_gauc=None)
            steps.append(record)
            step += 1
        try:
            day_metrics.append(_eval_day(model, dataset, day + 1, spec.target))
        except NumericError as e:
            raise NumericError(f"evaluation after day {day}: {e}") from None
        if steps:
            steps[-1]["val_gauc"] = day_metrics[-1]["gauc"]

    holdout_day = last_train_day + 1
    holdout_slice = dataset.day_range(holdout_day, holdout_day)
    final: MetricReport | None = None
    if len(holdout_slice):
        scores = score_dataset(model, holdout_slice)[spec.target]
        labels = (holdout_slice.weights[spec.target] > 0).astype(np.int64)
        try:
            final = evaluate_arrays(holdout_slice.user, scores, labels)
            final.mml = _maybe_mml(holdout_slice, spec.target)
        except MetricUndefinedError:
            final = None

    # The rolling metric logged after the second-to-last training day scores
    # the day a validation-holdout run would be judged on; a run already on
    # the validation convention is judged by its own final metric.
    if cfg.holdout == "validation":
        val_gauc = final.gauc if final else None
    else:
        val_gauc = day_metrics[-2]["gauc"] if len(day_metrics) >= 2 else None
    return TrainResult(
        model=model, steps=steps, day_metrics=day_metrics, final=final, val_gauc=val_gauc
    )


def _maybe_mml(data: Dataset, target: str) -> float | None:
    try:
        return mml(data.weights, target)
    except (ContractError, MetricUndefinedError):
        return None


def _train_step(model: Model, batch: Dataset, cfg: TrainConfig, rng: np.random.Generator) -> dict:
    spec = model.spec
    labels = _batch_labels(batch, spec.mechanisms)
    tape = Tape()
    with recording(tape):
        out = model.forward(batch)
        losses: dict[str, Tensor] = {}
        for m in spec.mechanisms:
            w = sample_weights(labels[m], batch.weights[m], cfg.weighting)
            try:
                losses[m] = bce_loss(out.probs[m], labels[m], w)
            except NumericError as e:
                raise NumericError(f"mechanism {m!r}: {e}") from None
        aux_losses = [losses[m] for m in spec.aux]
        aux_names = list(spec.aux)
        if out.cat_logits is not None:
            bits = np.stack([labels[m] for m in spec.mechanisms], axis=1)
            classes = cat_encode_rows(bits)
            try:
                aux_losses.append(cat_loss(out.cat_logits, classes))
            except NumericError as e:
                raise NumericError(f"mechanism 'cat': {e}") from None
            aux_names.append(CAT_CANDIDATE)
        primary = losses[spec.target]
        combined = None
        if aux_losses and not cfg.primary_only and cfg.atl_mode == "none":
            combined = total_loss(primary, aux_losses, cfg.aux_weight)

        record: dict = {
            "loss_primary": primary.item(),
            "loss_aux": {n: t.item() for n, t in zip(aux_names, aux_losses)},
            "alpha": None,
            "conflicts": None,
        }

    if cfg.primary_only or not aux_losses:
        grads = backward(tape, primary, model.store)
    elif cfg.atl_mode == "none":
        grads = backward(tape, combined, model.store)
    elif cfg.atl_mode == "gcs":
        sets = backward_multi(tape, [primary] + aux_losses, model.store)
        alphas = gcs_weights(sets[0].flat("shared"), [s.flat("shared") for s in sets[1:]])
        grads = GradientSet.combine(sets, [1.0, *alphas])
        record["alpha"] = {n: float(a) for n, a in zip(aux_names, alphas)}
    else:  # pcgrad
        sets = backward_multi(tape, [primary] + aux_losses, model.store)
        lam = cfg.aux_weight
        flats = [sets[0].flat("shared")] + [lam * s.flat("shared") for s in sets[1:]]
        merged, conflicts = pcgrad_surgery(flats, rng, cfg.pcgrad_reduce)
        grads = GradientSet.combine(sets, [1.0] + [lam] * (len(sets) - 1))
        grads = grads.with_group_flat("shared", merged)
        record["conflicts"] = conflicts
    adam_step(model.store, grads, cfg.lr)
    return record


def fit(spec: ModelSpec, dataset: Dataset, cfg: TrainConfig, schema: FeatureSchema | None = None) -> TrainResult:
    """Build a fresh model (seeded from cfg) and train it on the dataset."""
    schema = schema or FeatureSchema.from_dataset(dataset)
    model = build(spec, schema, cfg.seed)
    return train(model, dataset, cfg)


# ---------------------------------------------------------------------------
# greedy auxiliary-objective search


@dataclass
class SearchResult:
    selected: tuple[str, ...]
    cat_selected: bool
    trace: list[dict]

    @property
    def gauc_trace(self) -> list[float]:
        return [r["best_gauc"] for r in self.trace if r["picked"] is not None]


def _candidate_spec(base: ModelSpec, aux: tuple[str, ...], use_cat: bool) -> ModelSpec:
    return replace(base, aux=aux, cat_head=use_cat if aux else False)


def _search_probe(args: tuple[ModelSpec, Dataset, TrainConfig]) -> float | None:
    spec, dataset, cfg = args
    return fit(spec, dataset, cfg).val_gauc


def greedy_aux_search(
    base_spec: ModelSpec,
    candidates: Sequence[str],
    dataset: Dataset,
    cfg: TrainConfig,
) -> SearchResult:
    """Forward selection over auxiliary objectives.

    Each round trains one model per remaining candidate (the joint-label
    head counts as a candidate of its own) on the validation convention and
    permanently keeps the best strictly-improving addition. Stops when
    nothing improves; an empty selection is a legal outcome.
    """
    if not candidates:
        raise ContractError("greedy search needs at least one candidate")
    if base_spec.family == "base":
        raise ContractError("the single-task family cannot take auxiliary objectives")
    seen = set()
    for c in candidates:
        if c == base_spec.target:
            raise ContractError("target mechanism cannot be a search candidate")
        if c in seen:
            raise ContractError(f"duplicate candidate {c!r}")
        seen.add(c)
    cfg = replace(cfg, holdout="validation")

    selected: list[str] = []
    use_cat = False
    remaining = list(candidates)
    current = _search_probe((_candidate_spec(base_spec, (), False), dataset, cfg))
    if current is None:
        raise MetricUndefinedError("search baseline has no defined validation metric")
    trace: list[dict] = []
    while remaining:
        viable = [c for c in remaining if c != CAT_CANDIDATE or selected]
        if not viable:
            break
        specs = [
            _candidate_spec(
                base_spec,
                tuple(selected) if c == CAT_CANDIDATE else tuple(selected) + (c,),
                use_cat or c == CAT_CANDIDATE,
            )
            for c in viable
        ]
        results = run_tasks(_search_probe, [(s, dataset, cfg) for s in specs])
        scores = {c: r for c, r in zip(viable, results)}
        best = max(viable, key=lambda c: (-np.inf if scores[c] is None else scores[c]))
        round_record = {
            "round": len(trace),
            "baseline_gauc": current,
            "candidates": scores,
            "picked": None,
            "best_gauc": current,
        }
        if scores[best] is not None and scores[best] > current:
            if best == CAT_CANDIDATE:
                use_cat = True
            else:
                selected.append(best)
            remaining.remove(best)
            current = scores[best]
            round_record["picked"] = best
            round_record["best_gauc"] = current
            trace.append(round_record)
        else:
            trace.append(round_record)
            break
    return SearchResult(selected=tuple(selected), cat_selected=use_cat, trace=trace)
