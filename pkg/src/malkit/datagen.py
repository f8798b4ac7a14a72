"""Synthetic multi-day click logs with ground-truth latent intent.

Users carry a conversion propensity and an activity stratum (heavy/light);
items carry an appeal level and a latent style angle. Each user-item episode
samples a conversion path whose conversion probability scales with
propensity * appeal * recent-behavior similarity, and the attribution module
then labels every click under all four mechanisms.

The on-disk format is UTF-8 CSV with the behavior sequence packed into one
column as pipe-separated item:shop:cat:sim quadruples.
"""
from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .attribution import (
    DAY_SECONDS,
    MECHANISMS,
    Click,
    ConversionPath,
    attribute_all,
)
from .errors import ContractError, GenerationError, ParseError
from .util import rng_for

CSV_HEADER = (
    "day,user_id,item_id,"
    "u1,u2,u3,u4,u5,u6,u7,"
    "i1,i2,i3,i4,i5,i6,i7,i8,i9,i10,"
    "c1,c2,c3,beh_seq,w_last,w_first,w_linear,w_dda"
)

N_USER_FEATS = 7
N_ITEM_FEATS = 10
N_CTX_FEATS = 3

# static vocab sizes for the pure-noise profile features
_USER_NOISE_VOCABS = (10, 6, 4, 3)  # u4..u7
_ITEM_NOISE_VOCABS = (8, 6, 5, 4, 3, 3)  # i5..i10
_N_BUCKETS = 8  # propensity / appeal quantization
_N_ENGAGEMENT_BUCKETS = 4  # zero, low, mid, high
_N_POSITION_BUCKETS = 4  # only, first, mid, last


@dataclass(frozen=True)
class GenConfig:
    n_users: int = 800
    n_items: int = 300
    n_days: int = 8
    clicks_per_user_day: float = 8.0
    conversion_rate: float = 0.07
    path_geom_p: float = 0.30
    path_len_cap: int = 10
    window_days: float = 7.0
    dda_gamma: float = np.log(2.0) / DAY_SECONDS
    zero_engagement_rate: float = 0.25
    multi_conversion_rate: float = 0.30
    inter_click_gap: float = 6.0 * 3600.0
    n_shops: int = 40
    n_categories: int = 12
    n_scenarios: int = 5
    heavy_user_frac: float = 0.25
    heavy_multiplier: float = 2.5
    max_seq_len: int = 20
    seed: int = 0

    def __post_init__(self):
        for name in ("n_users", "n_items", "n_days", "path_len_cap", "n_shops", "n_categories", "n_scenarios", "max_seq_len"):
            if getattr(self, name) < 1:
                raise ContractError(f"GenConfig.{name} must be >= 1")
        for name in ("conversion_rate", "path_geom_p", "zero_engagement_rate", "multi_conversion_rate", "heavy_user_frac"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ContractError(f"GenConfig.{name} must lie in (0, 1), got {v}")
        if self.clicks_per_user_day <= 0 or self.window_days <= 0 or self.dda_gamma < 0:
            raise ContractError("GenConfig rates must be positive")

    @property
    def window_seconds(self) -> float:
        return self.window_days * DAY_SECONDS

    @property
    def user_vocabs(self) -> tuple[int, ...]:
        return (self.n_users, _N_BUCKETS, 2) + _USER_NOISE_VOCABS

    @property
    def item_vocabs(self) -> tuple[int, ...]:
        return (self.n_items, self.n_shops, self.n_categories, _N_BUCKETS) + _ITEM_NOISE_VOCABS

    @property
    def ctx_vocabs(self) -> tuple[int, ...]:
        return (self.n_scenarios, _N_ENGAGEMENT_BUCKETS, _N_POSITION_BUCKETS)

    def target_ratios(self) -> dict[str, float]:
        """Approximate expected positive-sample ratio per mechanism.

        linear marks every click of a converting path, dda only the clicks
        with nonzero engagement (plus whole-path fallbacks), and the
        positional mechanisms roughly one click per conversion.
        """
        mean_k = min(1.0 / self.path_geom_p, float(self.path_len_cap))
        c = self.conversion_rate
        q0 = self.zero_engagement_rate
        positional = c * (1.0 + 0.3 * self.multi_conversion_rate) / mean_k
        return {
            "linear": c,
            "dda": c * ((1.0 - q0) + q0**mean_k),
            "last": positional,
            "first": c / mean_k,
        }


@dataclass(frozen=True)
class ClickSample:
    day: int
    user_id: int
    item_id: int
    user_feats: tuple[int, ...]
    item_feats: tuple[int, ...]
    ctx_feats: tuple[int, ...]
    behavior: tuple[tuple[int, int, int, float], ...]
    weights: dict[str, float]

    def __post_init__(self):
        if self.day < 0 or self.user_id < 0 or self.item_id < 0:
            raise ContractError("day, user_id and item_id must be >= 0")
        if len(self.user_feats) != N_USER_FEATS or len(self.item_feats) != N_ITEM_FEATS or len(self.ctx_feats) != N_CTX_FEATS:
            raise ContractError("feature tuple lengths must be 7 (user), 10 (item), 3 (context)")
        for entry in self.behavior:
            if not 0.0 <= entry[3] <= 1.0:
                raise ContractError(f"similarity {entry[3]} outside [0, 1]")
        if any(w < 0 for w in self.weights.values()):
            raise ContractError("attribution weights must be >= 0")


class Dataset:
    """Column-oriented click log ordered by (day, user, click time)."""

    def __init__(
        self,
        day: np.ndarray,
        user: np.ndarray,
        item: np.ndarray,
        user_feats: np.ndarray,
        item_feats: np.ndarray,
        ctx_feats: np.ndarray,
        seq_items: np.ndarray,
        seq_shops: np.ndarray,
        seq_cats: np.ndarray,
        seq_sim: np.ndarray,
        seq_len: np.ndarray,
        weights: dict[str, np.ndarray],
        max_seq_len: int = 20,
    ):
        self.day = np.asarray(day, dtype=np.int64)
        self.user = np.asarray(user, dtype=np.int64)
        self.item = np.asarray(item, dtype=np.int64)
        self.user_feats = np.asarray(user_feats, dtype=np.int64)
        self.item_feats = np.asarray(item_feats, dtype=np.int64)
        self.ctx_feats = np.asarray(ctx_feats, dtype=np.int64)
        self.seq_items = np.asarray(seq_items, dtype=np.int64)
        self.seq_shops = np.asarray(seq_shops, dtype=np.int64)
        self.seq_cats = np.asarray(seq_cats, dtype=np.int64)
        self.seq_sim = np.asarray(seq_sim, dtype=np.float64)
        self.seq_len = np.asarray(seq_len, dtype=np.int64)
        self.weights = {m: np.asarray(w, dtype=np.float64) for m, w in weights.items()}
        self.max_seq_len = max_seq_len
        self._validate()

    def _validate(self) -> None:
        n = len(self.day)
        shapes_ok = (
            self.user.shape == (n,)
            and self.item.shape == (n,)
            and self.user_feats.shape == (n, N_USER_FEATS)
            and self.item_feats.shape == (n, N_ITEM_FEATS)
            and self.ctx_feats.shape == (n, N_CTX_FEATS)
            and self.seq_items.shape == (n, self.max_seq_len)
            and self.seq_sim.shape == (n, self.max_seq_len)
            and self.seq_len.shape == (n,)
        )
        if not shapes_ok:
            raise ContractError("dataset columns have inconsistent lengths")
        for m, w in self.weights.items():
            if w.shape != (n,):
                raise ContractError(f"weight column {m!r} has wrong length")
            if w.size and w.min() < 0:
                raise ContractError(f"weight column {m!r} holds negative values")
        if n:
            if self.day.min() < 0:
                raise ContractError("negative day index")
            if np.any(np.diff(self.day) < 0):
                raise ContractError("samples must be sorted by day")
            same_day = np.diff(self.day) == 0
            if np.any(same_day & (np.diff(self.user) < 0)):
                raise ContractError("samples must be sorted by user within each day")
            if self.seq_len.max() > self.max_seq_len or self.seq_len.min() < 0:
                raise ContractError("behavior sequence length outside [0, max_seq_len]")

    def __len__(self) -> int:
        return len(self.day)

    @property
    def n_days(self) -> int:
        return int(self.day.max()) + 1 if len(self) else 0

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            self.day[idx],
            self.user[idx],
            self.item[idx],
            self.user_feats[idx],
            self.item_feats[idx],
            self.ctx_feats[idx],
            self.seq_items[idx],
            self.seq_shops[idx],
            self.seq_cats[idx],
            self.seq_sim[idx],
            self.seq_len[idx],
            {m: w[idx] for m, w in self.weights.items()},
            self.max_seq_len,
        )

    def day_range(self, lo: int, hi: int) -> "Dataset":
        """Samples with lo <= day <= hi, re-based so days start at 0."""
        idx = np.nonzero((self.day >= lo) & (self.day <= hi))[0]
        return Dataset(
            self.day[idx] - lo,
            self.user[idx],
            self.item[idx],
            self.user_feats[idx],
            self.item_feats[idx],
            self.ctx_feats[idx],
            self.seq_items[idx],
            self.seq_shops[idx],
            self.seq_cats[idx],
            self.seq_sim[idx],
            self.seq_len[idx],
            {m: w[idx] for m, w in self.weights.items()},
            self.max_seq_len,
        )

    def with_weight_column(self, name: str, values: np.ndarray) -> "Dataset":
        """Copy of the dataset with one extra label column (diagnostics)."""
        weights = dict(self.weights)
        weights[name] = np.asarray(values, dtype=np.float64)
        return Dataset(
            self.day, self.user, self.item, self.user_feats, self.item_feats,
            self.ctx_feats, self.seq_items, self.seq_shops, self.seq_cats,
            self.seq_sim, self.seq_len, weights, self.max_seq_len,
        )

    def sample(self, i: int) -> ClickSample:
        k = int(self.seq_len[i])
        behavior = tuple(
            (int(self.seq_items[i, j]), int(self.seq_shops[i, j]), int(self.seq_cats[i, j]), float(self.seq_sim[i, j]))
            for j in range(k)
        )
        return ClickSample(
            day=int(self.day[i]),
            user_id=int(self.user[i]),
            item_id=int(self.item[i]),
            user_feats=tuple(int(x) for x in self.user_feats[i]),
            item_feats=tuple(int(x) for x in self.item_feats[i]),
            ctx_feats=tuple(int(x) for x in self.ctx_feats[i]),
            behavior=behavior,
            weights={m: float(self.weights[m][i]) for m in self.weights},
        )

    def samples(self) -> Iterator[ClickSample]:
        for i in range(len(self)):
            yield self.sample(i)

    @classmethod
    def from_samples(cls, samples: Sequence[ClickSample], max_seq_len: int = 20) -> "Dataset":
        n = len(samples)
        day = np.zeros(n, dtype=np.int64)
        user = np.zeros(n, dtype=np.int64)
        item = np.zeros(n, dtype=np.int64)
        uf = np.zeros((n, N_USER_FEATS), dtype=np.int64)
        itf = np.zeros((n, N_ITEM_FEATS), dtype=np.int64)
        cf = np.zeros((n, N_CTX_FEATS), dtype=np.int64)
        si = np.zeros((n, max_seq_len), dtype=np.int64)
        ss = np.zeros((n, max_seq_len), dtype=np.int64)
        sc = np.zeros((n, max_seq_len), dtype=np.int64)
        sv = np.zeros((n, max_seq_len), dtype=np.float64)
        sl = np.zeros(n, dtype=np.int64)
        mechanisms = tuple(samples[0].weights) if n else MECHANISMS
        weights = {m: np.zeros(n, dtype=np.float64) for m in mechanisms}
        for r, s in enumerate(samples):
            if len(s.behavior) > max_seq_len:
                raise ContractError(f"behavior sequence longer than cap {max_seq_len}")
            day[r], user[r], item[r] = s.day, s.user_id, s.item_id
            uf[r] = s.user_feats
            itf[r] = s.item_feats
            cf[r] = s.ctx_feats
            sl[r] = len(s.behavior)
            for j, (a, b, c, v) in enumerate(s.behavior):
                si[r, j], ss[r, j], sc[r, j], sv[r, j] = a, b, c, v
            for m in mechanisms:
                weights[m][r] = s.weights[m]
        return cls(day, user, item, uf, itf, cf, si, ss, sc, sv, sl, weights, max_seq_len)

    def equals(self, other: "Dataset") -> bool:
        """Semantic equality: same rows in the same order (padding ignored)."""
        if len(self) != len(other) or set(self.weights) != set(other.weights):
            return False
        simple = (
            np.array_equal(self.day, other.day)
            and np.array_equal(self.user, other.user)
            and np.array_equal(self.item, other.item)
            and np.array_equal(self.user_feats, other.user_feats)
            and np.array_equal(self.item_feats, other.item_feats)
            and np.array_equal(self.ctx_feats, other.ctx_feats)
            and np.array_equal(self.seq_len, other.seq_len)
            and all(np.array_equal(self.weights[m], other.weights[m]) for m in self.weights)
        )
        if not simple:
            return False
        for i in range(len(self)):
            k = int(self.seq_len[i])
            if not (
                np.array_equal(self.seq_items[i, :k], other.seq_items[i, :k])
                and np.array_equal(self.seq_shops[i, :k], other.seq_shops[i, :k])
                and np.array_equal(self.seq_cats[i, :k], other.seq_cats[i, :k])
                and np.array_equal(self.seq_sim[i, :k], other.seq_sim[i, :k])
            ):
                return False
        return True

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for i in range(len(self)):
            k = int(self.seq_len[i])
            beh = "|".join(
                f"{self.seq_items[i, j]}:{self.seq_shops[i, j]}:{self.seq_cats[i, j]}:{self.seq_sim[i, j]:.17g}"
                for j in range(k)
            )
            ints = [self.day[i], self.user[i], self.item[i], *self.user_feats[i], *self.item_feats[i], *self.ctx_feats[i]]
            ws = [f"{self.weights[m][i]:.17g}" for m in MECHANISMS]
            buf.write(",".join(str(int(x)) for x in ints) + f",{beh}," + ",".join(ws) + "\n")
        return buf.getvalue()

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_csv_text().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class DaySplit:
    """Chronological partition: train on all but the last day, test on it.

    The validation probe mimics the same convention one day earlier so model
    selection never touches the test day.
    """

    train: Dataset
    test: Dataset
    val_train: Dataset
    val_eval: Dataset


def split_days(d: Dataset) -> DaySplit:
    t = d.n_days
    if t < 3:
        raise ContractError(f"day split needs >= 3 days, dataset has {t}")
    return DaySplit(
        train=d.day_range(0, t - 2),
        test=d.day_range(t - 1, t - 1),
        val_train=d.day_range(0, t - 3),
        val_eval=d.day_range(t - 2, t - 2),
    )


# ---------------------------------------------------------------------------
# generation


class _Latents:
    def __init__(self, config: GenConfig):
        rng = rng_for(config.seed, "latents")
        self.propensity = rng.beta(2.0, 6.0, size=config.n_users)
        self.heavy = rng.random(config.n_users) < config.heavy_user_frac
        self.user_noise = np.stack(
            [rng.integers(0, v, size=config.n_users) for v in _USER_NOISE_VOCABS], axis=1
        )
        self.appeal = rng.beta(2.0, 6.0, size=config.n_items)
        self.style = rng.uniform(0.0, 2.0 * np.pi, size=config.n_items)
        self.shop = rng.integers(0, config.n_shops, size=config.n_items)
        self.category = np.minimum(
            (self.style / (2.0 * np.pi) * config.n_categories).astype(np.int64),
            config.n_categories - 1,
        )
        self.item_noise = np.stack(
            [rng.integers(0, v, size=config.n_items) for v in _ITEM_NOISE_VOCABS], axis=1
        )

    def user_feats(self, config: GenConfig, u: int) -> tuple[int, ...]:
        bucket = min(int(self.propensity[u] * _N_BUCKETS), _N_BUCKETS - 1)
        return (u, bucket, int(self.heavy[u]), *(int(x) for x in self.user_noise[u]))

    def item_feats(self, config: GenConfig, it: int) -> tuple[int, ...]:
        bucket = min(int(self.appeal[it] * _N_BUCKETS), _N_BUCKETS - 1)
        return (it, int(self.shop[it]), int(self.category[it]), bucket, *(int(x) for x in self.item_noise[it]))


def _position_bucket(i: int, k: int) -> int:
    if k == 1:
        return 0
    if i == 0:
        return 1
    if i == k - 1:
        return 3
    return 2


def _engagement_bucket(e: float) -> int:
    if e == 0.0:
        return 0
    return 1 + min(2, int(e * 3.0))


def _user_rows(config: GenConfig, latents: _Latents, u: int) -> list[tuple]:
    """All click rows for one user: (sort keys..., ClickSample fields)."""
    rng = rng_for(config.seed, "user", u)
    horizon = config.n_days * DAY_SECONDS
    mean_k = min(1.0 / config.path_geom_p, float(config.path_len_cap))
    mult = config.heavy_multiplier if latents.heavy[u] else 1.0
    norm = config.heavy_user_frac * config.heavy_multiplier + (1.0 - config.heavy_user_frac)
    episode_rate = config.n_days * config.clicks_per_user_day * mult / (norm * mean_k)
    n_episodes = int(rng.poisson(episode_rate))
    uf = latents.user_feats(config, u)
    sim_conc = 6.0
    rate_scale = config.conversion_rate / (0.25 * 0.25 * 1.0)

    history: list[int] = list(rng.integers(0, config.n_items, size=int(rng.integers(0, 6))))
    rows: list[tuple] = []
    for _ in range(n_episodes):
        item = int(rng.integers(0, config.n_items))
        k = min(int(rng.geometric(config.path_geom_p)), config.path_len_cap)
        t0 = rng.uniform(0.0, horizon)
        gaps = rng.exponential(config.inter_click_gap, size=k - 1) + 1.0
        times = t0 + np.concatenate([[0.0], np.cumsum(gaps)])
        times = times[times < horizon]
        k = len(times)
        engagement = np.where(
            rng.random(k) < config.zero_engagement_rate, 0.0, rng.beta(2.0, 2.0, size=k)
        )

        snapshot = history[-config.max_seq_len :]
        snaps: list[np.ndarray] = []
        for _click in range(k):
            if snapshot:
                aff = 0.5 * (1.0 + np.cos(latents.style[snapshot] - latents.style[item]))
                sims = rng.beta(1.0 + sim_conc * aff, 1.0 + sim_conc * (1.0 - aff))
            else:
                sims = np.zeros(0)
            snaps.append(sims)
        mean_sim = float(np.concatenate(snaps).mean()) if snapshot else 0.5
        sim_factor = 0.5 + mean_sim

        p_conv = min(0.9, rate_scale * latents.propensity[u] * latents.appeal[item] * sim_factor)
        conversions: list[float] = []
        if rng.random() < p_conv:
            anchor = k - 1 if rng.random() < 0.7 else int(rng.integers(0, k))
            t_conv = float(times[anchor] + rng.exponential(2.0 * 3600.0) + 1.0)
            conversions.append(t_conv)
            if rng.random() < config.multi_conversion_rate:
                conversions.append(t_conv + float(rng.exponential(1.5 * DAY_SECONDS)) + 1.0)

        path = ConversionPath(
            user_id=u,
            item_id=item,
            clicks=tuple(Click(i, float(times[i]), float(engagement[i])) for i in range(k)),
            conversions=tuple(conversions),
        )
        w = attribute_all(path, config.window_seconds, config.dda_gamma)

        itf = latents.item_feats(config, item)
        for i in range(k):
            behavior = tuple(
                (int(h), int(latents.shop[h]), int(latents.category[h]), float(s))
                for h, s in zip(snapshot, snaps[i])
            )
            ctx = (
                int(rng.integers(0, config.n_scenarios)),
                _engagement_bucket(float(engagement[i])),
                _position_bucket(i, k),
            )
            sample = ClickSample(
                day=int(times[i] // DAY_SECONDS),
                user_id=u,
                item_id=item,
                user_feats=uf,
                item_feats=itf,
                ctx_feats=ctx,
                behavior=behavior,
                weights={m: float(w[m][i]) for m in MECHANISMS},
            )
            rows.append((sample.day, u, float(times[i]), sample))
        if conversions:
            history.append(item)
    return rows


def generate(config: GenConfig) -> Dataset:
    latents = _Latents(config)
    rows: list[tuple] = []
    for u in range(config.n_users):
        rows.extend(_user_rows(config, latents, u))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    samples = [r[3] for r in rows]
    if not samples:
        raise GenerationError("generator produced no clicks; increase clicks_per_user_day or n_users")
    d = Dataset.from_samples(samples, config.max_seq_len)
    for m in MECHANISMS:
        if not np.any(d.weights[m] > 0):
            raise GenerationError(
                f"no positive samples under mechanism {m!r}; increase conversion_rate or dataset size"
            )
    days = np.unique(d.day)
    if not np.array_equal(days, np.arange(days.size)):
        raise GenerationError(
            "some days produced no clicks; increase clicks_per_user_day or n_users"
        )
    return d


# ---------------------------------------------------------------------------
# file format


def write_dataset(d: Dataset, path: str | Path) -> None:
    Path(path).write_text(d.to_csv_text(), encoding="utf-8")


def _parse_int(text: str, path: str, lineno: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: column {column}: expected integer, got {text!r}") from None


def _parse_float(text: str, path: str, lineno: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: column {column}: expected number, got {text!r}") from None


def read_dataset(path: str | Path, max_seq_len: int = 20) -> Dataset:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError(f"{path}:1: empty file, expected header")
    if lines[0] != CSV_HEADER:
        raise ParseError(f"{path}:1: unexpected header")
    columns = CSV_HEADER.split(",")
    n_cols = len(columns)
    samples: list[ClickSample] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != n_cols:
            raise ParseError(f"{path}:{lineno}: expected {n_cols} columns, found {len(parts)}")
        ints = [_parse_int(parts[j], str(path), lineno, columns[j]) for j in range(23)]
        behavior: list[tuple[int, int, int, float]] = []
        if parts[23]:
            for token in parts[23].split("|"):
                fields = token.split(":")
                if len(fields) != 4:
                    raise ParseError(f"{path}:{lineno}: column beh_seq: malformed entry {token!r}")
                behavior.append(
                    (
                        _parse_int(fields[0], str(path), lineno, "beh_seq.item"),
                        _parse_int(fields[1], str(path), lineno, "beh_seq.shop"),
                        _parse_int(fields[2], str(path), lineno, "beh_seq.cat"),
                        _parse_float(fields[3], str(path), lineno, "beh_seq.sim"),
                    )
                )
        weights = {
            m: _parse_float(parts[24 + j], str(path), lineno, columns[24 + j])
            for j, m in enumerate(MECHANISMS)
        }
        try:
            samples.append(
                ClickSample(
                    day=ints[0],
                    user_id=ints[1],
                    item_id=ints[2],
                    user_feats=tuple(ints[3:10]),
                    item_feats=tuple(ints[10:20]),
                    ctx_feats=tuple(ints[20:23]),
                    behavior=tuple(behavior),
                    weights=weights,
                )
            )
        except ContractError as e:
            raise ParseError(f"{path}:{lineno}: {e}") from None
    try:
        d = Dataset.from_samples(samples, max_seq_len)
    except ContractError as e:
        raise ParseError(f"{path}: {e}") from None
    days = np.unique(d.day)
    if not np.array_equal(days, np.arange(days.size)):
        raise ParseError(f"{path}: day indices are not contiguous from 0")
    return d


# ---------------------------------------------------------------------------
# summaries


@dataclass
class DatasetSummary:
    n_samples: int
    n_users: int
    n_days: int
    positive_ratios: dict[str, float]
    clicks_per_user: dict[int, int]
    path_length_hist: dict[int, int]
    complexity_ratio: dict[int, float]

    def format(self) -> str:
        lines = [
            f"samples: {self.n_samples}  users: {self.n_users}  days: {self.n_days}",
            "positive ratios: "
            + "  ".join(f"{m}={self.positive_ratios[m]:.4f}" for m in sorted(self.positive_ratios)),
        ]
        if self.path_length_hist:
            hist = "  ".join(f"{k}:{v}" for k, v in sorted(self.path_length_hist.items()))
            lines.append(f"observed path lengths: {hist}")
        if self.complexity_ratio:
            vals = np.array(list(self.complexity_ratio.values()))
            lines.append(
                f"complexity ratio (linear/last positives per user): median={np.median(vals):.2f} max={vals.max():.2f}"
            )
        return "\n".join(lines)


def summarize(d: Dataset) -> DatasetSummary:
    n = len(d)
    ratios = {m: float(np.mean(w > 0)) if n else 0.0 for m, w in d.weights.items()}
    users, counts = np.unique(d.user, return_counts=True) if n else (np.array([]), np.array([]))
    clicks_per_user = {int(u): int(c) for u, c in zip(users, counts)}

    pair_ids = d.user * (d.item.max() + 1 if n else 1) + d.item if n else np.array([])
    _, pair_counts = np.unique(pair_ids, return_counts=True) if n else (None, np.array([]))
    lengths, freq = (np.unique(pair_counts, return_counts=True) if n else (np.array([]), np.array([])))
    path_hist = {int(k): int(v) for k, v in zip(lengths, freq)}

    complexity: dict[int, float] = {}
    if n and "linear" in d.weights and "last" in d.weights:
        lin_pos = d.weights["linear"] > 0
        last_pos = d.weights["last"] > 0
        for u in users:
            mask = d.user == u
            n_last = int(np.count_nonzero(last_pos[mask]))
            if n_last > 0:
                complexity[int(u)] = float(np.count_nonzero(lin_pos[mask])) / n_last
    return DatasetSummary(
        n_samples=n,
        n_users=len(users),
        n_days=d.n_days,
        positive_ratios=ratios,
        clicks_per_user=clicks_per_user,
        path_length_hist=path_hist,
        complexity_ratio=complexity,
    )


def with_noise_label(d: Dataset, rate: float = 0.05, seed: int = 0, name: str = "noise") -> Dataset:
    """Attach a pure-noise binary label column, for auxiliary-search diagnostics."""
    rng = rng_for(seed, "noise-label")
    values = (rng.random(len(d)) < rate).astype(np.float64)
    return d.with_weight_column(name, values)
