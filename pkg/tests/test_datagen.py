"""Synthetic click-log generator and its on-disk CSV format."""
import numpy as np
import pytest

from malkit.attribution import MECHANISMS
from malkit.datagen import (
    CSV_HEADER,
    ClickSample,
    Dataset,
    GenConfig,
    generate,
    read_dataset,
    split_days,
    summarize,
    with_noise_label,
    write_dataset,
)
from malkit.errors import ContractError, GenerationError, ParseError

SMALL = GenConfig(n_users=120, n_items=60, n_days=5, clicks_per_user_day=6.0, seed=3)


@pytest.fixture(scope="module")
def small():
    return generate(SMALL)


def test_header_layout():
    cols = CSV_HEADER.split(",")
    assert cols[:3] == ["day", "user_id", "item_id"]
    assert cols[3:10] == [f"u{i}" for i in range(1, 8)]
    assert cols[10:20] == [f"i{i}" for i in range(1, 11)]
    assert cols[20:23] == [f"c{i}" for i in range(1, 4)]
    assert cols[23] == "beh_seq"
    assert cols[24:] == ["w_last", "w_first", "w_linear", "w_dda"]


def test_gen_config_contracts():
    with pytest.raises(ContractError):
        GenConfig(n_users=0)
    with pytest.raises(ContractError):
        GenConfig(conversion_rate=0.0)
    with pytest.raises(ContractError):
        GenConfig(conversion_rate=1.5)
    with pytest.raises(ContractError):
        GenConfig(path_geom_p=0.0)
    with pytest.raises(ContractError):
        GenConfig(heavy_user_frac=1.2)
    with pytest.raises(ContractError):
        GenConfig(n_days=0)


def test_generate_deterministic(small):
    again = generate(SMALL)
    assert small.equals(again)
    assert small.fingerprint() == again.fingerprint()
    assert small.fingerprint() != generate(GenConfig(**{**SMALL.__dict__, "seed": 4})).fingerprint()


def test_generate_sorted_and_contiguous(small):
    assert np.all(np.diff(small.day) >= 0)
    same_day = np.diff(small.day) == 0
    assert np.all(np.diff(small.user)[same_day] >= 0)
    assert np.array_equal(np.unique(small.day), np.arange(small.n_days))


def test_generate_feature_ranges(small):
    cfg = SMALL
    assert small.user.max() < cfg.n_users
    assert small.item.max() < cfg.n_items
    for j, vocab in enumerate(cfg.user_vocabs[1:]):
        assert small.user_feats[:, j + 1].max() < vocab if j + 1 < len(cfg.user_vocabs) else True
    assert small.user_feats[:, 0].max() < cfg.n_users
    assert small.item_feats[:, 1].max() < cfg.n_shops
    assert small.item_feats[:, 2].max() < cfg.n_categories
    assert small.ctx_feats[:, 0].max() < cfg.n_scenarios
    assert small.seq_len.max() <= cfg.max_seq_len
    assert small.seq_sim.min() >= 0.0 and small.seq_sim.max() <= 1.0


def test_generate_positive_ratio_tracks_targets(small):
    targets = SMALL.target_ratios()
    n = len(small)
    for m in MECHANISMS:
        observed = float((small.weights[m] > 0).mean())
        assert observed == pytest.approx(targets[m], rel=0.5), m
    # ordering: linear >= dda >= first/last family
    obs = {m: float((small.weights[m] > 0).mean()) for m in MECHANISMS}
    assert obs["linear"] >= obs["dda"] >= max(obs["last"], obs["first"]) * 0.9


def test_linear_positives_dominate(small):
    lin = small.weights["linear"] > 0
    for m in ("last", "first", "dda"):
        assert np.all(lin[small.weights[m] > 0]), m
    assert lin.sum() >= (small.weights["last"] > 0).sum()


def test_default_scale_ratios():
    # the stock configuration advertises conversion ratios in a few-percent
    # band with linear the largest
    t = GenConfig().target_ratios()
    assert t["linear"] == pytest.approx(0.07)
    assert 0.01 < t["last"] < t["dda"] < t["linear"]
    assert 0.01 < t["first"] < t["dda"]


def test_split_days_eight_day_example():
    d = generate(GenConfig(n_users=60, n_items=40, n_days=8, clicks_per_user_day=4.0, seed=1))
    sp = split_days(d)
    assert sp.train.n_days == 7  # days 0..6
    assert sp.test.n_days == 1  # day 7 re-based
    assert sp.val_train.n_days == 6
    assert sp.val_eval.n_days == 1
    assert len(sp.train) + len(sp.test) == len(d)
    assert len(sp.val_train) + len(sp.val_eval) + len(sp.test) == len(d)


def test_split_days_needs_three(small):
    with pytest.raises(ContractError):
        split_days(small.day_range(0, 1))


def test_subset_and_day_range(small):
    d0 = small.day_range(2, 3)
    assert d0.n_days == 2
    assert np.array_equal(np.unique(d0.day), [0, 1])
    n2 = int((small.day == 2).sum()) + int((small.day == 3).sum())
    assert len(d0) == n2
    sub = small.subset(np.arange(5))
    assert len(sub) == 5


def test_degenerate_single_click_sample_weights():
    # one click, one conversion: every mechanism gives the full unit
    s = ClickSample(
        day=0, user_id=0, item_id=0,
        user_feats=(0,) * 7, item_feats=(0,) * 10, ctx_feats=(0, 0, 0),
        behavior=(), weights={m: 1.0 for m in MECHANISMS},
    )
    d = Dataset.from_samples([s, s], max_seq_len=4)
    for m in MECHANISMS:
        np.testing.assert_array_equal(d.weights[m], [1.0, 1.0])


def test_click_sample_contracts():
    with pytest.raises(ContractError):
        ClickSample(
            day=-1, user_id=0, item_id=0,
            user_feats=(0,) * 7, item_feats=(0,) * 10, ctx_feats=(0, 0, 0),
            behavior=(), weights={m: 1.0 for m in MECHANISMS},
        )
    with pytest.raises(ContractError):
        ClickSample(
            day=0, user_id=0, item_id=0,
            user_feats=(0,) * 3, item_feats=(0,) * 10, ctx_feats=(0, 0, 0),
            behavior=(), weights={m: 1.0 for m in MECHANISMS},
        )
    with pytest.raises(ContractError):
        ClickSample(
            day=0, user_id=0, item_id=0,
            user_feats=(0,) * 7, item_feats=(0,) * 10, ctx_feats=(0, 0, 0),
            behavior=(), weights={m: -1.0 for m in MECHANISMS},
        )


# ---------------------------------------------------------------------------
# file roundtrip


def test_csv_roundtrip_exact(small, tmp_path):
    p = tmp_path / "d.csv"
    write_dataset(small, p)
    back = read_dataset(p)
    assert small.equals(back)
    assert small.fingerprint() == back.fingerprint()


def test_csv_float_precision_survives(tmp_path):
    w = 1.0 / 3.0
    s = ClickSample(
        day=0, user_id=0, item_id=0,
        user_feats=(0,) * 7, item_feats=(0,) * 10, ctx_feats=(0, 0, 0),
        behavior=((1, 2, 3, 0.123456789012345),), weights={m: w for m in MECHANISMS},
    )
    d = Dataset.from_samples([s], max_seq_len=4)
    p = tmp_path / "d.csv"
    write_dataset(d, p)
    back = read_dataset(p, max_seq_len=4)
    assert back.weights["linear"][0] == w  # bit-exact through %.17g
    assert back.seq_sim[0, 0] == 0.123456789012345


def test_read_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("day,user\n", encoding="utf-8")
    with pytest.raises(ParseError, match="header"):
        read_dataset(p)
    (tmp_path / "empty.csv").write_text("", encoding="utf-8")
    with pytest.raises(ParseError):
        read_dataset(tmp_path / "empty.csv")


def test_read_error_names_line_and_column(small, tmp_path):
    p = tmp_path / "d.csv"
    write_dataset(small, p)
    lines = p.read_text().splitlines()

    # non-integer user id on data line 2
    parts = lines[2].split(",")
    parts[1] = "xx"
    (tmp_path / "badint.csv").write_text("\n".join([lines[0], lines[1], ",".join(parts)]) + "\n")
    with pytest.raises(ParseError, match=r"badint.csv:3: column user_id"):
        read_dataset(tmp_path / "badint.csv")

    # wrong column count
    (tmp_path / "short.csv").write_text("\n".join([lines[0], lines[1].rsplit(",", 1)[0]]) + "\n")
    with pytest.raises(ParseError, match=r"short.csv:2: expected 28 columns"):
        read_dataset(tmp_path / "short.csv")

    # malformed behavior token
    parts = lines[1].split(",")
    parts[23] = "1:2:3"
    (tmp_path / "badseq.csv").write_text("\n".join([lines[0], ",".join(parts)]) + "\n")
    with pytest.raises(ParseError, match=r"badseq.csv:2: column beh_seq"):
        read_dataset(tmp_path / "badseq.csv")

    # negative weight
    parts = lines[1].split(",")
    parts[24] = "-1.0"
    (tmp_path / "negw.csv").write_text("\n".join([lines[0], ",".join(parts)]) + "\n")
    with pytest.raises(ParseError, match=r"negw.csv:2"):
        read_dataset(tmp_path / "negw.csv")


def test_generation_error_when_no_positives_possible():
    with pytest.raises(GenerationError):
        generate(GenConfig(n_users=2, n_items=2, n_days=3, clicks_per_user_day=0.05,
                           conversion_rate=0.001, seed=0))


# ---------------------------------------------------------------------------
# summaries and noise labels


def test_summarize_fields(small):
    s = summarize(small)
    assert s.n_samples == len(small)
    assert s.n_days == small.n_days
    assert set(s.positive_ratios) == set(MECHANISMS)
    assert sum(s.clicks_per_user.values()) == len(small)
    assert sum(s.path_length_hist.values()) > 0
    text = s.format()
    assert "positive ratios" in text and "complexity" in text


def test_summarize_complexity_ratio(small):
    s = summarize(small)
    # every tracked user has at least as many linear as last positives
    assert all(v >= 1.0 for v in s.complexity_ratio.values())


def test_with_noise_label(small):
    noisy = with_noise_label(small, rate=0.25, seed=9)
    assert "noise" in noisy.weights
    assert set(noisy.weights) == set(MECHANISMS) | {"noise"}
    frac = float((noisy.weights["noise"] > 0).mean())
    assert frac == pytest.approx(0.25, abs=0.05)
    again = with_noise_label(small, rate=0.25, seed=9)
    assert np.array_equal(noisy.weights["noise"], again.weights["noise"])
    other = with_noise_label(small, rate=0.25, seed=10)
    assert not np.array_equal(noisy.weights["noise"], other.weights["noise"])
    # original untouched
    assert "noise" not in small.weights


def test_heavy_users_generate_more_clicks():
    cfg = GenConfig(n_users=400, n_items=80, n_days=4, clicks_per_user_day=6.0,
                    heavy_user_frac=0.25, heavy_multiplier=2.5, seed=11)
    d = generate(cfg)
    counts = np.bincount(d.user, minlength=cfg.n_users)
    top = np.sort(counts)[-100:].mean()
    bottom = np.sort(counts)[:300].mean()
    assert top > 1.7 * bottom
    # overall volume tracks the configured mean
    per_user_day = len(d) / (cfg.n_users * cfg.n_days)
    assert per_user_day == pytest.approx(cfg.clicks_per_user_day, rel=0.35)
