"""Losses, gradient blending, the day-ordered loop, and greedy selection."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdcheck import tiny_spec
from malkit.datagen import GenConfig, generate
from malkit.errors import ContractError, NumericError
from malkit.models import FeatureSchema
from malkit.numcore import Tensor
from malkit.training import (
    TrainConfig,
    bce_loss,
    cat_loss,
    fit,
    gcs_weights,
    greedy_aux_search,
    pcgrad_surgery,
    sample_weights,
    total_loss,
)


@pytest.fixture(scope="module")
def data():
    return generate(GenConfig(n_users=60, n_items=30, n_days=4, clicks_per_user_day=5.0, seed=11))


@pytest.fixture(scope="module")
def schema(data):
    return FeatureSchema.from_dataset(data)


# ---------------------------------------------------------------------------
# losses


def test_bce_hand_values():
    # -(ln 0.8 + ln 0.7) / 2
    loss = bce_loss(Tensor(np.array([0.8, 0.3])), np.array([1.0, 0.0]))
    assert abs(loss.item() - 0.2899092476264711) < 1e-15
    coin = bce_loss(Tensor(np.array([0.5])), np.array([1.0]))
    assert abs(coin.item() - math.log(2.0)) < 1e-15


def test_bce_weighted_hand_value():
    # positives weigh 3, negatives 1, normalized by total weight 4
    loss = bce_loss(
        Tensor(np.array([0.8, 0.3])), np.array([1.0, 0.0]), np.array([3.0, 1.0])
    )
    expected = -(3.0 * math.log(0.8) + math.log(0.7)) / 4.0
    assert abs(loss.item() - expected) < 1e-15


def test_bce_contracts():
    p = Tensor(np.array([0.5, 0.5]))
    with pytest.raises(ContractError, match="shape"):
        bce_loss(p, np.array([1.0]))
    with pytest.raises(ContractError, match="0 or 1"):
        bce_loss(p, np.array([1.0, 0.5]))
    with pytest.raises(ContractError, match=">= 0"):
        bce_loss(p, np.array([1.0, 0.0]), np.array([1.0, -1.0]))
    with pytest.raises(ContractError, match="sum to zero"):
        bce_loss(p, np.array([1.0, 0.0]), np.array([0.0, 0.0]))


def test_cat_loss_hand_values():
    flat = cat_loss(Tensor(np.zeros((2, 4))), np.array([0, 3]))
    assert abs(flat.item() - math.log(4.0)) < 1e-15
    skew = cat_loss(Tensor(np.array([[1.0, 0.0], [0.0, 1.0]])), np.array([0, 1]))
    assert abs(skew.item() - math.log(1.0 + math.exp(-1.0))) < 1e-15


def test_total_loss_arithmetic():
    got = total_loss(Tensor(4.0), [Tensor(4.0), Tensor(2.0)], 0.2).item()
    assert got == 4.0 + 0.2 * (4.0 + 2.0)
    alone = Tensor(3.0)
    assert total_loss(alone, [], 0.9) is alone
    with pytest.raises(ContractError):
        total_loss(Tensor(1.0), [Tensor(1.0)], -0.1)


def test_sample_weights_modes():
    labels = np.array([1.0, 0.0, 1.0])
    credit = np.array([0.25, 0.9, 2.0])
    np.testing.assert_array_equal(sample_weights(labels, credit, "binary"), np.ones(3))
    np.testing.assert_array_equal(
        sample_weights(labels, credit, "weighted"), np.array([0.25, 1.0, 2.0])
    )
    with pytest.raises(ContractError):
        sample_weights(labels, credit, "focal")


# ---------------------------------------------------------------------------
# gradient blending


def test_gcs_sigmoid_of_cosine():
    gp = np.array([1.0, 0.0])
    aligned, opposed, orthogonal = gcs_weights(gp, [gp, -gp, np.array([0.0, 1.0])])
    assert abs(aligned - 0.7310585786300049) < 1e-9
    assert abs(opposed - 0.2689414213699951) < 1e-9
    assert orthogonal == 0.5
    with pytest.raises(ContractError):
        gcs_weights(gp, [np.zeros(3)])


def test_pcgrad_hand_trace():
    rng = np.random.default_rng(0)
    merged, conflicts = pcgrad_surgery([np.array([1.0, 0.0]), np.array([-1.0, 1.0])], rng)
    np.testing.assert_allclose(merged, [0.5, 1.5], atol=1e-12)
    assert conflicts == 2
    merged_mean, _ = pcgrad_surgery(
        [np.array([1.0, 0.0]), np.array([-1.0, 1.0])], np.random.default_rng(0), "mean"
    )
    np.testing.assert_allclose(merged_mean, [0.25, 0.75], atol=1e-12)


def test_pcgrad_no_conflict_is_identity():
    a, b = np.array([1.0, 1.0]), np.array([1.0, 2.0])
    merged, conflicts = pcgrad_surgery([a, b], np.random.default_rng(3))
    np.testing.assert_array_equal(merged, a + b)
    assert conflicts == 0


def test_pcgrad_contracts():
    rng = np.random.default_rng(0)
    with pytest.raises(ContractError):
        pcgrad_surgery([np.ones(2)], rng)
    with pytest.raises(ContractError):
        pcgrad_surgery([np.ones(2), np.ones(3)], rng)
    with pytest.raises(ContractError):
        pcgrad_surgery([np.ones(2), np.ones(2)], rng, "max")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pcgrad_removes_the_conflicting_component(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=4), rng.normal(size=4)
    modified_sum, conflicts = pcgrad_surgery([a, b], np.random.default_rng(seed))
    if float(a @ b) >= 0:
        assert conflicts == 0
        return
    # with two gradients each projection leaves the result orthogonal
    # to the opposing original
    a_mod = a - (a @ b) / (b @ b) * b
    b_mod = b - (b @ a) / (a @ a) * a
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    assert abs(a_mod @ b) <= 1e-10 * scale * np.linalg.norm(b)
    np.testing.assert_allclose(modified_sum, a_mod + b_mod, atol=1e-12)


# ---------------------------------------------------------------------------
# configuration


def test_train_config_contracts():
    bad = [
        dict(lr=0.0),
        dict(aux_weight=-0.5),
        dict(batch_size=0),
        dict(atl_mode="surgery"),
        dict(weighting="focal"),
        dict(pcgrad_reduce="max"),
        dict(holdout="train"),
    ]
    for kwargs in bad:
        with pytest.raises(ContractError):
            TrainConfig(**kwargs)


# ---------------------------------------------------------------------------
# the loop


def test_training_is_deterministic(data, schema):
    cfg = TrainConfig(lr=0.01, seed=5, atl_mode="gcs")
    a = fit(tiny_spec("mmoe"), data, cfg, schema)
    b = fit(tiny_spec("mmoe"), data, cfg, schema)
    assert [s["loss_primary"] for s in a.steps] == [s["loss_primary"] for s in b.steps]
    assert a.val_gauc == b.val_gauc
    for n in a.model.store.names():
        assert np.array_equal(
            a.model.store.param(n).tensor.data, b.model.store.param(n).tensor.data
        ), n


def test_step_records_and_day_order(data, schema):
    res = fit(tiny_spec("mmoe"), data, schema=schema, cfg=TrainConfig(seed=2))
    days = [s["day"] for s in res.steps]
    assert days == sorted(days)
    assert [s["step"] for s in res.steps] == list(range(len(res.steps)))
    assert {"loss_primary", "loss_aux", "alpha", "conflicts"} <= set(res.steps[0])
    assert [d["eval_day"] for d in res.day_metrics] == [1, 2, 3]
    assert res.final is not None
    assert res.test_gauc == res.final.gauc
    # pure mixture families carry no joint-label objective
    assert set(res.steps[0]["loss_aux"]) == {"first", "linear", "dda"}


def test_transfer_family_logs_joint_label_loss(data, schema):
    res = fit(tiny_spec("moae"), data, schema=schema, cfg=TrainConfig(seed=2))
    assert set(res.steps[0]["loss_aux"]) == {"first", "linear", "dda", "cat"}


def test_zero_aux_weight_matches_primary_only_bitwise(data, schema):
    spec = tiny_spec("mmoe")
    off = fit(spec, data, TrainConfig(lr=0.02, seed=9, aux_weight=0.0), schema)
    solo = fit(spec, data, TrainConfig(lr=0.02, seed=9, primary_only=True), schema)
    for n in off.model.store.names():
        assert np.array_equal(
            off.model.store.param(n).tensor.data, solo.model.store.param(n).tensor.data
        ), n


def test_validation_holdout_matches_rolling_probe(data, schema):
    spec = tiny_spec("mmoe")
    probe = fit(spec, data, TrainConfig(lr=0.01, seed=4, holdout="test"), schema)
    val = fit(spec, data, TrainConfig(lr=0.01, seed=4, holdout="validation"), schema)
    assert probe.val_gauc is not None
    assert probe.val_gauc == val.final.gauc
    assert val.val_gauc == val.final.gauc


@pytest.mark.parametrize("mode", ["gcs", "pcgrad"])
def test_atl_modes_fill_their_records(mode, data, schema):
    res = fit(tiny_spec("moae"), data, TrainConfig(seed=3, atl_mode=mode), schema)
    first = res.steps[0]
    if mode == "gcs":
        assert set(first["alpha"]) == {"first", "linear", "dda", "cat"}
        assert all(0.0 < a < 1.0 for a in first["alpha"].values())
        assert first["conflicts"] is None
    else:
        assert first["alpha"] is None
        assert isinstance(first["conflicts"], int) and first["conflicts"] >= 0


def test_weighted_mode_changes_the_loss(data, schema):
    spec = tiny_spec("mmoe")
    binary = fit(spec, data, TrainConfig(seed=6), schema)
    weighted = fit(spec, data, TrainConfig(seed=6, weighting="weighted"), schema)
    # the target mechanism hands all credit to one click, so only the
    # fractional-credit objectives can tell the modes apart
    assert binary.steps[0]["loss_primary"] == weighted.steps[0]["loss_primary"]
    assert binary.steps[0]["loss_aux"]["linear"] != weighted.steps[0]["loss_aux"]["linear"]


def test_divergence_names_the_step(data, schema):
    with pytest.raises(NumericError, match=r"training step \d+ \(day \d+\)"):
        fit(tiny_spec("mmoe"), data, TrainConfig(lr=1e150, seed=0, batch_size=64), schema)


def test_divergence_in_evaluation_names_the_day(data, schema):
    # one batch per day: the step succeeds, the after-day scoring blows up
    with pytest.raises(NumericError, match=r"evaluation after day 0"):
        fit(tiny_spec("mmoe"), data, TrainConfig(lr=1e150, seed=0, batch_size=512), schema)


def test_training_needs_three_days(data, schema):
    with pytest.raises(ContractError, match=">= 3 days"):
        fit(tiny_spec("base"), data.day_range(0, 1), TrainConfig(), schema)


# ---------------------------------------------------------------------------
# greedy selection


def test_greedy_search_contracts(data):
    spec = tiny_spec("mmoe", aux=())
    cfg = TrainConfig(seed=0)
    with pytest.raises(ContractError):
        greedy_aux_search(spec, [], data, cfg)
    with pytest.raises(ContractError):
        greedy_aux_search(tiny_spec("base"), ["first"], data, cfg)
    with pytest.raises(ContractError):
        greedy_aux_search(spec, ["last"], data, cfg)
    with pytest.raises(ContractError):
        greedy_aux_search(spec, ["first", "first"], data, cfg)


def test_greedy_search_trace_shape(data, schema):
    spec = tiny_spec("moae", aux=(), cat_head=False)
    result = greedy_aux_search(
        spec, ["first", "linear", "cat"], data, TrainConfig(lr=0.01, seed=1, batch_size=512)
    )
    assert set(result.selected) <= {"first", "linear"}
    # the joint-label head only becomes eligible once some auxiliary
    # mechanism is in, so round zero never scores it
    assert "cat" not in result.trace[0]["candidates"]
    picked_rounds = [r for r in result.trace if r["picked"] is not None]
    gaucs = [r["best_gauc"] for r in picked_rounds]
    assert gaucs == sorted(gaucs)
    for earlier, later in zip(result.trace, result.trace[1:]):
        assert later["baseline_gauc"] == earlier["best_gauc"]
    if result.trace[-1]["picked"] is None:
        final = result.trace[-1]
        assert all(
            s is None or s <= final["baseline_gauc"] for s in final["candidates"].values()
        )
    assert result.cat_selected in (False, True)
    assert result.gauc_trace == gaucs
