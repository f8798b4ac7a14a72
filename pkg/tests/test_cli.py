"""End-to-end command-line behavior: exit codes, artifacts, and reports."""
import json
from pathlib import Path

import numpy as np
import pytest

from malkit.cli import main
from malkit.datagen import read_dataset, write_dataset

MODEL_DIMS = {"embed_dim": 3, "expert_widths": [6], "tower_widths": [5, 4], "attn_hidden": 4}
GEN_PARAMS = {"n_users": 50, "n_items": 25, "n_days": 4, "clicks_per_user_day": 4.0}


def _write(path: Path, config: dict) -> str:
    path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def dataset_csv(workdir):
    cfg = _write(
        workdir / "gen.json",
        {"seed": 3, "dataset": {"generate": GEN_PARAMS}, "out_dir": str(workdir / "data")},
    )
    assert main(["gen", "--config", cfg, "--quiet"]) == 0
    return workdir / "data" / "dataset.csv"


def _train_config(dataset_csv: Path, out: Path, family: str, extra_train: dict | None = None) -> dict:
    return {
        "seed": 5,
        "dataset": {"path": str(dataset_csv)},
        "out_dir": str(out),
        "model": {"family": family, "target": "last", **MODEL_DIMS}
        | ({} if family == "base" else {"aux": ["first", "linear", "dda"]}),
        "train": {"batch_size": 512, "lr": 0.02} | (extra_train or {}),
    }


@pytest.fixture(scope="module")
def trained(workdir, dataset_csv):
    """One base and one moae artifact sharing a dataset fingerprint."""
    out = workdir / "exp"
    for family in ("base", "moae"):
        cfg = _write(workdir / f"train_{family}.json", _train_config(dataset_csv, out, family))
        assert main(["train", "--config", cfg, "--quiet"]) == 0
    return out


# ---------------------------------------------------------------------------
# gen


def test_gen_is_deterministic(workdir, dataset_csv):
    cfg = _write(
        workdir / "gen2.json",
        {"seed": 3, "dataset": {"generate": GEN_PARAMS}, "out_dir": str(workdir / "data2")},
    )
    assert main(["gen", "--config", cfg, "--quiet"]) == 0
    assert (workdir / "data2" / "dataset.csv").read_bytes() == dataset_csv.read_bytes()


def test_gen_prints_summary(workdir, capsys):
    cfg = _write(
        workdir / "gen3.json",
        {"seed": 4, "dataset": {"generate": GEN_PARAMS}, "out_dir": str(workdir / "data3")},
    )
    assert main(["gen", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "target ratios:" in out
    assert "fingerprint:" in out
    assert "wrote" in out


def test_gen_quiet_prints_nothing(workdir, capsys):
    cfg = _write(
        workdir / "gen4.json",
        {"seed": 4, "dataset": {"generate": GEN_PARAMS}, "out_dir": str(workdir / "data4")},
    )
    assert main(["gen", "--config", cfg, "--quiet"]) == 0
    assert capsys.readouterr().out == ""


# ---------------------------------------------------------------------------
# train artifacts


def test_train_artifact_layout(trained):
    run_dirs = sorted((trained / "runs").iterdir())
    assert len(run_dirs) == 2
    for run_dir in run_dirs:
        names = sorted(p.name for p in run_dir.iterdir())
        assert names == ["checkpoint.bin", "config.json", "log.jsonl", "metrics.json"]
        metrics = json.loads((run_dir / "metrics.json").read_text())
        assert metrics["run_id"] == run_dir.name
        assert metrics["test"] is not None
        assert 0.0 <= metrics["test"]["gauc"] <= 1.0
        steps = [json.loads(line) for line in (run_dir / "log.jsonl").read_text().splitlines()]
        assert [s["step"] for s in steps] == list(range(len(steps)))
        assert len(steps) >= 1
        assert (run_dir / "checkpoint.bin").stat().st_size > 0
        snapshot = json.loads((run_dir / "config.json").read_text())
        assert snapshot["fingerprint"] == metrics["fingerprint"]


def test_train_is_idempotent(workdir, dataset_csv, trained):
    before = sorted((trained / "runs").iterdir())
    cfg = _write(workdir / "train_again.json", _train_config(dataset_csv, trained, "base"))
    assert main(["train", "--config", cfg, "--quiet"]) == 0
    after = sorted((trained / "runs").iterdir())
    assert before == after


def test_seed_override_makes_a_new_run(workdir, dataset_csv, tmp_path, capsys):
    out = tmp_path / "exp"
    cfg = _write(workdir / "train_seeded.json", _train_config(dataset_csv, out, "base"))
    assert main(["train", "--config", cfg, "--quiet"]) == 0
    assert main(["train", "--config", cfg, "--seed", "77", "--quiet"]) == 0
    assert len(list((out / "runs").iterdir())) == 2


def test_train_prints_run_line(workdir, dataset_csv, tmp_path, capsys):
    cfg = _write(
        workdir / "train_loud.json", _train_config(dataset_csv, tmp_path / "exp", "base")
    )
    assert main(["train", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "family=base" in out and "test_gauc=" in out and "artifact:" in out


# ---------------------------------------------------------------------------
# exit codes


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.json")]) == 2
    assert "config file not found" in capsys.readouterr().err


def test_invalid_json_exits_2(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"dataset": \n', encoding="utf-8")
    assert main(["train", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "invalid JSON" in err and ":2:" in err


@pytest.mark.parametrize(
    "config,needle",
    [
        ({"dataset": {"generate": {}, "path": "x.csv"}}, "$.dataset"),
        ({"dataset": {}}, "$.dataset"),
        ({}, "$"),
        ({"dataset": {"generate": {}}, "volume": 11}, "$"),
        ({"dataset": {"generate": {}}, "sweep": {"families": ["vgg"]}}, "$.sweep.families"),
        ({"dataset": {"generate": {}}, "seed": -1}, "$.seed"),
    ],
)
def test_schema_violations_exit_2(tmp_path, capsys, config, needle):
    path = _write(tmp_path / "bad.json", config)
    assert main(["train", "--config", path]) == 2
    assert f"config {needle}" in capsys.readouterr().err


def test_bad_model_section_exits_2(tmp_path, dataset_csv, capsys):
    config = _train_config(dataset_csv, tmp_path, "base")
    config["model"]["family"] = "deep"
    assert main(["train", "--config", _write(tmp_path / "c.json", config)]) == 2
    assert "deep" in capsys.readouterr().err


def test_train_seed_in_config_exits_2(tmp_path, dataset_csv, capsys):
    config = _train_config(dataset_csv, tmp_path, "base", {"seed": 1})
    assert main(["train", "--config", _write(tmp_path / "c.json", config)]) == 2
    assert "top level" in capsys.readouterr().err


def test_missing_dataset_file_exits_2(tmp_path, capsys):
    config = _train_config(tmp_path / "ghost.csv", tmp_path, "base")
    assert main(["train", "--config", _write(tmp_path / "c.json", config)]) == 2
    assert "file not found" in capsys.readouterr().err


def test_numeric_blowup_exits_3(tmp_path, dataset_csv, capsys):
    config = _train_config(dataset_csv, tmp_path / "exp", "base", {"lr": 1e154, "batch_size": 64})
    assert main(["train", "--config", _write(tmp_path / "c.json", config)]) == 3
    assert "numeric failure" in capsys.readouterr().err


def test_single_class_holdout_exits_4(tmp_path, dataset_csv, capsys):
    d = read_dataset(dataset_csv)
    d.weights["last"][d.day == d.n_days - 1] = 0.0
    flat_csv = tmp_path / "flat.csv"
    write_dataset(d, flat_csv)
    config = _train_config(flat_csv, tmp_path / "exp", "base")
    assert main(["train", "--config", _write(tmp_path / "c.json", config)]) == 4
    assert "metric undefined" in capsys.readouterr().err
    assert not (tmp_path / "exp" / "runs").exists()


# ---------------------------------------------------------------------------
# sweep


@pytest.fixture(scope="module")
def swept(workdir, dataset_csv):
    out = workdir / "sweep"
    config = {
        "seed": 9,
        "dataset": {"path": str(dataset_csv)},
        "out_dir": str(out),
        "model": MODEL_DIMS,
        "train": {"batch_size": 512, "lr": 0.02},
        "sweep": {"families": ["base", "moae"], "targets": ["last"]},
    }
    cfg = _write(workdir / "sweep.json", config)
    assert main(["sweep", "--config", cfg, "--quiet"]) == 0
    return out


def test_sweep_writes_table_and_artifacts(swept):
    lines = (swept / "sweep_table.csv").read_text().splitlines()
    assert lines[0] == "family,target,atl_mode,aux_weight,lr,auc,gauc,val_gauc,run_id"
    assert len(lines) == 3
    run_ids = {line.split(",")[-1] for line in lines[1:]}
    assert run_ids == {p.name for p in (swept / "runs").iterdir()}
    # csv floats reproduce the artifact values exactly
    for line in lines[1:]:
        parts = line.split(",")
        metrics = json.loads((swept / "runs" / parts[-1] / "metrics.json").read_text())
        assert float(parts[5]) == metrics["test"]["auc"]
        assert float(parts[6]) == metrics["test"]["gauc"]


def test_sweep_text_table_has_delta_rows(swept):
    table = (swept / "sweep_table.txt").read_text()
    lines = table.splitlines()
    assert lines[0].startswith("family") and "last AUC" in lines[0] and "last GAUC" in lines[0]
    assert any(line.startswith("d(moae)") for line in lines)
    delta = next(line for line in lines if line.startswith("d(moae)"))
    assert "+" in delta or "-" in delta


# ---------------------------------------------------------------------------
# search


def test_search_writes_trace(workdir, dataset_csv, capsys):
    out = workdir / "search"
    config = {
        "seed": 2,
        "dataset": {"path": str(dataset_csv)},
        "out_dir": str(out),
        "model": {"family": "moae", "target": "last", **MODEL_DIMS},
        "train": {"batch_size": 512, "lr": 0.02},
        "search": {"candidates": ["linear", "cat"]},
    }
    cfg = _write(workdir / "search.json", config)
    assert main(["search", "--config", cfg]) == 0
    printed = capsys.readouterr().out
    assert "selected auxiliaries:" in printed
    trace = json.loads((out / "search_trace.json").read_text())
    assert trace["candidates"] == ["linear", "cat"]
    assert set(trace["selected"]) <= {"linear"}
    assert "cat" not in trace["trace"][0]["candidates"]
    for r in trace["trace"]:
        assert set(r) == {"round", "baseline_gauc", "candidates", "picked", "best_gauc"}


# ---------------------------------------------------------------------------
# report


def test_report_tables_match_artifacts(trained, capsys):
    assert main(["report", "--out", str(trained)]) == 0
    assert "wrote" in capsys.readouterr().out
    text = (trained / "report.md").read_text()
    assert "## Ranking performance by family and target" in text

    by_family = {}
    for run_dir in (trained / "runs").iterdir():
        m = json.loads((run_dir / "metrics.json").read_text())
        by_family[m["family"]] = m
    lines = text.splitlines()
    for family in ("base", "moae"):
        row = next(l for l in lines if l.startswith(f"| {family} |"))
        cells = [c.strip() for c in row.strip("|").split("|")]
        assert abs(float(cells[1]) - by_family[family]["test"]["auc"]) < 1e-6
        assert abs(float(cells[2]) - by_family[family]["test"]["gauc"]) < 1e-6
    delta_row = next(l for l in lines if l.startswith("| moae minus base |"))
    cells = [c.strip() for c in delta_row.strip("|").split("|")]
    want = by_family["moae"]["test"]["gauc"] - by_family["base"]["test"]["gauc"]
    assert abs(float(cells[2]) - want) < 1e-6


def test_report_emits_group_lift(trained):
    text = (trained / "report.md").read_text()
    assert "## Conversion-path-complexity group lift" in text
    csv_path = trained / "group_lift_last.csv"
    assert csv_path.exists()
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "bucket,lo,hi,n_users,delta_auc"
    md_rows = [l for l in text.splitlines() if l.startswith("| ") and "(" in l and "]" in l]
    assert len(md_rows) == len(lines) - 1 > 0


def test_report_on_empty_dir(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path), "--quiet"]) == 0
    assert "No run artifacts found." in (tmp_path / "report.md").read_text()
