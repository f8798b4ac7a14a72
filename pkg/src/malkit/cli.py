"""Experiment runner: dataset generation, training runs, sweeps, greedy
search, and report emission.

One JSON config file drives every subcommand. Artifacts are written under
content-addressed run directories, so re-running a config never clobbers a
different run and identical runs land on identical bytes.

Exit codes: 0 success, 2 bad config or input file, 3 numeric failure during
training, 4 no defined ranking metric on the held-out day.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np
from jsonschema import Draft202012Validator

from .attribution import MECHANISMS
from .datagen import Dataset, GenConfig, generate, read_dataset, summarize, write_dataset
from .errors import (
    ConfigError,
    ContractError,
    GenerationError,
    MetricUndefinedError,
    NumericError,
    ParseError,
)
from .metrics import UserRecord, group_lift, group_lift_csv
from .models import FAMILIES, ModelSpec
from .numcore import save_checkpoint
from .training import ATL_MODES, TrainConfig, TrainResult, fit, greedy_aux_search
from .util import canonical_json, content_id, derive_seed, run_tasks

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "out_dir": {"type": "string", "minLength": 1},
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "generate": {"type": "object"},
                "path": {"type": "string", "minLength": 1},
            },
            "minProperties": 1,
            "maxProperties": 1,
        },
        "model": {"type": "object"},
        "train": {"type": "object"},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "families": {"type": "array", "items": {"enum": list(FAMILIES)}, "minItems": 1},
                "targets": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "aux_weights": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "lrs": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "atl_modes": {"type": "array", "items": {"enum": list(ATL_MODES)}, "minItems": 1},
            },
        },
        "search": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "candidates": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            },
        },
    },
}


# ---------------------------------------------------------------------------
# config plumbing


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from None
    validator = Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: e.json_path)
    if errors:
        e = errors[0]
        raise ConfigError(f"config {e.json_path}: {e.message}")
    return data


def _gen_config(config: dict, seed: int) -> GenConfig:
    params = dict(config["dataset"].get("generate") or {})
    params.setdefault("seed", seed)
    try:
        return GenConfig(**params)
    except TypeError as e:
        raise ConfigError(f"config $.dataset.generate: {e}") from None
    except ContractError as e:
        raise ConfigError(f"config $.dataset.generate: {e}") from None


def _load_dataset(config: dict, seed: int, config_dir: Path) -> tuple[Dataset, dict]:
    src = config["dataset"]
    if "generate" in src:
        gen = _gen_config(config, seed)
        return generate(gen), {"generate": {**(src.get("generate") or {}), "seed": gen.seed}}
    path = Path(src["path"])
    if not path.is_absolute():
        path = config_dir / path
    if not path.exists():
        raise ConfigError(f"config $.dataset.path: file not found: {path}")
    return read_dataset(path), {"path": str(path)}


def _model_spec(config: dict) -> ModelSpec:
    model = config.get("model")
    if not model:
        raise ConfigError("config $.model: section required for this command")
    try:
        return ModelSpec.from_dict(model)
    except TypeError as e:
        raise ConfigError(f"config $.model: {e}") from None


def _train_config(config: dict, seed: int, **overrides) -> TrainConfig:
    params = dict(config.get("train") or {})
    if "seed" in params:
        raise ConfigError("config $.train.seed: set the seed at the top level or with --seed")
    params["seed"] = seed
    params.update(overrides)
    try:
        return TrainConfig(**params)
    except TypeError as e:
        raise ConfigError(f"config $.train: {e}") from None
    except ContractError as e:
        raise ConfigError(f"config $.train: {e}") from None


def _resolve_seed(config: dict, args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return int(config.get("seed", 0))


def _resolve_out(config: dict, args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(config.get("out_dir", "runs"))


# ---------------------------------------------------------------------------
# artifacts


def _run_artifact(
    out_dir: Path,
    dataset: Dataset,
    dataset_src: dict,
    spec: ModelSpec,
    cfg: TrainConfig,
    result: TrainResult,
) -> dict:
    fingerprint = dataset.fingerprint()
    snapshot = {
        "dataset": dataset_src,
        "fingerprint": fingerprint,
        "model": spec.to_dict(),
        "train": asdict(cfg),
    }
    run_id = content_id(snapshot)
    run_dir = out_dir / "runs" / run_id
    run_dir.mkdir(parents=True, exist_ok=True)

    complexity = summarize(dataset).complexity_ratio
    metrics = {
        "run_id": run_id,
        "family": spec.family,
        "target": spec.target,
        "aux": list(spec.aux),
        "cat_head": spec.cat_head,
        "atl_mode": cfg.atl_mode,
        "aux_weight": cfg.aux_weight,
        "lr": cfg.lr,
        "seed": cfg.seed,
        "fingerprint": fingerprint,
        "val_gauc": result.val_gauc,
        "test": result.final.to_dict() if result.final else None,
        "day_metrics": result.day_metrics,
        "complexity_ratio": {str(u): v for u, v in sorted(complexity.items())},
    }
    (run_dir / "config.json").write_text(canonical_json(snapshot) + "\n", encoding="utf-8")
    (run_dir / "metrics.json").write_text(canonical_json(metrics) + "\n", encoding="utf-8")
    with open(run_dir / "log.jsonl", "w", encoding="utf-8") as fh:
        for record in result.steps:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    save_checkpoint(result.model.store, run_dir / "checkpoint.bin")
    return metrics


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(config, args)
    out_dir = _resolve_out(config, args)
    gen = _gen_config(config, seed)
    d = generate(gen)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "dataset.csv"
    write_dataset(d, out_path)
    if not args.quiet:
        s = summarize(d)
        print(s.format())
        targets = gen.target_ratios()
        print("target ratios:   " + "  ".join(f"{m}={targets[m]:.4f}" for m in sorted(targets)))
        print(f"fingerprint: {d.fingerprint()}")
        print(f"wrote {out_path}")
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(config, args)
    out_dir = _resolve_out(config, args)
    dataset, dataset_src = _load_dataset(config, seed, Path(args.config).parent)
    spec = _model_spec(config)
    cfg = _train_config(config, seed)
    result = fit(spec, dataset, cfg)
    if result.final is None:
        raise MetricUndefinedError(
            "held-out day has no defined ranking metric (single-class labels)"
        )
    metrics = _run_artifact(out_dir, dataset, dataset_src, spec, cfg, result)
    if not args.quiet:
        print(
            f"run {metrics['run_id']}: family={spec.family} target={spec.target} "
            f"test_auc={result.final.auc:.4f} test_gauc={result.final.gauc:.4f} "
            f"val_gauc={_fmt(result.val_gauc)}"
        )
        print(f"artifact: {out_dir / 'runs' / metrics['run_id']}")
    return 0


def _fmt(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def _sweep_cell(args: tuple) -> dict:
    out_dir, dataset, dataset_src, model_base, train_base, cell = args
    family, target, aux_weight, lr, atl_mode, seed = cell
    model = dict(model_base)
    model.update(
        family=family,
        target=target,
        aux=[] if family == "base" else [m for m in MECHANISMS if m != target],
    )
    model.pop("cat_head", None)
    model.pop("transfer", None)
    spec = ModelSpec.from_dict(model)
    cfg_kwargs = dict(train_base)
    cfg_kwargs.update(seed=seed, aux_weight=aux_weight, lr=lr, atl_mode=atl_mode)
    cfg = TrainConfig(**cfg_kwargs)
    result = fit(spec, dataset, cfg)
    return _run_artifact(Path(out_dir), dataset, dataset_src, spec, cfg, result)


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(config, args)
    out_dir = _resolve_out(config, args)
    sweep = config.get("sweep") or {}
    families = sweep.get("families", list(FAMILIES))
    targets = sweep.get("targets", list(MECHANISMS))
    aux_weights = sweep.get("aux_weights", [None])
    lrs = sweep.get("lrs", [None])
    atl_modes = sweep.get("atl_modes", [None])
    dataset, dataset_src = _load_dataset(config, seed, Path(args.config).parent)

    train_base = dict(config.get("train") or {})
    if "seed" in train_base:
        raise ConfigError("config $.train.seed: set the seed at the top level or with --seed")
    defaults = TrainConfig()
    model_base = dict(config.get("model") or {})

    cells = []
    for family in families:
        for target in targets:
            for lam in aux_weights:
                for lr in lrs:
                    for atl in atl_modes:
                        lam_v = train_base.get("aux_weight", defaults.aux_weight) if lam is None else lam
                        lr_v = train_base.get("lr", defaults.lr) if lr is None else lr
                        atl_v = train_base.get("atl_mode", defaults.atl_mode) if atl is None else atl
                        cell_seed = derive_seed(seed, "sweep", family, target, lam_v, lr_v, atl_v)
                        cells.append((family, target, lam_v, lr_v, atl_v, cell_seed))

    work = [(str(out_dir), dataset, dataset_src, model_base, train_base, c) for c in cells]
    results = run_tasks(_sweep_cell, work)

    rows = sorted(
        results, key=lambda r: (FAMILIES.index(r["family"]), r["target"], r["aux_weight"], r["lr"])
    )
    csv_lines = ["family,target,atl_mode,aux_weight,lr,auc,gauc,val_gauc,run_id"]
    for r in rows:
        test = r["test"] or {}
        csv_lines.append(
            f"{r['family']},{r['target']},{r['atl_mode']},{r['aux_weight']:.17g},{r['lr']:.17g},"
            f"{test.get('auc', float('nan')):.17g},{test.get('gauc', float('nan')):.17g},"
            f"{(r['val_gauc'] if r['val_gauc'] is not None else float('nan')):.17g},{r['run_id']}"
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep_table.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")

    table = _sweep_text_table(rows, targets)
    (out_dir / "sweep_table.txt").write_text(table, encoding="utf-8")
    if not args.quiet:
        print(table, end="")
        print(f"wrote {out_dir / 'sweep_table.csv'} and sweep_table.txt ({len(rows)} cells)")
    return 0


def _sweep_text_table(rows: Sequence[dict], targets: Sequence[str]) -> str:
    """Aligned text: one row per family (best cell per target), plus
    difference-vs-base rows underneath."""
    targets = [t for t in targets]
    by_cell: dict[tuple[str, str], dict] = {}
    for r in rows:
        key = (r["family"], r["target"])
        best = by_cell.get(key)
        score = r["val_gauc"] if r["val_gauc"] is not None else float("-inf")
        if best is None or score > (best["val_gauc"] if best["val_gauc"] is not None else float("-inf")):
            by_cell[key] = r
    families = [f for f in FAMILIES if any(k[0] == f for k in by_cell)]

    def cell_text(family: str, target: str, base: dict | None) -> tuple[str, str]:
        r = by_cell.get((family, target))
        if r is None or not r["test"]:
            return "-", "-"
        auc, gauc = r["test"]["auc"], r["test"]["gauc"]
        if base is None:
            return f"{auc:.4f}", f"{gauc:.4f}"
        if not base.get("test"):
            return "-", "-"
        return f"{auc - base['test']['auc']:+.4f}", f"{gauc - base['test']['gauc']:+.4f}"

    header = ["family"] + [f"{t} {m}" for t in targets for m in ("AUC", "GAUC")]
    body = []
    for f in families:
        body.append([f] + [v for t in targets for v in cell_text(f, t, None)])
    if "base" in families:
        for f in families:
            if f == "base":
                continue
            base_rows = {t: by_cell.get(("base", t)) for t in targets}
            body.append(
                [f"d({f})"]
                + [v for t in targets for v in cell_text(f, t, base_rows[t] or {})]
            )
    widths = [max(len(str(r[i])) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + body]
    return "\n".join(lines) + "\n"


def cmd_search(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(config, args)
    out_dir = _resolve_out(config, args)
    dataset, _ = _load_dataset(config, seed, Path(args.config).parent)
    spec = _model_spec(config)
    cfg = _train_config(config, seed)
    search = config.get("search") or {}
    candidates = search.get("candidates")
    if not candidates:
        candidates = [m for m in MECHANISMS if m != spec.target] + ["cat"]
    result = greedy_aux_search(spec, candidates, dataset, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "search_trace.json"
    payload = {
        "family": spec.family,
        "target": spec.target,
        "candidates": list(candidates),
        "selected": list(result.selected),
        "cat_selected": result.cat_selected,
        "trace": result.trace,
    }
    trace_path.write_text(canonical_json(payload) + "\n", encoding="utf-8")
    if not args.quiet:
        picked = list(result.selected) + (["cat"] if result.cat_selected else [])
        print(f"selected auxiliaries: {picked if picked else '(none)'}")
        for r in result.trace:
            cands = "  ".join(f"{c}={_fmt(v)}" for c, v in sorted(r["candidates"].items()))
            print(f"round {r['round']}: baseline={_fmt(r['baseline_gauc'])} {cands} -> {r['picked']}")
        print(f"wrote {trace_path}")
    return 0


# ---------------------------------------------------------------------------
# report


def _load_artifacts(out_dir: Path) -> list[dict]:
    arts = []
    runs = out_dir / "runs"
    if runs.is_dir():
        for mpath in sorted(runs.glob("*/metrics.json")):
            try:
                arts.append(json.loads(mpath.read_text(encoding="utf-8")))
            except json.JSONDecodeError as e:
                raise ParseError(f"{mpath}: invalid JSON: {e.msg}") from None
    return arts


def _best(arts: list[dict]) -> dict:
    def key(a):
        v = a["val_gauc"]
        return (-(v if v is not None else float("-inf")), a["run_id"])

    return sorted(arts, key=key)[0]


def _md_table(headers: list[str], rows: list[list[str]]) -> str:
    out = ["| " + " | ".join(headers) + " |", "|" + "|".join("---" for _ in headers) + "|"]
    for r in rows:
        out.append("| " + " | ".join(r) + " |")
    return "\n".join(out)


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    arts = _load_artifacts(out_dir)
    lines = ["# Experiment report", ""]
    if not arts:
        lines.append("No run artifacts found.")
    else:
        lines += _report_families(arts)
        lines += _report_atl(arts)
        lines += _report_aux_weight(arts)
        lines += _report_group_lift(arts, out_dir)
    report_path = out_dir / "report.md"
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path.write_text("\n".join(lines).rstrip() + "\n", encoding="utf-8")
    if not args.quiet:
        print(f"wrote {report_path} ({len(arts)} artifacts)")
    return 0


def _report_families(arts: list[dict]) -> list[str]:
    targets = sorted({a["target"] for a in arts})
    families = [f for f in FAMILIES if any(a["family"] == f for a in arts)]
    headers = ["family"] + [f"{t} {m}" for t in targets for m in ("AUC", "GAUC")]
    best: dict[tuple[str, str], dict] = {}
    for f in families:
        for t in targets:
            cell = [a for a in arts if a["family"] == f and a["target"] == t and a["test"]]
            if cell:
                best[(f, t)] = _best(cell)
    rows = []
    for f in families:
        row = [f]
        for t in targets:
            a = best.get((f, t))
            row += ["-", "-"] if a is None else [f"{a['test']['auc']:.6f}", f"{a['test']['gauc']:.6f}"]
        rows.append(row)
    for f in families:
        if f == "base":
            continue
        row = [f"{f} minus base"]
        for t in targets:
            a, b = best.get((f, t)), best.get(("base", t))
            if a is None or b is None:
                row += ["-", "-"]
            else:
                row += [
                    f"{a['test']['auc'] - b['test']['auc']:+.6f}",
                    f"{a['test']['gauc'] - b['test']['gauc']:+.6f}",
                ]
        if "base" in families:
            rows.append(row)
    return ["## Ranking performance by family and target", "", _md_table(headers, rows), ""]


def _grouped_section(arts: list[dict], field: str, title: str) -> list[str]:
    pairs = sorted({(a["family"], a["target"]) for a in arts})
    rows = []
    for family, target in pairs:
        cell = [a for a in arts if a["family"] == family and a["target"] == target and a["test"]]
        values = sorted({a[field] for a in cell})
        if len(values) < 2:
            continue
        for v in values:
            a = _best([x for x in cell if x[field] == v])
            rows.append(
                [family, target, str(v), f"{a['test']['auc']:.6f}", f"{a['test']['gauc']:.6f}"]
            )
    if not rows:
        return []
    return [title, "", _md_table(["family", "target", field, "AUC", "GAUC"], rows), ""]


def _report_atl(arts: list[dict]) -> list[str]:
    return _grouped_section(arts, "atl_mode", "## Auxiliary-task learning modes")


def _report_aux_weight(arts: list[dict]) -> list[str]:
    return _grouped_section(arts, "aux_weight", "## Auxiliary weight ablation")


def _report_group_lift(arts: list[dict], out_dir: Path) -> list[str]:
    lines: list[str] = []
    targets = sorted({a["target"] for a in arts})
    for t in targets:
        moae = [a for a in arts if a["family"] == "moae" and a["target"] == t and a["test"]]
        base = [a for a in arts if a["family"] == "base" and a["target"] == t and a["test"]]
        paired = [
            (m, b)
            for m in moae
            for b in base
            if m["fingerprint"] == b["fingerprint"]
        ]
        if not paired:
            continue
        m, b = sorted(paired, key=lambda p: (p[0]["run_id"], p[1]["run_id"]))[0]

        def records(a: dict) -> dict[int, UserRecord]:
            return {
                int(u): UserRecord(int(u), r["clicks"], r["auc"])
                for u, r in a["test"]["per_user"].items()
            }

        complexity = {int(u): v for u, v in m["complexity_ratio"].items()}
        rows = group_lift(records(m), records(b), complexity)
        csv_path = out_dir / f"group_lift_{t}.csv"
        csv_path.write_text(group_lift_csv(rows), encoding="utf-8")
        if not lines:
            lines += ["## Conversion-path-complexity group lift", ""]
        lines += [f"Target {t} (bucket by per-user linear/last positive ratio):", ""]
        table_rows = [
            [str(r.bucket), f"({r.lo:g}, {r.hi:g}]", str(r.n_users), f"{r.delta_auc:+.6f}"]
            for r in rows
        ]
        lines += [_md_table(["bucket", "ratio range", "users", "delta AUC"], table_rows), ""]
    return lines


# ---------------------------------------------------------------------------
# entry point


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="malkit",
        description="Multi-attribution conversion modeling experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "gen": (cmd_gen, "generate a synthetic dataset and print its summary"),
        "train": (cmd_train, "train one model and write a run artifact"),
        "sweep": (cmd_sweep, "train a grid of families/targets and tabulate"),
        "search": (cmd_search, "greedy forward selection of auxiliary objectives"),
        "report": (cmd_report, "render markdown report from run artifacts"),
    }
    for name, (fn, help_text) in specs.items():
        p = sub.add_parser(name, help=help_text)
        if name != "report":
            p.add_argument("--config", required=True, help="JSON experiment config")
            p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", required=(name == "report"), default=None, help="output directory")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        # nonfinite values surface as NumericError; the numpy warnings
        # on the way there are noise
        with np.errstate(all="ignore"):
            return args.fn(args)
    except (ConfigError, ParseError, GenerationError, ContractError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except MetricUndefinedError as e:
        print(f"metric undefined: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
