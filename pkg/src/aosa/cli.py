"""Command-line front end: synth, run, bound, and report subcommands.

A run is configured by a single self-contained JSON file so it can be
reproduced from that one artifact; seeds are always explicit.  Relative
output paths resolve against $AOSA_OUTPUT_ROOT when that variable is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AosaError, ConfigError, DataError
from .feature_store import (
    FeatureStore,
    SyntheticSpec,
    generate_synthetic,
    load_feature_store,
    save_feature_store,
)
from .model import TrainConfig
from .protocol import (
    ProtocolConfig,
    RoundReport,
    run_protocol,
    write_rounds_csv,
    read_rounds_csv,
)
from .theory import (
    default_verification_spec,
    verify_bound_grid,
    write_grid_csv,
)

OUTPUT_ROOT_ENV = "AOSA_OUTPUT_ROOT"

MODEL_SUBSTITUTION_NOTE = (
    "classifier is multinomial-logistic on stored features "
    "(not an image network trained on raw images)"
)

AGGREGATE_CSV_HEADER = (
    "round,precision_mean,precision_std,recall_cum_mean,recall_cum_std,"
    "test_accuracy_mean,test_accuracy_std,known_selected_mean,known_selected_std,"
    "labeled_size_mean,labeled_size_std,candidate_set_size_mean,candidate_set_size_std"
)

_SYNTH_FIELDS = {
    "n_clusters": int,
    "known_clusters": int,
    "per_cluster": int,
    "dim": int,
    "cluster_separation": float,
    "noise_sigma": float,
    "label_flip_rate": float,
    "target_slack": float,
    "seed": int,
}

_MODEL_FIELDS = {
    "epochs": int,
    "learning_rate": float,
    "lr_decay": float,
    "decay_every": int,
    "batch_size": int,
    "seed": int,
}

_RUN_REQUIRED = {
    "dataset": dict,
    "known_classes": list,
    "init_fraction": float,
    "test_fraction": float,
    "K": int,
    "B": int,
    "T": int,
    "strategy": str,
    "seeds": list,
    "output_dir": str,
}

_RUN_OPTIONAL = {
    "prefilter": bool,
    "use_invalid_neighbors": bool,
    "model": dict,
}

_BOUND_FIELDS = {
    "K": list,
    "e": list,
    "alpha": float,
    "trials": int,
    "seed": int,
    "spec": dict,
}


def _load_json(path: str | os.PathLike) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return obj


def _coerce(fields: dict[str, type], obj: dict, where: str) -> dict:
    """Check field names and coerce numeric types; rejects unknown keys."""
    unknown = set(obj) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    out = {}
    for key, value in obj.items():
        want = fields[key]
        if want is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            out[key] = float(value)
        elif want is int and isinstance(value, int) and not isinstance(value, bool):
            out[key] = value
        elif want in (bool, str, list, dict) and isinstance(value, want):
            out[key] = value
        else:
            raise ConfigError(f"{where}: field {key!r} must be {want.__name__}")
    return out


def parse_synthetic_spec(obj: dict, where: str = "synthetic spec") -> SyntheticSpec:
    values = _coerce(_SYNTH_FIELDS, obj, where)
    missing = set(_SYNTH_FIELDS) - set(values)
    if missing:
        raise ConfigError(f"{where}: missing field(s) {sorted(missing)}")
    return SyntheticSpec(**values)


def _parse_model(obj: dict) -> TrainConfig:
    return TrainConfig(**_coerce(_MODEL_FIELDS, obj, "model config"))


def _resolve_out(path: str | os.PathLike) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def load_run_config(path: str | os.PathLike) -> dict:
    """Validate a run-config file; returns the raw dict with defaults filled."""
    obj = _load_json(path)
    allowed = {**_RUN_REQUIRED, **_RUN_OPTIONAL}
    values = _coerce(allowed, obj, str(path))
    missing = set(_RUN_REQUIRED) - set(values)
    if missing:
        raise ConfigError(f"{path}: missing field(s) {sorted(missing)}")
    dataset = values["dataset"]
    if set(dataset) not in ({"path"}, {"synthetic"}):
        raise ConfigError(
            f"{path}: dataset must be {{'path': ...}} or {{'synthetic': {{...}}}}"
        )
    if "synthetic" in dataset:
        parse_synthetic_spec(dataset["synthetic"], f"{path}: dataset.synthetic")
    if not values["seeds"] or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in values["seeds"]
    ):
        raise ConfigError(f"{path}: seeds must be a non-empty list of integers")
    if len(set(values["seeds"])) != len(values["seeds"]):
        raise ConfigError(f"{path}: seeds must be distinct")
    if not all(
        isinstance(c, int) and not isinstance(c, bool) for c in values["known_classes"]
    ):
        raise ConfigError(f"{path}: known_classes must be a list of integers")
    values.setdefault("prefilter", False)
    values.setdefault("use_invalid_neighbors", True)
    values["model"] = _parse_model(values.get("model", {}))
    return values


def _load_dataset(dataset: dict) -> FeatureStore:
    if "path" in dataset:
        path = dataset["path"]
        if not os.path.exists(path):
            raise ConfigError(f"dataset path does not exist: {path}")
        return load_feature_store(path)
    return generate_synthetic(parse_synthetic_spec(dataset["synthetic"]))


def _aggregate(per_seed: list[list[RoundReport]]) -> list[dict[str, float]]:
    """Mean and sample std per round across seeds, over the common round count."""
    n_rounds = min(len(reports) for reports in per_seed)
    rows = []
    for i in range(n_rounds):
        row: dict[str, float] = {"round": per_seed[0][i].round}
        for name in (
            "precision",
            "recall_cumulative",
            "test_accuracy",
            "known_selected",
            "labeled_size",
            "candidate_set_size",
        ):
            vals = np.asarray([getattr(r[i], name) for r in per_seed], dtype=np.float64)
            row[f"{name}_mean"] = float(vals.mean())
            row[f"{name}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        rows.append(row)
    return rows


def _write_aggregate(rows: list[dict[str, float]], path: Path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(AGGREGATE_CSV_HEADER + "\n")
        for row in rows:
            fh.write(
                f"{int(row['round'])},{row['precision_mean']!r},{row['precision_std']!r},"
                f"{row['recall_cumulative_mean']!r},{row['recall_cumulative_std']!r},"
                f"{row['test_accuracy_mean']!r},{row['test_accuracy_std']!r},"
                f"{row['known_selected_mean']!r},{row['known_selected_std']!r},"
                f"{row['labeled_size_mean']!r},{row['labeled_size_std']!r},"
                f"{row['candidate_set_size_mean']!r},{row['candidate_set_size_std']!r}\n"
            )
    os.replace(tmp, path)


def _write_summary(
    path: Path,
    cfg: dict,
    truncated: dict[int, bool],
    n_total_known: dict[int, int],
    wall_time_s: float,
) -> None:
    lines = [
        f"package_version: {__version__}",
        f"strategy: {cfg['strategy']}",
        f"dataset: {json.dumps(cfg['dataset'], sort_keys=True)}",
        f"known_classes: {sorted(cfg['known_classes'])}",
        f"init_fraction: {cfg['init_fraction']!r}",
        f"test_fraction: {cfg['test_fraction']!r}",
        f"K: {cfg['K']}",
        f"B: {cfg['B']}",
        f"T: {cfg['T']}",
        f"prefilter: {str(cfg['prefilter']).lower()}",
        f"use_invalid_neighbors: {str(cfg['use_invalid_neighbors']).lower()}",
        f"model: {json.dumps(asdict(cfg['model']), sort_keys=True)}",
        f"seeds: {cfg['seeds']}",
        f"n_total_known: {[n_total_known[s] for s in cfg['seeds']]}",
        f"truncated: [{', '.join(str(truncated[s]).lower() for s in cfg['seeds'])}]",
        f"wall_time_s: {wall_time_s:.3f}",
        f"model_substitution: {MODEL_SUBSTITUTION_NOTE}",
    ]
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_summary(path: str | os.PathLike) -> dict[str, str]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if ": " in line:
                key, value = line.split(": ", 1)
                out[key.strip()] = value.strip()
    return out


def cmd_synth(spec_path: str, out_path: str) -> None:
    spec = parse_synthetic_spec(_load_json(spec_path), str(spec_path))
    store = generate_synthetic(spec)
    out = _resolve_out(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_feature_store(store, out)


def cmd_run(
    config_path: str,
    out_override: str | None = None,
    seed_override: int | None = None,
) -> Path:
    """Run the protocol for every configured seed; returns the output directory."""
    started = time.perf_counter()
    cfg = load_run_config(config_path)
    if out_override is not None:
        cfg["output_dir"] = out_override
    if seed_override is not None:
        cfg["seeds"] = [seed_override]
    store = _load_dataset(cfg["dataset"])
    out_dir = _resolve_out(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    per_seed: list[list[RoundReport]] = []
    truncated: dict[int, bool] = {}
    n_total_known: dict[int, int] = {}
    for seed in cfg["seeds"]:
        proto_cfg = ProtocolConfig(
            rounds=cfg["T"],
            budget=cfg["B"],
            neighbors=cfg["K"],
            strategy=cfg["strategy"],
            known_classes=frozenset(cfg["known_classes"]),
            init_fraction=cfg["init_fraction"],
            test_fraction=cfg["test_fraction"],
            seed=seed,
            model=cfg["model"],
            prefilter=cfg["prefilter"],
            use_invalid_neighbors=cfg["use_invalid_neighbors"],
        )
        result = run_protocol(proto_cfg, store)
        seed_dir = out_dir / f"seed_{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        write_rounds_csv(result.reports, seed_dir / "rounds.csv")
        per_seed.append(list(result.reports))
        truncated[seed] = result.truncated
        n_total_known[seed] = result.n_total_known

    _write_aggregate(_aggregate(per_seed), out_dir / "aggregate.csv")
    _write_summary(
        out_dir / "summary.txt",
        cfg,
        truncated,
        n_total_known,
        time.perf_counter() - started,
    )
    return out_dir


def cmd_bound(grid_path: str, out_path: str) -> None:
    obj = _load_json(grid_path)
    values = _coerce(_BOUND_FIELDS, obj, str(grid_path))
    trials = values.get("trials", 10_000)
    alpha = values.get("alpha", 0.5)
    seed = values.get("seed", 0)
    spec = (
        parse_synthetic_spec(values["spec"], f"{grid_path}: spec")
        if "spec" in values
        else default_verification_spec()
    )
    grid = {}
    if "K" in values:
        grid["K"] = values["K"]
    if "e" in values:
        grid["e"] = values["e"]
    rows = verify_bound_grid(grid, spec, trials, seed=seed, alpha=alpha)
    out = _resolve_out(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_grid_csv(rows, out)


def _final_row_stats(run_dir: Path) -> dict[str, float | str]:
    agg_path = run_dir / "aggregate.csv"
    summary = read_summary(run_dir / "summary.txt")
    try:
        with open(agg_path, "r", encoding="utf-8", newline="") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if lines[0] != AGGREGATE_CSV_HEADER:
            raise ValueError("unexpected header")
        last = lines[-1].split(",")
        header = AGGREGATE_CSV_HEADER.split(",")
        vals = dict(zip(header, last))
        return {
            "strategy": summary.get("strategy", run_dir.name),
            "accuracy_mean": float(vals["test_accuracy_mean"]),
            "accuracy_std": float(vals["test_accuracy_std"]),
            "precision_mean": float(vals["precision_mean"]),
            "precision_std": float(vals["precision_std"]),
            "recall_mean": float(vals["recall_cum_mean"]),
            "recall_std": float(vals["recall_cum_std"]),
        }
    except (ValueError, IndexError, KeyError) as exc:
        raise DataError(f"corrupt aggregate file {agg_path}: {exc}") from exc


def cmd_report(run_dir: str, out_path: str | None = None) -> str:
    """Render final-round metrics per strategy, sorted by accuracy."""
    root = Path(run_dir)
    if not root.exists():
        raise ConfigError(f"run directory does not exist: {run_dir}")
    if (root / "aggregate.csv").exists():
        run_dirs = [root]
    else:
        run_dirs = sorted(
            d for d in root.iterdir() if d.is_dir() and (d / "aggregate.csv").exists()
        )
    if not run_dirs:
        raise DataError(f"no completed runs under {run_dir}")
    rows = [_final_row_stats(d) for d in run_dirs]
    rows.sort(key=lambda r: -r["accuracy_mean"])
    header = f"{'strategy':<14}{'final_accuracy':>20}{'final_precision':>20}{'final_recall':>20}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r['strategy']:<14}"
            f"{r['accuracy_mean']:>12.4f} ± {r['accuracy_std']:<5.4f}"
            f"{r['precision_mean']:>12.4f} ± {r['precision_std']:<5.4f}"
            f"{r['recall_mean']:>12.4f} ± {r['recall_std']:<5.4f}"
        )
    table = "\n".join(lines) + "\n"
    if out_path is not None:
        out = _resolve_out(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = f"{out}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(table)
        os.replace(tmp, out)
    else:
        sys.stdout.write(table)
    return table


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aosa",
        description="Active open-set annotation: synthesize data, run query "
        "protocols, verify the detection-error bound, and summarize results.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic feature store")
    p_synth.add_argument("--spec", required=True, help="synthetic spec JSON file")
    p_synth.add_argument("--out", required=True, help="output feature-store path")

    p_run = sub.add_parser("run", help="run the annotation protocol")
    p_run.add_argument("--config", required=True, help="run config JSON file")
    p_run.add_argument("--out", default=None, help="override output directory")
    p_run.add_argument(
        "--seed-override", type=int, default=None, help="run a single seed"
    )

    p_bound = sub.add_parser("bound", help="verify the detection-error bound")
    p_bound.add_argument("--grid", required=True, help="grid JSON file")
    p_bound.add_argument("--out", default="bound_results.csv", help="output CSV path")

    p_report = sub.add_parser("report", help="summarize completed runs")
    p_report.add_argument("--run-dir", required=True, help="run directory (or parent)")
    p_report.add_argument("--out", default=None, help="write table to a file")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            cmd_synth(args.spec, args.out)
        elif args.command == "run":
            cmd_run(args.config, args.out, args.seed_override)
        elif args.command == "bound":
            cmd_bound(args.grid, args.out)
        elif args.command == "report":
            cmd_report(args.run_dir, args.out)
    except (AosaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
