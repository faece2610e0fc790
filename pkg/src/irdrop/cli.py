"""Command-line entry point: ``irdrop <subcommand> [--config FILE] [flags] --out DIR``.

Values resolve as dataclass defaults < config file (YAML or JSON) < flags.
Every run writes ``resolved_config.json`` into its output directory; feeding
that file back through ``--config`` repeats the run.

Exit codes: 0 success, 2 usage, 3 validation/parse failure, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml

from .baselines.cnn import DEFAULT_TILE_UM, CnnConfig
from .baselines.gbt import GbtConfig
from .bench import BENCH_COLUMNS, runtime_bench, write_bench_csv
from .data import CSV_COLUMNS, LABEL_COLUMN, FeatureSet, SplitSpec, load_dataset, save_dataset, split_dataset
from .exceptions import NumericError, ParseError, ShapeError, ValidationError
from .gnn import GnnConfig
from .graph import DEFAULT_THRESHOLD_UM, build_graph, degree_rank
from .metrics import compute_report
from .pipeline import MODEL_KINDS, FittedModel, fit_model
from .synth import SynthConfig, synthesize

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3, 4

SECTIONS = {"synth": SynthConfig, "split": SplitSpec, "gnn": GnnConfig, "gbt": GbtConfig, "cnn": CnnConfig}
MODEL_SECTION = {"gcn": "gnn", "gat": "gnn", "gin": "gnn", "gbt": "gbt", "cnn": "cnn"}
# Model architecture comes from the top-level ``model`` key, not the gnn section.
_SKIP_FIELDS = {"gnn": {"arch"}}

SCHEMAS = f"""\
CSV schemas
  dataset.csv      {', '.join(CSV_COLUMNS)}, {LABEL_COLUMN} (label optional; blank = unlabelled)
                   units: um, ohm, W, A, s, mV
  degree_rank_t<T>.csv   rank, degree            (rank 1 = highest degree)
  graph_stats.csv  threshold_um, n_nodes, n_edges, mean_degree, max_degree
  history.csv      step, loss, train_mae_mv, val_mae_mv, best_val_mae_mv
  split.csv        net_id, split             (train | val | test)
  predictions.csv  net_id, pred_mv           (input order)
  errors.csv       net_id, label_mv, pred_mv, error_mv, abs_error_mv, violation
  bench.csv        {', '.join(BENCH_COLUMNS)}
"""


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- config


def _coerce(value, default, key: str):
    """Convert a config/flag value to the type of the field's default."""
    try:
        if isinstance(default, bool):
            if isinstance(value, str) and value.lower() in ("true", "false"):
                return value.lower() == "true"
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise TypeError
            return int(float(value))
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, tuple):
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return tuple(int(v) for v in value)
        return str(value)
    except (TypeError, ValueError):
        raise ValidationError(f"config key {key!r}: cannot use {value!r} (expected {type(default).__name__})") from None


def _section_fields(section: str) -> Dict[str, object]:
    skip = _SKIP_FIELDS.get(section, set())
    return {f.name: f.default for f in dataclasses.fields(SECTIONS[section]) if f.name not in skip}


def _load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: not valid YAML/JSON: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    return data


class Command:
    """Declarative description of one subcommand's configurable surface."""

    def __init__(self, name: str, top: Dict[str, object], sections: Sequence[str], required: Sequence[str] = ()):
        self.name = name
        self.top = top  # key -> default
        self.sections = tuple(sections)
        self.required = tuple(required) + ("out",)

    def resolve(self, args: argparse.Namespace) -> dict:
        raw = _load_config_file(getattr(args, "config", None))
        cfg_cmd = raw.pop("command", self.name)
        if cfg_cmd != self.name:
            raise UsageError(f"config was written for {cfg_cmd!r}, not {self.name!r}")
        unknown = [k for k in raw if k not in self.top and k not in self.sections]
        if unknown:
            raise UsageError(f"unknown config keys for {self.name}: {sorted(unknown)}")

        resolved = {"command": self.name}
        for key, default in self.top.items():
            value = raw.get(key, default)
            flag = getattr(args, key, None)
            if flag is not None:
                value = flag
            resolved[key] = value
        for key in self.required:
            if resolved.get(key) in (None, ""):
                raise UsageError(f"--{key.replace('_', '-')} is required (flag or config key)")

        model_flags = {k[len("model."):]: v for k, v in vars(args).items() if k.startswith("model.") and v is not None}
        active_model = MODEL_SECTION.get(str(resolved.get("model", "")).lower())
        for section in self.sections:
            fields = _section_fields(section)
            given = raw.get(section) or {}
            if not isinstance(given, dict):
                raise UsageError(f"config section {section!r} must be a mapping")
            bad = [k for k in given if k not in fields]
            if bad:
                raise UsageError(f"unknown keys in config section {section!r}: {sorted(bad)}")
            values = {k: _coerce(given.get(k, d), d, f"{section}.{k}") for k, d in fields.items()}
            for k, v in vars(args).items():
                if k.startswith(section + ".") and v is not None:
                    name = k.split(".", 1)[1]
                    values[name] = _coerce(v, fields[name], f"--{name}")
            # bench trains several kinds at once, so shared flags go to each of them
            if section == active_model or ("model" not in self.top and section in ("gnn", "gbt", "cnn")):
                for name, v in model_flags.items():
                    if name in fields:
                        values[name] = _coerce(v, fields[name], f"--{name}")
            resolved[section] = values
        if model_flags and "model" in self.top:
            fields = _section_fields(active_model) if active_model else {}
            stray = sorted(f"--{k.replace('_', '-')}" for k in model_flags if k not in fields)
            if stray:
                raise UsageError(f"not valid for model {resolved.get('model')!r}: {', '.join(stray)}")
        return resolved


def _add_dataclass_flags(parser, section: str, rename: Dict[str, str] = {}, dest_prefix: Optional[str] = None, seen=None):
    seen = set() if seen is None else seen
    group = parser.add_argument_group(f"{section} options")
    for name, default in _section_fields(section).items():
        flag = rename.get(name, name.replace("_", "-"))
        if flag in seen:
            continue
        seen.add(flag)
        dest = f"{dest_prefix or section}.{name}"
        if isinstance(default, bool):
            group.add_argument(f"--{flag}", dest=dest, action=argparse.BooleanOptionalAction, default=None)
        else:
            kind = "comma list" if isinstance(default, tuple) else type(default).__name__
            group.add_argument(f"--{flag}", dest=dest, default=None, metavar=kind.upper().replace(" ", "_"),
                               help=f"default {','.join(map(str, default)) if isinstance(default, tuple) else default}")


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _out_dir(resolved: dict) -> Path:
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "resolved_config.json", resolved)
    return out


def _features(value) -> str:
    try:
        return FeatureSet.parse(value).value
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _model_kind(value) -> str:
    kind = str(value).lower()
    if kind not in MODEL_KINDS:
        raise UsageError(f"unknown model {value!r}; choose from {', '.join(MODEL_KINDS)}")
    return kind


def _float_list(text, what: str) -> List[float]:
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [t for t in str(text).split(",") if t.strip()]
    try:
        return [float(t) for t in items]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "" if np.isnan(x) else repr(x)


# --------------------------------------------------------------------------- commands

GEN = Command("gen", {"out": None}, ["synth"])
GRAPH_STATS = Command("graph-stats", {"data": None, "thresholds": None, "out": None}, [], required=["data", "thresholds"])
TRAIN = Command(
    "train",
    {"data": None, "model": "gcn", "features": "setB", "threshold": DEFAULT_THRESHOLD_UM, "tile_um": DEFAULT_TILE_UM, "out": None},
    ["split", "gnn", "gbt", "cnn"],
    required=["data"],
)
PREDICT = Command("predict", {"checkpoint": None, "data": None, "out": None}, [], required=["checkpoint", "data"])
EVAL = Command(
    "eval",
    {"data": None, "pred": None, "split_file": None, "subset": "all", "vdd_mv": 800.0, "out": None},
    [],
    required=["data", "pred"],
)
BENCH = Command(
    "bench",
    {"models": "gcn,gat,gin", "features": "setB", "threshold": DEFAULT_THRESHOLD_UM, "tile_um": DEFAULT_TILE_UM,
     "epochs": 50, "reps": 1, "out": None},
    ["synth", "split", "gnn", "gbt", "cnn"],
)


def cmd_gen(resolved: dict) -> int:
    config = SynthConfig(**resolved["synth"])
    dataset, grid, loads, result = synthesize(config)
    out = _out_dir(resolved)
    save_dataset(dataset, out / "dataset.csv")
    labels = dataset.labels()
    _write_json(out / "dataset.json", {
        "provenance": dataset.provenance,
        "n_nets": len(dataset),
        "vdd_mv": config.vdd_mv,
        "grid": {"rows": grid.rows, "cols": grid.cols, "pitch_um": grid.pitch_um,
                 "seg_resistance_ohm": grid.seg_resistance_ohm, "n_pads": len(grid.pad_nodes),
                 "pad_nodes": [list(p) for p in grid.pad_nodes]},
        "solver_relative_residual": result.residual,
        "label_mv": None if not len(labels) else {
            "min": float(labels.min()), "mean": float(labels.mean()), "max": float(labels.max())},
        "synth": config.to_dict(),
    })
    print(f"wrote {len(dataset)} nets to {out / 'dataset.csv'}")
    return EXIT_OK


def cmd_graph_stats(resolved: dict) -> int:
    thresholds = _float_list(resolved["thresholds"], "--thresholds")
    if not thresholds:
        raise UsageError("--thresholds needs at least one value")
    if any(not t > 0 for t in thresholds):
        raise ValidationError("thresholds must be > 0")
    thresholds = list(dict.fromkeys(thresholds))
    dataset = load_dataset(resolved["data"])
    out = _out_dir(resolved)
    summary = []
    for t in thresholds:
        graph = build_graph(dataset, t)
        rank = degree_rank(graph)
        rank.to_csv(out / f"degree_rank_t{t:g}.csv")
        deg = graph.degrees()
        summary.append([f"{t:g}", graph.n_nodes, graph.n_edges,
                        _fmt(deg.mean() if len(deg) else 0.0), int(deg.max()) if len(deg) else 0])
    _write_csv(out / "graph_stats.csv", ["threshold_um", "n_nodes", "n_edges", "mean_degree", "max_degree"], summary)
    for row in summary:
        print(f"threshold {row[0]} um: {row[2]} edges, mean degree {float(row[3]):.3f}, max {row[4]}")
    return EXIT_OK


def cmd_train(resolved: dict) -> int:
    kind = _model_kind(resolved["model"])
    resolved["model"] = kind
    resolved["features"] = _features(resolved["features"])
    section = MODEL_SECTION[kind]
    for other in ("gnn", "gbt", "cnn"):
        if other != section:
            resolved.pop(other, None)
    dataset = load_dataset(resolved["data"])
    split = split_dataset(dataset, SplitSpec(**resolved["split"]))
    configs = {
        "gnn_config": GnnConfig(arch=kind, **resolved["gnn"]) if section == "gnn" else None,
        "gbt_config": GbtConfig(**resolved["gbt"]) if section == "gbt" else None,
        "cnn_config": CnnConfig(**resolved["cnn"]) if section == "cnn" else None,
    }
    out = _out_dir(resolved)
    t0 = time.perf_counter()
    fitted = fit_model(dataset, split, kind, resolved["features"], float(resolved["threshold"]),
                       float(resolved["tile_um"]), **configs)
    train_s = time.perf_counter() - t0
    (out / "checkpoint.json").write_text(json.dumps(fitted.to_dict(), sort_keys=True) + "\n")
    rows = fitted.history_rows()
    _write_csv(out / "history.csv", ["step", "loss", "train_mae_mv", "val_mae_mv", "best_val_mae_mv"],
               [[r["step"], _fmt(r["loss"]), _fmt(r["train_mae_mv"]), _fmt(r["val_mae_mv"]), _fmt(r["best_val_mae_mv"])]
                for r in rows])
    names = np.empty(len(dataset), dtype=object)
    for label, idx in zip(("train", "val", "test"), split):
        names[idx] = label
    _write_csv(out / "split.csv", ["net_id", "split"], zip(dataset.net_ids.tolist(), names.tolist()))
    _write_json(out / "timings.json", {"train_s": train_s, "steps": len(rows)})
    last = rows[-1] if rows else {}
    print(f"trained {kind} on {resolved['features']}: {len(rows)} steps, "
          f"best val MAE {float(last.get('best_val_mae_mv', float('nan'))):.4f} mV")
    return EXIT_OK


def _load_checkpoint(path) -> FittedModel:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not a JSON checkpoint: {exc}") from None
    return FittedModel.from_dict(data)


def cmd_predict(resolved: dict) -> int:
    fitted = _load_checkpoint(resolved["checkpoint"])
    dataset = load_dataset(resolved["data"])
    out = _out_dir(resolved)
    t0 = time.perf_counter()
    pred = fitted.predict(dataset)
    predict_s = time.perf_counter() - t0
    _write_csv(out / "predictions.csv", ["net_id", "pred_mv"],
               [[nid, repr(float(p))] for nid, p in zip(dataset.net_ids.tolist(), pred)])
    _write_json(out / "timings.json", {"predict_s": predict_s})
    print(f"wrote {len(pred)} predictions to {out / 'predictions.csv'}")
    return EXIT_OK


def read_predictions(path) -> Dict[int, float]:
    path = Path(path)
    preds: Dict[int, float] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["net_id", "pred_mv"]:
            raise ParseError(f"{path}: row 1: expected header net_id,pred_mv")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                nid, value = int(row[0]), float(row[1])
            except (ValueError, IndexError):
                raise ParseError(f"{path}: row {line_no}: cannot parse {row!r}") from None
            if nid in preds:
                raise ValidationError(f"{path}: row {line_no}: duplicate net_id {nid}")
            preds[nid] = value
    return preds


def read_split(path) -> Dict[int, str]:
    out: Dict[int, str] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"net_id", "split"} <= set(reader.fieldnames):
            raise ParseError(f"{path}: row 1: expected header net_id,split")
        for row in reader:
            out[int(row["net_id"])] = row["split"]
    return out


def cmd_eval(resolved: dict) -> int:
    dataset = load_dataset(resolved["data"], vdd_mv=float(resolved["vdd_mv"]))
    preds = read_predictions(resolved["pred"])
    subset = str(resolved["subset"])
    if subset not in ("all", "train", "val", "test"):
        raise UsageError(f"--subset must be all, train, val or test; got {subset!r}")
    ids = dataset.net_ids.tolist()
    if subset != "all":
        if not resolved.get("split_file"):
            raise UsageError(f"--subset {subset} needs --split-file")
        tags = read_split(resolved["split_file"])
        ids = [i for i in ids if tags.get(i) == subset]
    labels_by_id = dict(zip(dataset.net_ids.tolist(), dataset.labels().tolist()))
    missing = [i for i in ids if i not in preds]
    if missing:
        raise ValidationError(f"no prediction for net_id {missing[0]} ({len(missing)} missing)")
    unlabelled = [i for i in ids if not np.isfinite(labels_by_id[i])]
    if unlabelled:
        raise ValidationError(f"net_id {unlabelled[0]} has no label ({len(unlabelled)} unlabelled)")
    pred = np.array([preds[i] for i in ids], dtype=float)
    label = np.array([labels_by_id[i] for i in ids], dtype=float)
    report = compute_report(pred, label, dataset.vdd_mv)
    out = _out_dir(resolved)
    (out / "report.json").write_text(report.to_json(include_timings=False) + "\n")
    (out / "report.txt").write_text(report.to_text())
    err = pred - label
    _write_csv(out / "errors.csv", ["net_id", "label_mv", "pred_mv", "error_mv", "abs_error_mv", "violation"],
               [[i, repr(float(l)), repr(float(p)), repr(float(e)), repr(float(abs(e))), int(abs(e) > report.violation_threshold_mv)]
                for i, l, p, e in zip(ids, label, pred, err)])
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_bench(resolved: dict) -> int:
    models = [m.strip().lower() for m in str(resolved["models"]).split(",") if m.strip()]
    if not models:
        raise UsageError("--models needs at least one model")
    for m in models:
        _model_kind(m)
    resolved["features"] = _features(resolved["features"])
    dataset, grid, loads, _ = synthesize(SynthConfig(**resolved["synth"]))
    split = split_dataset(dataset, SplitSpec(**resolved["split"]))
    out = _out_dir(resolved)
    rows = runtime_bench(
        dataset, split, models, resolved["features"], float(resolved["threshold"]), float(resolved["tile_um"]),
        epochs=int(resolved["epochs"]), reps=int(resolved["reps"]),
        gnn_config=GnnConfig(**resolved["gnn"]), gbt_config=GbtConfig(**resolved["gbt"]),
        cnn_config=CnnConfig(**resolved["cnn"]), circuit=(grid, loads),
    )
    write_bench_csv(rows, out / "bench.csv")
    for r in rows:
        extra = f" ({r.seconds_per_epoch * 1e3:.2f} ms/epoch)" if r.seconds_per_epoch else ""
        print(f"{r.model:>6} {r.phase:<7} rep {r.rep}: {r.seconds:.4f} s{extra}")
    return EXIT_OK


COMMANDS = {
    "gen": (GEN, cmd_gen),
    "graph-stats": (GRAPH_STATS, cmd_graph_stats),
    "train": (TRAIN, cmd_train),
    "predict": (PREDICT, cmd_predict),
    "eval": (EVAL, cmd_eval),
    "bench": (BENCH, cmd_bench),
}


# --------------------------------------------------------------------------- parser


def _model_flags(parser):
    seen = set()
    for section in ("gnn", "gbt", "cnn"):
        _add_dataclass_flags(parser, section, dest_prefix="model", seen=seen)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="irdrop", description=__doc__, epilog=SCHEMAS, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=SCHEMAS, formatter_class=fmt)
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--out", help="output directory (created if needed)")
        return p

    p = add("gen", "generate a seeded synthetic circuit, solve it, write dataset.csv + dataset.json")
    _add_dataclass_flags(p, "synth")

    p = add("graph-stats", "degree-rank CSVs for one or more edge thresholds")
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--thresholds", help="comma-separated Manhattan thresholds in um, e.g. 1,3,5")

    p = add("train", "train one model; writes checkpoint.json, history.csv, split.csv")
    p.add_argument("--data", help="labelled dataset CSV")
    p.add_argument("--model", "--arch", dest="model", help=f"one of {', '.join(MODEL_KINDS)} (default gcn)")
    p.add_argument("--features", help="setA or setB (default setB)")
    p.add_argument("--threshold", type=float, help=f"graph edge threshold in um (default {DEFAULT_THRESHOLD_UM:g})")
    p.add_argument("--tile-um", dest="tile_um", type=float, help=f"CNN tile size in um (default {DEFAULT_TILE_UM:g})")
    _add_dataclass_flags(p, "split", rename={"seed": "split-seed"})
    _model_flags(p)

    p = add("predict", "per-net predictions from a checkpoint; writes predictions.csv")
    p.add_argument("--checkpoint", help="checkpoint.json written by train")
    p.add_argument("--data", help="dataset CSV (labels not needed)")

    p = add("eval", "compare predictions with labels; writes report.json, report.txt, errors.csv")
    p.add_argument("--data", help="labelled dataset CSV")
    p.add_argument("--pred", help="predictions.csv")
    p.add_argument("--split-file", dest="split_file", help="split.csv written by train")
    p.add_argument("--subset", help="all | train | val | test (default all)")
    p.add_argument("--vdd-mv", dest="vdd_mv", type=float, help="supply in mV; violations are |error| > 10%% of it")

    p = add("bench", "wall-clock train/predict per model plus the exact solve; writes bench.csv")
    p.add_argument("--models", "--arch", dest="models", help="comma list (default gcn,gat,gin)")
    p.add_argument("--features", help="setA or setB (default setB)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--tile-um", dest="tile_um", type=float)
    p.add_argument("--epochs", type=int, help="fixed epoch count for GNN/CNN timing (default 50)")
    p.add_argument("--reps", type=int, help="repetitions, each reported separately (default 1)")
    _add_dataclass_flags(p, "synth", rename={"seed": "circuit-seed"})
    _add_dataclass_flags(p, "split", rename={"seed": "split-seed"})
    _model_flags(p)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    command, handler = COMMANDS[args.command]
    try:
        return handler(command.resolve(args))
    except UsageError as exc:
        print(f"irdrop {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, ParseError, ShapeError) as exc:
        print(f"irdrop {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"irdrop {args.command}: error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"irdrop {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
