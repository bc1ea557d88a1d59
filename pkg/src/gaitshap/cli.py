"""``gaitshap`` command line: one subcommand per pipeline stage.

Every run writes a run manifest beside its output: ``<out>.run_manifest.json``
for a file, ``run_manifest.json`` inside an output directory, or the path
given by ``--manifest``. The manifest records the resolved options, the
seed and SHA-256 hashes of inputs and outputs; ``gaitshap rerun MANIFEST``
repeats the run from it.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import GaitShapError

log = logging.getLogger("gaitshap")

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

# options holding input paths, hashed into the run manifest
INPUT_KEYS = ("inputs", "segments", "split", "model", "evaluation", "trials", "spec", "config")


# --------------------------------------------------------------------------
# config, hashing, manifest
# --------------------------------------------------------------------------

def load_config(path) -> dict:
    """Read a JSON or TOML config (chosen by extension)."""
    path = Path(path)
    text = path.read_bytes()
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(text.decode("utf-8"))
        return json.loads(text)
    except (ValueError, UnicodeDecodeError) as exc:
        raise GaitShapError(f"{path}: cannot parse config ({exc})") from exc


def sha256_path(path) -> str:
    """Hash a file, or every file under a directory (relative names included)."""
    path = Path(path)
    h = hashlib.sha256()
    if path.is_dir():
        for f in sorted(p for p in path.rglob("*") if p.is_file()):
            if f.name == "run_manifest.json":
                continue
            h.update(str(f.relative_to(path)).encode())
            h.update(f.read_bytes())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


def _hash_many(paths) -> dict:
    out = {}
    for p in paths:
        if p and Path(p).exists():
            out[str(p)] = sha256_path(p)
    return out


def _input_paths(opts: dict) -> list:
    paths = []
    for k in INPUT_KEYS:
        v = opts.get(k)
        if isinstance(v, (list, tuple)):
            paths.extend(v)
        elif v:
            paths.append(v)
    return paths


def manifest_path(out) -> Path:
    """``<dir>/run_manifest.json`` for directory outputs, else ``<file>.run_manifest.json``."""
    out = Path(out)
    return out / "run_manifest.json" if out.is_dir() else Path(f"{out}.run_manifest.json")


def write_run_manifest(opts: dict, outputs: list, path=None) -> Path:
    if path is None:
        path = manifest_path(opts["out"])
    doc = {
        "tool": "gaitshap",
        "version": __version__,
        "command": opts["command"],
        "seed": opts["seed"],
        "options": opts,
        "inputs": _hash_many(_input_paths(opts)),
        "outputs": _hash_many(outputs),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=str))
    return Path(path)


# --------------------------------------------------------------------------
# shared helpers
# --------------------------------------------------------------------------

def _csv_inputs(inputs) -> list[Path]:
    files = []
    for p in map(Path, inputs):
        if p.is_dir():
            files.extend(sorted(p.glob("*.csv")))
        else:
            files.append(p)
    if not files:
        raise GaitShapError("no input CSV files")
    return files


def _load_split_arrays(opts):
    from .segmentation import DatasetSplit, load_segments, segments_to_arrays

    segments = load_segments(opts["segments"])
    split = DatasetSplit.load(opts["split"])
    res = {}
    for part in ("train", "validation", "test"):
        ids = set(getattr(split, part))
        segs = [s for s in segments if s.subject_id in ids]
        if not segs:
            raise GaitShapError(f"split part {part!r} has no segments")
        X, y, _ = segments_to_arrays(segs)
        res[part] = (X, y, segs)
    return res


def _resolve_spec(name_or_path: str, input_shape):
    from .nn.model import ModelSpec, StackSpec, full_cnn_spec, full_gru_spec

    if name_or_path == "full-cnn":
        return full_cnn_spec()
    if name_or_path == "full-gru":
        return full_gru_spec()
    if name_or_path == "small-cnn":
        return ModelSpec(tuple(input_shape), (StackSpec("conv", 8, 7, dropout=0.1),
                                              StackSpec("conv", 16, 5, dropout=0.1)),
                         dense_units=16, head_dropout=0.2, learning_rate=3e-3)
    if name_or_path == "small-gru":
        return ModelSpec(tuple(input_shape), (StackSpec("gru", 8, pool=4, dropout=0.1),
                                              StackSpec("gru", 8, pool=4, dropout=0.1)),
                         dense_units=8, head_dropout=0.1, learning_rate=3e-3)
    try:
        return ModelSpec.from_dict(load_config(name_or_path))
    except (TypeError, KeyError) as exc:
        raise GaitShapError(f"{name_or_path}: invalid model spec ({exc})") from exc


# --------------------------------------------------------------------------
# subcommands; each returns the list of written output paths
# --------------------------------------------------------------------------

def cmd_synth(opts):
    from .preprocessing import write_trace_csv
    from .synthetic import GaitGenParams, generate_cohort

    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    base = GaitGenParams(group_contrast=opts["contrast"], noise_std=opts["noise"],
                         n_strides=opts["strides"])
    cohort = generate_cohort(opts["n_adult"], opts["n_older"], base, jitter=opts["jitter"],
                             seed=opts["seed"])
    written, events = [], {}
    for trace, ev, _ in cohort:
        path = out / f"{trace.subject_id}.csv"
        write_trace_csv(trace, path)
        written.append(path)
        events[trace.subject_id] = [[e.sample_index, e.side.value] for e in ev]
    (out / "events.json").write_text(json.dumps(events))
    return written + [out / "events.json"]


def cmd_preprocess(opts):
    from .pipeline import preprocess
    from .preprocessing import parse_trace_csv, write_trace_csv

    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for f in _csv_inputs(opts["inputs"]):
        trace = parse_trace_csv(f, sample_rate_hz=opts["sample_rate"])
        clean = preprocess(trace, opts["cutoff"])
        path = out / f"{trace.subject_id}.csv"
        write_trace_csv(clean, path)
        written.append(path)
    return written


def cmd_segment(opts):
    from dataclasses import replace

    from .pipeline import SubjectData
    from .preprocessing import parse_trace_csv
    from .segmentation import build_cnn_segments, build_gru_segments, save_segments, segment_trace

    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    cnn, gru, subjects = [], [], {"included": [], "excluded": []}
    for f in _csv_inputs(opts["inputs"]):
        trace = parse_trace_csv(f, sample_rate_hz=opts["sample_rate"])
        # inputs come from `preprocess`: already filtered and scaled
        trace = replace(trace, is_filtered=True, is_normalized=True)
        try:
            events, strides = segment_trace(trace)
        except GaitShapError as exc:
            log.warning("%s: %s", trace.subject_id, exc)
            subjects["excluded"].append(trace.subject_id)
            continue
        sd = SubjectData(trace.subject_id, trace.group,
                         build_cnn_segments(strides, trace.subject_id, trace.group),
                         build_gru_segments(strides, trace.subject_id, trace.group), len(events))
        if sd.included:
            cnn.extend(sd.cnn)
            gru.extend(sd.gru)
            subjects["included"].append(sd.subject_id)
        else:
            subjects["excluded"].append(sd.subject_id)
    if not cnn:
        raise GaitShapError("no subject passed the inclusion rule")
    save_segments(cnn, out / "cnn")
    save_segments(gru, out / "gru")
    (out / "subjects.json").write_text(json.dumps(subjects, indent=1))
    return [out / "cnn", out / "gru", out / "subjects.json"]


def cmd_split(opts):
    from .segmentation import split_subjects

    manifest = json.loads((Path(opts["segments"]) / "manifest.json").read_text())
    subjects = sorted({(e["subject_id"], e["group"]) for e in manifest})
    ratio = tuple(int(r) for r in str(opts["ratio"]).split(","))
    split = split_subjects(subjects, ratio, seed=opts["seed"])
    out = Path(opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    split.save(out)
    return [out]


def cmd_train(opts):
    import dataclasses

    from .archive import save_model
    from .metrics import evaluate
    from .nn.model import predict_proba
    from .nn.training import TrainConfig, train_model

    data = _load_split_arrays(opts)
    X_tr, y_tr, _ = data["train"]
    X_va, y_va, _ = data["validation"]
    spec = _resolve_spec(opts["spec"], X_tr.shape[1:])
    config = TrainConfig(max_epochs=opts["max_epochs"], patience=opts["patience"],
                         batch_size=opts["batch_size"], seed=opts["seed"])
    params, history = train_model(spec, X_tr, y_tr, X_va, y_va, config)
    val = evaluate(predict_proba(spec, params, X_va)[:, 1], y_va)
    out = Path(opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(spec, params, out, training_config=dataclasses.asdict(config),
               metrics_summary={"validation_accuracy": val.accuracy, "validation_auc": val.auc,
                                "epochs_run": len(history)})
    hist = out.with_suffix(".history.json")
    hist.write_text(json.dumps(history, indent=1))
    return [out, hist]


def cmd_tune(opts):
    from .hyperopt import SearchSpace, bayes_optimize, config_to_spec
    from .nn.training import TrainConfig, accuracy, train_model

    data = _load_split_arrays(opts)
    X_tr, y_tr, _ = data["train"]
    X_va, y_va, _ = data["validation"]
    kind = "conv" if opts["kind"] == "conv" else "gru"
    space = SearchSpace(kind=kind, units=(2, opts["max_units"]),
                        dense_units=(2, opts["max_units"]))
    config = TrainConfig(max_epochs=opts["max_epochs"], patience=opts["patience"],
                         batch_size=opts["batch_size"], seed=opts["seed"])

    def objective(cfg):
        spec = config_to_spec(cfg, space, input_shape=X_tr.shape[1:])
        params, _ = train_model(spec, X_tr, y_tr, X_va, y_va, config)
        return accuracy(spec, params, X_va, y_va)

    out = Path(opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    best, trials = bayes_optimize(objective, space, n_trials=opts["trials"], n_init=opts["n_init"],
                                  seed=opts["seed"], log_path=out)
    best_path = out.with_suffix(".best.json")
    best_path.write_text(json.dumps(best, indent=1, sort_keys=True))
    return [out, best_path]


def cmd_evaluate(opts):
    from .archive import load_model
    from .metrics import evaluate
    from .nn.model import predict_proba

    spec, params = load_model(opts["model"])
    X, y, _ = _load_split_arrays(opts)[opts["part"]]
    report = evaluate(predict_proba(spec, params, X)[:, 1], y)
    out = Path(opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    report.save(out)
    roc = out.with_suffix(".roc.csv")
    report.save_roc_csv(roc)
    return [out, roc]


def cmd_explain(opts):
    from .archive import load_model
    from .nn.model import predict_proba
    from .reporting import save_heatmap
    from .shapley import (
        background_baseline,
        explain,
        mean_abs_aggregate,
        partition_features,
        write_attributions_csv,
        write_heatmap_csv,
    )

    spec, params = load_model(opts["model"])
    data = _load_split_arrays(opts)
    X, y, segs = data[opts["part"]]
    if opts["limit"]:
        X, y, segs = X[:opts["limit"]], y[:opts["limit"]], segs[:opts["limit"]]
    if opts["baseline"] == "zero":
        baseline = np.zeros(X.shape[1:])
    else:
        baseline = background_baseline(data["train"][0], 100, opts["seed"])
    partition = partition_features(X.shape[1:], opts["granularity"], opts["window"])
    atts = []
    for k, (x, label) in enumerate(zip(X, y)):
        cls = int(label) if opts["target_class"] == "true" else int(opts["target_class"])

        def model_fn(batch, c=cls):
            return predict_proba(spec, params, batch, batch_size=1024)[:, c]

        atts.append(explain(model_fn, x, partition, baseline, n_perm=opts["n_perm"],
                            seed=(opts["seed"], k), output_class=cls))
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_attributions_csv(out / "attributions.csv", [s.segment_id for s in segs], atts, partition)
    agg = mean_abs_aggregate(atts, partition)
    write_heatmap_csv(out / "heatmap.csv", agg)
    anchors = np.mean([s.anchors for s in segs], axis=0) if segs[0].stride_count == 1 else (0.0,)
    save_heatmap(out / "heatmap.svg", agg, X.mean(axis=0), tuple(anchors))
    return [out / "attributions.csv", out / "heatmap.csv", out / "heatmap.svg"]


def cmd_report(opts):
    from .hyperopt import read_trial_log
    from .metrics import EvalReport
    from .reporting import write_report

    report = EvalReport.load(opts["evaluation"])
    trials = read_trial_log(opts["trials"]) if opts.get("trials") else []
    out = Path(opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    return list(write_report(report, trials, out))


COMMANDS = {
    "synth": cmd_synth, "preprocess": cmd_preprocess, "segment": cmd_segment,
    "split": cmd_split, "train": cmd_train, "tune": cmd_tune, "evaluate": cmd_evaluate,
    "explain": cmd_explain, "report": cmd_report,
}


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _common_options(suppress: bool) -> argparse.ArgumentParser:
    # Subcommands repeat the global options with suppressed defaults so that a
    # value given before the subcommand is not reset by the subparser.
    dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=dflt(None),
                        help="master random seed (default: config value or 0)")
    common.add_argument("--config", default=dflt(None),
                        help="JSON or TOML file; top-level keys and a table named "
                        "after the subcommand supply option defaults, flags override them")
    common.add_argument("--manifest", default=dflt(None), help="where to write the run manifest "
                        "(default: <out>.run_manifest.json, or run_manifest.json "
                        "inside an output directory)")
    common.add_argument("-v", "--verbose", action="store_true", default=dflt(False),
                        help="log progress to stderr")
    return common


GLOBAL_KEYS = ("seed", "config", "manifest", "verbose")


def build_parser() -> argparse.ArgumentParser:
    common = _common_options(suppress=True)
    parser = argparse.ArgumentParser(prog="gaitshap", parents=[_common_options(False)],
                                     description="Gait accelerometry classification and "
                                                 "Shapley attribution pipeline.")
    parser.add_argument("--version", action="version", version=f"gaitshap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort of traces")
    p.add_argument("--n-adult", type=int, default=20, help="number of Adult subjects")
    p.add_argument("--n-older", type=int, default=20, help="number of OlderAdult subjects")
    p.add_argument("--contrast", type=float, default=0.5, help="group contrast in [0, 1]")
    p.add_argument("--noise", type=float, default=0.05, help="additive noise std")
    p.add_argument("--strides", type=int, default=90, help="strides per subject")
    p.add_argument("--jitter", type=float, default=0.05, help="per-subject parameter jitter")
    p.add_argument("--out", required=True, help="output directory for trace CSVs")

    p = sub.add_parser("preprocess", parents=[common], help="low-pass filter and scale traces")
    p.add_argument("inputs", nargs="+", help="trace CSV files or directories")
    p.add_argument("--cutoff", type=float, default=10.0, help="low-pass cutoff in Hz")
    p.add_argument("--sample-rate", type=float, default=100.0, help="sampling rate in Hz")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("segment", parents=[common], help="detect heel contacts, cut segments")
    p.add_argument("inputs", nargs="+", help="preprocessed trace CSV files or directories")
    p.add_argument("--sample-rate", type=float, default=100.0, help="sampling rate in Hz")
    p.add_argument("--out", required=True, help="output directory (gets cnn/ and gru/)")

    p = sub.add_parser("split", parents=[common], help="stratified subject split")
    p.add_argument("segments", help="segment directory (with manifest.json)")
    p.add_argument("--ratio", default="146,49,49", help="train,validation,test proportions")
    p.add_argument("--out", required=True, help="split JSON path")

    def data_args(p):
        p.add_argument("--segments", required=True, help="segment directory")
        p.add_argument("--split", required=True, help="split JSON from `split`")

    def train_args(p, max_epochs):
        p.add_argument("--max-epochs", type=int, default=max_epochs, help="epoch limit")
        p.add_argument("--patience", type=int, default=20, help="early stopping patience")
        p.add_argument("--batch-size", type=int, default=32, help="mini-batch size")

    p = sub.add_parser("train", parents=[common], help="train a classifier")
    data_args(p)
    p.add_argument("--spec", default="small-cnn",
                   help="full-cnn, full-gru, small-cnn, small-gru or a spec JSON file")
    train_args(p, 150)
    p.add_argument("--out", required=True, help="model archive path")

    p = sub.add_parser("tune", parents=[common], help="Bayesian hyperparameter search")
    data_args(p)
    p.add_argument("--kind", choices=("conv", "gru"), default="conv", help="layer kind")
    p.add_argument("--trials", type=int, default=15, help="number of trials")
    p.add_argument("--n-init", type=int, default=5, help="initial Latin hypercube trials")
    p.add_argument("--max-units", type=int, default=768, help="upper bound for units/filters")
    train_args(p, 30)
    p.add_argument("--out", required=True, help="trial log path (JSON lines)")

    p = sub.add_parser("evaluate", parents=[common], help="metrics, ROC and AUC")
    p.add_argument("--model", required=True, help="model archive")
    data_args(p)
    p.add_argument("--part", choices=("train", "validation", "test"), default="test")
    p.add_argument("--out", required=True, help="evaluation JSON path")

    p = sub.add_parser("explain", parents=[common], help="Shapley attributions and heatmap")
    p.add_argument("--model", required=True, help="model archive")
    data_args(p)
    p.add_argument("--part", choices=("train", "validation", "test"), default="test")
    p.add_argument("--granularity", choices=("cell", "window", "axis"), default="window")
    p.add_argument("--window", type=int, default=8, help="window length for window groups")
    p.add_argument("--n-perm", type=int, default=512, help="permutations per segment")
    p.add_argument("--baseline", choices=("mean", "zero"), default="mean",
                   help="mean of 100 training segments, or zeros")
    p.add_argument("--target-class", default="true",
                   help="'true' explains each segment's own class, or 0/1")
    p.add_argument("--limit", type=int, default=0, help="explain only the first N segments")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("report", parents=[common], help="metric table and JSON report")
    p.add_argument("--evaluation", required=True, help="evaluation JSON from `evaluate`")
    p.add_argument("--trials", help="trial log from `tune`")
    p.add_argument("--out", required=True, help="report path stem (.json and .txt)")

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("run_manifest", help="run_manifest.json of the earlier run")
    p.add_argument("--out", help="write outputs here instead of the recorded location")
    p.add_argument("--manifest", help="where to write the new run manifest")
    p.add_argument("--check-inputs", action="store_true",
                   help="fail if input hashes differ from the recorded ones")
    return parser


def _dest_names(parser: argparse.ArgumentParser, command: str) -> set:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return {a.dest for a in sub.choices[command]._actions}


def resolve_options(argv) -> dict:
    """Parse ``argv`` and merge config-file defaults (flags take priority)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    opts = vars(args)
    if opts["command"] == "rerun":
        return opts
    if opts.get("config"):
        cfg = load_config(opts["config"])
        dests = _dest_names(parser, opts["command"])
        layered = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
        layered.update(cfg.get(opts["command"], {}))
        defaults = {}
        for k, v in layered.items():
            key = k.replace("-", "_")
            if key not in dests:
                raise GaitShapError(f"config key {k!r} is not an option of {opts['command']!r}")
            defaults[key] = v
        parser.set_defaults(**{k: v for k, v in defaults.items() if k in GLOBAL_KEYS})
        sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        sub.choices[opts["command"]].set_defaults(
            **{k: v for k, v in defaults.items() if k not in GLOBAL_KEYS})
        opts = vars(parser.parse_args(argv))
    if opts["seed"] is None:
        opts["seed"] = 0
    return opts


def run(opts: dict) -> list:
    """Execute one resolved command and write its run manifest."""
    outputs = COMMANDS[opts["command"]](opts)
    write_run_manifest(opts, outputs, opts.get("manifest"))
    return outputs


def rerun(opts: dict) -> list:
    doc = json.loads(Path(opts["run_manifest"]).read_text())
    recorded = dict(doc["options"])
    if opts.get("check_inputs"):
        now = _hash_many(doc["inputs"])
        if now != doc["inputs"]:
            changed = sorted(k for k in doc["inputs"] if now.get(k) != doc["inputs"][k])
            raise GaitShapError(f"inputs changed since the recorded run: {changed}")
    if opts.get("out"):
        recorded["out"] = opts["out"]
    recorded["manifest"] = opts.get("manifest")
    return run(recorded)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        opts = resolve_options(argv)
        logging.basicConfig(level=logging.INFO if opts.get("verbose") else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        outputs = rerun(opts) if opts["command"] == "rerun" else run(opts)
    except GaitShapError as exc:
        print(f"gaitshap: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"gaitshap: I/O error: {exc}", file=sys.stderr)
        return 2
    for p in outputs:
        print(p)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
