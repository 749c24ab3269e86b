"""Command-line interface.

One executable with six subcommands:

    index    build a retrieval index from a JSONL corpus
    datagen  generate supervision records (synthetic or live)
    train    fit a forecasting head on a dataset
    infer    run the decision pipeline over tasks
    eval     print summary metrics for a predictions file as JSON
    report   write a reliability table as CSV

Exit codes: 0 on success, 1 on runtime failure (one line on stderr,
"error: <message>"), 2 on usage errors.  Flags override values from the
optional TOML config file; built-in defaults apply last.
"""

from __future__ import annotations

import argparse
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import corpus as corpus_mod
from . import datagen as datagen_mod
from . import forecaster as forecaster_mod
from . import metrics as metrics_mod
from . import pipeline as pipeline_mod
from . import training as training_mod
from .features import ExtractorConfig, FeatureError
from .gateway import EndpointConfig, GradingParseError, HttpGateway, MockGateway, PromptError
from .http_client import ConfigurationError, GatewayError

_ERRORS = (
    corpus_mod.CorpusError,
    datagen_mod.DataError,
    forecaster_mod.ModelError,
    metrics_mod.MetricError,
    pipeline_mod.PipelineError,
    training_mod.TrainError,
    FeatureError,
    ConfigurationError,
    GatewayError,
    GradingParseError,
    PromptError,
    OSError,
    RuntimeError,
)

DEFAULT_TEMPS_ARG = ",".join(str(t) for t in forecaster_mod.DEFAULT_TEMPS)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config file {path}: {exc}") from None


def _extractor_from_config(config: dict) -> ExtractorConfig:
    section = config.get("extractor", {})
    return ExtractorConfig(
        mode=section.get("mode", "hashed"),
        dimension=int(section.get("dimension", 256)),
        base_url=section.get("base_url", ""),
        model=section.get("model", ""),
        timeout=float(section.get("timeout", 30.0)),
        max_retries=int(section.get("max_retries", 3)),
    )


def _fourier_from_config(config: dict) -> forecaster_mod.FourierSpec:
    section = config.get("forecaster", {})
    return forecaster_mod.FourierSpec(
        n_frequencies=int(section.get("n_frequencies", 6)),
        t_min=float(section.get("t_min", 1.0)),
        t_max=float(section.get("t_max", 2.0)),
    )


def _gateway(args, config: dict):
    audit = getattr(args, "audit_log", None)
    if audit is None:
        audit = config.get("paths", {}).get("audit_log")
    if getattr(args, "mock", False):
        return MockGateway(audit_path=audit)
    endpoints_cfg = config.get("endpoints", {})
    if not endpoints_cfg:
        raise ConfigurationError(
            "no endpoints configured; pass --mock or a config file with [endpoints.*]"
        )
    endpoints = {}
    for role, section in endpoints_cfg.items():
        try:
            endpoints[role] = EndpointConfig(
                base_url=section["base_url"],
                model=section.get("model", ""),
                timeout=float(section.get("timeout", 30.0)),
                max_retries=int(section.get("max_retries", 3)),
                temperature=float(section.get("temperature", 1.0)),
            )
        except KeyError as exc:
            raise ConfigurationError(
                f"endpoint {role!r} is missing key {exc.args[0]!r}"
            ) from None
    return HttpGateway(endpoints, audit_path=audit)


def cmd_index(args) -> int:
    documents = corpus_mod.load_corpus(args.corpus)
    index = corpus_mod.build_index(documents)
    corpus_mod.save_index(index, args.out)
    print(f"indexed {index.doc_count} documents -> {args.out}")
    return 0


def cmd_datagen(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    index = corpus_mod.load_index(args.index)
    tasks = datagen_mod.load_tasks(args.tasks)

    if args.mode == "synthetic":
        spec = datagen_mod.SurrogateUserSpec(
            alpha=args.alpha,
            tau=args.tau,
            r_samples=args.r,
            t_min=args.t_min,
            t_max=args.t_max,
        )
        build = datagen_mod.build_dataset(
            tasks, index, spec, k=args.k, seed=seed, t_per_doc=args.t_per_doc
        )
    else:
        gateway = _gateway(args, config)
        build = datagen_mod.live_generate(
            tasks,
            index,
            gateway,
            k=args.k,
            seed=seed,
            r_samples=args.r,
            t_min=args.t_min,
            t_max=args.t_max,
        )

    extra = {
        "corpus_hash": datagen_mod.file_sha256(args.index),
        "config_hash": (
            datagen_mod.file_sha256(args.config) if args.config else ""
        ),
    }
    datagen_mod.save_dataset(build, args.out, extra_manifest=extra)
    print(
        f"wrote {build.manifest['n_records']} records "
        f"({build.manifest['n_skipped']} tasks skipped) -> {args.out}"
    )
    if build.manifest.get("failed"):
        print(f"error: live generation incomplete: {build.manifest['error']}", file=sys.stderr)
        return 1
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    paths = config.get("paths", {})
    index_path = paths.get("index")
    tasks_path = paths.get("tasks")
    if not index_path or not tasks_path:
        raise ConfigurationError("train config must set [paths].index and [paths].tasks")

    train_section = dict(config.get("train", {}))
    if "seed" not in train_section and "seed" in config:
        train_section["seed"] = int(config["seed"])
    cfg = training_mod.TrainConfig.from_mapping(train_section)

    records = datagen_mod.load_dataset(args.data)
    index = corpus_mod.load_index(index_path)
    tasks = datagen_mod.load_tasks(tasks_path)
    queries = {t.id: (t.query or t.question) for t in tasks}
    documents = {d.id: d for d in index.documents}

    extractor = _extractor_from_config(config)
    data = training_mod.prepare_training_data(records, queries, documents, extractor)
    mode = "multi" if args.multi else "binary"
    params, report = training_mod.train(data, cfg, mode=mode, fourier=_fourier_from_config(config))

    forecaster_mod.save_model(params, args.out)
    training_mod.save_report(report, args.out + ".report.json")
    print(
        f"trained {mode} head on {report.n_examples} examples, "
        f"final loss {report.final_loss:.6f} -> {args.out}"
    )
    return 0


def _parse_temps(text: str) -> tuple:
    try:
        temps = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigurationError(f"bad --temps value: {text!r}") from None
    if not temps:
        raise ConfigurationError("--temps must name at least one temperature")
    return temps


def cmd_infer(args) -> int:
    config = _load_config(args.config)
    section = config.get("pipeline", {})

    temps = _parse_temps(args.temps) if args.temps else tuple(section.get("temps", forecaster_mod.DEFAULT_TEMPS))
    user_t = args.user_t if args.user_t is not None else section.get("user_t")
    reformulate = False if args.no_reformulate else bool(section.get("reformulate", True))
    cfg = pipeline_mod.PipelineConfig(
        k=args.k if args.k is not None else int(section.get("k", 20)),
        epsilon=args.epsilon if args.epsilon is not None else float(section.get("epsilon", 0.5)),
        temps=temps,
        user_t=user_t,
        reformulate=reformulate,
        max_reformulations=int(section.get("max_reformulations", 1)),
    )

    index = corpus_mod.load_index(args.index)
    params = forecaster_mod.load_model(args.model)
    tasks = datagen_mod.load_tasks(args.tasks)
    gateway = _gateway(args, config)
    extractor = _extractor_from_config(config)

    pipe = pipeline_mod.Pipeline(index, params, extractor, gateway, cfg)
    traces, predictions = pipe.batch_run(tasks)
    pipeline_mod.write_predictions(predictions, args.out)
    pipeline_mod.write_traces(traces, args.traces)

    n_err = sum(1 for t in traces if t.error is not None)
    n_ref = sum(1 for t in traces if t.reformulated)
    print(
        f"ran {len(tasks)} tasks ({n_ref} reformulated, {n_err} failed) -> {args.out}"
    )
    return 0


def _scored(predictions):
    scored = [p for p in predictions if p.correct is not None]
    if not scored:
        raise metrics_mod.MetricError("no graded predictions to evaluate")
    conf = np.array([p.confidence for p in scored])
    correct = np.array([p.correct for p in scored])
    return conf, correct


def cmd_eval(args) -> int:
    predictions = pipeline_mod.load_predictions(args.predictions)
    conf, correct = _scored(predictions)
    summary = {
        "acc": metrics_mod.accuracy(correct),
        "auroc": metrics_mod.auroc(conf, correct),
        "ece": metrics_mod.ece(conf, correct, bins=args.bins),
        "brier": metrics_mod.brier(conf, correct),
        "nll": metrics_mod.nll(conf, correct),
        "n": int(conf.size),
    }
    print(json.dumps(summary))
    return 0


def cmd_report(args) -> int:
    predictions = pipeline_mod.load_predictions(args.predictions)
    conf, correct = _scored(predictions)
    stats = metrics_mod.reliability_data(conf, correct, bins=args.bins)
    metrics_mod.write_reliability_csv(stats, args.out)
    print(f"wrote {len(stats)} bins -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calibrag",
        description="Decision-calibration engine for retrieval-augmented pipelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("index", help="build a retrieval index", formatter_class=fmt)
    p.add_argument("--corpus", required=True, help="JSONL corpus of id/title/text")
    p.add_argument("--out", required=True, help="output index file")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("datagen", help="generate supervision records", formatter_class=fmt)
    p.add_argument("--mode", choices=("synthetic", "live"), default="synthetic")
    p.add_argument("--tasks", required=True, help="JSONL task file")
    p.add_argument("--index", required=True, help="index file")
    p.add_argument("--k", type=int, default=20, help="retrieval depth")
    p.add_argument("--seed", type=int, default=None, help="master seed (default: config seed or 0)")
    p.add_argument("--out", required=True, help="output dataset JSONL")
    p.add_argument("--r", type=int, default=10, help="decision samples per record")
    p.add_argument("--alpha", type=float, default=8.0, help="surrogate relevance sharpness")
    p.add_argument("--tau", type=float, default=None, help="surrogate relevance threshold (default: median)")
    p.add_argument("--t-min", type=float, default=1.0, help="temperature range low end")
    p.add_argument("--t-max", type=float, default=2.0, help="temperature range high end")
    p.add_argument("--t-per-doc", action="store_true", help="sample one temperature per document")
    p.add_argument("--config", default=None, help="TOML config (endpoints, seed)")
    p.add_argument("--mock", action="store_true", help="use the offline mock gateway (live mode)")
    p.add_argument("--audit-log", default=None, help="JSONL audit log for endpoint exchanges")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="fit a forecasting head", formatter_class=fmt)
    p.add_argument("--data", required=True, help="dataset JSONL")
    p.add_argument("--config", required=True, help="TOML config with [paths] and [train]")
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--multi", action="store_true", help="train the 11-bin histogram head")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run the decision pipeline", formatter_class=fmt)
    p.add_argument("--tasks", required=True, help="JSONL task file")
    p.add_argument("--index", required=True, help="index file")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--k", type=int, default=None, help="retrieval depth (default 20)")
    p.add_argument("--epsilon", type=float, default=None, help="confidence threshold (default 0.5)")
    group = p.add_mutually_exclusive_group()
    group.add_argument(
        "--temps",
        default=None,
        help=f"comma-separated marginalization temperatures (default {DEFAULT_TEMPS_ARG})",
    )
    group.add_argument("--user-t", type=float, default=None, help="fixed decode temperature")
    p.add_argument("--no-reformulate", action="store_true", help="disable query reformulation")
    p.add_argument("--out", required=True, help="output predictions JSONL")
    p.add_argument("--traces", required=True, help="output traces JSONL")
    p.add_argument("--config", default=None, help="TOML config (endpoints, extractor, pipeline)")
    p.add_argument("--mock", action="store_true", help="use the offline mock gateway")
    p.add_argument("--audit-log", default=None, help="JSONL audit log for endpoint exchanges")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="print summary metrics as JSON", formatter_class=fmt)
    p.add_argument("--predictions", required=True, help="predictions JSONL")
    p.add_argument("--bins", type=int, default=10, help="calibration bins")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="write a reliability CSV", formatter_class=fmt)
    p.add_argument("--predictions", required=True, help="predictions JSONL")
    p.add_argument("--bins", type=int, default=10, help="calibration bins")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _ERRORS as exc:
        message = str(exc).replace("\n", " ")
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
