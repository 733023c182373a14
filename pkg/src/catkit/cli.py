"""Command-line surface. Machine-readable JSON goes to stdout, diagnostics
to stderr.

Exit codes: 0 ok, 2 input/config error, 3 pipeline stage failure,
4 undefined metric, 5 transport failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob
import json
import os
import re
import sys

from .core import (
    CatkitError,
    ConfigError,
    ContractError,
    IntegrityError,
    MetricUndefinedError,
    ParseError,
    ProtocolError,
    TransportError,
)
from .ingest import compute_stats, load_bundle, save_bundle
from .metrics import GenerationEvalItem, auc, evaluate_generations
from .mockserver import serve_forever
from .pipeline import (
    BackendSuite,
    PipelineConfig,
    PipelineStageError,
    PseudoLabelStore,
    export_abstract_knowledge,
    file_digest,
    run_cat,
    write_manifest,
)
from .prompts import DEFAULT_PROMPTS, PromptConfig
from .scoring import LexicalOverlapScorer, LogisticOverlapScorer, RemoteScorer

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_STAGE = 3
EXIT_METRIC = 4
EXIT_TRANSPORT = 5

ENDPOINT_ENV = "CAT_SCORER_ENDPOINT"


def _emit(payload: dict) -> None:
    print(json.dumps(payload, ensure_ascii=False, indent=2))


def _diag(message: str) -> None:
    print(message, file=sys.stderr)


def _load_bundle_args(args) -> tuple:
    bundle = load_bundle(
        args.events,
        args.concepts,
        args.triples,
        strict_duplicates=getattr(args, "strict_duplicates", False),
    )
    report = bundle.load_report
    if report.total_duplicates:
        _diag(
            f"warning: dropped duplicates (events={report.duplicate_events}, "
            f"conceptualizations={report.duplicate_conceptualizations}, "
            f"triples={report.duplicate_triples})"
        )
    return bundle


def cmd_ingest(args) -> int:
    bundle = _load_bundle_args(args)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        save_bundle(
            bundle,
            os.path.join(args.out, "events.jsonl"),
            os.path.join(args.out, "conceptualizations.jsonl"),
            os.path.join(args.out, "triples.jsonl"),
        )
        _diag(f"wrote canonical bundle to {args.out}")
    _emit(compute_stats(bundle))
    return EXIT_OK


def cmd_stats(args) -> int:
    bundle = _load_bundle_args(args)
    _emit(compute_stats(bundle))
    return EXIT_OK


def _build_backends(scorer_cfg: dict) -> BackendSuite:
    kind = scorer_cfg.get("kind", "lexical")
    if kind == "lexical":
        return BackendSuite.uniform(LexicalOverlapScorer())
    if kind == "logistic":
        return BackendSuite(
            event_teacher=LogisticOverlapScorer(),
            triple_teacher=LogisticOverlapScorer(),
            event_student=LogisticOverlapScorer(),
            triple_student=LogisticOverlapScorer(),
        )
    if kind == "remote":
        default = scorer_cfg.get("endpoint") or os.environ.get(ENDPOINT_ENV)
        event_ep = scorer_cfg.get("event_endpoint") or default
        triple_ep = scorer_cfg.get("triple_endpoint") or default
        if not event_ep or not triple_ep:
            raise ConfigError(
                f"remote scorer needs an endpoint (flag, config, or {ENDPOINT_ENV})"
            )
        event_backend = RemoteScorer(event_ep)
        triple_backend = RemoteScorer(triple_ep) if triple_ep != event_ep else event_backend
        # the service becomes the student once /train runs
        return BackendSuite(
            event_teacher=event_backend,
            triple_teacher=triple_backend,
            event_student=event_backend,
            triple_student=triple_backend,
        )
    raise ConfigError(f"unknown scorer kind {kind!r} (expected lexical, logistic, remote)")


def _read_run_config(args) -> dict:
    with open(args.config, encoding="utf-8") as f:
        config = json.load(f)
    for key in ("events", "conceptualizations", "triples"):
        if key not in config:
            raise ConfigError(f"run config must name the {key!r} input file")
    if args.scorer:
        config.setdefault("scorer", {})["kind"] = args.scorer
    if args.endpoint:
        config.setdefault("scorer", {})["endpoint"] = args.endpoint
    if args.out:
        config["out_dir"] = args.out
    if "out_dir" not in config:
        raise ConfigError("run config must name out_dir (or pass --out)")
    return config


def _prompt_config(args, config: dict) -> PromptConfig:
    if getattr(args, "prompt_config", None):
        return PromptConfig.from_json(args.prompt_config)
    tokens = config.get("prompt_tokens")
    return PromptConfig(**tokens) if tokens else DEFAULT_PROMPTS


def cmd_run(args) -> int:
    config = _read_run_config(args)
    pipeline_cfg = PipelineConfig.from_dict(config.get("pipeline", {}))
    prompt_cfg = _prompt_config(args, config)
    backends = _build_backends(config.get("scorer", {"kind": "lexical"}))

    bundle = load_bundle(config["events"], config["conceptualizations"], config["triples"])
    out_dir = config["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    bundle_dir = os.path.join(out_dir, "bundle")
    os.makedirs(bundle_dir, exist_ok=True)
    save_bundle(
        bundle,
        os.path.join(bundle_dir, "events.jsonl"),
        os.path.join(bundle_dir, "conceptualizations.jsonl"),
        os.path.join(bundle_dir, "triples.jsonl"),
    )

    clock = (lambda: 0.0) if args.deterministic else None
    result = run_cat(
        bundle, pipeline_cfg, backends, out_dir=out_dir, prompt_cfg=prompt_cfg, clock=clock
    )

    exports_dir = os.path.join(out_dir, "exports")
    os.makedirs(exports_dir, exist_ok=True)
    export_counts = export_abstract_knowledge(
        bundle,
        result.event_store,
        result.triple_store,
        pipeline_cfg.export_threshold,
        os.path.join(exports_dir, "comet.tsv"),
        os.path.join(exports_dir, "generative.jsonl"),
        prompt_cfg,
    )

    input_digests = {
        "events": file_digest(config["events"]),
        "conceptualizations": file_digest(config["conceptualizations"]),
        "triples": file_digest(config["triples"]),
    }
    config_snapshot = {
        "pipeline": pipeline_cfg.to_dict(),
        "scorer": config.get("scorer", {"kind": "lexical"}),
        "prompt_tokens": dataclasses.asdict(prompt_cfg),
    }
    manifest_path = write_manifest(
        out_dir, config_snapshot, input_digests, backends.identities()
    )
    _diag(f"run complete; manifest at {manifest_path}")
    _emit(
        {
            "out_dir": out_dir,
            "bands": result.report["bands"],
            "training_data": result.report["training_data"],
            "exports": export_counts,
        }
    )
    return EXIT_OK


def _latest_store(run_dir: str, task_prefix: str) -> str:
    pattern = os.path.join(run_dir, "stores", f"{task_prefix}_gen*.jsonl")
    paths = glob.glob(pattern)
    if not paths:
        raise ConfigError(f"no {task_prefix} store found under {run_dir}/stores")

    def gen_of(path: str) -> int:
        match = re.search(r"_gen(\d+)\.jsonl$", path)
        return int(match.group(1)) if match else -1

    return max(paths, key=gen_of)


def cmd_export(args) -> int:
    bundle_dir = os.path.join(args.run_dir, "bundle")
    bundle = load_bundle(
        os.path.join(bundle_dir, "events.jsonl"),
        os.path.join(bundle_dir, "conceptualizations.jsonl"),
        os.path.join(bundle_dir, "triples.jsonl"),
    )
    event_store = PseudoLabelStore.load_jsonl(_latest_store(args.run_dir, "event"), bundle)
    triple_store = PseudoLabelStore.load_jsonl(_latest_store(args.run_dir, "triple"), bundle)
    out_dir = args.out or os.path.join(args.run_dir, "exports")
    os.makedirs(out_dir, exist_ok=True)
    prompt_cfg = (
        PromptConfig.from_json(args.prompt_config) if args.prompt_config else DEFAULT_PROMPTS
    )
    counts = export_abstract_knowledge(
        bundle,
        event_store,
        triple_store,
        args.threshold,
        os.path.join(out_dir, "comet.tsv"),
        os.path.join(out_dir, "generative.jsonl"),
        prompt_cfg,
    )
    _emit({"threshold": args.threshold, "out_dir": out_dir, **counts})
    return EXIT_OK


def _read_jsonl_rows(path: str) -> list[dict]:
    if not os.path.exists(path):
        raise ParseError("file not found", path=path)
    rows = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON: {exc.msg}", path=path, line=line_no)
    return rows


def cmd_eval(args) -> int:
    if args.task == "auc":
        if not args.pred or not args.gold:
            raise ConfigError("eval --task auc needs --pred and --gold")
        pred_rows = _read_jsonl_rows(args.pred)
        gold_rows = _read_jsonl_rows(args.gold)
        scores_by_id = {row["id"]: float(row["score"]) for row in pred_rows}
        scores, labels = [], []
        for row in gold_rows:
            if row["id"] not in scores_by_id:
                raise IntegrityError(f"no prediction for id {row['id']!r}")
            scores.append(scores_by_id[row["id"]])
            labels.append(int(row["label"]))
        _emit({"auc": auc(scores, labels), "n": len(labels)})
        return EXIT_OK
    if args.task == "nlg":
        if not args.items:
            raise ConfigError("eval --task nlg needs --items")
        rows = _read_jsonl_rows(args.items)
        items = [
            GenerationEvalItem(candidate=row["candidate"], references=tuple(row["references"]))
            for row in rows
        ]
        orders = tuple(int(x) for x in args.bleu_orders.split(","))
        _emit(evaluate_generations(items, bleu_orders=orders))
        return EXIT_OK
    raise ConfigError(f"unknown eval task {args.task!r}")


def cmd_serve_mock(args) -> int:
    backend = LexicalOverlapScorer() if args.backend == "lexical" else LogisticOverlapScorer()
    serve_forever(args.host, args.port, backend)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catkit",
        description="Conceptualize event-centric commonsense knowledge bases "
        "with a teacher-student pseudo-labeling loop.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="validate dataset files and cache a canonical bundle")
    p_ingest.add_argument("--events", required=True)
    p_ingest.add_argument("--concepts", required=True)
    p_ingest.add_argument("--triples", required=True)
    p_ingest.add_argument("--out", help="directory for the canonical bundle copy")
    p_ingest.add_argument(
        "--strict-duplicates", action="store_true", help="fail on duplicate rows instead of dropping"
    )
    p_ingest.set_defaults(func=cmd_ingest)

    p_stats = sub.add_parser("stats", help="print corpus statistics as JSON")
    p_stats.add_argument("--events", required=True)
    p_stats.add_argument("--concepts", required=True)
    p_stats.add_argument("--triples", required=True)
    p_stats.set_defaults(func=cmd_stats)

    p_run = sub.add_parser("run", help="execute the full loop from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--scorer", choices=["lexical", "logistic", "remote"])
    p_run.add_argument("--endpoint", help=f"remote scorer endpoint (default ${ENDPOINT_ENV})")
    p_run.add_argument("--out", help="artifacts directory (overrides config out_dir)")
    p_run.add_argument("--prompt-config", help="JSON file overriding prompt tokens")
    p_run.add_argument(
        "--deterministic",
        action="store_true",
        help="zero stage timings so reports and manifests are byte-reproducible",
    )
    p_run.set_defaults(func=cmd_run)

    p_export = sub.add_parser("export", help="re-export knowledge from a run at a threshold")
    p_export.add_argument("--run-dir", required=True)
    p_export.add_argument("--threshold", type=float, default=0.95)
    p_export.add_argument("--out", help="output directory (default <run-dir>/exports)")
    p_export.add_argument("--prompt-config", help="JSON file overriding prompt tokens")
    p_export.set_defaults(func=cmd_export)

    p_eval = sub.add_parser("eval", help="evaluate predictions (auc) or generations (nlg)")
    p_eval.add_argument("--task", required=True, choices=["auc", "nlg"])
    p_eval.add_argument("--pred", help="JSONL of {'id', 'score'} rows")
    p_eval.add_argument("--gold", help="JSONL of {'id', 'label'} rows")
    p_eval.add_argument("--items", help="JSONL of {'candidate', 'references'} rows")
    p_eval.add_argument("--bleu-orders", default="1,2", help="comma-separated BLEU orders")
    p_eval.set_defaults(func=cmd_eval)

    p_mock = sub.add_parser("serve-mock", help="serve the wire protocol with a builtin backend")
    p_mock.add_argument("--host", default="127.0.0.1")
    p_mock.add_argument("--port", type=int, default=8731)
    p_mock.add_argument("--backend", choices=["lexical", "logistic"], default="logistic")
    p_mock.set_defaults(func=cmd_serve_mock)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineStageError as exc:
        _diag(f"error: {exc}")
        return EXIT_STAGE
    except MetricUndefinedError as exc:
        _diag(f"error: {exc}")
        return EXIT_METRIC
    except (TransportError, ProtocolError) as exc:
        _diag(f"error: {exc}")
        return EXIT_TRANSPORT
    except (ConfigError, ParseError, IntegrityError, ContractError) as exc:
        _diag(f"error: {exc}")
        return EXIT_INPUT
    except FileNotFoundError as exc:
        _diag(f"error: file not found: {exc.filename}")
        return EXIT_INPUT
    except CatkitError as exc:
        _diag(f"error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
