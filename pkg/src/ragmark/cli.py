"""Command-line entry point wiring all modules together.

Exit codes follow the CI convention: 0 success, 1 when scoring or benchmark
failures are present, 2 for configuration and IO errors. Every report file
is written atomically (temp file + rename), so readers never observe a
half-written report.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from ._retry import RetryPolicy
from .aspects import ASPECTS
from .codebook import Codebook, gold_accuracy, map_value
from .config import RunConfig, load_config
from .embed import (
    DocumentIndex,
    RetrievalConfig,
    build_document_index,
    embedded_chunks_to_json,
    index_from_chunks,
    index_from_embedded_json,
)
from .errors import (
    ConfigurationError,
    GenerationInvalidError,
    NoContextError,
    RagmarkError,
)
from .evalbench import load_ground_truth, run_benchmark, score_predictions
from .ingest import (
    ChunkConfig,
    SourceDocument,
    chunk_document,
    chunks_from_json,
    chunks_to_json,
    load_corpus,
)
from .llm import CompletionCache, CompletionClient, build_backends
from .pipeline import extract
from .stats import (
    FoldScores,
    corrected_paired_ttest,
    mae,
    pinball_loss,
    r2,
    rmse,
    stratified_split,
)
from .testing import GoldChatBackend


def write_atomic(path: str | Path, text: str) -> None:
    """Write a file so it is either absent or complete, never partial."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _read_json(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _shared(args, name: str, default=None):
    return getattr(args, name, default)


def _require_config(args) -> RunConfig:
    config_path = _shared(args, "config")
    if not config_path:
        raise ConfigurationError("--config is required for this subcommand")
    cfg = load_config(config_path)
    cache_override = _shared(args, "cache")
    if cache_override:
        cfg.cache_path = Path(cache_override)
    parallelism = _shared(args, "parallelism")
    if parallelism is not None:
        cfg.parallelism = parallelism
    return cfg


def _build_client(cfg: RunConfig, providers) -> CompletionClient:
    truth_loader = lambda: load_ground_truth(cfg.ground_truth_path)  # noqa: E731
    backends = build_backends(
        sorted(providers), mock_factory=lambda: GoldChatBackend(truth_loader())
    )
    return CompletionClient(
        cache=CompletionCache(cfg.cache_path),
        backends=backends,
        policy=RetryPolicy(max_attempts=cfg.max_attempts, backoff_seconds=cfg.backoff_seconds),
    )


def cmd_ingest(args) -> int:
    docs = load_corpus(args.input)
    cfg = ChunkConfig(max_chars=args.max_chars, overlap_chars=args.overlap)
    documents = []
    for doc in docs:
        chunks = chunk_document(doc, cfg)
        documents.append(
            {
                "doc_id": doc.doc_id,
                "company_label": doc.company_label,
                "chunks": chunks_to_json(chunks),
            }
        )
    payload = {
        "config": {"max_chars": cfg.max_chars, "overlap_chars": cfg.overlap_chars},
        "documents": documents,
    }
    write_atomic(args.out, json.dumps(payload, ensure_ascii=False, indent=2) + "\n")
    print(f"wrote {sum(len(d['chunks']) for d in documents)} chunks for {len(documents)} document(s) to {args.out}")
    return 0


def _index_from_chunks_file(path: str | Path, doc_id: str | None, cfg: RunConfig) -> DocumentIndex:
    data = _read_json(path)
    documents = data["documents"]
    if doc_id is not None:
        matches = [d for d in documents if d["doc_id"] == doc_id]
        if not matches:
            raise ConfigurationError(f"doc_id {doc_id!r} not found in {path}")
        entry = matches[0]
    elif len(documents) == 1:
        entry = documents[0]
    else:
        raise ConfigurationError(
            f"{path} holds {len(documents)} documents; select one with --doc-id"
        )
    backend = cfg.build_embedding_backend()
    doc = SourceDocument(
        doc_id=entry["doc_id"], company_label=entry.get("company_label", ""), text="(chunked)"
    )
    rows = entry["chunks"]
    if rows and "values" in rows[0]:
        return index_from_embedded_json(doc, rows, backend)
    # No stored vectors: embed the chunk texts now with the configured backend.
    return index_from_chunks(doc, chunks_from_json(rows), backend)


def cmd_extract(args) -> int:
    cfg = _require_config(args)
    if args.model not in cfg.models:
        raise ConfigurationError(f"model alias {args.model!r} not in config registry")
    model = cfg.models[args.model]
    aspect = cfg.aspect(args.aspect)
    if args.top_k != aspect.retrieval.top_k or args.min_similarity != aspect.retrieval.min_similarity:
        aspect = replace(
            aspect, retrieval=RetrievalConfig(top_k=args.top_k, min_similarity=args.min_similarity)
        )
    index = _index_from_chunks_file(args.chunks, args.doc_id, cfg)
    client = _build_client(cfg, {model.provider})
    try:
        result = extract(index, aspect, model, client)
    except NoContextError as err:
        print(f"extraction failed (no context): {err}", file=sys.stderr)
        return 1
    except GenerationInvalidError as err:
        print(f"extraction failed (invalid generation): {err}", file=sys.stderr)
        return 1
    write_atomic(args.out, json.dumps(result.to_json_dict(), ensure_ascii=False, indent=2) + "\n")
    print(f"wrote extraction result to {args.out}")
    return 0


def cmd_embed_chunks(args) -> int:
    cfg = _require_config(args)
    data = _read_json(args.chunks)
    backend = cfg.build_embedding_backend()
    documents = []
    for entry in data["documents"]:
        doc = SourceDocument(
            doc_id=entry["doc_id"],
            company_label=entry.get("company_label", ""),
            text="(chunked)",
        )
        index = index_from_chunks(doc, chunks_from_json(entry["chunks"]), backend)
        documents.append(
            {
                "doc_id": doc.doc_id,
                "company_label": doc.company_label,
                "chunks": embedded_chunks_to_json(index),
            }
        )
    payload = {"config": data.get("config", {}), "documents": documents}
    write_atomic(args.out, json.dumps(payload, ensure_ascii=False, indent=2) + "\n")
    print(f"wrote embedded chunks to {args.out}")
    return 0


def cmd_bench(args) -> int:
    cfg = _require_config(args)
    if cfg.benchmark is None:
        raise ConfigurationError("config has no benchmark section")
    settings = cfg.benchmark
    truth = load_ground_truth(cfg.ground_truth_path)
    runs = args.runs if args.runs is not None else settings.runs

    aliases = settings.models or sorted(cfg.models)
    models = {alias: cfg.models[alias] for alias in aliases}
    aspect_ids = settings.aspects or list(ASPECTS)
    unknown = [aid for aid in aspect_ids if aid not in ASPECTS]
    if unknown:
        raise ConfigurationError([f"benchmark references unknown aspect {aid!r}" for aid in unknown])
    aspects = [cfg.aspect(aspect_id) for aspect_id in aspect_ids]
    companies = settings.companies or truth.companies

    backend = cfg.build_embedding_backend()
    docs = load_corpus(settings.corpus_path)
    by_company = {doc.company_label: doc for doc in docs}
    missing = [c for c in companies if c not in by_company]
    if missing:
        raise ConfigurationError([f"benchmark corpus has no document for company {c!r}" for c in missing])
    indexes = {
        company: build_document_index(by_company[company], backend, cfg.chunking)
        for company in companies
    }

    client = _build_client(cfg, {model.provider for model in models.values()})
    report = run_benchmark(
        indexes=indexes,
        truth=truth,
        models=models,
        aspects=aspects,
        companies=companies,
        n_runs=runs,
        client=client,
        parallelism=cfg.parallelism,
    )
    write_atomic(args.out, report.to_json())
    for alias, rates in report.pass_rates.items():
        for aspect_id, rate in rates.items():
            print(f"{alias} / {aspect_id}: {rate:.1f}% pass")
    print(f"report written to {args.out}")
    return 1 if report.any_failures else 0


def cmd_eval(args) -> int:
    truth = load_ground_truth(args.truth)
    predictions = _read_json(args.pred)
    results = score_predictions(predictions, truth)
    failures = 0
    for company, aspect_id, outcome in results:
        status = "PASS" if outcome.passed else "FAIL"
        print(f"{status} {company} / {aspect_id}")
        if not outcome.passed:
            failures += 1
            print(f"  detail: {json.dumps(outcome.failure_detail, sort_keys=True)}")
    print(f"{len(results) - failures}/{len(results)} passed")
    return 1 if failures else 0


def cmd_codebook_map(args) -> int:
    book = Codebook.from_json_file(args.book)
    values = _read_json(args.input)
    mapped = [{"value": value, "category": map_value(book, value)} for value in values]
    text = json.dumps(mapped, ensure_ascii=False, indent=2) + "\n"
    if args.out:
        write_atomic(args.out, text)
        print(f"wrote {len(mapped)} mappings to {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_codebook_score(args) -> int:
    book = Codebook.from_json_file(args.book)
    gold = _read_json(args.gold)
    samples = [(row["value"], row["category"]) for row in gold]
    accuracy = gold_accuracy(book, samples)
    print(json.dumps({"samples": len(samples), "accuracy": accuracy}))
    return 0


def cmd_stats_ttest(args) -> int:
    scores_a = _read_json(args.a)
    scores_b = _read_json(args.b)
    if args.k is not None and args.k != len(scores_a):
        raise ConfigurationError(f"--k {args.k} does not match {len(scores_a)} fold scores")
    result = corrected_paired_ttest(
        FoldScores(
            system_a=tuple(scores_a),
            system_b=tuple(scores_b),
            n_train=args.n_train,
            n_test=args.n_test,
        ),
        alternative=args.alternative,
    )
    print(
        json.dumps(
            {
                "t_statistic": result.t_statistic,
                "p_value": result.p_value,
                "degrees_of_freedom": result.degrees_of_freedom,
            }
        )
    )
    return 0


def cmd_stats_metrics(args) -> int:
    pred = _read_json(args.pred)
    actual = _read_json(args.actual)
    out = {"rmse": rmse(pred, actual), "mae": mae(pred, actual), "r2": r2(pred, actual)}
    if args.pinball:
        quantiles = [float(q) for q in args.pinball.split(",")]
        out["pinball"] = {str(q): pinball_loss(pred, actual, q) for q in quantiles}
    print(json.dumps(out))
    return 0


def cmd_stats_split(args) -> int:
    values = _read_json(args.values)
    train, test = stratified_split(
        values, test_fraction=args.test_fraction, n_bins=args.bins, seed=_shared(args, "seed", 0)
    )
    print(json.dumps({"train": train, "test": test}))
    return 0


def _add_shared_flags(parser: argparse.ArgumentParser) -> None:
    # SUPPRESS keeps a subcommand's unset flag from clobbering a value given
    # before the subcommand, so both positions work.
    parser.add_argument(
        "--config", default=argparse.SUPPRESS, help="path to the run config JSON file"
    )
    parser.add_argument(
        "--cache", default=argparse.SUPPRESS, help="override the completion cache path"
    )
    parser.add_argument(
        "--parallelism",
        type=int,
        default=argparse.SUPPRESS,
        help="max concurrent benchmark cells",
    )
    parser.add_argument(
        "--seed", type=int, default=argparse.SUPPRESS, help="seed for seeded subcommands (default 0)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragmark",
        description="Retrieval-augmented structured extraction and its benchmark harness.",
    )
    _add_shared_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("ingest", help="cleanse and chunk a corpus file", formatter_class=fmt)
    p.add_argument("--input", required=True, help="corpus JSON: [{doc_id, company_label, text}]")
    p.add_argument("--max-chars", type=int, default=2000, help="maximum chunk length")
    p.add_argument("--overlap", type=int, default=300, help="overlap between consecutive chunks")
    p.add_argument("--out", required=True, help="output chunks JSON file")
    _add_shared_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("embed", help="embed a chunks file with the configured backend", formatter_class=fmt)
    p.add_argument("--chunks", required=True, help="chunks JSON from `ingest`")
    p.add_argument("--out", required=True, help="output chunks-with-embeddings JSON file")
    _add_shared_flags(p)
    p.set_defaults(func=cmd_embed_chunks)

    p = sub.add_parser("extract", help="run one aspect extraction against a chunked document", formatter_class=fmt)
    p.add_argument("--chunks", required=True, help="chunks JSON from `ingest` (vectors optional)")
    p.add_argument("--aspect", required=True, choices=sorted(ASPECTS), help="aspect to extract")
    p.add_argument("--model", required=True, help="model alias from the config registry")
    p.add_argument("--doc-id", default=None, help="document to use when the file holds several")
    p.add_argument("--top-k", type=int, default=10, help="retrieved chunks per query")
    p.add_argument("--min-similarity", type=float, default=0.30, help="minimum cosine similarity")
    p.add_argument("--out", required=True, help="output extraction result JSON")
    _add_shared_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("bench", help="run the full benchmark grid and write a report", formatter_class=fmt)
    p.add_argument("--runs", type=int, default=None, help="repeated runs per cell (default 20, from config)")
    p.add_argument("--out", required=True, help="output report JSON")
    _add_shared_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="score a predictions file against ground truth", formatter_class=fmt)
    p.add_argument("--pred", required=True, help="predictions JSON: [{company, aspect_id, payload}]")
    p.add_argument("--truth", default=None, help="ground-truth JSON (default: packaged reference values)")
    _add_shared_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("codebook", help="regex codebook mapping and scoring")
    cb = p.add_subparsers(dest="codebook_command", required=True)
    m = cb.add_parser("map", help="map raw values to categories", formatter_class=fmt)
    m.add_argument("--book", required=True, help="codebook JSON file")
    m.add_argument("--in", dest="input", required=True, help="JSON array of raw strings")
    m.add_argument("--out", default=None, help="output file (default: stdout)")
    _add_shared_flags(m)
    m.set_defaults(func=cmd_codebook_map)
    s = cb.add_parser("score", help="gold-sample accuracy of a codebook", formatter_class=fmt)
    s.add_argument("--book", required=True, help="codebook JSON file")
    s.add_argument("--gold", required=True, help="JSON array of {value, category}")
    _add_shared_flags(s)
    s.set_defaults(func=cmd_codebook_score)

    p = sub.add_parser("stats", help="evaluation statistics")
    st = p.add_subparsers(dest="stats_command", required=True)
    t = st.add_parser("ttest", help="variance-corrected paired t-test over fold scores", formatter_class=fmt)
    t.add_argument("--a", required=True, help="JSON array of fold scores for system A")
    t.add_argument("--b", required=True, help="JSON array of fold scores for system B")
    t.add_argument("--k", type=int, default=None, help="expected fold count (checked against the files)")
    t.add_argument("--n-train", type=int, required=True, help="training-set size per fold")
    t.add_argument("--n-test", type=int, required=True, help="test-set size per fold")
    t.add_argument(
        "--alternative",
        choices=["two-sided", "greater", "less"],
        default="two-sided",
        help="sidedness of the reported p-value",
    )
    _add_shared_flags(t)
    t.set_defaults(func=cmd_stats_ttest)
    m = st.add_parser("metrics", help="rmse / mae / r2 (+ optional pinball losses)", formatter_class=fmt)
    m.add_argument("--pred", required=True, help="JSON array of predictions")
    m.add_argument("--actual", required=True, help="JSON array of actuals")
    m.add_argument("--pinball", default=None, help="comma-separated quantiles, e.g. 0.5,0.75,0.9")
    _add_shared_flags(m)
    m.set_defaults(func=cmd_stats_metrics)
    sp = st.add_parser("split", help="stratified train/test split over quantile bins", formatter_class=fmt)
    sp.add_argument("--values", required=True, help="JSON array of target values")
    sp.add_argument("--test-fraction", type=float, default=0.2, help="fraction per bin for the test side")
    sp.add_argument("--bins", type=int, default=10, help="number of quantile bins")
    _add_shared_flags(sp)
    sp.set_defaults(func=cmd_stats_split)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:  # argparse exits 2 on usage errors, 0 on --help
        return int(exit_.code or 0)
    try:
        return args.func(args)
    except ConfigurationError as err:
        for problem in err.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 2
    except (RagmarkError, OSError, ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
