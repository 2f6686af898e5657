"""Run configuration: one JSON file, validated in full before anything runs.

Validation is not fail-fast: every problem in the file is collected and
reported at once. Credentials never live in the config; backends read them
from ``<PROVIDER>_API_KEY`` environment variables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from dataclasses import replace as _replace

from .aspects import ASPECTS, AspectSpec
from .embed import HashingEmbeddingBackend, OpenAIEmbeddingBackend, RetrievalConfig
from .errors import ConfigurationError
from .ingest import ChunkConfig
from .llm import ModelSpec


@dataclass
class BenchmarkSettings:
    corpus_path: Path
    runs: int = 20
    models: list[str] = field(default_factory=list)  # empty = all registry aliases
    aspects: list[str] = field(default_factory=list)  # empty = all built-in aspects
    companies: list[str] = field(default_factory=list)  # empty = all ground-truth companies


@dataclass
class RunConfig:
    """Validated contents of the run config file."""

    models: dict[str, ModelSpec]
    embedding_backend: str = "hashing"
    embedding_dims: int = 256
    embedding_seed: int = 0
    embedding_version_id: str = ""
    retrieval: RetrievalConfig = RetrievalConfig()
    chunking: ChunkConfig = ChunkConfig()
    cache_path: Path = Path("completions.jsonl")
    max_attempts: int = 3
    backoff_seconds: float = 0.5
    parallelism: int = 1
    ground_truth_path: Path | None = None
    benchmark: BenchmarkSettings | None = None
    aspect_overrides: dict[str, dict] = field(default_factory=dict)

    def aspect(self, aspect_id: str) -> AspectSpec:
        """The built-in aspect with any per-run config overrides applied."""
        spec = ASPECTS[aspect_id]
        override = self.aspect_overrides.get(aspect_id)
        if not override:
            return spec
        retrieval = RetrievalConfig(
            top_k=override.get("top_k", spec.retrieval.top_k),
            min_similarity=override.get("min_similarity", spec.retrieval.min_similarity),
        )
        return _replace(spec, prompt=override.get("prompt", spec.prompt), retrieval=retrieval)

    def build_embedding_backend(self):
        if self.embedding_backend == "hashing":
            return HashingEmbeddingBackend(dims=self.embedding_dims, seed=self.embedding_seed)
        if self.embedding_backend == "openai":
            if not self.embedding_version_id:
                raise ConfigurationError("embedding.version_id required for the openai backend")
            return OpenAIEmbeddingBackend(self.embedding_version_id, dims=self.embedding_dims)
        raise ConfigurationError(f"unknown embedding backend {self.embedding_backend!r}")


def _duplicate_tracking_hook(duplicates: list[str]):
    def hook(pairs):
        seen = set()
        for key, _ in pairs:
            if key in seen:
                duplicates.append(key)
            seen.add(key)
        return dict(pairs)

    return hook


def _check_keys(section: dict, allowed: set[str], prefix: str, problems: list[str]) -> None:
    for key in section:
        if key not in allowed:
            problems.append(f"unknown config key {prefix}{key!r}")


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate the config file, reporting all errors together."""
    path = Path(path)
    duplicates: list[str] = []
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh, object_pairs_hook=_duplicate_tracking_hook(duplicates))
    except OSError as err:
        raise ConfigurationError(f"cannot read config file {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"config file {path} is not valid JSON: {err}") from err

    problems: list[str] = [f"duplicate key {key!r} in config" for key in duplicates]
    _check_keys(
        data,
        {
            "models",
            "embedding",
            "retrieval",
            "chunking",
            "llm",
            "ground_truth",
            "parallelism",
            "benchmark",
            "aspects",
        },
        "",
        problems,
    )

    aspect_overrides = data.get("aspects", {})
    for aspect_id, override in aspect_overrides.items():
        if aspect_id not in ASPECTS:
            problems.append(f"aspects.{aspect_id}: unknown aspect")
            continue
        _check_keys(override, {"prompt", "top_k", "min_similarity"}, f"aspects.{aspect_id}.", problems)

    models: dict[str, ModelSpec] = {}
    model_section = data.get("models")
    if not isinstance(model_section, dict) or not model_section:
        problems.append("models section required: mapping of alias -> {provider, version_id}")
    else:
        for alias, entry in model_section.items():
            if not isinstance(entry, dict):
                problems.append(f"models.{alias} must be an object")
                continue
            _check_keys(entry, {"provider", "version_id", "temperature"}, f"models.{alias}.", problems)
            try:
                models[alias] = ModelSpec(
                    provider=entry.get("provider", ""),
                    version_id=entry.get("version_id", ""),
                    temperature=float(entry.get("temperature", 0.0)),
                )
            except (ValueError, TypeError) as err:
                problems.append(f"models.{alias}: {err}")

    embedding = data.get("embedding", {})
    _check_keys(embedding, {"backend", "dims", "seed", "version_id"}, "embedding.", problems)
    dims = embedding.get("dims", 256)
    if not isinstance(dims, int) or dims < 2:
        problems.append("embedding.dims must be an integer >= 2")
    if not isinstance(embedding.get("seed", 0), int):
        problems.append("embedding.seed must be an integer")

    retrieval_section = data.get("retrieval", {})
    _check_keys(retrieval_section, {"top_k", "min_similarity"}, "retrieval.", problems)
    retrieval = RetrievalConfig()
    try:
        retrieval = RetrievalConfig(
            top_k=retrieval_section.get("top_k", 10),
            min_similarity=retrieval_section.get("min_similarity", 0.30),
        )
    except ValueError as err:
        problems.append(f"retrieval: {err}")

    chunk_section = data.get("chunking", {})
    _check_keys(chunk_section, {"max_chars", "overlap_chars"}, "chunking.", problems)
    chunking = ChunkConfig()
    try:
        chunking = ChunkConfig(
            max_chars=chunk_section.get("max_chars", 2000),
            overlap_chars=chunk_section.get("overlap_chars", 300),
        )
    except ValueError as err:
        problems.append(f"chunking: {err}")

    llm_section = data.get("llm", {})
    _check_keys(llm_section, {"cache_path", "max_attempts", "backoff_seconds"}, "llm.", problems)
    cache_path = llm_section.get("cache_path")
    if not cache_path:
        problems.append("llm.cache_path required")

    ground_truth_path = data.get("ground_truth")
    if ground_truth_path is not None:
        ground_truth_path = Path(ground_truth_path)
        if not ground_truth_path.exists():
            problems.append(f"ground_truth file does not exist: {ground_truth_path}")

    parallelism = data.get("parallelism", 1)
    if not isinstance(parallelism, int) or parallelism < 1:
        problems.append("parallelism must be a positive integer")

    benchmark = None
    bench_section = data.get("benchmark")
    if bench_section is not None:
        _check_keys(
            bench_section, {"corpus", "runs", "models", "aspects", "companies"}, "benchmark.", problems
        )
        corpus = bench_section.get("corpus")
        if not corpus:
            problems.append("benchmark.corpus required when a benchmark section is present")
        else:
            corpus_path = Path(corpus)
            if not corpus_path.exists():
                problems.append(f"benchmark corpus file does not exist: {corpus_path}")
            runs = bench_section.get("runs", 20)
            if not isinstance(runs, int) or runs < 1:
                problems.append("benchmark.runs must be a positive integer")
                runs = 20
            benchmark = BenchmarkSettings(
                corpus_path=corpus_path,
                runs=runs,
                models=list(bench_section.get("models", [])),
                aspects=list(bench_section.get("aspects", [])),
                companies=list(bench_section.get("companies", [])),
            )
            for alias in benchmark.models:
                if alias not in models:
                    problems.append(f"benchmark.models references unknown alias {alias!r}")

    if problems:
        raise ConfigurationError(problems)

    return RunConfig(
        models=models,
        embedding_backend=embedding.get("backend", "hashing"),
        embedding_dims=embedding.get("dims", 256),
        embedding_seed=embedding.get("seed", 0),
        embedding_version_id=embedding.get("version_id", ""),
        retrieval=retrieval,
        chunking=chunking,
        cache_path=Path(cache_path),
        max_attempts=llm_section.get("max_attempts", 3),
        backoff_seconds=llm_section.get("backoff_seconds", 0.5),
        parallelism=parallelism,
        ground_truth_path=ground_truth_path,
        benchmark=benchmark,
        aspect_overrides=aspect_overrides,
    )
