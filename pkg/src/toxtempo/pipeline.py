"""Pipeline driver: ingest -> score -> metrics -> churn -> classify -> report.

Stages are file-backed: each writes its outputs under the run's output
directory, and a state file records a content hash of the stage's inputs
plus its config subsection.  A rerun skips any stage whose hash and outputs
are unchanged (``force`` overrides), so re-running a finished pipeline does
no work and leaves every byte in place.

Outputs are written to a temp name and renamed into place; on stage failure
the temp files are removed so no partial output survives.  When consecutive
stages run in one invocation, intermediate data is handed over in memory
instead of being re-read from disk.

One JSON object per line goes to stderr for each stage (start/skip/done,
user and event counts, duration); report files themselves never contain
timestamps, keeping report directories byte-identical across reruns and
parallelism levels.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import churn as churn_mod
from . import classifier as classify_mod
from . import metrics as metrics_mod
from . import model, report, scoring
from .errors import ConfigError

STAGES = ("ingest", "score", "metrics", "churn", "classify", "report")

STATE_FILE = ".stage_state.json"


@dataclass(slots=True)
class RunConfig:
    """Everything one pipeline run needs; see :func:`load_config` for files."""

    inputs: list[Path]
    output_dir: Path
    input_format: str = "jsonl"
    required_length: int | None = None
    on_bad_record: str = "fail"
    timestamp_floor: int = model.DEFAULT_TIMESTAMP_FLOOR
    scorer: scoring.ScorerConfig = field(default_factory=scoring.ScorerConfig)
    stages: tuple[str, ...] = STAGES
    parallelism: int = 1
    svg: bool = False
    force: bool = False
    user_scores: Path | None = None
    user_scores_label: str = "bot_score"

    def validate(self) -> None:
        unknown = [s for s in self.stages if s not in STAGES]
        if unknown:
            raise ConfigError(f"unknown stage(s): {', '.join(unknown)}")
        if not self.stages:
            raise ConfigError("stages must not be empty")
        if "ingest" in self.stages and not self.inputs:
            raise ConfigError("ingest stage needs at least one input file")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.input_format not in ("jsonl", "csv"):
            raise ConfigError(f"input_format must be jsonl or csv, got {self.input_format!r}")
        if self.on_bad_record not in ("fail", "skip_and_log"):
            raise ConfigError("on_bad_record must be 'fail' or 'skip_and_log'")
        if "score" in self.stages:
            try:
                self.scorer.validate()
            except ValueError as exc:
                raise ConfigError(f"scorer: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    """Load a TOML or JSON run config; relative paths resolve against the file.

    The scorer API key is never written in the config: set ``api_key_env``
    to the name of an environment variable holding it.
    """
    path = Path(path)
    text = path.read_text("utf-8")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        obj = tomllib.loads(text)
    else:
        obj = json.loads(text)
    base = path.parent

    def respath(value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    scorer_obj = obj.get("scorer", {})
    api_key = None
    key_env = scorer_obj.get("api_key_env")
    if key_env:
        api_key = os.environ.get(key_env)
        if not api_key and scorer_obj.get("mode") == "remote":
            raise ConfigError(
                f"remote scorer: environment variable {key_env!r} is unset or empty; "
                f"export the API key there (keys never go in config files)")
    scorer = scoring.ScorerConfig(
        mode=scorer_obj.get("mode", "offline"),
        endpoint_url=scorer_obj.get("endpoint_url"),
        api_key=api_key,
        attribute=scorer_obj.get("attribute", "TOXICITY"),
        max_qps=float(scorer_obj.get("max_qps", 10.0)),
        max_retries=int(scorer_obj.get("max_retries", 3)),
        max_inflight=int(scorer_obj.get("max_inflight", 4)),
        backoff_base=float(scorer_obj.get("backoff_base", 1.0)),
        cache_path=respath(scorer_obj.get("cache")),
        lexicon_path=respath(scorer_obj.get("lexicon")),
    )
    try:
        config = RunConfig(
            inputs=[respath(p) for p in obj.get("inputs", [])],
            output_dir=respath(obj.get("output_dir", "out")),
            input_format=obj.get("input_format", "jsonl"),
            required_length=obj.get("required_length"),
            on_bad_record=obj.get("on_bad_record", "fail"),
            timestamp_floor=int(obj.get("timestamp_floor", model.DEFAULT_TIMESTAMP_FLOOR)),
            scorer=scorer,
            stages=tuple(obj.get("stages", STAGES)),
            parallelism=int(obj.get("parallelism", 1)),
            svg=bool(obj.get("svg", False)),
            user_scores=respath(obj.get("user_scores")),
            user_scores_label=obj.get("user_scores_label", "bot_score"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    return config


def _log(stage: str, status: str, **fields: Any) -> None:
    payload = {"stage": stage, "status": status}
    payload.update(fields)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr, flush=True)


def _file_hash(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_hash(parts: dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()


class _State:
    """Per-output-dir record of each stage's input hash and output files."""

    def __init__(self, output_dir: Path):
        self.path = output_dir / STATE_FILE
        self.data: dict[str, dict] = {}
        if self.path.exists():
            try:
                self.data = json.loads(self.path.read_text("utf-8"))
            except (json.JSONDecodeError, OSError):
                self.data = {}

    def fresh(self, stage: str, input_hash: str, output_dir: Path) -> bool:
        entry = self.data.get(stage)
        if not entry or entry.get("input_hash") != input_hash:
            return False
        return all((output_dir / rel).exists() for rel in entry.get("outputs", []))

    def outputs(self, stage: str) -> list[str]:
        return list(self.data.get(stage, {}).get("outputs", []))

    def record(self, stage: str, input_hash: str, outputs: list[str]) -> None:
        self.data[stage] = {"input_hash": input_hash, "outputs": sorted(outputs)}
        tmp = self.path.with_name(self.path.name + f".tmp-{os.getpid()}")
        tmp.write_text(json.dumps(self.data, indent=2, sort_keys=True), encoding="utf-8")
        os.replace(tmp, self.path)


class _AtomicWriter:
    """Write stage outputs to temp names, then rename all into place."""

    def __init__(self, output_dir: Path):
        self.output_dir = output_dir
        self.pending: list[tuple[Path, Path]] = []  # (tmp, final)

    def target(self, rel: str) -> Path:
        final = self.output_dir / rel
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = final.with_name(final.name + f".tmp-{os.getpid()}")
        self.pending.append((tmp, final))
        return tmp

    def commit(self) -> None:
        for tmp, final in self.pending:
            os.replace(tmp, final)
        self.pending.clear()

    def abort(self) -> None:
        for tmp, _ in self.pending:
            tmp.unlink(missing_ok=True)
        self.pending.clear()


class _RunContext:
    """Lazily loads stage products, preferring in-memory handoffs."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out = Path(config.output_dir)
        self._corpus: model.Corpus | None = None          # post-ingest
        self._scored: model.Corpus | None = None          # post-score
        self._metrics: list[metrics_mod.UserMetrics] | None = None
        self._summary: classify_mod.CohortSummary | None = None
        self._churn: list | None = None
        # file hash memo keyed by (path, size, mtime_ns); stage outputs this
        # run produced are hashed at most once
        self._hashes: dict[tuple, str] = {}

    def file_hash(self, path: Path) -> str:
        stat = path.stat()
        key = (str(path), stat.st_size, stat.st_mtime_ns)
        cached = self._hashes.get(key)
        if cached is None:
            cached = self._hashes[key] = _file_hash(path)
        return cached

    def _load_corpus(self, name: str) -> model.Corpus:
        path = self.out / name
        if not path.exists():
            raise ConfigError(
                f"{path} is missing; run the earlier stages first or add them to --stages")
        corpus = model.ingest(path, options=model.IngestOptions(
            timestamp_floor=self.config.timestamp_floor))
        if self.config.required_length:
            corpus = model.filter_by_length(corpus, self.config.required_length)
        return corpus

    def corpus(self) -> model.Corpus:
        if self._corpus is None:
            self._corpus = self._load_corpus("corpus.jsonl")
        return self._corpus

    def scored(self) -> model.Corpus:
        if self._scored is None:
            self._scored = self._load_corpus("scored.jsonl")
        return self._scored

    def metrics(self) -> list[metrics_mod.UserMetrics]:
        if self._metrics is None:
            path = self.out / "report" / "metrics.csv"
            if not path.exists():
                raise ConfigError(f"{path} is missing; run the metrics stage first")
            self._metrics = metrics_mod.read_metrics_csv(path)
        return self._metrics

    def summary(self) -> classify_mod.CohortSummary:
        if self._summary is None:
            self._summary = classify_mod.classify(self.metrics())
        return self._summary

    def churn(self) -> list:
        if self._churn is None:
            path = self.out / "report" / "churn.csv"
            if not path.exists():
                raise ConfigError(f"{path} is missing; run the churn stage first")
            self._churn = churn_mod.read_churn_csv(path)
        return self._churn


def run(config: RunConfig) -> int:
    """Execute the configured stages in dependency order; returns 0 on success.

    Raises ConfigError (and other package errors) for validation problems and
    lets OSError propagate for I/O failures; the CLI maps these to exit codes
    1 and 2.
    """
    config.validate()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report").mkdir(exist_ok=True)
    if config.scorer.mode == "remote" and config.scorer.cache_path is None:
        # reruns must not re-bill the remote API
        config.scorer.cache_path = out / "score_cache.jsonl"
    state = _State(out)
    ctx = _RunContext(config)

    runners: dict[str, Callable[[_RunContext, _AtomicWriter], dict]] = {
        "ingest": _stage_ingest,
        "score": _stage_score,
        "metrics": _stage_metrics,
        "churn": _stage_churn,
        "classify": _stage_classify,
        "report": _stage_report,
    }
    hashers: dict[str, Callable[[_RunContext], str]] = {
        "ingest": _hash_ingest,
        "score": _hash_score,
        "metrics": _hash_metrics,
        "churn": _hash_metrics,   # same input: the scored corpus
        "classify": _hash_classify,
        "report": _hash_report,
    }

    for stage in STAGES:
        if stage not in config.stages:
            continue
        started = time.monotonic()
        try:
            input_hash = hashers[stage](ctx)
        except FileNotFoundError as exc:
            raise ConfigError(f"stage {stage}: missing input file: {exc}") from exc
        if not config.force and state.fresh(stage, input_hash, out):
            _log(stage, "skip", input_hash=input_hash[:12])
            continue
        _log(stage, "start")
        writer = _AtomicWriter(out)
        try:
            info = runners[stage](ctx, writer)
        except Exception:
            writer.abort()
            _log(stage, "error", seconds=round(time.monotonic() - started, 3))
            raise
        # drop this stage's previous outputs that the new run did not produce
        new_rel = [str(tmp_final[1].relative_to(out)) for tmp_final in writer.pending]
        for rel in state.outputs(stage):
            if rel not in new_rel:
                (out / rel).unlink(missing_ok=True)
        writer.commit()
        state.record(stage, input_hash, new_rel)
        _log(stage, "done", seconds=round(time.monotonic() - started, 3), **info)
    return 0


def _scorer_fingerprint(cfg: scoring.ScorerConfig) -> dict:
    # the api key is a secret and never participates in hashes
    return {
        "mode": cfg.mode,
        "endpoint_url": cfg.endpoint_url,
        "attribute": cfg.attribute,
        "lexicon_path": str(cfg.lexicon_path) if cfg.lexicon_path else None,
    }


def _hash_ingest(ctx: _RunContext) -> str:
    cfg = ctx.config
    return _config_hash({
        "inputs": [ctx.file_hash(Path(p)) for p in cfg.inputs],
        "format": cfg.input_format,
        "required_length": cfg.required_length,
        "on_bad_record": cfg.on_bad_record,
        "timestamp_floor": cfg.timestamp_floor,
    })


def _hash_score(ctx: _RunContext) -> str:
    return _config_hash({
        "corpus": ctx.file_hash(ctx.out / "corpus.jsonl"),
        "scorer": _scorer_fingerprint(ctx.config.scorer),
    })


def _hash_metrics(ctx: _RunContext) -> str:
    return _config_hash({"scored": ctx.file_hash(ctx.out / "scored.jsonl")})


def _hash_classify(ctx: _RunContext) -> str:
    return _config_hash({"metrics": ctx.file_hash(ctx.out / "report" / "metrics.csv")})


def _hash_report(ctx: _RunContext) -> str:
    cfg = ctx.config
    rep = ctx.out / "report"
    return _config_hash({
        "scored": ctx.file_hash(ctx.out / "scored.jsonl"),
        "metrics": ctx.file_hash(rep / "metrics.csv"),
        "churn": ctx.file_hash(rep / "churn.csv"),
        "classification": ctx.file_hash(rep / "classification.csv"),
        "svg": cfg.svg,
        "required_length": cfg.required_length,
        "user_scores": ctx.file_hash(cfg.user_scores) if cfg.user_scores else None,
        "user_scores_label": cfg.user_scores_label,
    })


def _stage_ingest(ctx: _RunContext, writer: _AtomicWriter) -> dict:
    cfg = ctx.config
    corpus = model.ingest(cfg.inputs, format=cfg.input_format, options=model.IngestOptions(
        on_bad_record=cfg.on_bad_record, timestamp_floor=cfg.timestamp_floor))
    if cfg.required_length:
        corpus = model.filter_by_length(corpus, cfg.required_length)
    n = model.export_jsonl(corpus, writer.target("corpus.jsonl"))
    ctx._corpus = corpus
    ctx._scored = None
    return {"users": corpus.n_users, "events": n}


def _stage_score(ctx: _RunContext, writer: _AtomicWriter) -> dict:
    scored = scoring.score_corpus(ctx.corpus(), ctx.config.scorer)
    ctx._corpus = None  # free the unscored copy before the big export
    model.export_jsonl(scored, writer.target("scored.jsonl"))
    ctx._scored = scored
    return {"users": scored.n_users, "events": scored.n_events}


def _stage_metrics(ctx: _RunContext, writer: _AtomicWriter) -> dict:
    table = metrics_mod.compute_metrics(ctx.scored(), parallelism=ctx.config.parallelism)
    metrics_mod.write_metrics_csv(table, writer.target("report/metrics.csv"))
    ctx._metrics = table
    return {"users": len(table)}


def _stage_churn(ctx: _RunContext, writer: _AtomicWriter) -> dict:
    decomps = churn_mod.cohort_churn(ctx.scored(), parallelism=ctx.config.parallelism)
    rows = [churn_mod.summary_row(d) for d in decomps]
    churn_mod.write_churn_csv(rows, writer.target("report/churn.csv"))
    ctx._churn = rows
    return {"users": len(rows)}


def _stage_classify(ctx: _RunContext, writer: _AtomicWriter) -> dict:
    table = ctx.metrics()
    summary = classify_mod.classify(table)
    classify_mod.write_classification_csv(summary, writer.target("report/classification.csv"))
    classify_mod.write_summary_json(summary, writer.target("report/summary.json"), table)
    ctx._summary = summary
    return {"users": summary.n_ctu + summary.n_bu, "ctu": summary.n_ctu, "bu": summary.n_bu}


def _stage_report(ctx: _RunContext, writer: _AtomicWriter) -> dict:
    cfg = ctx.config
    corpus = ctx.scored()
    scores_table = scoring.attach_user_scores(cfg.user_scores, label=cfg.user_scores_label) \
        if cfg.user_scores else None
    tmp_dir = ctx.out / "report" / f".tmp-report-{os.getpid()}"
    try:
        files = report.write_distribution_report(
            tmp_dir, corpus, ctx.metrics(), ctx.summary(), ctx.churn(),
            svg=cfg.svg, user_scores=scores_table)
        for name in files:
            os.replace(tmp_dir / name, writer.target(f"report/{name}"))
    finally:
        if tmp_dir.exists():
            for leftover in tmp_dir.iterdir():
                leftover.unlink()
            tmp_dir.rmdir()
    return {"files": len(files)}
