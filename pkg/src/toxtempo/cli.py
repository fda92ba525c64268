"""Command-line entry points.

Subcommands: one per pipeline stage (ingest, score, metrics, churn,
classify, report), `run` for the whole pipeline, and `synth` to generate
seeded corpora.  Stage subcommands share `run`'s config and caching, so
invoking them one at a time is equivalent to one full run.

Configuration comes from --config (TOML or JSON) with flag overrides on
top.  The remote scorer's API key is only ever read from an environment
variable (--api-key-env), never from flags or config files.

Exit codes: 0 success, 1 validation/config failure, 2 I/O or remote
endpoint failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import pipeline, synth
from .errors import ConfigError, RemoteError, ToxtempoError
from .model import export_jsonl


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="TOML or JSON run config")
    parser.add_argument("--input", action="append", dest="inputs", type=Path,
                        help="input corpus file (repeatable)")
    parser.add_argument("--format", choices=["jsonl", "csv"], dest="input_format",
                        help="input file format")
    parser.add_argument("--required-length", type=int,
                        help="keep only timelines with exactly this many events")
    parser.add_argument("--on-bad-record", choices=["fail", "skip_and_log"],
                        help="what to do with invalid records during ingest")
    parser.add_argument("--output-dir", type=Path, help="run output directory")
    parser.add_argument("--parallelism", type=int, help="per-user worker count")
    parser.add_argument("--force", action="store_true",
                        help="rerun stages even when cached outputs are fresh")
    parser.add_argument("--svg", action="store_true", help="also write SVG charts")
    parser.add_argument("--user-scores", type=Path,
                        help="CSV of external per-user scores (user_id,score)")
    parser.add_argument("--user-scores-label", help="label for the external scores")
    # scorer flags
    parser.add_argument("--scorer", choices=["offline", "remote"], help="scorer mode")
    parser.add_argument("--endpoint", help="remote scorer endpoint URL")
    parser.add_argument("--api-key-env", metavar="VAR",
                        help="environment variable holding the remote API key")
    parser.add_argument("--qps", type=float, help="remote request rate cap")
    parser.add_argument("--cache", type=Path, help="score cache file (JSONL)")
    parser.add_argument("--lexicon", type=Path, help="offline scorer flag-word list")


def _build_config(args: argparse.Namespace, stages: tuple[str, ...] | None) -> pipeline.RunConfig:
    if args.config:
        config = pipeline.load_config(args.config)
    else:
        config = pipeline.RunConfig(inputs=[], output_dir=Path("out"))

    if args.inputs:
        config.inputs = list(args.inputs)
    if args.input_format:
        config.input_format = args.input_format
    if args.required_length is not None:
        config.required_length = args.required_length
    if args.on_bad_record:
        config.on_bad_record = args.on_bad_record
    if args.output_dir:
        config.output_dir = args.output_dir
    if args.parallelism is not None:
        config.parallelism = args.parallelism
    if args.force:
        config.force = True
    if args.svg:
        config.svg = True
    if args.user_scores:
        config.user_scores = args.user_scores
    if args.user_scores_label:
        config.user_scores_label = args.user_scores_label

    scorer = config.scorer
    if args.scorer:
        scorer.mode = args.scorer
    if args.endpoint:
        scorer.endpoint_url = args.endpoint
    if args.api_key_env:
        key = os.environ.get(args.api_key_env)
        if not key:
            raise ConfigError(f"environment variable {args.api_key_env!r} is unset or empty")
        scorer.api_key = key
    if args.qps is not None:
        scorer.max_qps = args.qps
    if args.cache:
        scorer.cache_path = args.cache
    if args.lexicon:
        scorer.lexicon_path = args.lexicon

    if stages is not None:
        config.stages = stages
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toxtempo",
        description="Posting-pattern analytics: toxicity concentration, burstiness, "
                    "activity span and churn over event timelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for stage in pipeline.STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        _add_common_flags(p)
    p = sub.add_parser("run", help="run every configured stage")
    _add_common_flags(p)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--spec", required=True, type=Path, help="GenSpec JSON file")
    p.add_argument("--out", required=True, type=Path, help="output corpus JSONL")
    p.add_argument("--seed", type=int, help="override the spec's seed")
    return parser


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = synth.spec_from_json(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    corpus = synth.generate(spec)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    n = export_jsonl(corpus, args.out)
    print(f"wrote {corpus.n_users} users, {n} events to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        stages = None if args.command == "run" else (args.command,)
        config = _build_config(args, stages)
        return pipeline.run(config)
    except RemoteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ToxtempoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
