"""Toxicity scoring for event text.

Two interchangeable scorers produce a probability in [0, 1] per text:

* offline - deterministic lexicon scorer (flagged-token fraction), used by
  tests and synthetic pipelines;
* remote  - HTTP client for a Perspective-style endpoint, with a disk cache
  keyed by a content hash of the text, a hard request-rate cap, bounded
  concurrency and exponential-backoff retries on 429/5xx.

Also parses per-user external score tables (e.g. bot scores) for group
comparisons downstream.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import threading
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import requests

from .errors import FormatError, MissingText, RemoteError, ValidationError
from .model import Corpus, Event, Timeline, bulk_build

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class ScorerConfig:
    """How to score: offline lexicon or remote endpoint, plus operational knobs."""

    mode: str = "offline"  # "offline" | "remote"
    endpoint_url: str | None = None
    api_key: str | None = None
    attribute: str = "TOXICITY"
    max_qps: float = 10.0
    max_retries: int = 3
    max_inflight: int = 4
    backoff_base: float = 1.0  # seconds; doubles per retry
    cache_path: str | Path | None = None
    lexicon_path: str | Path | None = None  # None -> bundled list

    def validate(self) -> None:
        if self.mode not in ("offline", "remote"):
            raise ValueError(f"mode must be 'offline' or 'remote', got {self.mode!r}")
        if self.max_qps <= 0:
            raise ValueError("max_qps must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")
        if self.mode == "remote":
            if not self.endpoint_url:
                raise ValueError("remote mode requires endpoint_url")
            if not self.api_key:
                raise ValueError("remote mode requires an API key")


@dataclass(slots=True)
class UserScoreTable:
    """Per-user external scores in [0, 1] (e.g. bot scores)."""

    entries: dict[str, float]
    label: str = "score"


def load_lexicon(path: str | Path | None = None) -> frozenset[str]:
    """Load the flag-token list: one lowercase token per line, '#' comments."""
    if path is None:
        text = resources.files("toxtempo").joinpath("data/lexicon.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    tokens = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            tokens.add(line.lower())
    return frozenset(tokens)


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def offline_score(text: str, lexicon: frozenset[str] | set[str]) -> float:
    """Deterministic lexicon score: flagged tokens / total tokens, in [0, 1].

    Tokens are split on Unicode whitespace, lowercased, and stripped of
    leading/trailing punctuation before lookup.
    """
    tokens = text.split()
    if not tokens:
        raise ValueError("cannot score empty text")
    flagged = sum(1 for tok in tokens if _strip_punct(tok.lower()) in lexicon)
    return min(1.0, max(0.0, flagged / len(tokens)))


def text_hash(text: str) -> str:
    """Cache key: SHA-256 of the UTF-8 text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class ScoreCache:
    """Append-only JSONL score cache, safe for concurrent readers/writers.

    Each line is {"h": <sha256 hex>, "score": <float>}.  The file is loaded
    once at open; writes append and flush under a lock so parallel scoring
    workers can share one cache.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._scores: dict[str, float] = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    self._scores[obj["h"]] = float(obj["score"])
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def get(self, key: str) -> float | None:
        with self._lock:
            return self._scores.get(key)

    def put(self, key: str, score: float) -> None:
        with self._lock:
            if key in self._scores:
                return
            self._scores[key] = score
            self._fh.write(json.dumps({"h": key, "score": score}) + "\n")
            self._fh.flush()

    def __len__(self) -> int:
        with self._lock:
            return len(self._scores)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "ScoreCache":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class RateLimiter:
    """Caps aggregate request starts at max_qps across any number of threads."""

    def __init__(self, max_qps: float):
        self._interval = 1.0 / max_qps
        self._next = 0.0
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next)
            self._next = slot + self._interval
        delay = slot - now
        if delay > 0:
            time.sleep(delay)


class RemoteScorer:
    """Client for a Perspective-style comment-analysis endpoint.

    Sends {"comment": {"text": ...}, "requestedAttributes": {ATTR: {}}} and
    reads attributeScores.ATTR.summaryScore.value.  Retries only HTTP 429 and
    5xx, with exponential backoff starting at ``backoff_base`` seconds.
    """

    def __init__(self, config: ScorerConfig):
        config.validate()
        self.config = config
        self._limiter = RateLimiter(config.max_qps)
        self._session = requests.Session()
        self.request_count = 0
        self._count_lock = threading.Lock()

    def score(self, text: str) -> float:
        cfg = self.config
        body = {"comment": {"text": text}, "requestedAttributes": {cfg.attribute: {}}}
        last_status, last_body = None, ""
        for attempt in range(cfg.max_retries + 1):
            if attempt > 0:
                time.sleep(cfg.backoff_base * (2 ** (attempt - 1)))
            self._limiter.acquire()
            with self._count_lock:
                self.request_count += 1
            resp = self._session.post(
                cfg.endpoint_url, params={"key": cfg.api_key}, json=body, timeout=30,
            )
            if resp.status_code == 200:
                return self._extract_score(resp)
            last_status, last_body = resp.status_code, resp.text
            if resp.status_code == 429 or resp.status_code >= 500:
                logger.warning("remote scorer got %d, attempt %d/%d",
                               resp.status_code, attempt + 1, cfg.max_retries + 1)
                continue
            raise RemoteError(resp.status_code, resp.text)
        raise RemoteError(last_status, last_body)

    def _extract_score(self, resp: requests.Response) -> float:
        try:
            payload = resp.json()
            value = payload["attributeScores"][self.config.attribute]["summaryScore"]["value"]
            score = float(value)
        except (ValueError, KeyError, TypeError) as exc:
            raise RemoteError(resp.status_code, f"malformed response: {resp.text[:200]}") from exc
        if not (0.0 <= score <= 1.0):
            raise RemoteError(resp.status_code, f"score {score} outside [0, 1]")
        return score


def _unscored_texts(corpus: Corpus) -> dict[str, None]:
    """Distinct texts still needing a score, in deterministic first-seen order.

    Raises MissingText for any unscored event without usable text.
    """
    texts: dict[str, None] = {}
    for user_id in sorted(corpus.timelines):
        for ev in corpus.timelines[user_id].events:
            if ev.toxicity is not None:
                continue
            text = ev.text
            if not text or text.isspace():
                raise MissingText(user_id, ev.event_id)
            texts.setdefault(text)
    return texts


def score_corpus(corpus: Corpus, config: ScorerConfig) -> Corpus:
    """Attach a toxicity score to every unscored event.

    Already-scored events pass through untouched, so rescoring a fully scored
    corpus returns it unchanged and performs no work.  Remote results are
    cached on disk by text hash; identical texts are scored once per cache
    lifetime, so a rerun over the same corpus issues zero requests.
    """
    config.validate()
    texts = _unscored_texts(corpus)
    if not texts:
        return corpus

    if config.mode == "offline":
        lexicon = load_lexicon(config.lexicon_path)
        by_text = {text: offline_score(text, lexicon) for text in texts}
    else:
        by_text = _score_remote(list(texts), config)

    timelines: dict[str, Timeline] = {}
    with bulk_build():
        for user_id, tl in corpus.timelines.items():
            events = [
                ev if ev.toxicity is not None
                else Event(ev.user_id, ev.event_id, ev.timestamp, ev.text, by_text[ev.text])
                for ev in tl.events
            ]
            timelines[user_id] = Timeline(user_id=user_id, events=events)
    return Corpus(timelines=timelines, required_length=corpus.required_length)


def _score_remote(texts: list[str], config: ScorerConfig) -> dict[str, float]:
    cache = ScoreCache(config.cache_path) if config.cache_path else None
    by_text: dict[str, float] = {}
    misses: list[tuple[str, str]] = []
    for text in texts:
        key = text_hash(text)
        cached = cache.get(key) if cache is not None else None
        if cached is not None:
            by_text[text] = cached
        else:
            misses.append((text, key))
    if misses:
        scorer = RemoteScorer(config)

        def fetch(item: tuple[str, str]) -> float:
            text, key = item
            score = scorer.score(text)
            if cache is not None:
                cache.put(key, score)
            return score

        workers = min(config.max_inflight, len(misses))
        if workers == 1:
            results = [fetch(item) for item in misses]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(fetch, misses))
        for (text, _), score in zip(misses, results):
            by_text[text] = score
        logger.info("remote scorer: %d distinct texts, %d cache hits, %d requests",
                    len(texts), len(texts) - len(misses), scorer.request_count)
    if cache is not None:
        cache.close()
    return by_text


def attach_user_scores(path: str | Path, label: str = "score") -> UserScoreTable:
    """Parse a per-user score CSV (header ``user_id,score``, values in [0, 1])."""
    path = Path(path)
    entries: dict[str, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(1, "empty score file", source=str(path)) from None
        if header != ["user_id", "score"]:
            raise FormatError(1, f"expected header ['user_id', 'score'], got {header}",
                              source=str(path))
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(line_no, f"expected 2 fields, got {len(row)}", source=str(path))
            user_id, raw = row
            try:
                score = float(raw)
            except ValueError as exc:
                raise FormatError(line_no, f"score is not a number: {raw!r}", source=str(path)) from exc
            if not (0.0 <= score <= 1.0):
                raise ValidationError(user_id, f"score {score} outside [0, 1]")
            if user_id in entries:
                raise ValidationError(user_id, "duplicate user_id in score file")
            entries[user_id] = score
    return UserScoreTable(entries=entries, label=label)
