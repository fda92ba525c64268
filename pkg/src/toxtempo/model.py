"""Event/timeline domain model, corpus ingestion and canonical export.

An Event is one timestamped post; a Timeline is one user's chronologically
ordered event list; a Corpus maps user ids to timelines.  Ingestion reads
line-delimited JSON or CSV, validates every record, sorts timelines by
(timestamp, event_id) and deduplicates events by id (first occurrence wins,
which makes merging file shards idempotent).

Timestamps are normalized to integer epoch seconds, UTC.  Both RFC 3339
strings and integer epoch seconds are accepted on input; canonical export
always writes integers.
"""

from __future__ import annotations

import json
import csv
import gc
import logging
import math
import operator
import re
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, TooFewEvents, ValidationError

logger = logging.getLogger(__name__)

# Earliest accepted timestamp by default: 2006-01-01T00:00:00Z.
DEFAULT_TIMESTAMP_FLOOR = 1136073600

CSV_HEADER = ["user_id", "event_id", "timestamp", "text", "toxicity"]


@contextmanager
def bulk_build():
    """Pause the cyclic GC around loops that build millions of events.

    Events and timelines are acyclic plain data, so generational collections
    triggered by the allocation churn only re-scan the growing heap; pausing
    the collector roughly halves large ingest/export runs.
    """
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


def parse_timestamp(value: int | float | str) -> int:
    """Normalize an RFC 3339 string or epoch seconds to integer epoch seconds UTC.

    Fractional seconds are floored; naive datetimes are taken as UTC.
    Raises ValueError for anything unparsable.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"not a timestamp: {value!r}")
        return math.floor(value)
    if isinstance(value, str):
        s = value.strip()
        if not s:
            raise ValueError("empty timestamp")
        try:
            return int(s)
        except ValueError:
            pass
        # datetime.fromisoformat on 3.10 does not accept a trailing 'Z'
        if s.endswith(("Z", "z")):
            s = s[:-1] + "+00:00"
        dt = datetime.fromisoformat(s)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return math.floor(dt.timestamp())
    raise ValueError(f"not a timestamp: {value!r}")


def format_timestamp(ts: int) -> str:
    """Render epoch seconds as an RFC 3339 UTC string (for messages/reports)."""
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(slots=True)
class Event:
    """One timestamped post.  ``toxicity``, when set, lies in [0, 1]."""

    user_id: str
    event_id: str
    timestamp: int
    text: str | None = None
    toxicity: float | None = None

    def sort_key(self) -> tuple[int, str]:
        return (self.timestamp, self.event_id)


@dataclass(slots=True)
class Timeline:
    """A user's events, sorted by (timestamp, event_id), unique event ids."""

    user_id: str
    events: list[Event]

    def __len__(self) -> int:
        return len(self.events)


@dataclass(slots=True)
class Corpus:
    """All ingested timelines keyed by user id.

    ``required_length`` is set by :func:`filter_by_length`; when present every
    timeline holds exactly that many events.
    """

    timelines: dict[str, Timeline] = field(default_factory=dict)
    required_length: int | None = None

    def user_ids(self) -> list[str]:
        return sorted(self.timelines)

    @property
    def n_users(self) -> int:
        return len(self.timelines)

    @property
    def n_events(self) -> int:
        return sum(len(t) for t in self.timelines.values())


@dataclass(slots=True)
class IngestOptions:
    """Bad-record policy and timestamp floor for ingestion."""

    on_bad_record: str = "fail"  # "fail" | "skip_and_log"
    timestamp_floor: int = DEFAULT_TIMESTAMP_FLOOR

    def __post_init__(self) -> None:
        if self.on_bad_record not in ("fail", "skip_and_log"):
            raise ValueError(f"on_bad_record must be 'fail' or 'skip_and_log', got {self.on_bad_record!r}")


def build_timeline(user_id: str, events: Iterable[Event]) -> Timeline:
    """Sort events and drop duplicate event ids (first occurrence wins)."""
    seen: set[str] = set()
    kept: list[Event] = []
    for ev in events:
        if ev.user_id != user_id:
            raise ValidationError(user_id, f"event {ev.event_id!r} belongs to user {ev.user_id!r}")
        if ev.event_id in seen:
            logger.info("user %s: dropping duplicate event_id %s", user_id, ev.event_id)
            continue
        seen.add(ev.event_id)
        kept.append(ev)
    kept.sort(key=Event.sort_key)
    return Timeline(user_id=user_id, events=kept)


def _validate_record(user_id: str, event_id: str, raw_ts, raw_tox, text,
                     options: IngestOptions) -> Event:
    """Turn raw field values into an Event, raising ValidationError on bad ones."""
    try:
        ts = parse_timestamp(raw_ts)
    except ValueError as exc:
        raise ValidationError(user_id, f"bad timestamp for event {event_id!r}: {exc}") from exc
    if ts < options.timestamp_floor:
        raise ValidationError(
            user_id,
            f"event {event_id!r} at {format_timestamp(ts)} precedes floor "
            f"{format_timestamp(options.timestamp_floor)}",
        )
    tox: float | None = None
    if raw_tox is not None:
        if isinstance(raw_tox, bool) or not isinstance(raw_tox, (int, float)):
            raise ValidationError(user_id, f"toxicity of event {event_id!r} is not a number: {raw_tox!r}")
        tox = float(raw_tox)
        if not (0.0 <= tox <= 1.0) or math.isnan(tox):
            raise ValidationError(user_id, f"toxicity {tox} of event {event_id!r} outside [0, 1]")
    return Event(user_id=user_id, event_id=event_id, timestamp=ts, text=text, toxicity=tox)


def _iter_jsonl_records(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(line_no, f"invalid JSON: {exc}", source=str(path)) from exc
            if not isinstance(obj, dict):
                raise FormatError(line_no, "record is not a JSON object", source=str(path))
            yield line_no, obj


def _iter_csv_records(path: Path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(1, "empty CSV file", source=str(path)) from None
        if header != CSV_HEADER:
            raise FormatError(1, f"expected header {CSV_HEADER}, got {header}", source=str(path))
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise FormatError(line_no, f"expected {len(CSV_HEADER)} fields, got {len(row)}",
                                  source=str(path))
            user_id, event_id, ts, text, tox = row
            if tox != "":
                try:
                    toxicity = float(tox)
                except ValueError:
                    raise FormatError(line_no, f"toxicity is not a number: {tox!r}",
                                      source=str(path)) from None
            else:
                toxicity = None
            yield line_no, {
                "user_id": user_id,
                "event_id": event_id,
                "timestamp": ts,
                "text": text if text != "" else None,
                "toxicity": toxicity,
            }


def ingest(paths: str | Path | Sequence[str | Path], format: str = "jsonl",
           options: IngestOptions | None = None) -> Corpus:
    """Read one or more corpus files into a validated Corpus.

    Records from multiple files are merged per user; duplicate event ids keep
    the first occurrence, so ingesting the same file twice is a no-op beyond
    the first pass.  Semantically bad records (unparsable timestamp, toxicity
    outside [0, 1]) are raised or skipped per ``options.on_bad_record``;
    structurally broken lines always raise FormatError.
    """
    if options is None:
        options = IngestOptions()
    if isinstance(paths, (str, Path)):
        paths = [paths]
    if format == "jsonl":
        record_iter = _iter_jsonl_records
    elif format == "csv":
        record_iter = _iter_csv_records
    else:
        raise ValueError(f"unknown format {format!r} (expected 'jsonl' or 'csv')")

    with bulk_build():
        return _ingest_all(paths, record_iter, options)


def _ingest_all(paths, record_iter, options: IngestOptions) -> Corpus:
    # per user: (event list, seen event_id set)
    buffers: dict[str, tuple[list[Event], set[str]]] = {}
    floor = options.timestamp_floor
    n_skipped = 0
    for path in paths:
        path = Path(path)
        source = str(path)
        for line_no, obj in record_iter(path):
            user_id = obj.get("user_id")
            event_id = obj.get("event_id")
            if not isinstance(user_id, str) or not user_id:
                raise FormatError(line_no, "missing or non-string user_id", source=source)
            if not isinstance(event_id, str) or not event_id:
                raise FormatError(line_no, "missing or non-string event_id", source=source)
            raw_ts = obj.get("timestamp")
            if raw_ts is None:
                raise FormatError(line_no, "missing timestamp", source=source)
            text = obj.get("text")
            if text is not None and not isinstance(text, str):
                raise FormatError(line_no, "text is not a string", source=source)
            tox = obj.get("toxicity")
            # fast path for the dominant record shape: integer epoch seconds
            # above the floor, toxicity absent or a float already in range
            # (note bools fail the exact type checks and take the slow path)
            if (type(raw_ts) is int and raw_ts >= floor
                    and (tox is None or (type(tox) is float and 0.0 <= tox <= 1.0))):
                event = Event(user_id, event_id, raw_ts, text, tox)
            else:
                try:
                    event = _validate_record(user_id, event_id, raw_ts, tox, text, options)
                except ValidationError as exc:
                    if options.on_bad_record == "fail":
                        raise
                    n_skipped += 1
                    logger.warning("%s:%d skipped: %s", path, line_no, exc)
                    continue
            buf = buffers.get(user_id)
            if buf is None:
                buf = buffers[user_id] = ([], set())
            events, ids = buf
            if event_id in ids:
                logger.info("user %s: dropping duplicate event_id %s (%s:%d)",
                            user_id, event_id, path, line_no)
                continue
            ids.add(event_id)
            events.append(event)

    sort_key = operator.attrgetter("timestamp", "event_id")
    timelines = {}
    for user_id, (events, _) in buffers.items():
        events.sort(key=sort_key)
        timelines[user_id] = Timeline(user_id=user_id, events=events)
    if n_skipped:
        logger.warning("ingest skipped %d bad records", n_skipped)
    return Corpus(timelines=timelines)


def filter_by_length(corpus: Corpus, n: int) -> Corpus:
    """Keep only timelines with exactly ``n`` events; stamp required_length."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    kept = {uid: tl for uid, tl in corpus.timelines.items() if len(tl) == n}
    return Corpus(timelines=kept, required_length=n)


# characters json.dumps(ensure_ascii=False) escapes: backslash, quote, < 0x20
_JSON_ESCAPE = re.compile(r'[\\"\x00-\x1f]')

# repeated texts (and ids, defensively) keep their encoded form up to this size
_ENCODE_MEMO_CAP = 1 << 16


def export_jsonl(corpus: Corpus, path: str | Path) -> int:
    """Write the canonical JSONL export, sorted by (user_id, timestamp, event_id).

    Returns the number of events written.  The output is byte-deterministic
    for a given corpus, so exporting twice yields identical files.

    Lines are assembled field by field with the same bytes json.dumps would
    produce (floats via repr, strings JSON-escaped); full dict serialization
    dominates export time on multi-million-event corpora.
    """
    n = 0
    dumps = json.dumps
    search = _JSON_ESCAPE.search
    text_memo: dict[str, str] = {}
    tox_memo: dict[float, str] = {}

    def text_part(s: str | None) -> str:
        if s is None:
            return ""
        enc = text_memo.get(s)
        if enc is None:
            body = f'"{s}"' if search(s) is None else dumps(s, ensure_ascii=False)
            enc = f',"text":{body}'
            if len(text_memo) < _ENCODE_MEMO_CAP:
                text_memo[s] = enc
        return enc

    def tox_part(v: float | None) -> str:
        if v is None:
            return ""
        enc = tox_memo.get(v)
        if enc is None:
            enc = f',"toxicity":{v!r}'
            if len(tox_memo) < _ENCODE_MEMO_CAP:
                tox_memo[v] = enc
        return enc

    buf: list[str] = []
    with bulk_build(), open(path, "w", encoding="utf-8") as fh:
        for user_id in sorted(corpus.timelines):
            uid_json = f'"{user_id}"' if search(user_id) is None \
                else dumps(user_id, ensure_ascii=False)
            for ev in corpus.timelines[user_id].events:
                eid = ev.event_id
                eid_json = f'"{eid}"' if search(eid) is None else dumps(eid, ensure_ascii=False)
                buf.append(
                    f'{{"user_id":{uid_json},"event_id":{eid_json},'
                    f'"timestamp":{ev.timestamp}'
                    f'{text_part(ev.text)}{tox_part(ev.toxicity)}}}\n')
                if len(buf) >= 65536:
                    fh.write("".join(buf))
                    buf.clear()
            n += len(corpus.timelines[user_id].events)
        fh.write("".join(buf))
    return n


def export_csv(corpus: Corpus, path: str | Path) -> int:
    """Write the corpus as CSV with the standard header (RFC 4180 quoting)."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for user_id in sorted(corpus.timelines):
            for ev in corpus.timelines[user_id].events:
                writer.writerow([
                    ev.user_id,
                    ev.event_id,
                    ev.timestamp,
                    ev.text if ev.text is not None else "",
                    repr(ev.toxicity) if ev.toxicity is not None else "",
                ])
                n += 1
    return n


def timestamps(timeline: Timeline) -> np.ndarray:
    """Event timestamps as an int64 array (epoch seconds)."""
    return np.fromiter((ev.timestamp for ev in timeline.events), dtype=np.int64,
                       count=len(timeline.events))


def inter_event_times(timeline: Timeline) -> np.ndarray:
    """Seconds between consecutive events; length is len(timeline) - 1.

    Raises TooFewEvents for timelines with fewer than two events.
    """
    if len(timeline) < 2:
        raise TooFewEvents(f"user {timeline.user_id!r} has {len(timeline)} event(s); need >= 2")
    ts = timestamps(timeline)
    return np.diff(ts).astype(np.float64)
