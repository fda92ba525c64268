"""Offline lexicon scorer, remote client, cache and user score tables."""

import csv
import json
import random

import pytest

from toxtempo.errors import FormatError, MissingText, RemoteError, ValidationError
from toxtempo.model import Corpus, Event, Timeline
from toxtempo.scoring import (
    RateLimiter,
    ScoreCache,
    ScorerConfig,
    UserScoreTable,
    attach_user_scores,
    load_lexicon,
    offline_score,
    score_corpus,
    text_hash,
)

from mock_perspective import MockPerspectiveServer

T0 = 1577836800


def make_corpus(texts_by_user, tox=None):
    timelines = {}
    for uid, texts in texts_by_user.items():
        events = [
            Event(uid, f"e{i}", T0 + 60 * i, text=t, toxicity=tox)
            for i, t in enumerate(texts)
        ]
        timelines[uid] = Timeline(uid, events)
    return Corpus(timelines=timelines)


class TestOfflineScore:
    def test_empty_lexicon_scores_zero(self):
        assert offline_score("hello world", frozenset()) == 0.0

    def test_all_flagged_scores_one(self):
        assert offline_score("bad bad bad", frozenset({"bad"})) == 1.0

    def test_two_of_seven(self):
        # Hand count: 7 whitespace tokens, "bad" and "vile" flagged.
        score = offline_score("You are a bad and vile person", frozenset({"bad", "vile"}))
        assert score == 2 / 7

    def test_case_and_punctuation_stripped(self):
        assert offline_score("BAD! (vile), fine.", frozenset({"bad", "vile"})) == 2 / 3

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            offline_score("", frozenset({"bad"}))
        with pytest.raises(ValueError):
            offline_score("   ", frozenset({"bad"}))

    def test_pure_function(self):
        lex = load_lexicon()
        rng = random.Random(3)
        words = ["awful", "kind", "blue", "trash", "day", "hello", "vile"]
        for _ in range(200):
            text = " ".join(rng.choices(words, k=rng.randint(1, 12)))
            assert offline_score(text, lex) == offline_score(text, lex)

    def test_bundled_lexicon_loads(self):
        lex = load_lexicon()
        assert len(lex) >= 40
        assert all(tok == tok.lower() for tok in lex)


class TestScoreCorpusOffline:
    def test_scores_all_events_in_range(self):
        corpus = make_corpus({"u1": ["awful trash day", "nice day"], "u2": ["hello there"]})
        config = ScorerConfig(mode="offline")
        out = score_corpus(corpus, config)
        for tl in out.timelines.values():
            for ev in tl.events:
                assert ev.toxicity is not None
                assert 0.0 <= ev.toxicity <= 1.0
        assert out.timelines["u1"].events[0].toxicity == 2 / 3

    def test_already_scored_returned_unchanged(self):
        corpus = make_corpus({"u1": ["anything"]}, tox=0.7)
        out = score_corpus(corpus, ScorerConfig(mode="offline"))
        assert out is corpus

    def test_missing_text_raises(self):
        corpus = Corpus(timelines={"u1": Timeline("u1", [Event("u1", "e0", T0, text="")])})
        with pytest.raises(MissingText) as exc:
            score_corpus(corpus, ScorerConfig(mode="offline"))
        assert exc.value.user_id == "u1"
        assert exc.value.event_id == "e0"

    def test_partial_scores_untouched(self):
        tl = Timeline("u1", [
            Event("u1", "e0", T0, text="ignored words", toxicity=0.9),
            Event("u1", "e1", T0 + 60, text="awful awful"),
        ])
        out = score_corpus(Corpus(timelines={"u1": tl}), ScorerConfig(mode="offline"))
        assert out.timelines["u1"].events[0].toxicity == 0.9
        assert out.timelines["u1"].events[1].toxicity == 1.0

    def test_idempotent(self):
        corpus = make_corpus({"u1": ["awful trash day", "sunny morning"]})
        config = ScorerConfig(mode="offline")
        once = score_corpus(corpus, config)
        twice = score_corpus(once, config)
        assert once == twice


class TestScoreCorpusRemote:
    def config(self, server, tmp_path, **kw):
        defaults = dict(
            mode="remote",
            endpoint_url=server.url,
            api_key="test-key",
            max_qps=500.0,
            max_retries=2,
            backoff_base=0.02,
            cache_path=tmp_path / "cache.jsonl",
        )
        defaults.update(kw)
        return ScorerConfig(**defaults)

    def test_constant_mock_scores_everything(self, tmp_path):
        corpus = make_corpus({
            "u1": ["alpha", "beta", "alpha"],
            "u2": ["gamma", "beta"],
        })
        with MockPerspectiveServer() as server:
            out = score_corpus(corpus, self.config(server, tmp_path))
            scores = [ev.toxicity for tl in out.timelines.values() for ev in tl.events]
            assert scores == [0.42] * 5
            # one request per distinct text
            assert server.request_count == 3

    def test_second_run_zero_requests(self, tmp_path):
        corpus = make_corpus({"u1": ["one", "two", "three"]})
        with MockPerspectiveServer() as server:
            config = self.config(server, tmp_path)
            first = score_corpus(corpus, config)
            assert server.request_count == 3
            second = score_corpus(corpus, config)
            assert server.request_count == 3
            assert first == second

    def test_retry_on_429_then_success(self, tmp_path):
        corpus = make_corpus({"u1": ["only text"]})
        with MockPerspectiveServer(status_script=[429]) as server:
            out = score_corpus(corpus, self.config(server, tmp_path))
            assert out.timelines["u1"].events[0].toxicity == 0.42
            assert server.request_count == 2

    def test_retries_exhausted_raises(self, tmp_path):
        corpus = make_corpus({"u1": ["only text"]})
        with MockPerspectiveServer(status_script=[500, 500, 500]) as server:
            with pytest.raises(RemoteError) as exc:
                score_corpus(corpus, self.config(server, tmp_path))
            assert exc.value.status == 500
            assert server.request_count == 3  # initial + 2 retries

    def test_client_error_fails_fast(self, tmp_path):
        corpus = make_corpus({"u1": ["only text"]})
        with MockPerspectiveServer(status_script=[400]) as server:
            with pytest.raises(RemoteError) as exc:
                score_corpus(corpus, self.config(server, tmp_path))
            assert exc.value.status == 400
            assert server.request_count == 1

    def test_remote_requires_endpoint_and_key(self):
        with pytest.raises(ValueError):
            ScorerConfig(mode="remote", api_key="k").validate()
        with pytest.raises(ValueError):
            ScorerConfig(mode="remote", endpoint_url="http://x").validate()

    def test_concurrent_scoring_consistent(self, tmp_path):
        texts = [f"text number {i}" for i in range(40)]
        corpus = make_corpus({"u1": texts})
        with MockPerspectiveServer(score_fn=lambda t: (len(t) % 10) / 10) as server:
            out = score_corpus(corpus, self.config(server, tmp_path, max_inflight=8))
            for ev in out.timelines["u1"].events:
                assert ev.toxicity == (len(ev.text) % 10) / 10
            assert server.request_count == len(set(texts))


class TestScoreCache:
    def test_append_only_jsonl(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        with ScoreCache(path) as cache:
            cache.put("aa", 0.5)
            cache.put("bb", 0.25)
            cache.put("aa", 0.99)  # ignored: first write wins
        lines = [json.loads(line) for line in path.read_text().splitlines()]
        assert lines == [{"h": "aa", "score": 0.5}, {"h": "bb", "score": 0.25}]
        with ScoreCache(path) as again:
            assert again.get("aa") == 0.5
            assert again.get("bb") == 0.25

    def test_text_hash_is_sha256(self):
        import hashlib
        assert text_hash("abc") == hashlib.sha256(b"abc").hexdigest()


class TestRateLimiter:
    def test_spaces_out_acquires(self):
        import time
        limiter = RateLimiter(max_qps=100.0)
        start = time.monotonic()
        for _ in range(11):
            limiter.acquire()
        elapsed = time.monotonic() - start
        assert elapsed >= 0.10  # 10 gaps at 10 ms


class TestAttachUserScores:
    def write_csv(self, path, rows):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user_id", "score"])
            writer.writerows(rows)

    def test_two_rows(self, tmp_path):
        path = tmp_path / "scores.csv"
        self.write_csv(path, [("u1", 0.1), ("u2", 0.9)])
        table = attach_user_scores(path, label="bot_score")
        assert table.entries == {"u1": 0.1, "u2": 0.9}
        assert table.label == "bot_score"

    def test_out_of_range_rejected(self, tmp_path):
        path = tmp_path / "scores.csv"
        self.write_csv(path, [("u3", 1.2)])
        with pytest.raises(ValidationError) as exc:
            attach_user_scores(path)
        assert exc.value.user_id == "u3"

    def test_hundred_rows_match_independent_parse(self, tmp_path):
        rng = random.Random(17)
        rows = [(f"u{i:03d}", round(rng.random(), 6)) for i in range(100)]
        path = tmp_path / "scores.csv"
        self.write_csv(path, rows)
        table = attach_user_scores(path)
        assert len(table.entries) == 100
        # Reparse oracle: raw line splitting, independent of the csv module.
        for line in path.read_text().splitlines()[1:]:
            uid, raw = line.split(",")
            assert table.entries[uid] == float(raw)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("user,value\nu1,0.4\n")
        with pytest.raises(FormatError):
            attach_user_scores(path)

    def test_unknown_users_permitted(self, tmp_path):
        path = tmp_path / "scores.csv"
        self.write_csv(path, [("never_seen_user", 0.5)])
        table = attach_user_scores(path)
        assert "never_seen_user" in table.entries
