"""Seeded synthetic corpus generator.

Produces timelines with controllable temporal structure (periodic, Poisson
or Pareto inter-event gaps), toxicity mix (constant or two-class), and an
optional churn template that lays events out in known life/death week runs.
Used as the validation oracle for burstiness, concentration, classification
and churn recovery.

Determinism: user ``i`` draws from PCG64 seeded with
SeedSequence(entropy=seed, spawn_key=(i,)), so per-user streams are
independent of generation order and the same spec always yields the same
corpus, byte for byte.  Per user the draw order is gaps, then toxicity,
then text choices.

When a churn template (life_weeks, death_weeks, events_per_week) is set it
takes over event placement: events fill active weeks round-robin at even
offsets, active-week totals are padded to whole lives, and gaps are exactly
death_weeks wide - so decomposing the result recovers the template exactly.

Each event also gets a short templated text whose offline lexicon score
reproduces its toxicity whenever the value is expressible as a small token
fraction; with ``emit_scores`` false the toxicity field is left unset and a
scoring stage must fill it from the text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import InvalidSpec
from .model import Corpus, Event, Timeline, bulk_build
from .scoring import load_lexicon

WEEK_SECONDS = 7 * 86400
DEFAULT_START = 1420070400  # 2015-01-01T00:00:00Z

_TEXT_POOL_SIZE = 64
_MAX_TOKENS = 12

# benign filler vocabulary for templated texts (never in the flag list)
_FILLER = (
    "morning coffee sunny walk garden music friendly weekend lake bright "
    "gentle reading kitchen bicycle meadow quiet library harvest painting "
    "travel evening breakfast cheerful river mountain picnic"
).split()


@dataclass(slots=True)
class ProcessSpec:
    """Inter-event gap process: periodic(interval), poisson(rate) or
    pareto(alpha, x_min); times in seconds."""

    kind: str
    interval: float | None = None
    rate: float | None = None
    alpha: float | None = None
    x_min: float | None = None

    def validate(self) -> None:
        if self.kind == "periodic":
            if not self.interval or self.interval <= 0:
                raise InvalidSpec("periodic process needs interval > 0")
        elif self.kind == "poisson":
            if not self.rate or self.rate <= 0:
                raise InvalidSpec("poisson process needs rate > 0")
        elif self.kind == "pareto":
            if not self.alpha or self.alpha <= 0:
                raise InvalidSpec("pareto process needs alpha > 0")
            if not self.x_min or self.x_min <= 0:
                raise InvalidSpec("pareto process needs x_min > 0")
        else:
            raise InvalidSpec(f"unknown process kind {self.kind!r}")


@dataclass(slots=True)
class ToxicityModel:
    """constant(value) or two_class(p_toxic, v_toxic, v_benign); all in [0, 1]."""

    kind: str
    value: float | None = None
    p_toxic: float | None = None
    v_toxic: float | None = None
    v_benign: float | None = None

    def validate(self) -> None:
        if self.kind == "constant":
            if self.value is None or not (0.0 <= self.value <= 1.0):
                raise InvalidSpec("constant toxicity needs value in [0, 1]")
        elif self.kind == "two_class":
            for name in ("p_toxic", "v_toxic", "v_benign"):
                v = getattr(self, name)
                if v is None or not (0.0 <= v <= 1.0):
                    raise InvalidSpec(f"two_class toxicity needs {name} in [0, 1]")
        else:
            raise InvalidSpec(f"unknown toxicity kind {self.kind!r}")


@dataclass(slots=True)
class ChurnTemplate:
    """Repeat life_weeks active weeks then death_weeks silent ones."""

    life_weeks: int
    death_weeks: int
    events_per_week: int = 4

    def validate(self) -> None:
        if self.life_weeks < 1 or self.death_weeks < 1:
            raise InvalidSpec("churn template needs life_weeks >= 1 and death_weeks >= 1")
        if self.events_per_week < 1:
            raise InvalidSpec("churn template needs events_per_week >= 1")


@dataclass(slots=True)
class GenSpec:
    """Everything needed to generate one corpus deterministically."""

    seed: int
    n_users: int
    events_per_user: int
    process: ProcessSpec
    toxicity_model: ToxicityModel
    churn_template: ChurnTemplate | None = None
    emit_scores: bool = True
    start: int = DEFAULT_START
    user_prefix: str = "u"

    def validate(self) -> None:
        if self.n_users < 1:
            raise InvalidSpec("n_users must be >= 1")
        if self.events_per_user < 1:
            raise InvalidSpec("events_per_user must be >= 1")
        self.process.validate()
        self.toxicity_model.validate()
        if self.churn_template is not None:
            self.churn_template.validate()
            if self.events_per_user < self.churn_template.life_weeks:
                raise InvalidSpec("events_per_user must cover at least one full life")


def spec_from_json(path_or_text: str | Path) -> GenSpec:
    """Parse a GenSpec from a JSON file or a raw JSON string (field names
    mirror the dataclasses)."""
    try:
        is_file = Path(path_or_text).exists()
    except OSError:
        is_file = False
    text = Path(path_or_text).read_text("utf-8") if is_file else str(path_or_text)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"spec is not valid JSON: {exc}") from exc
    try:
        process = ProcessSpec(**obj["process"])
        toxicity = ToxicityModel(**obj["toxicity_model"])
        template = ChurnTemplate(**obj["churn_template"]) if obj.get("churn_template") else None
        spec = GenSpec(
            seed=int(obj["seed"]),
            n_users=int(obj["n_users"]),
            events_per_user=int(obj["events_per_user"]),
            process=process,
            toxicity_model=toxicity,
            churn_template=template,
            emit_scores=bool(obj.get("emit_scores", True)),
            start=int(obj.get("start", DEFAULT_START)),
            user_prefix=str(obj.get("user_prefix", "u")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpec(f"bad spec field: {exc}") from exc
    spec.validate()
    return spec


def _user_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(index,))))


def _gaps(process: ProcessSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    if process.kind == "periodic":
        return np.full(n, int(round(process.interval)), dtype=np.int64)
    if process.kind == "poisson":
        raw = rng.exponential(1.0 / process.rate, size=n)
    else:  # pareto, by inverse transform
        u = rng.random(n)
        raw = process.x_min * (1.0 - u) ** (-1.0 / process.alpha)
    return np.rint(raw).astype(np.int64)


def _template_timestamps(template: ChurnTemplate, n_events: int, start: int) -> np.ndarray:
    """Event times filling whole lives: every active week hit, gaps exact."""
    life, death, epw = template.life_weeks, template.death_weeks, template.events_per_week
    n_active = -(-n_events // epw)  # ceil
    rounded_up = -(-n_active // life) * life
    n_active = rounded_up if rounded_up <= n_events else (n_events // life) * life
    base = n_events // n_active
    extra = n_events % n_active  # first `extra` weeks hold one more event
    ts = np.empty(n_events, dtype=np.int64)
    pos = 0
    for a in range(n_active):
        week_abs = (a // life) * (life + death) + (a % life)
        count = base + (1 if a < extra else 0)
        step = WEEK_SECONDS // (count + 1)
        for s in range(count):
            ts[pos] = start + week_abs * WEEK_SECONDS + (s + 1) * step
            pos += 1
    return np.sort(ts)


def _toxicity_values(model: ToxicityModel, n: int, rng: np.random.Generator) -> np.ndarray:
    if model.kind == "constant":
        return np.full(n, model.value, dtype=np.float64)
    toxic = rng.random(n) < model.p_toxic
    return np.where(toxic, model.v_toxic, model.v_benign)


def _text_pool(value: float, rng: np.random.Generator, flagged: list[str]) -> list[str]:
    """Sentences whose offline lexicon score equals ``value`` when the value
    is a small token fraction (k flagged of m tokens)."""
    frac = Fraction(value).limit_denominator(_MAX_TOKENS)
    m = frac.denominator if frac.denominator > 1 else min(2, _MAX_TOKENS)
    k = frac.numerator * (m // frac.denominator)
    pool = []
    for _ in range(_TEXT_POOL_SIZE):
        words = [flagged[int(rng.integers(len(flagged)))] for _ in range(k)]
        words += [_FILLER[int(rng.integers(len(_FILLER)))] for _ in range(m - k)]
        perm = rng.permutation(len(words))
        pool.append(" ".join(words[j] for j in perm))
    return pool


def generate(spec: GenSpec) -> Corpus:
    """Generate the corpus described by ``spec`` (validated first)."""
    spec.validate()
    with bulk_build():
        return _generate(spec)


def _generate(spec: GenSpec) -> Corpus:
    flagged = sorted(load_lexicon())
    width = max(4, len(str(spec.n_users - 1)))
    ev_width = max(5, len(str(spec.events_per_user - 1)))
    timelines: dict[str, Timeline] = {}
    pools: dict[float, list[str]] = {}
    pool_rng = _user_rng(spec.seed, 0xFFFFFFFF)

    for i in range(spec.n_users):
        rng = _user_rng(spec.seed, i)
        uid = f"{spec.user_prefix}{i:0{width}d}"
        n = spec.events_per_user
        if spec.churn_template is not None:
            ts = _template_timestamps(spec.churn_template, n, spec.start)
        else:
            gaps = _gaps(spec.process, n - 1, rng)
            ts = spec.start + np.concatenate(([0], np.cumsum(gaps)))
        tox = _toxicity_values(spec.toxicity_model, n, rng)
        text_idx = rng.integers(_TEXT_POOL_SIZE, size=n)

        events = []
        for j in range(n):
            value = float(tox[j])
            pool = pools.get(value)
            if pool is None:
                pool = pools[value] = _text_pool(value, pool_rng, flagged)
            events.append(Event(
                user_id=uid,
                event_id=f"{uid}-{j:0{ev_width}d}",
                timestamp=int(ts[j]),
                text=pool[int(text_idx[j])],
                toxicity=value if spec.emit_scores else None,
            ))
        timelines[uid] = Timeline(uid, events)
    return Corpus(timelines=timelines)
