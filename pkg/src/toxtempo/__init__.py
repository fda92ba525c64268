"""Temporal posting-pattern analytics for event timelines.

Identifies consistently toxic users in an event corpus from per-event
toxicity scores: concentration (Gini index), median-split classification,
burstiness of inter-event times, activity span, and an alternating
life/death churn decomposition, with deterministic plot-ready reports.

Typical library use::

    from toxtempo import ingest, score_corpus, compute_metrics, classify
    from toxtempo.scoring import ScorerConfig

    corpus = ingest("corpus.jsonl")
    corpus = score_corpus(corpus, ScorerConfig(mode="offline"))
    summary = classify(compute_metrics(corpus))
    print(len(summary.ctu_ids), "consistently toxic users")

The ``toxtempo`` CLI drives the same stages over files with caching; see
the README for the pipeline layout.
"""

from .churn import (
    ChurnDecomposition,
    ChurnSummaryRow,
    LifePeriod,
    cohort_churn,
    decompose,
    weekly_indicator,
)
from .classifier import CohortSummary, classify, spearman
from .errors import (
    ConfigError,
    DegenerateConstantInput,
    EmptyInput,
    FormatError,
    InvalidSpec,
    LengthMismatch,
    MissingText,
    RemoteError,
    TooFewEvents,
    TooFewIntervals,
    TooFewUsers,
    ToxtempoError,
    UnscoredEvent,
    ValidationError,
)
from .metrics import (
    UserMetrics,
    activity_span,
    burstiness,
    compute_metrics,
    compute_user_metrics,
    gini,
    mean_toxicity,
    split_burstiness,
)
from .model import (
    Corpus,
    Event,
    IngestOptions,
    Timeline,
    export_csv,
    export_jsonl,
    filter_by_length,
    ingest,
    inter_event_times,
)
from .pipeline import RunConfig, load_config, run
from .report import Ecdf, ecdf, histogram_density, user_yearly_series, yearly_table
from .scoring import ScorerConfig, UserScoreTable, attach_user_scores, offline_score, score_corpus
from .synth import ChurnTemplate, GenSpec, ProcessSpec, ToxicityModel, generate

__version__ = "0.1.0"
