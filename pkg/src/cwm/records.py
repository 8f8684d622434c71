"""Play records, CSV ingestion, vocabularies and temporal splits."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("user_id", "video_id", "timestamp", "duration_s", "watch_time_s")
FEEDBACK_COLUMNS = ("like_flag", "forward_flag")


class SchemaError(ValueError):
    """The CSV header does not carry a required column."""


class ParseError(ValueError):
    """A data row failed validation; ``row`` is the 1-based data row number."""

    def __init__(self, row: int, msg: str):
        super().__init__(f"row {row}: {msg}")
        self.row = row


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PlayRecord:
    user_id: str
    video_id: str
    timestamp: float
    duration_s: float
    watch_time_s: float
    features: tuple = ()
    like_flag: bool | None = None
    forward_flag: bool | None = None

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if not self.watch_time_s >= 0:
            raise ValueError(f"watch_time_s must be non-negative, got {self.watch_time_s}")

    @property
    def complete(self) -> bool:
        # repeat plays (w > d) count as complete
        return self.watch_time_s >= self.duration_s


def build_vocab(schema: Sequence[str], records: Sequence[PlayRecord]) -> dict[str, dict[str, int]]:
    """Dense per-field vocabularies; index 0 is reserved for unseen categories.

    Categories are numbered in order of first appearance, so the same records
    always yield the same mapping.
    """
    vocab: dict[str, dict[str, int]] = {name: {} for name in schema}
    for rec in records:
        for name, value in zip(schema, rec.features):
            table = vocab[name]
            if value not in table:
                table[value] = len(table) + 1
    return vocab


@dataclass
class Dataset:
    schema: tuple[str, ...]
    records: list[PlayRecord]
    vocab: dict[str, dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        self.schema = tuple(self.schema)
        arity = len(self.schema)
        for i, rec in enumerate(self.records):
            if len(rec.features) != arity:
                raise ValueError(f"record {i} has {len(rec.features)} features, schema has {arity}")
        if not self.vocab:
            self.vocab = build_vocab(self.schema, self.records)

    def __len__(self):
        return len(self.records)

    @property
    def has_feedback(self) -> bool:
        return bool(self.records) and all(
            r.like_flag is not None and r.forward_flag is not None for r in self.records
        )

    def cardinalities(self) -> list[int]:
        """Per-field table sizes, counting the reserved index 0."""
        return [len(self.vocab[name]) + 1 for name in self.schema]

    def encode(self, vocab: dict[str, dict[str, int]] | None = None) -> np.ndarray:
        """Integer matrix ``(n_records, n_fields)`` of per-field vocab indices."""
        vocab = self.vocab if vocab is None else vocab
        out = np.zeros((len(self.records), len(self.schema)), dtype=np.int64)
        for j, name in enumerate(self.schema):
            table = vocab[name]
            out[:, j] = [table.get(r.features[j], 0) for r in self.records]
        return out

    def durations(self) -> np.ndarray:
        return np.array([r.duration_s for r in self.records], dtype=float)

    def watch_times(self) -> np.ndarray:
        return np.array([r.watch_time_s for r in self.records], dtype=float)

    def timestamps(self) -> np.ndarray:
        return np.array([r.timestamp for r in self.records], dtype=float)

    def subset(self, mask_or_index, vocab=None) -> "Dataset":
        idx = np.arange(len(self.records))[mask_or_index]
        return Dataset(self.schema, [self.records[i] for i in idx],
                       vocab=self.vocab if vocab is None else vocab)


@dataclass(frozen=True)
class DatasetStats:
    n_users: int
    n_videos: int
    n_interactions: int
    mean_complete_ratio: float


# --------------------------------------------------------------------------
# CSV

def _parse_float(raw: str, name: str, row: int) -> float:
    try:
        val = float(raw)
    except (TypeError, ValueError):
        raise ParseError(row, f"{name}={raw!r} is not numeric") from None
    if not math.isfinite(val):
        raise ParseError(row, f"{name}={raw!r} is not finite")
    return val


def _parse_flag(raw: str | None, name: str, row: int) -> bool | None:
    if raw is None or raw == "":
        return None
    if raw in ("0", "1"):
        return raw == "1"
    raise ParseError(row, f"{name}={raw!r} must be 0 or 1")


def load_csv(path, schema: Sequence[str] = (), vocab=None) -> Dataset:
    """Read a play log.

    ``schema`` names the categorical feature columns in model order; when it
    is empty the feature fields default to ``user_id, video_id``. Passing a
    ``vocab`` reuses a train-time vocabulary instead of building one.
    """
    path = Path(path)
    schema = tuple(schema) or ("user_id", "video_id")
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in REQUIRED_COLUMNS + schema:
            if col not in header:
                raise SchemaError(f"missing column {col!r} in {path}")
        has_like = "like_flag" in header
        has_fwd = "forward_flag" in header
        for i, row in enumerate(reader, start=1):
            dur = _parse_float(row["duration_s"], "duration_s", i)
            wt = _parse_float(row["watch_time_s"], "watch_time_s", i)
            if dur <= 0:
                raise ParseError(i, f"duration_s must be positive, got {dur}")
            if wt < 0:
                raise ParseError(i, f"watch_time_s must be non-negative, got {wt}")
            records.append(PlayRecord(
                user_id=row["user_id"],
                video_id=row["video_id"],
                timestamp=_parse_float(row["timestamp"], "timestamp", i),
                duration_s=dur,
                watch_time_s=wt,
                features=tuple(row[name] for name in schema),
                like_flag=_parse_flag(row.get("like_flag"), "like_flag", i) if has_like else None,
                forward_flag=_parse_flag(row.get("forward_flag"), "forward_flag", i) if has_fwd else None,
            ))
    return Dataset(schema, records, vocab=vocab or {})


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(ds: Dataset, path) -> None:
    """Write ``ds`` in the ingest format; floats use round-trip ``repr``."""
    extra = [name for name in ds.schema if name not in ("user_id", "video_id")]
    feedback = ds.has_feedback
    header = list(REQUIRED_COLUMNS) + extra + (list(FEEDBACK_COLUMNS) if feedback else [])
    pos = {name: j for j, name in enumerate(ds.schema)}
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in ds.records:
            row = [r.user_id, r.video_id, _fmt(r.timestamp), _fmt(r.duration_s), _fmt(r.watch_time_s)]
            row += [r.features[pos[name]] for name in extra]
            if feedback:
                row += [int(bool(r.like_flag)), int(bool(r.forward_flag))]
            w.writerow(row)


# --------------------------------------------------------------------------
# splitting, filtering, statistics

def temporal_split(ds: Dataset, t1: float, t2: float) -> tuple[Dataset, Dataset, Dataset]:
    """Split by timestamp into ``[-inf, t1)``, ``[t1, t2)`` and ``[t2, inf)``.

    All three parts share a vocabulary built from the train part only.
    """
    if t1 > t2:
        raise ConfigError(f"split requires t1 <= t2, got t1={t1}, t2={t2}")
    ts = ds.timestamps()
    parts = [ts < t1, (ts >= t1) & (ts < t2), ts >= t2]
    train_recs = [ds.records[i] for i in np.flatnonzero(parts[0])]
    if not train_recs:
        raise ConfigError(f"empty train split (no timestamp < {t1})")
    vocab = build_vocab(ds.schema, train_recs)
    train, val, test = (ds.subset(p, vocab=vocab) for p in parts)
    if len(val) == 0:
        logger.warning("validation split is empty (t1=%s, t2=%s)", t1, t2)
    return train, val, test


def split_points(ds: Dataset, fractions=(0.7, 0.15)) -> tuple[float, float]:
    """Timestamps cutting ``ds`` into train/val/test by the given fractions."""
    ts = np.sort(ds.timestamps())
    n = len(ts)
    i1 = int(round(fractions[0] * n))
    i2 = int(round((fractions[0] + fractions[1]) * n))
    i1 = min(max(i1, 1), n - 1)
    i2 = min(max(i2, i1), n - 1)
    return float(ts[i1]), float(ts[i2])


def filter_records(ds: Dataset, max_duration=None, exclude_durations=()) -> Dataset:
    """Drop records by duration (e.g. very long videos, or a spiky 60 s bucket)."""
    d = ds.durations()
    keep = np.ones(len(d), dtype=bool)
    if max_duration is not None:
        keep &= d <= max_duration
    for x in exclude_durations:
        keep &= ~np.isclose(d, x, rtol=0, atol=1e-9)
    recs = [ds.records[i] for i in np.flatnonzero(keep)]
    return Dataset(ds.schema, recs)


def stats(ds: Dataset) -> DatasetStats:
    if len(ds) == 0:
        raise ValueError("stats of an empty dataset")
    n_complete = sum(r.complete for r in ds.records)
    return DatasetStats(
        n_users=len({r.user_id for r in ds.records}),
        n_videos=len({r.video_id for r in ds.records}),
        n_interactions=len(ds),
        mean_complete_ratio=n_complete / len(ds),
    )
