"""Synthetic play logs drawn from the censored interest model.

Each record gets a true probit score ``s = f_true(x)``; interest is
``r = Phi(z)`` with ``z ~ N(s, sigma_true^2)``; the counterfactual watch time
follows from the cost transform and the logged watch time is that value
clipped to ``[0, d]``. The module also carries the utility curve whose
maximiser the cost transform is, plus a fixed-duration histogram helper.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, special

from . import transform as T
from .backbone import STREAM_SYNTH, Model, init_model, substream
from .records import Dataset, PlayRecord

logger = logging.getLogger(__name__)


@dataclass
class SynthConfig:
    n_users: int = 500
    n_videos: int = 400
    n_records: int = 20_000
    true_embedding_dim: int = 4
    durations: tuple = (30.0,)
    weights: tuple | None = None
    c_true: float = 1.0 / 40.0
    sigma_true: float = 2.0
    seed: int = 0
    # std of the non-bias part of the true score across records
    score_scale: float = 1.0
    bias: float = 0.0
    # if set, the score bias is solved so the expected complete ratio hits it
    target_complete_ratio: float | None = None
    truth: str = "fm"
    feedback: bool = True
    start_time: float = 0.0

    def __post_init__(self):
        self.durations = tuple(float(x) for x in self.durations)
        if self.weights is None:
            self.weights = tuple([1.0 / len(self.durations)] * len(self.durations))
        self.weights = tuple(float(x) for x in self.weights)
        for name in ("n_users", "n_videos", "n_records", "true_embedding_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if len(self.weights) != len(self.durations):
            raise ValueError("weights and durations differ in length")
        if any(x <= 0 for x in self.durations):
            raise ValueError("durations must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-9 or any(x < 0 for x in self.weights):
            raise ValueError("duration weights must be non-negative and sum to 1")
        if not self.c_true > 0:
            raise ValueError("c_true must be positive")
        if not self.sigma_true > 0:
            raise ValueError("sigma_true must be positive")
        if self.score_scale < 0:
            raise ValueError("score_scale must be non-negative")
        if self.target_complete_ratio is not None and not 0 < self.target_complete_ratio < 1:
            raise ValueError("target_complete_ratio must lie in (0, 1)")
        if self.truth not in ("fm", "mlp"):
            raise ValueError(f"unknown truth family {self.truth!r}")


@dataclass
class GroundTruth:
    true_score: np.ndarray
    true_r: np.ndarray
    true_cwt: np.ndarray
    model: Model
    video_duration: np.ndarray
    bias: float
    extra: dict = field(default_factory=dict)


def kuairand_like(seed: int = 0, n_records: int = 20_000, **kw) -> SynthConfig:
    """Long-tailed durations up to 400 s, tuned to a 17.5% complete ratio."""
    durations = (10, 15, 20, 30, 45, 60, 90, 120, 180, 240, 300, 400)
    wts = np.array([10, 10, 10, 10, 9, 9, 8, 8, 7, 7, 6, 6], dtype=float)
    args = dict(durations=durations, weights=tuple(wts / wts.sum()), n_records=n_records,
                n_users=200, n_videos=200,
                seed=seed, target_complete_ratio=0.175, score_scale=2.0)
    args.update(kw)
    return SynthConfig(**args)


def wechat_like(seed: int = 0, n_records: int = 20_000, **kw) -> SynthConfig:
    """Short videos of 5 to 59 s, tuned to a 45.5% complete ratio."""
    durations = (5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 59)
    args = dict(durations=durations, n_records=n_records, seed=seed, n_users=200, n_videos=200,
                target_complete_ratio=0.455, score_scale=2.0)
    args.update(kw)
    return SynthConfig(**args)


def cwt_from_score(z, c):
    """Vectorised ``cwt_from_interest(Phi(z), c)``; +inf where Phi(z) rounds to 1."""
    neg_log = -special.log_ndtr(np.asarray(z, dtype=float))
    with np.errstate(divide="ignore"):
        return np.where(neg_log > 0, 1.0 / (c * neg_log) - 1.0, np.inf)


def expected_complete_ratio(score, d, c, sigma) -> float:
    """Mean over records of P(cwt >= d) = Phi((score - g'(d)) / sigma)."""
    thr = T.probit_label(np.asarray(d, dtype=float), c)
    return float(np.mean(special.ndtr((np.asarray(score) - thr) / sigma)))


def _true_model(cfg: SynthConfig, rng) -> Model:
    cards = (cfg.n_users + 1, cfg.n_videos + 1)
    if cfg.truth == "fm":
        m = init_model("fm", cards, emb_dim=cfg.true_embedding_dim, init_std=1.0, rng=rng)
        m.arrays["linear"] = rng.normal(0.0, 1.0, size=m.arrays["linear"].shape)
    else:
        m = init_model("mlp", cards, emb_dim=cfg.true_embedding_dim, hidden=16, dropout=0.0,
                       init_std=1.0, rng=rng)
    return m


def _rescale(model: Model, X, scale: float) -> None:
    """Scale the non-bias part of the true score to have std ``scale`` over ``X``."""
    out_bias = "bias" if model.backbone == "fm" else "b2"
    model.arrays[out_bias] = np.array(0.0)
    raw = model.score(X)
    sd = float(np.std(raw))
    alpha = scale / sd if sd > 0 else 0.0
    if model.backbone == "fm":
        model.arrays["linear"] = model.arrays["linear"] * alpha
        model.arrays["emb"] = model.arrays["emb"] * math.sqrt(alpha)
    else:
        model.arrays["w2"] = model.arrays["w2"] * alpha
    model.arrays[out_bias] = np.array(-float(np.mean(model.score(X))))


def generate(cfg: SynthConfig) -> tuple[Dataset, GroundTruth]:
    rng = substream(cfg.seed, STREAM_SYNTH)
    video_dur = rng.choice(np.array(cfg.durations), size=cfg.n_videos, p=np.array(cfg.weights))
    users = rng.integers(0, cfg.n_users, size=cfg.n_records)
    videos = rng.integers(0, cfg.n_videos, size=cfg.n_records)
    d = video_dur[videos]
    # vocab index 0 stays reserved, as in a learned model
    X = np.stack([users + 1, videos + 1], axis=1)

    model = _true_model(cfg, rng)
    _rescale(model, X, cfg.score_scale)
    centred = model.score(X)
    if cfg.target_complete_ratio is not None:
        def gap(b):
            return expected_complete_ratio(centred + b, d, cfg.c_true, cfg.sigma_true) - cfg.target_complete_ratio
        bias = optimize.brentq(gap, -40.0, 40.0, xtol=1e-12)
    else:
        bias = cfg.bias
    key = "bias" if model.backbone == "fm" else "b2"
    model.arrays[key] = model.arrays[key] + bias
    score = centred + bias

    z = score + cfg.sigma_true * rng.standard_normal(cfg.n_records)
    true_r = special.ndtr(z)
    cwt = cwt_from_score(z, cfg.c_true)
    w = np.clip(cwt, 0.0, d)

    if cfg.feedback:
        event = rng.random(cfg.n_records) < true_r ** 2
        forward = event & (rng.random(cfg.n_records) < 0.3)
    ts = cfg.start_time + np.arange(cfg.n_records, dtype=float)

    recs = []
    for i in range(cfg.n_records):
        u, v = f"u{users[i]}", f"v{videos[i]}"
        recs.append(PlayRecord(
            user_id=u, video_id=v, timestamp=float(ts[i]), duration_s=float(d[i]),
            watch_time_s=float(w[i]), features=(u, v),
            like_flag=bool(event[i]) if cfg.feedback else None,
            forward_flag=bool(forward[i]) if cfg.feedback else None,
        ))
    ds = Dataset(("user_id", "video_id"), recs)
    gt = GroundTruth(score, true_r, cwt, model, video_dur, float(bias),
                     extra={"z": z, "users": users, "videos": videos})
    return ds, gt


def write_ground_truth(gt: GroundTruth, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_index", "true_score", "true_r", "true_cwt"])
        for i, (s, r, c) in enumerate(zip(gt.true_score, gt.true_r, gt.true_cwt)):
            w.writerow([i, repr(float(s)), repr(float(r)), repr(float(c))])


def read_ground_truth(path) -> dict:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in ("true_score", "true_r", "true_cwt")}


# --------------------------------------------------------------------------
# economic model

def utility(t, r, c):
    """Cumulative utility of watching ``t`` seconds: ``log(t+1) / (-log r) - c t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    if not c > 0:
        raise ValueError("c must be positive")
    out = np.log1p(t) / (-math.log(r)) - c * t
    return float(out) if out.ndim == 0 else out


def argmax_utility(r, c, t_max=None, step=0.01) -> float:
    """Grid maximiser of :func:`utility` over ``[0, t_max]``."""
    if not step > 0:
        raise ValueError("step must be positive")
    if t_max is None:
        t_max = 2.0 * max(1.0 / (-c * math.log(r)) - 1.0, 0.0) + 10.0
    grid = np.arange(0.0, t_max + 0.5 * step, step)
    i = int(np.argmax(utility(grid, r, c)))
    if i == len(grid) - 1:
        logger.warning("utility maximiser sits on the grid end t_max=%g; extend the grid", t_max)
    return float(grid[i])


def fixed_duration_histogram(w, d, duration: float, n_bins: int = 20, tol: float = 1e-9):
    """Counts of watch time over ``[0, duration]`` for records of that duration.

    Repeat plays fold into the last bin.
    """
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    m = np.abs(d - duration) <= tol
    if not np.any(m):
        raise ValueError(f"no records with duration {duration}")
    edges = np.linspace(0.0, duration, n_bins + 1)
    counts, _ = np.histogram(np.clip(w[m], 0.0, duration), bins=edges)
    return counts, edges
