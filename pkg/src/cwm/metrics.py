"""Evaluation metrics and the grouped / evidence analyses.

Watch-time prediction is scored with MAE and XAUC, relevance ranking with
AUC and nDCG@k against binary interest labels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

__all__ = [
    "InterestLabelConfig",
    "fit_interest_threshold",
    "interest_label",
    "interest_labels",
    "mae",
    "xauc",
    "auc",
    "ndcg_at_k",
    "delta_imp",
    "duration_bins",
    "assign_bins",
    "group_by_user",
    "repeat_play_stats",
    "feedback_proportion",
    "interest_label_report",
    "EvalReport",
    "evaluate",
]


@dataclass(frozen=True)
class InterestLabelConfig:
    """Interest threshold ``w_q``: the ``q``-quantile of train watch time."""

    q: float = 0.7
    w_q: float = 1.0

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if not self.w_q > 0:
            raise ValueError("w_q must be positive")


def fit_interest_threshold(train_watch_times, q: float = 0.7) -> InterestLabelConfig:
    return InterestLabelConfig(q, float(np.quantile(np.asarray(train_watch_times, dtype=float), q)))


def interest_labels(w, d, w_q: float) -> np.ndarray:
    """1 for short videos played to the end or long videos watched past ``w_q``."""
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    short = d <= w_q
    return np.where(short, w >= d, w > w_q).astype(np.int64)


def interest_label(record, cfg: InterestLabelConfig) -> int:
    return int(interest_labels(record.watch_time_s, record.duration_s, cfg.w_q))


def mae(preds, truths) -> float:
    p = np.asarray(preds, dtype=float)
    t = np.asarray(truths, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("mae of empty input")
    return float(np.mean(np.abs(p - t)))


def _pair_credit(dp, dt):
    # 1 when the prediction order agrees with the truth order, 0.5 on a prediction tie
    return np.where(dp == 0, 0.5, (np.sign(dp) == np.sign(dt)).astype(float))


def xauc(preds, truths, mode: str = "exhaustive", n_pairs: int = 1_000_000, seed: int = 0,
         rng: np.random.Generator | None = None) -> float:
    """Fraction of record pairs ordered by ``preds`` as they are by ``truths``.

    Only pairs with distinct truths count; a tie in the predictions scores
    one half. ``mode="sampled"`` draws ``n_pairs`` such pairs uniformly with
    replacement instead of enumerating all of them.
    """
    p = np.asarray(preds, dtype=float)
    t = np.asarray(truths, dtype=float)
    n = len(p)
    if p.shape != t.shape:
        raise ValueError("length mismatch")
    if n < 2:
        raise ValueError("xauc needs at least two records")
    if np.all(t == t[0]):
        raise ValueError("xauc undefined: all truths identical")

    if mode == "exhaustive":
        total = 0.0  # sums of half-credits doubled, exact in float64
        count = 0
        for i in range(n - 1):
            dt = t[i + 1:] - t[i]
            keep = dt != 0
            dp = p[i + 1:][keep] - p[i]
            total += float(np.sum(2.0 * _pair_credit(dp, dt[keep])))
            count += int(np.count_nonzero(keep))
        return total / (2.0 * count)

    if mode != "sampled":
        raise ValueError(f"unknown xauc mode {mode!r}")
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed) if rng is None else rng
    credit = 0.0
    drawn = 0
    # rejection sampling of unordered pairs with distinct truths
    while drawn < n_pairs:
        m = max(1024, int(1.2 * (n_pairs - drawn)))
        a = rng.integers(0, n, size=m)
        b = rng.integers(0, n, size=m)
        ok = (a != b) & (t[a] != t[b])
        a, b = a[ok][: n_pairs - drawn], b[ok][: n_pairs - drawn]
        credit += float(np.sum(_pair_credit(p[b] - p[a], t[b] - t[a])))
        drawn += len(a)
    return credit / n_pairs


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs at least one positive and one negative")
    ranks = sps.rankdata(s)  # average ranks, exact multiples of 0.5
    u = float(np.sum(ranks[y])) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def _dcg(gains: Sequence[float]) -> float:
    return math.fsum(g / math.log2(i + 2) for i, g in enumerate(gains))


def ndcg_at_k(lists, k: int = 3) -> float:
    """Mean nDCG@k over per-user ``(scores, labels)`` lists.

    Gain is ``2**label - 1``; users without a positive label are skipped.
    Score ties keep the original list order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    vals = []
    for scores, labels in lists:
        labels = np.asarray(labels, dtype=float)
        if not np.any(labels > 0):
            continue
        order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
        gains = 2.0 ** labels - 1.0
        dcg = _dcg(gains[order][:k])
        idcg = _dcg(np.sort(gains)[::-1][:k])
        vals.append(dcg / idcg)
    if not vals:
        raise ValueError("ndcg: no user has a positive label")
    return math.fsum(vals) / len(vals)


def group_by_user(user_ids, scores, labels):
    """Split flat arrays into per-user ``(scores, labels)`` lists, first-seen order."""
    groups: dict = {}
    for i, u in enumerate(user_ids):
        groups.setdefault(u, []).append(i)
    s = np.asarray(scores)
    y = np.asarray(labels)
    return [(s[idx], y[idx]) for idx in groups.values()]


def delta_imp(v_method: float, v_reference: float) -> float:
    if v_reference == 0:
        raise ValueError("delta_imp: reference value is zero")
    return (v_method - v_reference) / v_reference


# --------------------------------------------------------------------------
# duration bins

def duration_bins(d, n_bins: int = 10, mode: str = "equal_count") -> np.ndarray:
    """Bin edges over durations, ``n_bins + 1`` values (fewer if durations tie)."""
    d = np.asarray(d, dtype=float)
    if mode == "equal_count":
        edges = np.quantile(d, np.linspace(0, 1, n_bins + 1))
    elif mode == "equal_width":
        edges = np.linspace(d.min(), d.max(), n_bins + 1)
    else:
        raise ValueError(f"unknown bin mode {mode!r}")
    return np.unique(edges)


def assign_bins(d, edges) -> np.ndarray:
    """Bin index per duration; the last bin is closed on the right."""
    d = np.asarray(d, dtype=float)
    if len(edges) < 2:
        return np.zeros(len(d), dtype=np.int64)
    idx = np.searchsorted(edges, d, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def _bin_label(edges, b):
    if len(edges) < 2:
        return f"[{edges[0]:g}]"
    return f"[{edges[b]:g},{edges[b + 1]:g}]" if b == len(edges) - 2 else f"[{edges[b]:g},{edges[b + 1]:g})"


def repeat_play_stats(w, d, edges) -> list[dict]:
    """Per bin: share of records with ``w > d`` and mean ``(w - d) / d`` over them."""
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    b = assign_bins(d, edges)
    rows = []
    for i in range(max(len(edges) - 1, 1)):
        m = b == i
        if not np.any(m):
            continue
        rep = w[m] > d[m]
        ratio = float(np.mean((w[m][rep] - d[m][rep]) / d[m][rep])) if np.any(rep) else 0.0
        rows.append({"bin": i, "range": _bin_label(edges, i), "n": int(m.sum()),
                     "repeat_proportion": float(rep.mean()), "mean_repeat_ratio": ratio})
    return rows


def feedback_proportion(w, d, like, forward, edges, restrict=None) -> list[dict]:
    """Per bin: share of the restricted records with a like or a forward.

    ``restrict`` is a boolean mask; by default only complete plays are kept.
    """
    if like is None or forward is None:
        raise ValueError("feedback columns are absent")
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    pos = np.asarray(like, dtype=bool) | np.asarray(forward, dtype=bool)
    keep = (w >= d) if restrict is None else np.asarray(restrict, dtype=bool)
    b = assign_bins(d, edges)
    rows = []
    for i in range(max(len(edges) - 1, 1)):
        m = (b == i) & keep
        if not np.any(m):
            continue
        rows.append({"bin": i, "range": _bin_label(edges, i), "n": int(m.sum()),
                     "feedback_proportion": float(pos[m].mean())})
    return rows


def interest_label_report(w, d, like, forward, w_q: float, edges) -> list[dict]:
    """Share of positive interest labels per bin, and feedback share among positives.

    Videos shorter than ``w_q`` are left out because they cannot reach it.
    """
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    labels = interest_labels(w, d, w_q).astype(bool)
    eligible = d > w_q
    has_fb = like is not None and forward is not None
    pos = (np.asarray(like, dtype=bool) | np.asarray(forward, dtype=bool)) if has_fb else None
    b = assign_bins(d, edges)
    rows = []
    for i in range(max(len(edges) - 1, 1)):
        m = (b == i) & eligible
        if not np.any(m):
            continue
        row = {"bin": i, "range": _bin_label(edges, i), "n": int(m.sum()),
               "label_proportion": float(labels[m].mean())}
        if has_fb:
            mm = m & labels
            row["feedback_given_label"] = float(pos[mm].mean()) if np.any(mm) else float("nan")
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# reports

@dataclass
class EvalReport:
    mae: float
    xauc: float
    auc: float
    ndcg: float
    k: int = 3
    bins: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {"mae": self.mae, "xauc": self.xauc, "auc": self.auc, f"ndcg@{self.k}": self.ndcg}
        out.update(self.extra)
        return out


def _safe(fn, *args, **kw) -> float:
    try:
        return fn(*args, **kw)
    except ValueError:
        return float("nan")


def evaluate(scores, watch_pred, w, d, user_ids, w_q: float, k: int = 3,
             xauc_mode: str = "exhaustive", xauc_pairs: int = 1_000_000, seed: int = 0,
             edges=None) -> EvalReport:
    """Full metric suite, overall and per duration bin.

    MAE and XAUC use the clipped watch-time predictions; AUC and nDCG use raw
    scores against the interest labels. Undefined metrics come back as NaN.
    """
    scores = np.asarray(scores, dtype=float)
    watch_pred = np.asarray(watch_pred, dtype=float)
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    labels = interest_labels(w, d, w_q)
    has_watch = bool(np.all(np.isfinite(watch_pred)))

    def suite(m):
        uid = [u for u, keep in zip(user_ids, m) if keep]
        return (
            _safe(mae, watch_pred[m], w[m]) if has_watch else float("nan"),
            _safe(xauc, watch_pred[m], w[m], mode=xauc_mode, n_pairs=xauc_pairs, seed=seed)
            if has_watch else float("nan"),
            _safe(auc, scores[m], labels[m]),
            _safe(ndcg_at_k, group_by_user(uid, scores[m], labels[m]), k),
        )

    everything = np.ones(len(w), dtype=bool)
    overall = suite(everything)
    rows = []
    if edges is not None:
        b = assign_bins(d, edges)
        for i in range(max(len(edges) - 1, 1)):
            m = b == i
            if not np.any(m):
                continue
            vals = suite(m)
            rows.append({"bin": i, "range": _bin_label(edges, i), "n": int(m.sum()),
                         "mae": vals[0], "xauc": vals[1], "auc": vals[2], f"ndcg@{k}": vals[3]})
    return EvalReport(*overall, k=k, bins=rows)
