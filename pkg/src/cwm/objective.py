"""Training objectives and their inverse transforms.

Each objective turns logged (watch time, duration) pairs into a per-record
loss on the backbone score and maps scores back to watch-time predictions.
The counterfactual objective treats complete plays as right-censored in
probit space; the label-correction baselines regress a corrected label with
squared error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import transform as T

__all__ = [
    "PhiMode",
    "cwm_loss",
    "cwm_loss_batch",
    "cwm_log_likelihood",
    "mse_loss",
    "vr_target",
    "vr_inverse",
    "pcr_label",
    "pcr_inverse",
    "WTGStats",
    "fit_wtg",
    "wtg_label",
    "wtg_inverse",
    "D2QTables",
    "fit_d2q",
    "d2q_label",
    "d2q_inverse",
    "Objective",
    "CWMObjective",
    "VRObjective",
    "PCRObjective",
    "WTGObjective",
    "D2QObjective",
    "OracleObjective",
    "make_objective",
    "objective_from_config",
]

_LOG_2PI = math.log(2 * math.pi)


class NotFittedError(RuntimeError):
    pass


@dataclass(frozen=True)
class PhiMode:
    """How the censored term evaluates Phi: ``exact`` or ``sigmoid`` with scale ``k``."""

    kind: str = "exact"
    k: float = 1.702

    def __post_init__(self):
        if self.kind not in ("exact", "sigmoid"):
            raise ValueError(f"unknown phi mode {self.kind!r}")
        if not self.k > 0:
            raise ValueError("sigmoid scale k must be positive")

    @classmethod
    def parse(cls, spec) -> "PhiMode":
        if isinstance(spec, PhiMode):
            return spec
        if spec in (None, "exact"):
            return cls("exact")
        if isinstance(spec, str) and spec.startswith("sigmoid"):
            _, _, k = spec.partition(":")
            return cls("sigmoid", float(k) if k else 1.702)
        raise ValueError(f"cannot parse phi mode {spec!r}")

    def __str__(self):
        return "exact" if self.kind == "exact" else f"sigmoid:{self.k!r}"


def _neg_log_phi(z, mode: PhiMode):
    """``-log Phi(z)`` and its derivative in ``z`` under ``mode``."""
    if mode.kind == "exact":
        log_cdf = special.log_ndtr(z)
        # phi/Phi computed in log space so it stays finite in the far tail
        ratio = np.exp(-0.5 * z * z - 0.5 * _LOG_2PI - log_cdf)
        return -log_cdf, -ratio
    kz = mode.k * z
    # -log sigmoid(kz) = softplus(-kz)
    return np.logaddexp(0.0, -kz), -mode.k * special.expit(-kz)


def cwm_loss_batch(score, w, d, params: T.CostParams, mode: PhiMode = PhiMode(),
                   labels=None):
    """Vectorised per-record negative log-likelihood and its score gradient.

    Incomplete plays (``w < d``) give ``(g'(w) - f)^2 / (2 sigma^2)``; complete
    plays, repeat plays included, give ``-log Phi((f - g'(d)) / sigma)``.
    ``labels`` may carry precomputed ``g'(min(w, d))``.
    """
    f = np.asarray(score, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite score")
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    complete = w >= d
    if labels is None:
        labels = T.probit_label(np.minimum(w, d), params.cost_c)
    labels = np.asarray(labels, dtype=float)
    s = params.sigma
    resid = labels - f
    loss_inc = 0.5 * resid * resid / (s * s)
    grad_inc = -resid / (s * s)
    z = (f - labels) / s
    loss_cen, dz = _neg_log_phi(z, mode)
    loss = np.where(complete, loss_cen, loss_inc)
    grad = np.where(complete, dz / s, grad_inc)
    return loss, grad


def cwm_loss(score: float, record, params: T.CostParams, mode: PhiMode = PhiMode()):
    """Loss and d(loss)/d(score) for a single :class:`~cwm.records.PlayRecord`."""
    loss, grad = cwm_loss_batch(np.array([score]), np.array([record.watch_time_s]),
                                np.array([record.duration_s]), params, mode)
    return float(loss[0]), float(grad[0])


def cwm_log_likelihood(score, w, d, params: T.CostParams):
    """Full log-density of the observed watch times under the censored model.

    Unlike the training loss this keeps the Gaussian normaliser and the
    Jacobian of the probit transform, so values are comparable across
    different ``(c, sigma)``.
    """
    f = np.asarray(score, dtype=float)
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    c, s = params.cost_c, params.sigma
    complete = w >= d
    x = T.probit_label(np.minimum(w, d), c)
    z = (x - f) / s
    log_r = -1.0 / (c * (np.minimum(w, d) + 1.0))
    log_jac = log_r - math.log(c) - 2.0 * np.log1p(np.minimum(w, d)) + 0.5 * x * x + 0.5 * _LOG_2PI
    ll_inc = -0.5 * z * z - 0.5 * _LOG_2PI - math.log(s) + log_jac
    ll_cen = special.log_ndtr(-z)
    return np.where(complete, ll_cen, ll_inc)


def mse_loss(score, target):
    """``(score - target)^2 / 2`` and its gradient ``score - target``."""
    diff = np.asarray(score, dtype=float) - np.asarray(target, dtype=float)
    loss = 0.5 * diff * diff
    if np.ndim(diff) == 0:
        return float(loss), float(diff)
    return loss, diff


# --------------------------------------------------------------------------
# label corrections

def vr_target(w):
    return w


def vr_inverse(pred, d):
    return np.clip(pred, 0.0, d)


def pcr_label(w, d):
    return np.minimum(np.asarray(w, dtype=float) / d, 1.0)


def pcr_inverse(pred, d):
    return np.clip(np.asarray(pred) * d, 0.0, d)


@dataclass(frozen=True)
class WTGStats:
    """Per duration-bin watch-time mean and std. Bin ``i`` covers ``[i*width, (i+1)*width)``."""

    bin_width_s: float
    bins: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def lookup(self, d):
        b = np.floor(np.asarray(d, dtype=float) / self.bin_width_s)
        # unseen bins borrow the nearest fitted one
        pos = np.searchsorted(self.bins, b)
        lo = np.clip(pos - 1, 0, len(self.bins) - 1)
        hi = np.clip(pos, 0, len(self.bins) - 1)
        use_hi = np.abs(self.bins[hi] - b) <= np.abs(b - self.bins[lo])
        idx = np.where(use_hi, hi, lo)
        return self.mean[idx], self.std[idx]


def fit_wtg(w, d, bin_width_s: float = 5.0, std_floor: float = 1e-6) -> WTGStats:
    if not bin_width_s > 0:
        raise ValueError("bin_width_s must be positive")
    w = np.asarray(w, dtype=float)
    b = np.floor(np.asarray(d, dtype=float) / bin_width_s)
    bins = np.unique(b)
    mean = np.array([w[b == x].mean() for x in bins])
    std = np.array([max(w[b == x].std(), std_floor) for x in bins])
    return WTGStats(bin_width_s, bins, mean, std)


def wtg_label(w, d, stats: WTGStats | None):
    if stats is None:
        raise NotFittedError("WTG statistics are not fitted")
    mean, std = stats.lookup(d)
    return (np.asarray(w, dtype=float) - mean) / std


def wtg_inverse(pred, d, stats: WTGStats | None):
    if stats is None:
        raise NotFittedError("WTG statistics are not fitted")
    mean, std = stats.lookup(d)
    return np.clip(np.asarray(pred) * std + mean, 0.0, d)


@dataclass(frozen=True)
class D2QTables:
    """Equal-frequency duration groups, each with its sorted watch times."""

    edges: np.ndarray          # interior group boundaries on duration
    tables: tuple              # sorted watch-time arrays, one per group

    def group(self, d):
        return np.searchsorted(self.edges, np.asarray(d, dtype=float), side="right")


def fit_d2q(w, d, group_count: int = 60) -> D2QTables:
    if group_count < 1:
        raise ValueError("group_count must be >= 1")
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    qs = np.quantile(d, np.linspace(0, 1, group_count + 1)[1:-1])
    # a duration value never straddles two groups
    edges = np.unique(qs)
    grp = np.searchsorted(edges, d, side="right")
    tables = []
    for g in range(len(edges) + 1):
        vals = np.sort(w[grp == g])
        tables.append(vals)
    # groups emptied by tied edges are dropped
    keep = [g for g, t in enumerate(tables) if len(t)]
    if len(keep) != len(tables):
        tables = [tables[g] for g in keep]
        edges = np.array([edges[g - 1] for g in keep[1:]], dtype=float)
    return D2QTables(np.asarray(edges, dtype=float), tuple(tables))


def d2q_label(w, d, tables: D2QTables | None):
    """Midpoint empirical-CDF rank of ``w`` within its duration group."""
    if tables is None:
        raise NotFittedError("D2Q tables are not fitted")
    scalar = np.ndim(w) == 0 and np.ndim(d) == 0
    w, d = np.broadcast_arrays(np.atleast_1d(np.asarray(w, dtype=float)), np.asarray(d, dtype=float))
    grp = tables.group(d)
    out = np.empty_like(w)
    for g in np.unique(grp):
        m = grp == g
        t = tables.tables[g]
        below = np.searchsorted(t, w[m], side="left")
        equal = np.searchsorted(t, w[m], side="right") - below
        out[m] = (below + 0.5 * equal) / len(t)
    return float(out[0]) if scalar else out


def d2q_inverse(pred, d, tables: D2QTables | None):
    """Group empirical quantile at ``pred``, interpolated between midpoint ranks."""
    if tables is None:
        raise NotFittedError("D2Q tables are not fitted")
    scalar = np.ndim(pred) == 0 and np.ndim(d) == 0
    pred = np.atleast_1d(np.asarray(pred, dtype=float))
    d_arr = np.broadcast_to(np.asarray(d, dtype=float), pred.shape)
    grp = tables.group(d_arr)
    out = np.empty_like(pred)
    for g in np.unique(grp):
        m = grp == g
        t = tables.tables[g]
        pos = (np.arange(len(t)) + 0.5) / len(t)
        out[m] = np.interp(pred[m], pos, t)
    out = np.clip(out, 0.0, d_arr)
    return float(out[0]) if scalar else out


# --------------------------------------------------------------------------
# objective objects used by the trainer

class Objective:
    """Base class: ``fit`` on the train split, then ``loss`` and ``predict_watch_time``."""

    name = "base"

    def fit(self, w, d, **kw) -> "Objective":
        return self

    def prepare(self, w, d):
        """Per-record targets reused across epochs."""
        return None

    def loss(self, score, w, d, prepared=None):
        raise NotImplementedError

    def predict_watch_time(self, score, d):
        raise NotImplementedError

    def config(self) -> dict:
        return {"variant": self.name}


class _LabelObjective(Objective):
    def label(self, w, d):
        raise NotImplementedError

    def prepare(self, w, d):
        return np.asarray(self.label(w, d), dtype=float)

    def loss(self, score, w, d, prepared=None):
        target = self.label(w, d) if prepared is None else prepared
        return mse_loss(np.asarray(score, dtype=float), target)


class CWMObjective(Objective):
    name = "cwm"

    def __init__(self, params: T.CostParams = T.CostParams(), phi_mode: PhiMode = PhiMode()):
        self.params = params
        self.phi_mode = PhiMode.parse(phi_mode)

    def prepare(self, w, d):
        return T.probit_label(np.minimum(w, d), self.params.cost_c)

    def loss(self, score, w, d, prepared=None):
        return cwm_loss_batch(score, w, d, self.params, self.phi_mode, labels=prepared)

    def predict_watch_time(self, score, d):
        return T.predict_watch_time(score, self.params.cost_c, d)

    def config(self):
        return {"variant": "cwm", "cost_c": self.params.cost_c, "sigma": self.params.sigma,
                "phi_mode": str(self.phi_mode)}


class VRObjective(_LabelObjective):
    name = "vr"

    def label(self, w, d):
        return np.asarray(vr_target(w), dtype=float)

    def predict_watch_time(self, score, d):
        return vr_inverse(score, d)


class PCRObjective(_LabelObjective):
    name = "pcr"

    def label(self, w, d):
        return pcr_label(w, d)

    def predict_watch_time(self, score, d):
        return pcr_inverse(score, d)


class WTGObjective(_LabelObjective):
    name = "wtg"

    def __init__(self, bin_width_s: float = 5.0):
        if not bin_width_s > 0:
            raise ValueError("bin_width_s must be positive")
        self.bin_width_s = bin_width_s
        self.stats: WTGStats | None = None

    def fit(self, w, d, **kw):
        self.stats = fit_wtg(w, d, self.bin_width_s)
        return self

    def label(self, w, d):
        return wtg_label(w, d, self.stats)

    def predict_watch_time(self, score, d):
        return wtg_inverse(score, d, self.stats)

    def config(self):
        cfg = {"variant": "wtg", "bin_width_s": self.bin_width_s}
        if self.stats is not None:
            cfg.update(bins=self.stats.bins.tolist(), mean=self.stats.mean.tolist(),
                       std=self.stats.std.tolist())
        return cfg


class D2QObjective(_LabelObjective):
    name = "d2q"

    def __init__(self, group_count: int = 60):
        if group_count < 1:
            raise ValueError("group_count must be >= 1")
        self.group_count = group_count
        self.tables: D2QTables | None = None

    def fit(self, w, d, **kw):
        self.tables = fit_d2q(w, d, self.group_count)
        return self

    def label(self, w, d):
        return np.atleast_1d(d2q_label(w, d, self.tables))

    def predict_watch_time(self, score, d):
        return np.atleast_1d(d2q_inverse(score, d, self.tables))

    def config(self):
        cfg = {"variant": "d2q", "group_count": self.group_count}
        if self.tables is not None:
            cfg.update(edges=self.tables.edges.tolist(),
                       tables=[t.tolist() for t in self.tables.tables])
        return cfg


class OracleObjective(_LabelObjective):
    """Regresses the binary interest label directly; a ranking upper bound.

    It has no watch-time inverse, so predictions are NaN.
    """

    name = "oracle"

    def __init__(self, w_q: float | None = None, q: float = 0.7):
        self.q = q
        self.w_q = w_q

    def fit(self, w, d, **kw):
        from .metrics import fit_interest_threshold
        self.w_q = fit_interest_threshold(w, self.q).w_q
        return self

    def label(self, w, d):
        if self.w_q is None:
            raise NotFittedError("interest threshold is not fitted")
        from .metrics import interest_labels
        return interest_labels(w, d, self.w_q).astype(float)

    def predict_watch_time(self, score, d):
        return np.full(np.shape(score), np.nan)

    def config(self):
        return {"variant": "oracle", "q": self.q, "w_q": self.w_q}


def make_objective(method: str, cost: T.CostParams | None = None, phi_mode="exact",
                   bin_width_s: float = 5.0, group_count: int = 60, q: float = 0.7) -> Objective:
    method = method.lower()
    if method == "cwm":
        return CWMObjective(cost or T.CostParams(), PhiMode.parse(phi_mode))
    if method == "vr":
        return VRObjective()
    if method == "pcr":
        return PCRObjective()
    if method == "wtg":
        return WTGObjective(bin_width_s)
    if method == "d2q":
        return D2QObjective(group_count)
    if method == "oracle":
        return OracleObjective(q=q)
    raise ValueError(f"unknown method {method!r}")


def objective_from_config(cfg: dict) -> Objective:
    """Rebuild a fitted objective from :meth:`Objective.config` output."""
    v = cfg["variant"]
    if v == "cwm":
        return CWMObjective(T.CostParams(cfg["cost_c"], cfg["sigma"]), PhiMode.parse(cfg["phi_mode"]))
    if v == "vr":
        return VRObjective()
    if v == "pcr":
        return PCRObjective()
    if v == "wtg":
        obj = WTGObjective(cfg["bin_width_s"])
        if "bins" in cfg:
            obj.stats = WTGStats(cfg["bin_width_s"], np.array(cfg["bins"], dtype=float),
                                 np.array(cfg["mean"], dtype=float), np.array(cfg["std"], dtype=float))
        return obj
    if v == "d2q":
        obj = D2QObjective(cfg["group_count"])
        if "tables" in cfg:
            obj.tables = D2QTables(np.array(cfg["edges"], dtype=float),
                                   tuple(np.array(t, dtype=float) for t in cfg["tables"]))
        return obj
    if v == "oracle":
        return OracleObjective(cfg.get("w_q"), cfg.get("q", 0.7))
    raise ValueError(f"unknown objective variant {v!r}")
