"""Cost-based transforms between interest and counterfactual watch time.

Interest ``r`` lives in (0, 1); counterfactual watch time (CWT) in seconds.
With per-second watch cost ``c`` the pair of maps is::

    cwt = 1 / (-c * log(r)) - 1
    r   = exp(-1 / (c * (cwt + 1)))

``probit_label`` pushes the interest through the standard-normal quantile so
that watch times can be regressed in Gaussian space.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

logger = logging.getLogger(__name__)

__all__ = [
    "CostParams",
    "PROBIT_CLAMP",
    "cwt_from_interest",
    "interest_from_cwt",
    "log_interest_from_cwt",
    "probit_label",
    "probit_label_derivative",
    "normal_cdf",
    "normal_pdf",
    "normal_logcdf",
    "normal_quantile",
    "normal_quantile_from_log",
    "predict_watch_time",
    "saturation_count",
]

PROBIT_CLAMP = 38.0
_LOG_2PI = math.log(2.0 * math.pi)
# log Phi(-38); below this the quantile is clamped.
_LOG_CDF_FLOOR = float(special.log_ndtr(-PROBIT_CLAMP))

_saturations = 0


def saturation_count() -> int:
    """Number of probit values clamped to +/-38 since import."""
    return _saturations


def _note_saturation(n: int) -> None:
    global _saturations
    if n:
        _saturations += n
        logger.warning("probit label saturated for %d value(s); clamped to +/-%g", n, PROBIT_CLAMP)


@dataclass(frozen=True)
class CostParams:
    """Watch cost ``cost_c`` (utility per second) and probit-space std ``sigma``."""

    cost_c: float = 1.0 / 40.0
    sigma: float = 2.0

    def __post_init__(self):
        if not (self.cost_c > 0 and math.isfinite(self.cost_c)):
            raise ValueError(f"cost_c must be positive, got {self.cost_c}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def _check_cost(c) -> None:
    if not np.all(np.asarray(c) > 0):
        raise ValueError("cost c must be positive")


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


# --------------------------------------------------------------------------
# standard normal kernels

def normal_cdf(x):
    """Standard normal CDF, computed from the complementary error function."""
    return _out(special.ndtr(np.asarray(x, dtype=float)))


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return _out(np.exp(-0.5 * x * x - 0.5 * _LOG_2PI))


def normal_logcdf(x):
    """``log Phi(x)``, accurate deep into the lower tail."""
    return _out(special.log_ndtr(np.asarray(x, dtype=float)))


def normal_quantile(p):
    """Inverse of :func:`normal_cdf` on the open interval (0, 1).

    A rational approximation gives the starting point; one Newton step on the
    CDF polishes it.
    """
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise ValueError("normal_quantile requires 0 < p < 1")
    x = special.ndtri(p)
    # Newton on Phi(x) - p, in whichever tail keeps the residual representable.
    upper = x > 0
    resid = np.where(upper, special.ndtr(-x) - (1.0 - p), special.ndtr(x) - p)
    resid = np.where(upper, -resid, resid)
    dens = np.exp(-0.5 * x * x - 0.5 * _LOG_2PI)
    step = np.where(dens > 0, resid / np.where(dens > 0, dens, 1.0), 0.0)
    return _out(x - step)


def normal_quantile_from_log(log_p):
    """Quantile of ``exp(log_p)`` for ``log_p <= 0``, safe when ``exp`` underflows.

    Values whose quantile lies beyond -38 are clamped there and counted as
    saturations.
    """
    log_p = np.asarray(log_p, dtype=float)
    if np.any(log_p >= 0) or np.any(np.isnan(log_p)):
        raise ValueError("log_p must be strictly negative")
    out = np.empty_like(log_p)
    easy = log_p > -700.0
    if np.any(easy):
        out[easy] = normal_quantile(np.exp(log_p[easy]))
    hard = ~easy
    if np.any(hard):
        lp = log_p[hard]
        sat = lp <= _LOG_CDF_FLOOR
        # asymptotic start: log Phi(x) ~ -x^2/2 - log(-x) - log(sqrt(2 pi))
        x = -np.sqrt(-2.0 * lp)
        for _ in range(50):
            f = special.log_ndtr(x) - lp
            # d/dx log Phi(x) = phi(x)/Phi(x), the inverse Mills ratio
            mills = np.exp(-0.5 * x * x - 0.5 * _LOG_2PI - special.log_ndtr(x))
            dx = f / mills
            x = x - dx
            if np.all(np.abs(dx) <= 1e-15 * np.abs(x)):
                break
        x = np.where(sat, -PROBIT_CLAMP, np.maximum(x, -PROBIT_CLAMP))
        _note_saturation(int(np.count_nonzero(sat)))
        out[hard] = x
    return _out(out)


# --------------------------------------------------------------------------
# cost-based transforms

def cwt_from_interest(r, c):
    """Counterfactual watch time implied by interest ``r`` at cost ``c``.

    Raises ``ValueError`` outside 0 < r < 1 and ``OverflowError`` when ``r`` is
    so close to 1 that ``log r`` vanishes.
    """
    _check_cost(c)
    r = np.asarray(r, dtype=float)
    if np.any(~((r > 0) & (r < 1))):
        raise ValueError("interest must lie in the open interval (0, 1)")
    with np.errstate(divide="ignore", over="ignore"):
        out = 1.0 / (c * -np.log(r)) - 1.0
    if not np.all(np.isfinite(out)):
        raise OverflowError("interest too close to 1: c * log(r) underflows")
    return _out(out)


def log_interest_from_cwt(w, c):
    """``log r`` for watch time ``w``; exact even where ``r`` underflows."""
    _check_cost(c)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise ValueError("watch time must be non-negative")
    return _out(-1.0 / (c * (w + 1.0)))


def interest_from_cwt(w, c):
    """Interest ``exp(-1 / (c (w + 1)))`` for non-negative watch time ``w``."""
    return _out(np.exp(log_interest_from_cwt(w, c)))


def probit_label(w, c):
    """Gaussian-space label: standard-normal quantile of ``interest_from_cwt``."""
    return normal_quantile_from_log(log_interest_from_cwt(w, c))


def probit_label_derivative(w, c):
    """d probit_label / dw, via the chain rule through r and the quantile."""
    w = np.asarray(w, dtype=float)
    log_r = np.asarray(log_interest_from_cwt(w, c))
    z = np.asarray(probit_label(w, c))
    # dr/dw = r / (c (w+1)^2); dz/dr = 1 / phi(z)
    log_num = log_r - np.log(c) - 2.0 * np.log1p(w)
    log_den = -0.5 * z * z - 0.5 * _LOG_2PI
    return _out(np.exp(log_num - log_den))


def predict_watch_time(score, c, d):
    """Watch time predicted from a probit-space score, clipped to ``[0, d]``.

    ``r_hat = Phi(score)``; the raw CWT ``1/(-c log r_hat) - 1`` is clipped.
    When ``r_hat`` rounds to 1 the prediction saturates at ``d``.
    """
    _check_cost(c)
    score = np.asarray(score, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("duration must be positive")
    # -log Phi(s) = -log_ndtr(s); exact for large positive s where Phi(s) == 1.
    neg_log = -special.log_ndtr(score)
    with np.errstate(divide="ignore", over="ignore"):
        raw = np.where(neg_log > 0, 1.0 / (c * neg_log) - 1.0, np.inf)
    return _out(np.clip(raw, 0.0, d))
