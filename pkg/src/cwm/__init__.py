"""Counterfactual watch-time modelling for duration-debiased video recommendation."""
from .transform import (
    CostParams,
    cwt_from_interest,
    interest_from_cwt,
    normal_cdf,
    normal_pdf,
    normal_quantile,
    predict_watch_time,
    probit_label,
)

__version__ = "0.1.0"

__all__ = [
    "CostParams",
    "cwt_from_interest",
    "interest_from_cwt",
    "normal_cdf",
    "normal_pdf",
    "normal_quantile",
    "predict_watch_time",
    "probit_label",
]
