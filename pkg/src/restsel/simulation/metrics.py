"""Prediction-error and Kullback-Leibler metrics of a fitted model against the truth.

The KL values are twice the divergence of the fitted Gaussian model from the
true one, integrated over a new response (fixed design) or a new design and
response (random design).
"""

from __future__ import annotations

import math

import numpy as np

from ..core import RestrictedFit
from ..errors import CovarianceSingularityError, DomainError
from .design import TrueModel

__all__ = [
    "rmsef",
    "rmser",
    "klf",
    "klr",
    "klr_conditional",
    "covariance_kl_term",
    "log_kl",
]


def rmsef(beta_hat, beta0, X) -> float:
    """``sqrt(||X beta_hat - X beta0||^2 / n)``."""
    d = np.asarray(X) @ (np.asarray(beta_hat) - np.asarray(beta0))
    return math.sqrt(float(d @ d) / d.shape[0])


def rmser(beta_hat, beta0, Sigma0) -> float:
    """``sqrt((beta_hat - beta0)' Sigma0 (beta_hat - beta0))``."""
    d = np.asarray(beta_hat) - np.asarray(beta0)
    return math.sqrt(max(float(d @ np.asarray(Sigma0) @ d), 0.0))


def _check_sigma(fit: RestrictedFit) -> float:
    if not fit.sigma_hat_sq > 0:
        raise DomainError("KL discrepancy needs sigma_hat^2 > 0")
    return fit.sigma_hat_sq


def klf(fit: RestrictedFit, truth: TrueModel, X) -> float:
    """Fixed-design KL: ``n log(s2/s0) + ||X(b - b0)||^2 / s2 + n s0 / s2 - n``."""
    s2 = _check_sigma(fit)
    n = fit.n
    d = np.asarray(X) @ (fit.beta_hat - truth.beta0)
    s0 = truth.sigma0_sq
    return n * math.log(s2 / s0) + float(d @ d) / s2 + n * s0 / s2 - n


def klr_conditional(fit: RestrictedFit, truth: TrueModel) -> float:
    """Random-design KL of the response part only (depends on the candidate)."""
    s2 = _check_sigma(fit)
    n = fit.n
    d = fit.beta_hat - truth.beta0
    s0 = truth.sigma0_sq
    return n * math.log(s2 / s0) + n * float(d @ truth.Sigma0 @ d) / s2 + n * s0 / s2 - n


def covariance_kl_term(Sigma_hat, truth: TrueModel, n: int) -> float:
    """Design part ``n log(|S_hat|/|S0|) + n tr(S_hat^-1 S0) - n p``; the same for every candidate."""
    Sigma_hat = np.asarray(Sigma_hat, dtype=np.float64)
    p = truth.p
    sign, logdet_hat = np.linalg.slogdet(Sigma_hat)
    if sign <= 0:
        raise CovarianceSingularityError("sample covariance is singular")
    try:
        tr = float(np.trace(np.linalg.solve(Sigma_hat, truth.Sigma0)))
    except np.linalg.LinAlgError as exc:
        raise CovarianceSingularityError("sample covariance is singular") from exc
    _, logdet0 = np.linalg.slogdet(truth.Sigma0)
    return n * (logdet_hat - logdet0) + n * tr - n * p


def klr(fit: RestrictedFit, Sigma_hat, truth: TrueModel) -> float:
    """Full random-design KL including the predictor-covariance part."""
    return klr_conditional(fit, truth) + covariance_kl_term(Sigma_hat, truth, fit.n)


def log_kl(value: float) -> float:
    """Natural log, with an exactly-zero (or round-off negative) divergence mapped to ``-inf``."""
    return math.log(value) if value > 0 else -math.inf
