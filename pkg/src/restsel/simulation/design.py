"""True models and random draws of designs and responses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateSignalError, DimensionError, DomainError, FactorizationError

__all__ = [
    "TrueModel",
    "ar1_covariance",
    "make_beta0",
    "calibrate_sigma0",
    "sample_design",
    "sample_response",
    "TARGET_R2",
]

TARGET_R2 = {"low": 0.2, "high": 0.9}


def _cholesky(S: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("covariance matrix is not positive definite") from exc


@dataclass(frozen=True)
class TrueModel:
    """Data-generating parameters: coefficients, noise variance, predictor covariance."""

    beta0: np.ndarray
    sigma0_sq: float
    Sigma0: np.ndarray

    def __post_init__(self):
        beta0 = np.asarray(self.beta0, dtype=np.float64).reshape(-1)
        Sigma0 = np.asarray(self.Sigma0, dtype=np.float64)
        p = beta0.shape[0]
        if Sigma0.shape != (p, p):
            raise DimensionError(f"Sigma0 has shape {Sigma0.shape}, expected ({p}, {p})")
        if not np.allclose(Sigma0, Sigma0.T):
            raise FactorizationError("Sigma0 is not symmetric")
        if not self.sigma0_sq > 0:
            raise DomainError(f"sigma0_sq must be positive, got {self.sigma0_sq}")
        chol = _cholesky(Sigma0)
        for name, a in (("beta0", beta0), ("Sigma0", Sigma0), ("chol", chol)):
            a = a.copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "sigma0_sq", float(self.sigma0_sq))

    @property
    def p(self) -> int:
        return self.beta0.shape[0]

    def signal_variance(self) -> float:
        return float(self.beta0 @ self.Sigma0 @ self.beta0)

    def permuted(self, perm) -> "TrueModel":
        perm = np.asarray(perm)
        return TrueModel(self.beta0[perm], self.sigma0_sq, self.Sigma0[np.ix_(perm, perm)])


def ar1_covariance(p: int, rho: float) -> np.ndarray:
    """Toeplitz covariance with entries ``rho ** |i - j|``."""
    if not -1 < rho < 1:
        raise DomainError(f"AR(1) parameter must lie in (-1, 1), got {rho}")
    if p < 1:
        raise DimensionError(f"p must be >= 1, got {p}")
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :]).astype(np.float64)


def make_beta0(spec, p: int) -> np.ndarray:
    """True coefficients.

    ``"sparse6"`` puts six unit slopes in the first six positions, ``"dense"``
    uses ``1 / j`` for ``j = 1..p``, and an explicit sequence of length ``p``
    is copied.
    """
    if isinstance(spec, str):
        if spec == "sparse6":
            if p < 6:
                raise DimensionError(f"sparse6 needs p >= 6, got {p}")
            beta = np.zeros(p)
            beta[:6] = 1.0
            return beta
        if spec == "dense":
            return 1.0 / np.arange(1, p + 1)
        raise DomainError(f"unknown coefficient spec '{spec}'")
    beta = np.array(spec, dtype=np.float64).reshape(-1)
    if beta.shape[0] != p:
        raise DimensionError(f"explicit beta0 has length {beta.shape[0]}, expected {p}")
    return beta


def calibrate_sigma0(beta0, Sigma0, target_r2: float) -> float:
    """Noise variance giving population R^2 = ``target_r2``.

    ``sigma0^2 = b0' S0 b0 (1 - R^2) / R^2``.
    """
    if not 0 < target_r2 < 1:
        raise DomainError(f"target R^2 must lie in (0, 1), got {target_r2}")
    beta0 = np.asarray(beta0, dtype=np.float64)
    signal = float(beta0 @ np.asarray(Sigma0) @ beta0)
    if signal <= 0:
        raise DegenerateSignalError("beta0' Sigma0 beta0 is zero; R^2 cannot be calibrated")
    return signal * (1 - target_r2) / target_r2


def sample_design(n: int, Sigma0, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. rows from ``N(0, Sigma0)``: standard normals times the Cholesky factor."""
    L = _cholesky(np.asarray(Sigma0, dtype=np.float64))
    Z = rng.standard_normal((n, L.shape[0]))
    return Z @ L.T


def sample_response(X: np.ndarray, truth: TrueModel, rng: np.random.Generator) -> np.ndarray:
    """``y = X beta0 + eps`` with ``eps ~ N(0, sigma0^2 I)``."""
    eps = rng.standard_normal(X.shape[0]) * np.sqrt(truth.sigma0_sq)
    return X @ truth.beta0 + eps
