"""Restricted least squares for Gaussian linear models.

Fits ``y = X beta + u`` subject to ``R beta = r`` by maximum likelihood.
The primary solver works from a thin QR factorization of ``X`` and never forms
an explicit inverse; :func:`transformed_basis_fit` solves the same problem via
a reparametrization on the null space of ``R`` and serves as an independent
check.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np
from scipy import linalg as sla

from .errors import (
    DimensionError,
    RestrictionRankError,
    SingularDesignError,
    SingularSystemError,
)

__all__ = [
    "Dataset",
    "RestrictionSet",
    "RestrictedFit",
    "HatDiagnostics",
    "DesignFactor",
    "RestrictedLS",
    "numerical_rank",
    "variable_selection_restriction",
    "equality_restriction",
    "parse_restriction_expr",
    "fit_unrestricted",
    "fit_restricted",
    "transformed_basis_fit",
    "hat_diagnostics",
    "sigma_matrix_mle",
]

_EPS = np.finfo(np.float64).eps


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def _rank_tol(s: np.ndarray, shape: tuple[int, int]) -> float:
    if s.size == 0:
        return 0.0
    return max(shape) * _EPS * float(s[0])


def numerical_rank(A: np.ndarray) -> int:
    """Rank from singular values above ``max(shape) * eps * s_max``."""
    A = np.asarray(A, dtype=np.float64)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > _rank_tol(s, A.shape)))


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``X`` (n x p) and response ``y`` (n)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or y.ndim != 1:
            raise DimensionError("X must be 2-D and y 1-D")
        n, p = X.shape
        if n < 1 or p < 1:
            raise DimensionError(f"need n >= 1 and p >= 1, got X of shape {X.shape}")
        if y.shape[0] != n:
            raise DimensionError(f"X has {n} rows but y has length {y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DimensionError("X and y must be finite")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def scaled(self, c: float) -> "Dataset":
        return Dataset(self.X, c * self.y)

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows])


@dataclass(frozen=True)
class RestrictionSet:
    """Linear equality restrictions ``R beta = r`` with ``rank(R) = m``.

    ``m = 0`` (an empty ``R`` of shape ``(0, p)``) is the unrestricted model.
    """

    R: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        r = np.asarray(self.r, dtype=np.float64).reshape(-1)
        if R.ndim == 1:
            R = R[None, :]
        if R.ndim != 2:
            raise DimensionError("R must be 2-D")
        m, p = R.shape
        if p < 1:
            raise DimensionError("R must have at least one column")
        if r.shape[0] != m:
            raise DimensionError(f"R has {m} rows but r has length {r.shape[0]}")
        if m > p:
            raise RestrictionRankError(f"{m} restrictions on {p} coefficients")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(r))):
            raise DimensionError("R and r must be finite")
        if m and numerical_rank(R) < m:
            raise RestrictionRankError(f"R ({m} x {p}) is rank deficient")
        object.__setattr__(self, "R", _frozen(R))
        object.__setattr__(self, "r", _frozen(r))

    @classmethod
    def empty(cls, p: int) -> "RestrictionSet":
        return cls(np.zeros((0, p)), np.zeros(0))

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def p(self) -> int:
        return self.R.shape[1]

    def rows(self) -> list[tuple[np.ndarray, float]]:
        return [(self.R[i].copy(), float(self.r[i])) for i in range(self.m)]

    def residual(self, beta) -> float:
        """``||R beta - r||_inf`` (0 when unrestricted)."""
        if self.m == 0:
            return 0.0
        return float(np.max(np.abs(self.R @ np.asarray(beta) - self.r)))

    def permute_columns(self, perm) -> "RestrictionSet":
        return RestrictionSet(self.R[:, perm], self.r)


@dataclass(frozen=True)
class RestrictedFit:
    beta_hat: np.ndarray
    sigma_hat_sq: float
    rss: float
    n: int
    p: int
    m: int

    @property
    def k(self) -> int:
        """Effective number of free coefficients, ``p - m``."""
        return self.p - self.m


@dataclass(frozen=True)
class HatDiagnostics:
    h_diag: np.ndarray
    hq_diag: np.ndarray


def _make_fit(X: np.ndarray, y: np.ndarray, beta: np.ndarray, m: int) -> RestrictedFit:
    n, p = X.shape
    resid = y - X @ beta
    sigma_sq = float(resid @ resid) / n
    # rss is formed from sigma_sq so that rss == n * sigma_hat_sq holds exactly
    return RestrictedFit(_frozen(beta), sigma_sq, n * sigma_sq, n, p, m)


class DesignFactor:
    """Thin QR of a full-column-rank design, shared by many restriction sets."""

    def __init__(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionError("X must be 2-D")
        n, p = X.shape
        if n < p:
            raise SingularDesignError(f"n = {n} < p = {p}: no unique least squares solution")
        self.X = X
        self.Q, self.T = np.linalg.qr(X, mode="reduced")
        s = np.linalg.svd(self.T, compute_uv=False)
        if s[-1] <= _rank_tol(s, X.shape):
            raise SingularDesignError(
                f"design of shape {X.shape} is rank deficient (rank {int(np.sum(s > _rank_tol(s, X.shape)))})"
            )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def ols(self, Y: np.ndarray) -> np.ndarray:
        return sla.solve_triangular(self.T, self.Q.T @ Y, check_finite=False)

    def h_diag(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.Q, self.Q)


class RestrictedLS:
    """Restricted least squares solver for a fixed design and restriction set.

    With ``X = Q T`` and ``A = T^{-T} R'`` the restricted estimate is

        beta = beta_f + T^{-1} A (A'A)^{-1} (r - R beta_f),

    since ``(X'X)^{-1} R' = T^{-1} A`` and ``R (X'X)^{-1} R' = A'A``. A second
    QR, ``A = Q_a T_a``, turns the middle solve into two triangular solves.
    ``Y`` may hold several responses as columns.
    """

    def __init__(self, X_or_factor, rest: RestrictionSet):
        factor = X_or_factor if isinstance(X_or_factor, DesignFactor) else DesignFactor(X_or_factor)
        if rest.p != factor.p:
            raise DimensionError(f"restrictions have {rest.p} columns, design has {factor.p}")
        self.factor = factor
        self.rest = rest
        m = rest.m
        if m:
            A = sla.solve_triangular(factor.T, rest.R.T, trans="T", check_finite=False)
            self.Qa, self.Ta = np.linalg.qr(A, mode="reduced")
            s = np.linalg.svd(self.Ta, compute_uv=False)
            if s[-1] <= _rank_tol(s, A.shape):
                raise SingularSystemError("R (X'X)^-1 R' is singular")
            # rows of R with one nonzero entry pin that coefficient exactly
            nz = rest.R != 0
            single = np.flatnonzero(nz.sum(axis=1) == 1)
            cols = nz[single].argmax(axis=1)
            self._pin_idx = cols
            self._pin_val = rest.r[single] / rest.R[single, cols]
        else:
            self.Qa = self.Ta = None

    def coef(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=np.float64)
        beta = self.factor.ols(Y)
        if self.rest.m == 0:
            return beta
        R, r = self.rest.R, self.rest.r
        gap = (r[:, None] if beta.ndim == 2 else r) - R @ beta
        w = sla.solve_triangular(self.Ta, gap, trans="T", check_finite=False)
        beta = beta + sla.solve_triangular(self.factor.T, self.Qa @ w, check_finite=False)
        if self._pin_idx.size:
            if beta.ndim == 2:
                beta[self._pin_idx, :] = self._pin_val[:, None]
            else:
                beta[self._pin_idx] = self._pin_val
        return beta

    def fit(self, y) -> RestrictedFit:
        y = np.asarray(y, dtype=np.float64)
        return _make_fit(self.factor.X, y, self.coef(y), self.rest.m)

    def hat_diagnostics(self) -> HatDiagnostics:
        h = self.factor.h_diag()
        if self.rest.m == 0:
            hq = np.zeros_like(h)
        else:
            # H_Q = (Q Q_a)(Q Q_a)'
            QQa = self.factor.Q @ self.Qa
            hq = np.einsum("ij,ij->i", QQa, QQa)
        return HatDiagnostics(_frozen(h), _frozen(hq))


def variable_selection_restriction(k: int, p: int) -> RestrictionSet:
    """Restrictions keeping the first ``k`` coefficients free: ``R = [0 I_{p-k}]``, ``r = 0``."""
    if not (0 <= k <= p) or p < 1:
        raise DimensionError(f"need 0 <= k <= p with p >= 1, got k={k}, p={p}")
    R = np.zeros((p - k, p))
    R[:, k:] = np.eye(p - k)
    return RestrictionSet(R, np.zeros(p - k))


_TERM_RE = re.compile(
    r"^(?P<coef>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\*?(?:[bB](?P<idx>\d+))?$"
)


def _parse_side(side: str, p: int, expr: str) -> tuple[np.ndarray, float]:
    s = side.replace(" ", "")
    if not s:
        raise DimensionError(f"empty side in restriction '{expr}'")
    if s[0] not in "+-":
        s = "+" + s
    row = np.zeros(p)
    const = 0.0
    for term in re.split(r"(?<![eE])(?=[+-])", s):
        if not term:
            continue
        sign = -1.0 if term[0] == "-" else 1.0
        mt = _TERM_RE.match(term[1:])
        if mt is None or (mt.group("coef") is None and mt.group("idx") is None):
            raise DimensionError(f"cannot parse term '{term}' in restriction '{expr}'")
        c = float(mt.group("coef")) if mt.group("coef") is not None else 1.0
        if mt.group("idx") is None:
            const += sign * c
        else:
            j = int(mt.group("idx"))
            if not 1 <= j <= p:
                raise DimensionError(f"coefficient b{j} out of range 1..{p} in '{expr}'")
            row[j - 1] += sign * c
    return row, const


def parse_restriction_expr(expr: str, p: int) -> tuple[np.ndarray, float]:
    """Compile ``"b1=2*b2"`` style text into a ``(row, target)`` pair (indices 1-based)."""
    if expr.count("=") != 1:
        raise DimensionError(f"restriction '{expr}' must contain exactly one '='")
    lhs, rhs = expr.split("=")
    row_l, c_l = _parse_side(lhs, p, expr)
    row_r, c_r = _parse_side(rhs, p, expr)
    row = row_l - row_r
    if not np.any(row):
        raise DimensionError(f"restriction '{expr}' involves no coefficient")
    return row, c_r - c_l


RowSpec = Union[str, tuple]


def _compile_row(item: RowSpec, p: int) -> tuple[np.ndarray, float]:
    if isinstance(item, str):
        return parse_restriction_expr(item, p)
    if len(item) == 2 and all(isinstance(v, (int, np.integer)) for v in item):
        i, j = (int(v) for v in item)
        for v in (i, j):
            if not 1 <= v <= p:
                raise DimensionError(f"coefficient index {v} out of range 1..{p}")
        if i == j:
            raise DimensionError(f"trivial restriction b{i}=b{i}")
        row = np.zeros(p)
        row[i - 1] += 1.0
        row[j - 1] -= 1.0
        return row, 0.0
    weights, target = item
    row = np.zeros(p)
    if isinstance(weights, dict):
        for j, w in weights.items():
            if not 1 <= int(j) <= p:
                raise DimensionError(f"coefficient index {j} out of range 1..{p}")
            row[int(j) - 1] += float(w)
    else:
        row = np.asarray(weights, dtype=np.float64).reshape(-1)
        if row.shape[0] != p:
            raise DimensionError(f"restriction row has length {row.shape[0]}, expected {p}")
    return row, float(target)


def equality_restriction(spec: Iterable[RowSpec], p: int) -> RestrictionSet:
    """Build a :class:`RestrictionSet` from row descriptions.

    Each entry of ``spec`` is one of

    * a string such as ``"b1=b4"``, ``"b1=2*b2"`` or ``"b1+b2+b3=1"``;
    * a pair of 1-based indices ``(i, j)`` meaning ``beta_i = beta_j``;
    * ``(weights, target)`` where ``weights`` is ``{index: weight}`` or a
      length-``p`` row.

    Raises :class:`RestrictionRankError` when the stacked rows are dependent.
    """
    rows = [_compile_row(item, p) for item in spec]
    if not rows:
        return RestrictionSet.empty(p)
    R = np.vstack([row for row, _ in rows])
    r = np.array([t for _, t in rows])
    return RestrictionSet(R, r)


def fit_restricted(data: Dataset, rest: RestrictionSet) -> RestrictedFit:
    """Restricted maximum likelihood fit of ``data`` under ``rest``."""
    return RestrictedLS(data.X, rest).fit(data.y)


def fit_unrestricted(data: Dataset) -> RestrictedFit:
    """Ordinary least squares, reported as a fit with ``m = 0``."""
    return fit_restricted(data, RestrictionSet.empty(data.p))


def transformed_basis_fit(data: Dataset, rest: RestrictionSet) -> RestrictedFit:
    """Restricted fit through the partitioned reparametrization.

    Stacks ``R`` on top of ``R_c`` (an orthonormal basis of the null space of
    ``R``, from a complete QR of ``R'``), fixes the first ``m`` transformed
    coefficients at ``(R R')^{-1} r`` and regresses the offset response on the
    remaining ``p - m`` transformed columns with an SVD least-squares solve.
    The estimate maps back as ``beta = R' r_tilde + R_c' theta``.

    Only the reduced design ``X R_c'`` needs full column rank, so this also
    handles rank-deficient ``X`` when the restrictions identify ``beta``.
    """
    X, y = data.X, data.y
    n, p = X.shape
    if rest.p != p:
        raise DimensionError(f"restrictions have {rest.p} columns, design has {p}")
    m = rest.m
    if m == 0:
        Rc = np.eye(p)
        fixed = np.zeros(p)
    else:
        Qfull, _ = np.linalg.qr(rest.R.T, mode="complete")
        Rc = Qfull[:, m:].T
        r_tilde = np.linalg.solve(rest.R @ rest.R.T, rest.r)
        fixed = rest.R.T @ r_tilde
    if m == p:
        return _make_fit(X, y, fixed, m)
    Xt = X @ Rc.T
    if numerical_rank(Xt) < p - m:
        raise SingularDesignError("design restricted to the null space of R is rank deficient")
    theta, *_ = np.linalg.lstsq(Xt, y - X @ fixed, rcond=None)
    return _make_fit(X, y, fixed + Rc.T @ theta, m)


def hat_diagnostics(data: Dataset, rest: RestrictionSet) -> HatDiagnostics:
    """Diagonals of ``H = X (X'X)^-1 X'`` and of the restriction adjustment ``H_Q``."""
    return RestrictedLS(data.X, rest).hat_diagnostics()


def sigma_matrix_mle(X) -> np.ndarray:
    """Maximum likelihood covariance of zero-mean rows, ``X'X / n``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DimensionError("X must be 2-D with at least one row")
    return X.T @ X / X.shape[0]
