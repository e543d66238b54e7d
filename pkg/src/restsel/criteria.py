"""Information criteria, PRESS and K-fold cross-validation for restricted fits.

Every score is written in its general-restriction form, in terms of the
sample size ``n``, the number of coefficients ``p`` and the number of
restrictions ``m``; the variable-selection forms follow from ``k = p - m``.
Penalty factors are evaluated as a single integer ratio so that both forms
round identically.

Infeasible denominators give a ``+inf`` score, which keeps the model out of
any argmin. A residual sum of squares below ``RSS_FLOOR`` makes the
log-likelihood criteria ``-inf`` and sets ``saturated``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, DesignFactor, RestrictedLS, RestrictionSet, transformed_basis_fit
from .errors import (
    DomainError,
    FoldDegeneracyError,
    LeverageSingularityError,
    SingularDesignError,
    SingularSystemError,
    UndefinedVarianceError,
)

__all__ = [
    "CRITERIA",
    "RSS_FLOOR",
    "LEVERAGE_FLOOR",
    "ModelDims",
    "CriterionValue",
    "resolve_criterion",
    "aicc",
    "raicc",
    "cp",
    "fpe",
    "rcp",
    "sp",
    "bic",
    "gcv",
    "press",
    "kfold_cv",
    "kfold_assignment",
    "expected_optimism",
    "lemma_expectations",
    "OPTIMISM_KINDS",
    "LEMMA_KINDS",
]

CRITERIA = ("AICc", "RAICc", "Cp", "FPE", "RCp", "Sp", "BIC", "GCV", "LOOCV", "TenFoldCV")

_ALIASES = {c.lower(): c for c in CRITERIA}
_ALIASES.update({"tenfold": "TenFoldCV", "10fcv": "TenFoldCV", "kfold": "TenFoldCV", "press": "LOOCV"})

RSS_FLOOR = 1e-300
LEVERAGE_FLOOR = 1e-10

OPTIMISM_KINDS = ("F_KL", "F_SE", "R_KL", "R_SE")
LEMMA_KINDS = ("inv_sigma_F", "quad_F", "trace_R", "quad_R")


def resolve_criterion(name: str) -> str:
    """Map a case-insensitive name or alias onto its entry in :data:`CRITERIA`."""
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(
            f"unknown criterion '{name}'; valid names: {', '.join(c.lower() for c in CRITERIA)}, tenfold"
        ) from None


@dataclass(frozen=True)
class ModelDims:
    n: int
    p: int
    m: int

    def __post_init__(self):
        for f in ("n", "p", "m"):
            v = getattr(self, f)
            if int(v) != v:
                raise DomainError(f"{f} must be an integer, got {v!r}")
            object.__setattr__(self, f, int(v))
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if not 0 <= self.m <= self.p:
            raise DomainError(f"need 0 <= m <= p, got m={self.m}, p={self.p}")

    @property
    def k(self) -> int:
        return self.p - self.m

    @classmethod
    def from_k(cls, n: int, p: int, k: int) -> "ModelDims":
        return cls(n, p, p - k)


@dataclass(frozen=True)
class CriterionValue:
    name: str
    value: float
    dims: ModelDims
    guarded: bool = False
    saturated: bool = False

    @property
    def is_sentinel(self) -> bool:
        return math.isinf(self.value)

    def __float__(self) -> float:
        return self.value


def _guard(name: str, dims: ModelDims) -> CriterionValue:
    return CriterionValue(name, math.inf, dims, guarded=True)


def _check_rss(rss: float) -> float:
    rss = float(rss)
    if not rss >= 0.0:
        raise ValueError(f"rss must be nonnegative, got {rss}")
    return rss


def _loglik_term(name: str, rss: float, dims: ModelDims) -> CriterionValue | float:
    if rss < RSS_FLOOR:
        return CriterionValue(name, -math.inf, dims, saturated=True)
    return dims.n * math.log(rss / dims.n)


def aicc(rss: float, dims: ModelDims) -> CriterionValue:
    """``n log(RSS/n) + n (n + p - m) / (n - p + m - 2)``."""
    rss = _check_rss(rss)
    n, k = dims.n, dims.k
    if n - k - 2 <= 0:
        return _guard("AICc", dims)
    fit = _loglik_term("AICc", rss, dims)
    if isinstance(fit, CriterionValue):
        return fit
    return CriterionValue("AICc", fit + n * (n + k) / (n - k - 2), dims)


def raicc(rss: float, dims: ModelDims) -> CriterionValue:
    """``n log(RSS/n) + n^2 (n - 1) / ((n - p + m - 2)(n - p + m - 1))``.

    Equivalently AICc plus ``n k (k + 1) / ((n - k - 1)(n - k - 2))`` with
    ``k = p - m``.
    """
    rss = _check_rss(rss)
    n, k = dims.n, dims.k
    if n - k - 2 <= 0:
        return _guard("RAICc", dims)
    fit = _loglik_term("RAICc", rss, dims)
    if isinstance(fit, CriterionValue):
        return fit
    return CriterionValue("RAICc", fit + n * n * (n - 1) / ((n - k - 2) * (n - k - 1)), dims)


def _sigma0_from_full(rss_full: float, dims: ModelDims) -> float:
    if dims.n <= dims.p:
        raise UndefinedVarianceError(f"RSS(p)/(n-p) needs n > p, got n={dims.n}, p={dims.p}")
    rss_full = _check_rss(rss_full)
    return rss_full / (dims.n - dims.p)


def cp(rss: float, rss_full: float, dims: ModelDims) -> CriterionValue:
    """Mallows-type ``RSS + RSS(p)/(n-p) * 2(p - m)``."""
    rss = max(_check_rss(rss), RSS_FLOOR)
    s2 = _sigma0_from_full(rss_full, dims)
    return CriterionValue("Cp", rss + s2 * (2 * dims.k), dims)


def fpe(rss: float, dims: ModelDims) -> CriterionValue:
    """``RSS (n + p - m) / (n - p + m)``."""
    rss = max(_check_rss(rss), RSS_FLOOR)
    n, k = dims.n, dims.k
    if n - k <= 0:
        return _guard("FPE", dims)
    return CriterionValue("FPE", rss * ((n + k) / (n - k)), dims)


def rcp(rss: float, rss_full: float, dims: ModelDims) -> CriterionValue:
    """Random-design analogue of Cp:
    ``RSS + RSS(p)/(n-p) * (p - m)(2 + (p - m + 1)/(n - p + m - 1))``.
    """
    rss = max(_check_rss(rss), RSS_FLOOR)
    s2 = _sigma0_from_full(rss_full, dims)
    n, k = dims.n, dims.k
    if n - k - 1 <= 0:
        return _guard("RCp", dims)
    return CriterionValue("RCp", rss + s2 * (k * (2 + (k + 1) / (n - k - 1))), dims)


def sp(rss: float, dims: ModelDims) -> CriterionValue:
    """``RSS n (n - 1) / ((n - p + m)(n - p + m - 1))``."""
    rss = max(_check_rss(rss), RSS_FLOOR)
    n, k = dims.n, dims.k
    if n - k - 1 <= 0:
        return _guard("Sp", dims)
    return CriterionValue("Sp", rss * (n * (n - 1) / ((n - k) * (n - k - 1))), dims)


def bic(rss: float, dims: ModelDims) -> CriterionValue:
    """``n log(RSS/n) + log(n) (p - m)``; no parameter is counted for the variance."""
    rss = _check_rss(rss)
    fit = _loglik_term("BIC", rss, dims)
    if isinstance(fit, CriterionValue):
        return fit
    return CriterionValue("BIC", fit + math.log(dims.n) * dims.k, dims)


def gcv(rss: float, dims: ModelDims) -> CriterionValue:
    """``RSS n^2 / (n - p + m)^2``."""
    rss = max(_check_rss(rss), RSS_FLOOR)
    n, k = dims.n, dims.k
    if n - k <= 0:
        return _guard("GCV", dims)
    return CriterionValue("GCV", rss * (n * n / ((n - k) * (n - k))), dims)


def _press_from_solver(solver: RestrictedLS, y: np.ndarray) -> float:
    fit = solver.fit(y)
    diag = solver.hat_diagnostics()
    denom = 1.0 - diag.h_diag + diag.hq_diag
    bad = np.flatnonzero(denom < LEVERAGE_FLOOR)
    if bad.size:
        raise LeverageSingularityError(
            f"1 - H_ii + HQ_ii = {denom[bad[0]]:.3g} below {LEVERAGE_FLOOR} at observation {bad[0]}"
        )
    e = (y - solver.factor.X @ fit.beta_hat) / denom
    return float(e @ e)


def press(data: Dataset, rest: RestrictionSet, *, solver: RestrictedLS | None = None) -> CriterionValue:
    """Closed-form leave-one-out sum of squared prediction errors.

    ``sum_i ((y_i - x_i' beta_hat) / (1 - H_ii + HQ_ii))^2``.
    """
    if solver is None:
        solver = RestrictedLS(data.X, rest)
    value = _press_from_solver(solver, data.y)
    return CriterionValue("LOOCV", value, ModelDims(data.n, data.p, rest.m))


def kfold_assignment(n: int, folds: int, seed=None) -> list[np.ndarray]:
    """Seeded shuffle of ``0..n-1`` cut into ``folds`` parts whose sizes differ by at most one."""
    if not 2 <= folds <= n:
        raise DomainError(f"folds must lie in [2, n={n}], got {folds}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


class KFoldPlan:
    """Fold split plus cached training-design factorizations for one dataset.

    Shared by all candidates of a family so each training design is
    factorized once.
    """

    def __init__(self, data: Dataset, folds: int = 10, seed=None):
        self.data = data
        self.folds = folds
        self.test_sets = kfold_assignment(data.n, folds, seed)
        self._factors: dict[int, DesignFactor | None] = {}

    def training_rows(self, j: int) -> np.ndarray:
        mask = np.ones(self.data.n, dtype=bool)
        mask[self.test_sets[j]] = False
        return np.flatnonzero(mask)

    def factor(self, j: int) -> DesignFactor | None:
        if j not in self._factors:
            try:
                self._factors[j] = DesignFactor(self.data.X[self.training_rows(j)])
            except SingularDesignError:
                self._factors[j] = None
        return self._factors[j]

    def fold_beta(self, j: int, rest: RestrictionSet) -> np.ndarray:
        train = self.training_rows(j)
        factor = self.factor(j)
        try:
            if factor is not None:
                return RestrictedLS(factor, rest).coef(self.data.y[train])
            # training design lacks full column rank; the restricted problem may still be identified
            return transformed_basis_fit(self.data.subset(train), rest).beta_hat
        except (SingularDesignError, SingularSystemError) as exc:
            raise FoldDegeneracyError(j, str(exc)) from exc

    def score(self, rest: RestrictionSet) -> float:
        X, y = self.data.X, self.data.y
        total = 0.0
        for j, test in enumerate(self.test_sets):
            beta = self.fold_beta(j, rest)
            e = y[test] - X[test] @ beta
            total += float(e @ e)
        return total / self.data.n


def kfold_cv(
    data: Dataset,
    rest: RestrictionSet,
    folds: int = 10,
    seed=None,
    *,
    plan: KFoldPlan | None = None,
) -> CriterionValue:
    """Mean squared held-out prediction error over ``folds`` random folds.

    The value is averaged over all ``n`` observations, so ``folds = n`` gives
    ``PRESS / n``. Raises :class:`FoldDegeneracyError` naming the first fold
    whose training split cannot be fitted under ``rest``.
    """
    if plan is None:
        plan = KFoldPlan(data, folds, seed)
    return CriterionValue("TenFoldCV", plan.score(rest), ModelDims(data.n, data.p, rest.m))


def _need_positive(kind: str, **denoms: int) -> None:
    for label, d in denoms.items():
        if d <= 0:
            raise DomainError(f"{kind}: denominator {label} = {d} is not positive")


def expected_optimism(kind: str, dims: ModelDims, sigma0_sq: float = 1.0) -> float:
    """Closed-form expected optimism (test minus training error) of the restricted MLE.

    ``F_KL`` and ``F_SE`` are the fixed-design KL and squared-error versions;
    ``R_KL`` and ``R_SE`` the random-design ones. All assume the true
    coefficients satisfy the restrictions.
    """
    n, p, k = dims.n, dims.p, dims.k
    if kind == "F_KL":
        _need_positive(kind, **{"n-p+m-2": n - k - 2})
        return n * (n + k) / (n - k - 2) - n
    if kind == "F_SE":
        return 2.0 * sigma0_sq * k
    if kind == "R_KL":
        _need_positive(kind, **{"n-p+m-2": n - k - 2, "n-p-1": n - p - 1})
        return n * n * (n - 1) / ((n - k - 2) * (n - k - 1)) + n * n * p / (n - p - 1) - n * (p + 1)
    if kind == "R_SE":
        _need_positive(kind, **{"n-p+m-1": n - k - 1})
        return sigma0_sq * k * (2 + (k + 1) / (n - k - 1))
    raise ValueError(f"unknown optimism kind '{kind}'; expected one of {OPTIMISM_KINDS}")


def lemma_expectations(kind: str, dims: ModelDims, sigma0_sq: float = 1.0) -> float:
    """Expectations of the pieces that make up the optimism.

    * ``inv_sigma_F``: ``n sigma0^2 E[1/sigma_hat^2] = n^2 / (n - p + m - 2)``
    * ``quad_F``: ``E[(b - b0)' X'X (b - b0)] = sigma0^2 (p - m)``
    * ``trace_R``: ``E[tr(Sigma_hat^{-1} Sigma0)] = n p / (n - p - 1)``
    * ``quad_R``: ``E[(b - b0)' Sigma0 (b - b0)] = sigma0^2 (p - m) / (n - p + m - 1)``
    """
    n, p, k = dims.n, dims.p, dims.k
    if kind == "inv_sigma_F":
        _need_positive(kind, **{"n-p+m-2": n - k - 2})
        return n * n / (n - k - 2)
    if kind == "quad_F":
        return sigma0_sq * k
    if kind == "trace_R":
        _need_positive(kind, **{"n-p-1": n - p - 1})
        return n * p / (n - p - 1)
    if kind == "quad_R":
        _need_positive(kind, **{"n-p+m-1": n - k - 1})
        return sigma0_sq * k / (n - k - 1)
    raise ValueError(f"unknown lemma kind '{kind}'; expected one of {LEMMA_KINDS}")
