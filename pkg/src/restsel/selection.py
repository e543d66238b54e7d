"""Candidate families and per-criterion argmin selection."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import criteria as C
from .core import (
    Dataset,
    DesignFactor,
    RestrictedLS,
    RestrictionSet,
    equality_restriction,
    numerical_rank,
    variable_selection_restriction,
)
from .errors import (
    DimensionError,
    FoldDegeneracyError,
    LeverageSingularityError,
    NoFeasibleModelError,
    RestrictionRankError,
)

__all__ = [
    "Candidate",
    "CandidateFamily",
    "SelectionResult",
    "GR_EX1_RESTRICTIONS",
    "gr_ex1_rows",
    "gr_ex4_rows",
    "nested_subsets",
    "restriction_powerset",
    "nested_restriction_exclusion",
    "select",
]

POWERSET_MAX_ROWS = 20

# b1=b4 and b1=2*b2 are false for beta0 = (2,2,2,1,1,1); the other four hold
GR_EX1_RESTRICTIONS = ("b1=b4", "b1=2*b2", "b1=b2", "b2=b3", "b4=b5", "b5=b6")


@dataclass(frozen=True)
class Candidate:
    label: str
    rest: RestrictionSet

    @property
    def m(self) -> int:
        return self.rest.m


@dataclass(frozen=True)
class CandidateFamily:
    candidates: tuple
    p: int
    dropped: tuple = ()

    def __post_init__(self):
        cands = tuple(self.candidates)
        if not cands:
            raise DimensionError("candidate family is empty")
        labels = [c.label for c in cands]
        if len(set(labels)) != len(labels):
            raise DimensionError("candidate labels must be unique")
        for c in cands:
            if c.rest.p != self.p:
                raise DimensionError(f"candidate '{c.label}' has p={c.rest.p}, family has p={self.p}")
        object.__setattr__(self, "candidates", cands)

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, i) -> Candidate:
        return self.candidates[i]

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.candidates]

    def reordered(self, order) -> "CandidateFamily":
        return CandidateFamily(tuple(self.candidates[i] for i in order), self.p, self.dropped)


def _as_rows_unchecked(base, p: int) -> list[tuple[np.ndarray, float]]:
    """Compile rows one at a time so a dependent base is still accepted."""
    if isinstance(base, RestrictionSet):
        return base.rows()
    return [equality_restriction([item], p).rows()[0] for item in base]


def _stack(rows: Sequence[tuple[np.ndarray, float]], p: int) -> RestrictionSet:
    if not rows:
        return RestrictionSet.empty(p)
    return RestrictionSet(np.vstack([r for r, _ in rows]), np.array([t for _, t in rows]))


def gr_ex1_rows(p: int = 6) -> list[tuple[np.ndarray, float]]:
    """The six general restrictions on the first six coefficients."""
    if p < 6:
        raise DimensionError(f"the six general restrictions need p >= 6, got {p}")
    return _as_rows_unchecked(GR_EX1_RESTRICTIONS, p)


def gr_ex4_rows(p: int) -> list[tuple[np.ndarray, float]]:
    """The six general restrictions followed by ``b_i = 0`` for ``i = 7..p``."""
    return gr_ex1_rows(p) + _as_rows_unchecked([f"b{i}=0" for i in range(7, p + 1)], p)


def nested_subsets(p: int) -> CandidateFamily:
    """Candidates ``k = 0..p`` keeping the first ``k`` predictors."""
    if p < 1:
        raise DimensionError(f"p must be >= 1, got {p}")
    return CandidateFamily(
        tuple(Candidate(f"k={k}", variable_selection_restriction(k, p)) for k in range(p + 1)), p
    )


def restriction_powerset(base, p: int) -> CandidateFamily:
    """Every subset of the ``base`` restriction rows, one candidate each.

    Subsets are enumerated in binary-counter order of their row mask; the
    label lists the 1-based rows imposed (``"none"`` for the unrestricted
    model). Rank-deficient subsets are dropped with a warning and recorded in
    ``family.dropped``.
    """
    rows = _as_rows_unchecked(base, p)
    if len(rows) > POWERSET_MAX_ROWS:
        raise DimensionError(f"powerset of {len(rows)} rows exceeds the limit of {POWERSET_MAX_ROWS}")
    cands, dropped = [], []
    for mask in range(2 ** len(rows)):
        idx = [i for i in range(len(rows)) if mask >> i & 1]
        label = "rows=" + ",".join(str(i + 1) for i in idx) if idx else "none"
        sub = [rows[i] for i in idx]
        if sub and numerical_rank(np.vstack([r for r, _ in sub])) < len(sub):
            dropped.append(label)
            continue
        cands.append(Candidate(label, _stack(sub, p)))
    if dropped:
        warnings.warn(f"dropped {len(dropped)} rank-deficient restriction subsets", stacklevel=2)
    return CandidateFamily(tuple(cands), p, tuple(dropped))


def nested_restriction_exclusion(base, p: int) -> CandidateFamily:
    """Candidate ``j`` imposes all ``base`` rows except the first ``j``; ``j = 0..len(base)``."""
    rows = _as_rows_unchecked(base, p)
    if rows and numerical_rank(np.vstack([r for r, _ in rows])) < len(rows):
        raise RestrictionRankError(f"the {len(rows)} base restrictions are linearly dependent")
    return CandidateFamily(
        tuple(Candidate(f"excl={j}", _stack(rows[j:], p)) for j in range(len(rows) + 1)), p
    )


@dataclass
class SelectionResult:
    """Scores of every candidate under every requested criterion.

    ``scores[name]`` is aligned with ``labels``; ``chosen[name]`` is the index
    of the selected candidate. ``betas`` and ``sigma_sq`` hold each
    candidate's fit so callers can evaluate the chosen model.
    """

    labels: list
    m: np.ndarray
    p: int
    scores: dict
    chosen: dict
    betas: np.ndarray
    sigma_sq: np.ndarray
    rss: np.ndarray
    flags: dict = field(default_factory=dict)

    @property
    def k(self) -> np.ndarray:
        return self.p - self.m

    def chosen_label(self, name: str) -> str:
        return self.labels[self.chosen[name]]

    def chosen_m(self, name: str) -> int:
        return int(self.m[self.chosen[name]])

    def chosen_k(self, name: str) -> int:
        return self.p - self.chosen_m(name)

    def to_dict(self) -> dict:
        return {
            "candidates": [
                {"label": lab, "m": int(mm), "k": int(self.p - mm), "rss": float(rr)}
                for lab, mm, rr in zip(self.labels, self.m, self.rss)
            ],
            "scores": {c: [float(v) for v in s] for c, s in self.scores.items()},
            "chosen": {
                c: {"index": int(i), "label": self.labels[i], "m": int(self.m[i]), "k": int(self.p - self.m[i])}
                for c, i in self.chosen.items()
            },
        }


def _argmin(values: np.ndarray, m: np.ndarray) -> int:
    """Smallest score; ties go to more restrictions, then to the earlier candidate."""
    best = None
    for i, v in enumerate(values):
        key = (v, -int(m[i]), i)
        if best is None or key < best[0]:
            best = (key, i)
    return best[1]


def select(
    data: Dataset,
    family: CandidateFamily,
    criteria: Sequence[str] = C.CRITERIA,
    seed=None,
    *,
    folds: int = 10,
) -> SelectionResult:
    """Score each candidate of ``family`` on ``data`` and pick the argmin per criterion.

    ``seed`` only drives the fold split of K-fold cross-validation; the same
    split is used for every candidate. A candidate whose cross-validation
    cannot be computed (degenerate fold, unit leverage) scores ``+inf``.
    """
    names = [C.resolve_criterion(c) for c in criteria]
    if data.p != family.p:
        raise DimensionError(f"family has p={family.p}, data has p={data.p}")
    factor = DesignFactor(data.X)
    n, p = data.n, data.p
    ncand = len(family)
    m_arr = np.array([c.m for c in family], dtype=int)
    betas = np.empty((ncand, p))
    sig = np.empty(ncand)
    rss = np.empty(ncand)
    scores = {c: np.empty(ncand) for c in names}
    flags: dict = {c: [""] * ncand for c in names}

    rss_full = None
    if "Cp" in names or "RCp" in names:
        rss_full = RestrictedLS(factor, RestrictionSet.empty(p)).fit(data.y).rss
    plan = C.KFoldPlan(data, folds, seed) if "TenFoldCV" in names else None

    for i, cand in enumerate(family):
        solver = RestrictedLS(factor, cand.rest)
        fit = solver.fit(data.y)
        betas[i], sig[i], rss[i] = fit.beta_hat, fit.sigma_hat_sq, fit.rss
        dims = C.ModelDims(n, p, cand.m)
        for name in names:
            if name == "LOOCV":
                try:
                    cv = C.press(data, cand.rest, solver=solver)
                except LeverageSingularityError:
                    cv = C.CriterionValue(name, math.inf, dims, guarded=True)
            elif name == "TenFoldCV":
                try:
                    cv = C.kfold_cv(data, cand.rest, plan=plan)
                except FoldDegeneracyError:
                    cv = C.CriterionValue(name, math.inf, dims, guarded=True)
            elif name in ("Cp", "RCp"):
                cv = (C.cp if name == "Cp" else C.rcp)(fit.rss, rss_full, dims)
            else:
                cv = _SIMPLE[name](fit.rss, dims)
            scores[name][i] = cv.value
            if cv.guarded:
                flags[name][i] = "inf"
            elif cv.saturated:
                flags[name][i] = "-inf"

    chosen = {}
    for name in names:
        s = scores[name]
        if np.all(s == math.inf):
            raise NoFeasibleModelError(name)
        chosen[name] = _argmin(s, m_arr)
    return SelectionResult(family.labels, m_arr, p, scores, chosen, betas, sig, rss, flags)


_SIMPLE = {
    "AICc": C.aicc,
    "RAICc": C.raicc,
    "FPE": C.fpe,
    "Sp": C.sp,
    "BIC": C.bic,
    "GCV": C.gcv,
}
