"""Monte Carlo estimates of expected optimism and of its components.

Each replication draws a response (and, for the random design, a new design)
from the true model, fits the restricted MLE and evaluates test error minus
training error. Test errors are the exact conditional expectations over a new
response or new design, so no test sample is drawn.

Random streams: ``SeedSequence(seed)`` spawns a design stream and a noise
stream; the noise stream spawns one child per block of ``BLOCK`` replications.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg as sla

from ..core import RestrictedLS, RestrictionSet
from ..criteria import LEMMA_KINDS, OPTIMISM_KINDS, ModelDims, expected_optimism, lemma_expectations
from ..errors import AssumptionViolationError, DimensionError, DomainError
from .design import TrueModel, ar1_covariance, sample_design

__all__ = [
    "BLOCK",
    "mc_components",
    "mc_optimism",
    "mc_lemma",
    "chain_restriction",
    "VerifyRow",
    "theorem_suite",
]

BLOCK = 1000

FIXED_KEYS = ("F_KL", "F_SE", "inv_sigma_F", "quad_F")
RANDOM_KEYS = ("R_KL", "R_SE", "trace_R", "quad_R")


def _check_assumption(truth: TrueModel, rest: RestrictionSet) -> None:
    if rest.p != truth.p:
        raise DimensionError(f"restrictions have {rest.p} columns, truth has {truth.p}")
    tol = 1e-8 * (1.0 + (float(np.max(np.abs(rest.r))) if rest.m else 0.0))
    if rest.residual(truth.beta0) > tol:
        raise AssumptionViolationError(
            f"true coefficients violate the restrictions: ||R b0 - r||_inf = {rest.residual(truth.beta0):.3g}"
        )


def _blocks(reps: int):
    start = 0
    while start < reps:
        yield start, min(BLOCK, reps - start)
        start += BLOCK


def _fixed_components(X, truth, rest, reps, noise_ss):
    n = X.shape[0]
    s0 = truth.sigma0_sq
    solver = RestrictedLS(X, rest)
    mean = X @ truth.beta0
    children = noise_ss.spawn(-(-reps // BLOCK))
    out = {key: np.empty(reps) for key in FIXED_KEYS}
    for (start, size), child in zip(_blocks(reps), children):
        rng = np.random.Generator(np.random.PCG64(child))
        Y = mean[:, None] + np.sqrt(s0) * rng.standard_normal((n, size))
        B = solver.coef(Y)
        resid = Y - X @ B
        rss = np.einsum("ij,ij->j", resid, resid)
        s2 = rss / n
        D = X @ (B - truth.beta0[:, None])
        quad = np.einsum("ij,ij->j", D, D)
        sl = slice(start, start + size)
        out["F_SE"][sl] = quad + n * s0 - rss
        out["F_KL"][sl] = quad / s2 + n * s0 / s2 - n
        out["inv_sigma_F"][sl] = n * s0 / s2
        out["quad_F"][sl] = quad
    return out


def _random_components(n, truth, rest, reps, noise_ss):
    p = truth.p
    s0 = truth.sigma0_sq
    L = truth.chol
    children = noise_ss.spawn(-(-reps // BLOCK))
    out = {key: np.empty(reps) for key in RANDOM_KEYS}
    for (start, size), child in zip(_blocks(reps), children):
        rng = np.random.Generator(np.random.PCG64(child))
        for i in range(start, start + size):
            X = rng.standard_normal((n, p)) @ L.T
            y = X @ truth.beta0 + np.sqrt(s0) * rng.standard_normal(n)
            solver = RestrictedLS(X, rest)
            fit = solver.fit(y)
            d = fit.beta_hat - truth.beta0
            quad = float(d @ truth.Sigma0 @ d)
            s2 = fit.sigma_hat_sq
            # tr(Sigma_hat^-1 Sigma0) = n ||T^-T L||_F^2 with X = QT, Sigma0 = LL'
            W = sla.solve_triangular(solver.factor.T, L, trans="T", check_finite=False)
            tr = n * float(np.sum(W * W))
            out["R_SE"][i] = n * quad + n * s0 - fit.rss
            out["R_KL"][i] = n * quad / s2 + n * s0 / s2 - n + n * tr - n * p
            out["trace_R"][i] = tr
            out["quad_R"][i] = quad
    return out


def mc_components(design: str, truth: TrueModel, rest: RestrictionSet, n: int, reps: int, seed, X=None):
    """Per-replication optimism and component values.

    ``design="fixed"`` draws one design (unless ``X`` is given) and returns
    arrays keyed ``F_KL, F_SE, inv_sigma_F, quad_F``; ``design="random"``
    redraws the design each replication and returns ``R_KL, R_SE, trace_R,
    quad_R``.
    """
    if reps < 2:
        raise DomainError("need at least two replications for a standard error")
    _check_assumption(truth, rest)
    design_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    if design == "fixed":
        if X is None:
            X = sample_design(n, truth.Sigma0, np.random.Generator(np.random.PCG64(design_ss)))
        X = np.asarray(X, dtype=np.float64)
        if X.shape != (n, truth.p):
            raise DimensionError(f"X has shape {X.shape}, expected ({n}, {truth.p})")
        return _fixed_components(X, truth, rest, reps, noise_ss)
    if design == "random":
        return _random_components(n, truth, rest, reps, noise_ss)
    raise DomainError(f"design must be 'fixed' or 'random', got '{design}'")


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    return float(np.mean(values)), float(np.std(values, ddof=1) / np.sqrt(values.shape[0]))


def mc_optimism(kind: str, truth: TrueModel, rest: RestrictionSet, n: int, reps: int, seed, X=None):
    """Mean optimism over ``reps`` replications and its standard error."""
    if kind not in OPTIMISM_KINDS:
        raise ValueError(f"unknown optimism kind '{kind}'")
    design = "fixed" if kind.startswith("F") else "random"
    return _mean_se(mc_components(design, truth, rest, n, reps, seed, X)[kind])


def mc_lemma(kind: str, truth: TrueModel, rest: RestrictionSet, n: int, reps: int, seed, X=None):
    """Mean of one optimism component over ``reps`` replications and its standard error."""
    if kind not in LEMMA_KINDS:
        raise ValueError(f"unknown component kind '{kind}'")
    design = "fixed" if kind.endswith("_F") else "random"
    return _mean_se(mc_components(design, truth, rest, n, reps, seed, X)[kind])


def chain_restriction(m: int, p: int, beta0) -> RestrictionSet:
    """``m`` restrictions ``b_j - b_{j+1} = r_j`` (the last row becomes ``b_p = r`` when ``m = p``),
    with targets chosen so that ``beta0`` satisfies them."""
    if not 0 <= m <= p:
        raise DimensionError(f"need 0 <= m <= p, got m={m}, p={p}")
    R = np.zeros((m, p))
    for j in range(m):
        R[j, j] = 1.0
        if j + 1 < p:
            R[j, j + 1] = -1.0
    return RestrictionSet(R, R @ np.asarray(beta0, dtype=np.float64))


@dataclass
class VerifyRow:
    name: str
    target: float | None
    estimate: float | None
    se: float | None
    z: float | None
    status: str
    reason: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def theorem_suite(n=20, p=5, m=2, sigma0_sq=1.0, reps=200_000, seed=0, rho=0.5, threshold=3.0):
    """Compare Monte Carlo estimates with every closed-form expectation.

    Returns one :class:`VerifyRow` per optimism kind and per component; a row
    passes when ``|estimate - target| <= threshold * SE``. Rows whose closed
    form is undefined for ``(n, p, m)`` are marked ``skipped``.
    """
    dims = ModelDims(n, p, m)
    beta0 = 1.0 / np.arange(1, p + 1)
    truth = TrueModel(beta0, sigma0_sq, ar1_covariance(p, rho))
    rest = chain_restriction(m, p, beta0)
    names = [("F_KL", "fixed"), ("F_SE", "fixed"), ("R_KL", "random"), ("R_SE", "random"),
             ("inv_sigma_F", "fixed"), ("quad_F", "fixed"), ("trace_R", "random"), ("quad_R", "random")]
    if n <= p:
        return [VerifyRow(k, None, None, None, None, "skipped", f"n={n} <= p={p}: no unique fit") for k, _ in names]
    draws = {}
    rows = []
    for name, design in names:
        closed = expected_optimism if name in OPTIMISM_KINDS else lemma_expectations
        try:
            target = closed(name, dims, sigma0_sq)
        except DomainError as exc:
            rows.append(VerifyRow(name, None, None, None, None, "skipped", str(exc)))
            continue
        if design not in draws:
            draws[design] = mc_components(design, truth, rest, n, reps, seed)
        est, se = _mean_se(draws[design][name])
        z = (est - target) / se if se > 0 else (0.0 if est == target else float("inf"))
        rows.append(VerifyRow(name, target, est, se, z, "pass" if abs(z) <= threshold else "FAIL"))
    return rows
