"""Monte Carlo model-selection experiments.

A :class:`SimConfig` names a truth, a design type and a candidate family.
Every replication draws data, lets each criterion pick a candidate and
records how far the chosen fit is from the truth.

Random streams: ``SeedSequence(seed)`` spawns a design stream (used once for
a fixed design) and a replication root that spawns one child per
replication, so any subset of replications can be computed independently
and in any order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from ..core import Dataset, RestrictedFit, sigma_matrix_mle
from ..criteria import CRITERIA, resolve_criterion
from ..errors import ConfigError, RestselError, ReplicationError
from ..selection import (
    CandidateFamily,
    gr_ex1_rows,
    gr_ex4_rows,
    nested_restriction_exclusion,
    nested_subsets,
    restriction_powerset,
    select,
)
from .design import TARGET_R2, TrueModel, ar1_covariance, calibrate_sigma0, make_beta0, sample_design, sample_response
from .metrics import covariance_kl_term, klf, klr_conditional, log_kl, rmsef, rmser
from .wilcoxon import wilcoxon_signed_rank

__all__ = ["SimConfig", "Choice", "RepResult", "Summary", "build_truth", "build_family", "run_experiment"]

FAMILIES = ("nested_subsets", "gr_powerset", "gr_nested")


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    rho: float = 0.5
    design: str = "random"
    beta_spec: Any = "sparse6"
    signal: Any = "high"
    family: str = "nested_subsets"
    criteria: tuple = CRITERIA
    reps: int = 100
    seed: int = 0
    folds: int = 10
    wilcoxon_pairs: tuple = (("RAICc", "AICc"),)

    def __post_init__(self):
        def need_int(name, lo, hi=None):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(name, f"expected an integer, got {v!r}")
            if v < lo or (hi is not None and v > hi):
                raise ConfigError(name, f"{v} outside [{lo}, {hi if hi is not None else 'inf'}]")
            object.__setattr__(self, name, int(v))

        need_int("n", 2)
        need_int("p", 1)
        need_int("reps", 1)
        need_int("seed", 0, 2**64 - 1)
        need_int("folds", 2, self.n)
        if self.n <= self.p:
            raise ConfigError("n", f"n={self.n} must exceed p={self.p}")
        try:
            rho = float(self.rho)
        except (TypeError, ValueError):
            raise ConfigError("rho", f"expected a number, got {self.rho!r}") from None
        if not -1 < rho < 1:
            raise ConfigError("rho", f"{rho} outside (-1, 1)")
        object.__setattr__(self, "rho", rho)
        if self.design not in ("fixed", "random"):
            raise ConfigError("design", f"expected 'fixed' or 'random', got {self.design!r}")
        if self.family not in FAMILIES:
            raise ConfigError("family", f"expected one of {FAMILIES}, got {self.family!r}")
        if self.family != "nested_subsets" and self.p < 6:
            raise ConfigError("family", f"{self.family} needs p >= 6")
        if isinstance(self.beta_spec, str):
            if self.beta_spec not in ("sparse6", "dense"):
                raise ConfigError("beta_spec", f"expected 'sparse6', 'dense' or a list, got {self.beta_spec!r}")
            if self.beta_spec == "sparse6" and self.p < 6:
                raise ConfigError("beta_spec", "sparse6 needs p >= 6")
        else:
            try:
                beta = tuple(float(b) for b in self.beta_spec)
            except (TypeError, ValueError):
                raise ConfigError("beta_spec", "explicit coefficients must be numbers") from None
            if len(beta) != self.p or not all(math.isfinite(b) for b in beta):
                raise ConfigError("beta_spec", f"need {self.p} finite coefficients")
            object.__setattr__(self, "beta_spec", beta)
        if isinstance(self.signal, str):
            if self.signal not in TARGET_R2:
                raise ConfigError("signal", f"expected 'low', 'high' or a positive variance, got {self.signal!r}")
        else:
            try:
                s = float(self.signal)
            except (TypeError, ValueError):
                raise ConfigError("signal", f"expected a number, got {self.signal!r}") from None
            if not (s > 0 and math.isfinite(s)):
                raise ConfigError("signal", f"noise variance must be positive, got {s}")
            object.__setattr__(self, "signal", s)
        try:
            crit = tuple(resolve_criterion(c) for c in self.criteria)
        except (ValueError, AttributeError) as exc:
            raise ConfigError("criteria", str(exc)) from None
        if not crit or len(set(crit)) != len(crit):
            raise ConfigError("criteria", "need a nonempty list without duplicates")
        object.__setattr__(self, "criteria", crit)
        pairs = []
        for pair in self.wilcoxon_pairs:
            try:
                a, b = (resolve_criterion(c) for c in pair)
            except (ValueError, TypeError, AttributeError) as exc:
                raise ConfigError("wilcoxon_pairs", str(exc)) from None
            if a not in crit or b not in crit:
                raise ConfigError("wilcoxon_pairs", f"pair ({a}, {b}) uses a criterion not in 'criteria'")
            pairs.append((a, b))
        object.__setattr__(self, "wilcoxon_pairs", tuple(pairs))

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown field")
        for key in ("n", "p"):
            if key not in d:
                raise ConfigError(key, "required field missing")
        kw = dict(d)
        if "criteria" in kw:
            if isinstance(kw["criteria"], str):
                kw["criteria"] = tuple(c for c in kw["criteria"].split(",") if c)
            elif not isinstance(kw["criteria"], (list, tuple)):
                raise ConfigError("criteria", "expected a list of names")
            kw["criteria"] = tuple(kw["criteria"])
        if "wilcoxon_pairs" in kw:
            try:
                kw["wilcoxon_pairs"] = tuple(tuple(pair) for pair in kw["wilcoxon_pairs"])
            except TypeError:
                raise ConfigError("wilcoxon_pairs", "expected a list of [a, b] pairs") from None
            if any(len(pair) != 2 for pair in kw["wilcoxon_pairs"]):
                raise ConfigError("wilcoxon_pairs", "each pair needs exactly two names")
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["criteria"] = list(self.criteria)
        d["wilcoxon_pairs"] = [list(pair) for pair in self.wilcoxon_pairs]
        if not isinstance(self.beta_spec, str):
            d["beta_spec"] = list(self.beta_spec)
        return d


@dataclass(frozen=True)
class Choice:
    label: str
    m: int
    k: int
    rmse: float
    kl: float
    log_kl: float
    log_kl_model: float


@dataclass(frozen=True)
class RepResult:
    rep: int
    choices: dict

    def rows(self) -> list[dict]:
        return [
            {"rep": self.rep, "criterion": name, "chosen_label": c.label, "k": c.k, "m": c.m,
             "rmse": c.rmse, "log_kl": c.log_kl, "log_kl_model": c.log_kl_model}
            for name, c in self.choices.items()
        ]


def _five_number(values: np.ndarray):
    values = values[np.isfinite(values)]
    if values.size == 0:
        return None
    return [float(v) for v in np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])]


def _finite_mean(values: np.ndarray):
    finite = values[np.isfinite(values)]
    return (float(np.mean(finite)) if finite.size else None), int(values.size - finite.size)


@dataclass
class Summary:
    reps: int
    criteria: dict = field(default_factory=dict)
    wilcoxon: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"reps": self.reps, "criteria": self.criteria, "wilcoxon": self.wilcoxon}


def summarize(results: list, criteria, pairs) -> Summary:
    out = Summary(len(results))
    cols = {}
    for name in criteria:
        ch = [r.choices[name] for r in results]
        col = {
            key: np.array([getattr(c, key) for c in ch], dtype=np.float64)
            for key in ("rmse", "log_kl", "log_kl_model", "k", "m")
        }
        cols[name] = col
        mean_lk, excl = _finite_mean(col["log_kl"])
        mean_lkm, excl_m = _finite_mean(col["log_kl_model"])
        out.criteria[name] = {
            "mean_rmse": float(np.mean(col["rmse"])),
            "mean_log_kl": mean_lk,
            "log_kl_excluded": excl,
            "mean_log_kl_model": mean_lkm,
            "log_kl_model_excluded": excl_m,
            "mean_size": float(np.mean(col["k"])),
            "num_restrictions": float(np.mean(col["m"])),
            "quantiles": {
                "rmse": _five_number(col["rmse"]),
                "log_kl": _five_number(col["log_kl"]),
                "size": _five_number(col["k"]),
                "num_restrictions": _five_number(col["m"]),
            },
        }
    for a, b in pairs:
        for metric in ("rmse", "log_kl"):
            try:
                pval = wilcoxon_signed_rank(cols[a][metric], cols[b][metric])
            except (RestselError, ValueError):
                pval = None
            out.wilcoxon.append({"a": a, "b": b, "metric": metric, "p_value": pval})
    return out


def build_truth(config: SimConfig) -> TrueModel:
    beta0 = make_beta0(config.beta_spec if isinstance(config.beta_spec, str) else list(config.beta_spec), config.p)
    Sigma0 = ar1_covariance(config.p, config.rho)
    if isinstance(config.signal, str):
        sigma0_sq = calibrate_sigma0(beta0, Sigma0, TARGET_R2[config.signal])
    else:
        sigma0_sq = config.signal
    return TrueModel(beta0, sigma0_sq, Sigma0)


def build_family(config: SimConfig) -> CandidateFamily:
    if config.family == "nested_subsets":
        return nested_subsets(config.p)
    if config.family == "gr_powerset":
        return restriction_powerset(gr_ex1_rows(config.p), config.p)
    return nested_restriction_exclusion(gr_ex4_rows(config.p), config.p)


def _streams(config: SimConfig):
    design_ss, rep_root = np.random.SeedSequence(config.seed).spawn(2)
    return design_ss, rep_root


def _fixed_design(config: SimConfig, truth: TrueModel):
    if config.design != "fixed":
        return None
    design_ss, _ = _streams(config)
    return sample_design(config.n, truth.Sigma0, np.random.Generator(np.random.PCG64(design_ss)))


def _one_rep(i, rep_ss, config, truth, family, X_fixed) -> RepResult:
    rng = np.random.Generator(np.random.PCG64(rep_ss))
    X = X_fixed if X_fixed is not None else sample_design(config.n, truth.Sigma0, rng)
    y = sample_response(X, truth, rng)
    cv_seed = int(rng.integers(2**63))
    data = Dataset(X, y)
    sel = select(data, family, config.criteria, seed=cv_seed, folds=config.folds)
    cov_term = None
    if config.design == "random":
        cov_term = covariance_kl_term(sigma_matrix_mle(X), truth, config.n)
    choices = {}
    for name in config.criteria:
        j = sel.chosen[name]
        m = int(sel.m[j])
        fit = RestrictedFit(sel.betas[j], float(sel.sigma_sq[j]), float(sel.rss[j]), config.n, config.p, m)
        if config.design == "random":
            rmse = rmser(fit.beta_hat, truth.beta0, truth.Sigma0)
            kl_model = klr_conditional(fit, truth)
            kl = kl_model + cov_term
        else:
            rmse = rmsef(fit.beta_hat, truth.beta0, X)
            kl = kl_model = klf(fit, truth, X)
        choices[name] = Choice(sel.labels[j], m, config.p - m, rmse, kl, log_kl(kl), log_kl(kl_model))
    return RepResult(i, choices)


def _run_range(config_dict: dict, indices: list) -> list:
    config = SimConfig.from_dict(config_dict)
    truth = build_truth(config)
    family = build_family(config)
    X_fixed = _fixed_design(config, truth)
    rep_ss = _streams(config)[1].spawn(config.reps)
    out = []
    for i in indices:
        try:
            out.append(_one_rep(i, rep_ss[i], config, truth, family, X_fixed))
        except RestselError as exc:
            raise ReplicationError(i, exc) from exc
    return out


def run_experiment(config: SimConfig, workers: int = 1):
    """Run every replication of ``config``.

    Returns ``(results, summary)``. Output depends only on ``config``;
    ``workers > 1`` spreads replications over processes without changing it.
    """
    if workers <= 1 or config.reps < 2:
        results = _run_range(config.to_dict(), list(range(config.reps)))
    else:
        chunks = [list(c) for c in np.array_split(np.arange(config.reps), workers) if c.size]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_range, [config.to_dict()] * len(chunks), chunks)
            results = [r for part in parts for r in part]
    results.sort(key=lambda r: r.rep)
    return results, summarize(results, config.criteria, config.wilcoxon_pairs)
