import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from restsel.core import Dataset, RestrictedFit, RestrictionSet, fit_restricted, sigma_matrix_mle
from restsel.criteria import LEMMA_KINDS, OPTIMISM_KINDS, ModelDims, expected_optimism, lemma_expectations
from restsel.errors import (
    AssumptionViolationError,
    ConfigError,
    CovarianceSingularityError,
    DegenerateSignalError,
    DimensionError,
    DomainError,
    FactorizationError,
)
from restsel.selection import CandidateFamily, nested_subsets, restriction_powerset, select
from restsel.simulation import (
    SimConfig,
    TrueModel,
    ar1_covariance,
    calibrate_sigma0,
    chain_restriction,
    covariance_kl_term,
    klf,
    klr,
    klr_conditional,
    log_kl,
    make_beta0,
    mc_components,
    mc_optimism,
    rmsef,
    rmser,
    run_experiment,
    sample_design,
    sample_response,
    theorem_suite,
)
from restsel.simulation.experiment import _fixed_design, build_truth

# ---------------------------------------------------------------- design


def test_ar1_identity():
    np.testing.assert_array_equal(ar1_covariance(4, 0.0), np.eye(4))


def test_ar1_p2():
    np.testing.assert_array_equal(ar1_covariance(2, 0.5), [[1, 0.5], [0.5, 1]])


def test_ar1_positive_definite():
    assert np.linalg.eigvalsh(ar1_covariance(5, 0.5)).min() > 0


@pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
def test_ar1_domain(rho):
    with pytest.raises(DomainError):
        ar1_covariance(3, rho)


def test_make_beta0():
    np.testing.assert_array_equal(make_beta0([2, 2, 2, 1, 1, 1], 6), [2, 2, 2, 1, 1, 1])
    np.testing.assert_allclose(make_beta0("dense", 3), [1, 0.5, 1 / 3])
    np.testing.assert_array_equal(make_beta0("sparse6", 8), [1, 1, 1, 1, 1, 1, 0, 0])
    with pytest.raises(DimensionError):
        make_beta0("sparse6", 5)


def test_calibrate_sigma0():
    beta = np.array([1.0, -2.0, 0.5])
    S = ar1_covariance(3, 0.3)
    assert calibrate_sigma0(beta, S, 0.5) == pytest.approx(beta @ S @ beta, rel=1e-15)
    assert calibrate_sigma0([1.0, 0.0], np.eye(2), 0.9) == pytest.approx(1 / 9, rel=1e-14)
    b = np.array([2, 2, 2, 1, 1, 1], dtype=float)
    S6 = ar1_covariance(6, 0.5)
    quad = sum(b[i] * S6[i, j] * b[j] for i in range(6) for j in range(6))
    assert calibrate_sigma0(b, S6, 0.2) == pytest.approx(4 * quad, rel=1e-13)
    with pytest.raises(DegenerateSignalError):
        calibrate_sigma0(np.zeros(3), np.eye(3), 0.5)
    with pytest.raises(DomainError):
        calibrate_sigma0(beta, S, 1.0)


def test_sample_design_deterministic():
    a = sample_design(5, np.eye(3), np.random.default_rng(4))
    b = sample_design(5, np.eye(3), np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)


def test_sample_design_moments():
    S = ar1_covariance(3, 0.5)
    n = 100_000
    X = sample_design(n, S, np.random.default_rng(8))
    assert np.all(np.abs(X.mean(axis=0)) <= 4 / math.sqrt(n))
    # Var of a sample covariance entry is (S_ii S_jj + S_ij^2) / n
    se = np.sqrt((np.outer(np.diag(S), np.diag(S)) + S**2) / n)
    assert np.all(np.abs(X.T @ X / n - S) <= 4 * se)


def test_sample_design_not_positive_definite():
    with pytest.raises(FactorizationError):
        sample_design(3, np.array([[1.0, 2.0], [2.0, 1.0]]), np.random.default_rng(0))


def test_sample_response_noise_variance():
    truth = TrueModel(np.array([1.0, -1.0]), 4.0, np.eye(2))
    X = np.zeros((200_000, 2))
    y = sample_response(X, truth, np.random.default_rng(2))
    assert y.var() == pytest.approx(4.0, rel=4 * math.sqrt(2 / 200_000))


def test_true_model_validation():
    with pytest.raises(DomainError):
        TrueModel(np.ones(2), 0.0, np.eye(2))
    with pytest.raises(DimensionError):
        TrueModel(np.ones(2), 1.0, np.eye(3))
    with pytest.raises(FactorizationError):
        TrueModel(np.ones(2), 1.0, np.array([[1.0, 2.0], [2.0, 1.0]]))


# ---------------------------------------------------------------- metrics


def test_rmse_zero_at_truth(rng):
    b = rng.standard_normal(3)
    assert rmsef(b, b, rng.standard_normal((6, 3))) == 0.0
    assert rmser(b, b, np.eye(3)) == 0.0


def test_rmser_identity_is_euclidean(rng):
    a, b = rng.standard_normal(4), rng.standard_normal(4)
    assert rmser(a, b, np.eye(4)) == pytest.approx(np.linalg.norm(a - b), rel=1e-14)


def test_rmse_explicit_forms(rng):
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    X = rng.standard_normal((7, 3))
    S = ar1_covariance(3, 0.4)
    assert rmsef(a, b, X) == pytest.approx(math.sqrt(sum((X[i] @ (a - b)) ** 2 for i in range(7)) / 7), rel=1e-13)
    d = a - b
    assert rmser(a, b, S) == pytest.approx(math.sqrt(sum(d[i] * S[i, j] * d[j] for i in range(3) for j in range(3))))


def _fit_at(beta, s2, n, p):
    return RestrictedFit(np.asarray(beta, dtype=float), s2, n * s2, n, p, 0)


def test_kl_zero_at_truth(rng):
    truth = TrueModel(np.array([1.0, 2.0]), 1.5, ar1_covariance(2, 0.5))
    X = rng.standard_normal((10, 2))
    fit = _fit_at(truth.beta0, 1.5, 10, 2)
    assert klf(fit, truth, X) == 0.0
    assert klr(fit, truth.Sigma0, truth) == pytest.approx(0.0, abs=1e-12)
    assert log_kl(0.0) == -math.inf


def test_klr_parts_add_up(rng):
    truth = TrueModel(np.array([1.0, 0.0, -1.0]), 2.0, ar1_covariance(3, 0.5))
    X = sample_design(30, truth.Sigma0, rng)
    fit = fit_restricted(Dataset(X, sample_response(X, truth, rng)), RestrictionSet.empty(3))
    S = sigma_matrix_mle(X)
    total = klr(fit, S, truth)
    assert total == pytest.approx(klr_conditional(fit, truth) + covariance_kl_term(S, truth, 30), rel=1e-14)
    _, ld_hat = np.linalg.slogdet(S)
    _, ld0 = np.linalg.slogdet(truth.Sigma0)
    ref = klr_conditional(fit, truth) + 30 * (ld_hat - ld0) + 30 * np.trace(np.linalg.inv(S) @ truth.Sigma0) - 90
    assert total == pytest.approx(ref, rel=1e-10)
    assert total >= 0


def test_klr_singular_covariance():
    truth = TrueModel(np.ones(2), 1.0, np.eye(2))
    with pytest.raises(CovarianceSingularityError):
        covariance_kl_term(np.array([[1.0, 1.0], [1.0, 1.0]]), truth, 5)


def test_klf_matches_sampling(rng):
    """Twice the expected log-density ratio, estimated from draws of a new response."""
    n = 12
    truth = TrueModel(np.array([1.0, -0.5, 0.25]), 0.8, np.eye(3))
    X = rng.standard_normal((n, 3))
    fit = fit_restricted(Dataset(X, sample_response(X, truth, rng)), RestrictionSet.empty(3))
    draws = 200_000
    Y = X @ truth.beta0 + math.sqrt(truth.sigma0_sq) * rng.standard_normal((draws, n))
    s0, s2 = truth.sigma0_sq, fit.sigma_hat_sq
    logf0 = -0.5 * n * math.log(s0) - 0.5 * np.sum((Y - X @ truth.beta0) ** 2, axis=1) / s0
    logf = -0.5 * n * math.log(s2) - 0.5 * np.sum((Y - X @ fit.beta_hat) ** 2, axis=1) / s2
    v = 2 * (logf0 - logf)
    assert abs(v.mean() - klf(fit, truth, X)) <= 3 * v.std(ddof=1) / math.sqrt(draws)


# ---------------------------------------------------------------- Monte Carlo optimism


def _truth(p=5, rho=0.5):
    return TrueModel(1.0 / np.arange(1, p + 1), 1.0, ar1_covariance(p, rho))


def test_chain_restriction_satisfied():
    truth = _truth()
    for m in range(6):
        rest = chain_restriction(m, 5, truth.beta0)
        assert rest.m == m and rest.residual(truth.beta0) < 1e-15


def test_mc_fse_zero_when_fully_restricted():
    truth = _truth()
    rest = chain_restriction(5, 5, truth.beta0)
    mean, se = mc_optimism("F_SE", truth, rest, 20, 4000, seed=1)
    assert abs(mean) <= 3 * se


def test_mc_assumption_violation():
    truth = _truth()
    rest = RestrictionSet(np.array([[1.0, 0, 0, 0, 0]]), np.array([5.0]))
    with pytest.raises(AssumptionViolationError):
        mc_optimism("F_KL", truth, rest, 20, 100, seed=0)


def test_mc_deterministic():
    truth = _truth()
    rest = chain_restriction(2, 5, truth.beta0)
    a = mc_components("random", truth, rest, 20, 50, seed=9)
    b = mc_components("random", truth, rest, 20, 50, seed=9)
    for key in a:
        np.testing.assert_array_equal(a[key], b[key])


def test_unbiasedness_over_seed_batches():
    """Each closed form is within 3 SE in at least 19 of 20 independent batches."""
    n, p, m = 20, 5, 2
    truth = _truth()
    rest = chain_restriction(m, p, truth.beta0)
    dims = ModelDims(n, p, m)
    targets = {k: expected_optimism(k, dims) for k in OPTIMISM_KINDS}
    targets.update({k: lemma_expectations(k, dims) for k in LEMMA_KINDS})
    hits = dict.fromkeys(targets, 0)
    for batch in range(20):
        draws = {}
        for design in ("fixed", "random"):
            draws.update(mc_components(design, truth, rest, n, 4000, seed=1000 + batch))
        for key, target in targets.items():
            v = draws[key]
            se = v.std(ddof=1) / math.sqrt(v.size)
            hits[key] += abs(v.mean() - target) <= 3 * se
    assert all(h >= 19 for h in hits.values()), hits


def test_theorem_suite_fully_restricted_targets_zero():
    rows = {r.name: r for r in theorem_suite(n=20, p=5, m=5, reps=2000, seed=3)}
    assert rows["F_SE"].target == 0.0 and rows["R_SE"].target == 0.0
    assert rows["quad_F"].target == 0.0 and rows["quad_R"].target == 0.0


def test_theorem_suite_infeasible_rows_skipped():
    rows = {r.name: r for r in theorem_suite(n=8, p=7, m=0, reps=200, seed=3)}
    assert rows["F_KL"].status == "skipped" and "n-p+m-2" in rows["F_KL"].reason
    assert rows["trace_R"].status == "skipped"
    assert rows["F_SE"].status in ("pass", "FAIL")


# ---------------------------------------------------------------- experiments


def _small(**kw):
    base = dict(n=25, p=6, reps=30, seed=3, criteria=("AICc", "RAICc", "Sp", "TenFoldCV"))
    base.update(kw)
    return SimConfig(**base)


def test_config_validation_names_field():
    with pytest.raises(ConfigError) as e:
        SimConfig.from_dict({"n": 10, "p": 3, "design": "other"})
    assert e.value.field == "design"
    with pytest.raises(ConfigError) as e:
        SimConfig.from_dict({"n": 10, "p": 3, "colour": 1})
    assert e.value.field == "colour"
    with pytest.raises(ConfigError) as e:
        SimConfig.from_dict({"n": 10, "p": 6, "criteria": ["aicc", "foo"]})
    assert e.value.field == "criteria"
    with pytest.raises(ConfigError) as e:
        SimConfig.from_dict({"n": 10, "p": 6, "reps": 0})
    assert e.value.field == "reps"
    with pytest.raises(ConfigError) as e:
        SimConfig.from_dict({"p": 3})
    assert e.value.field == "n"


def test_config_round_trip():
    c = _small(beta_spec=[1, 0, 0, 0, 0, 2], signal=0.5, design="fixed")
    assert SimConfig.from_dict(c.to_dict()) == c


def test_single_rep_single_candidate_summary():
    config = SimConfig(n=20, p=6, reps=1, seed=0, family="nested_subsets", criteria=("AICc",), wilcoxon_pairs=())
    results, summary = run_experiment(config)
    c = results[0].choices["AICc"]
    s = summary.criteria["AICc"]
    assert s["mean_rmse"] == c.rmse and s["mean_log_kl"] == c.log_kl and s["mean_size"] == c.k
    assert s["quantiles"]["rmse"] == [c.rmse] * 5


def test_run_deterministic_and_parallel_identical():
    c = _small()
    a = run_experiment(c)
    b = run_experiment(c)
    d = run_experiment(c, workers=3)
    assert a[0] == b[0] == d[0]
    assert a[1].to_dict() == d[1].to_dict()


def test_fixed_design_reused():
    c = _small(design="fixed", reps=5)
    truth = build_truth(c)
    np.testing.assert_array_equal(_fixed_design(c, truth), _fixed_design(c, truth))
    rmse_a = [r.choices["AICc"].rmse for r in run_experiment(c)[0]]
    rmse_b = [r.choices["AICc"].rmse for r in run_experiment(c)[0]]
    assert rmse_a == rmse_b


def test_kl_nonnegative_every_replication():
    for design in ("fixed", "random"):
        results, _ = run_experiment(_small(design=design, reps=40))
        for r in results:
            for c in r.choices.values():
                assert c.kl >= -1e-8 and c.rmse >= 0


def test_summary_invariants():
    results, summary = run_experiment(_small(reps=60, family="gr_powerset", beta_spec=[2, 2, 2, 1, 1, 1]))
    for s in summary.criteria.values():
        for q in s["quantiles"].values():
            assert q == sorted(q)
        assert "num_restrictions" in s
    for w in summary.wilcoxon:
        assert w["p_value"] is None or 0.0 <= w["p_value"] <= 1.0


def test_replication_error_carries_index(monkeypatch):
    from restsel.errors import ReplicationError, SingularDesignError
    from restsel.simulation import experiment

    calls = []

    def failing_select(*args, **kwargs):
        calls.append(1)
        if len(calls) == 2:
            raise SingularDesignError("boom")
        return select(*args, **kwargs)

    monkeypatch.setattr(experiment, "select", failing_select)
    with pytest.raises(ReplicationError) as e:
        run_experiment(_small(reps=3))
    assert e.value.rep == 1 and isinstance(e.value.cause, SingularDesignError)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_design_exchangeability(seed):
    rng = np.random.default_rng(seed)
    p = 6
    truth = TrueModel(np.array([2, 2, 2, 1, 1, 1.0]), 1.0, ar1_covariance(p, 0.5))
    X = sample_design(15, truth.Sigma0, rng)
    y = sample_response(X, truth, rng)
    fam = restriction_powerset(["b1=b4", "b2=b3", "b5=b6"], p)
    perm = rng.permutation(p)
    tperm = truth.permuted(perm)
    fam_p = CandidateFamily(tuple(type(c)(c.label, c.rest.permute_columns(perm)) for c in fam), p)
    crit = ("AICc", "RAICc", "Cp", "RCp", "Sp", "LOOCV")
    a = select(Dataset(X, y), fam, crit)
    b = select(Dataset(X[:, perm], y), fam_p, crit)
    for name in crit:
        np.testing.assert_allclose(b.scores[name], a.scores[name], rtol=1e-10)
    S, Sp_ = sigma_matrix_mle(X), sigma_matrix_mle(X[:, perm])
    for i in range(len(fam)):
        fa = RestrictedFit(a.betas[i], a.sigma_sq[i], a.rss[i], 15, p, int(a.m[i]))
        fb = RestrictedFit(b.betas[i], b.sigma_sq[i], b.rss[i], 15, p, int(b.m[i]))
        assert rmser(fb.beta_hat, tperm.beta0, tperm.Sigma0) == pytest.approx(
            rmser(fa.beta_hat, truth.beta0, truth.Sigma0), rel=1e-10, abs=1e-12)
        assert klr(fb, Sp_, tperm) == pytest.approx(klr(fa, S, truth), rel=1e-10)


def test_n200_raicc_mean_size_window():
    config = SimConfig(n=200, p=10, reps=500, seed=0, beta_spec=[1, 1, 1] + [0] * 7, signal="high",
                       criteria=("RAICc",), wilcoxon_pairs=())
    _, summary = run_experiment(config, workers=4)
    assert 2.9 <= summary.criteria["RAICc"]["mean_size"] <= 3.5, summary.criteria["RAICc"]["mean_size"]


def test_nested_family_single_rep_matches_direct_selection():
    c = SimConfig(n=30, p=6, reps=1, seed=5, criteria=("RAICc",), wilcoxon_pairs=())
    results, _ = run_experiment(c)
    # recompute the same replication from its stream
    truth = build_truth(c)
    rep_ss = np.random.SeedSequence(5).spawn(2)[1].spawn(1)[0]
    g = np.random.Generator(np.random.PCG64(rep_ss))
    X = sample_design(30, truth.Sigma0, g)
    y = sample_response(X, truth, g)
    seed = int(g.integers(2**63))
    res = select(Dataset(X, y), nested_subsets(6), ["RAICc"], seed=seed)
    assert results[0].choices["RAICc"].label == res.chosen_label("RAICc")
