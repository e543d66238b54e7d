"""Shared independent oracles and instance generators."""

from __future__ import annotations

import math

import numpy as np
import pytest

from restsel.core import Dataset, RestrictionSet

ACCEPTANCE_LINES: list[str] = []


def random_instance(rng: np.random.Generator, n: int, p: int, m: int):
    """Gaussian design and response plus ``m`` random dense restrictions."""
    X = rng.standard_normal((n, p))
    y = X @ rng.standard_normal(p) + rng.standard_normal(n)
    if m:
        rest = RestrictionSet(rng.standard_normal((m, p)), rng.standard_normal(m))
    else:
        rest = RestrictionSet.empty(p)
    return Dataset(X, y), rest


def kkt_fit(X, y, R, r):
    """Restricted least squares from the bordered normal equations, solved by LU."""
    p = X.shape[1]
    m = R.shape[0]
    K = np.zeros((p + m, p + m))
    K[:p, :p] = X.T @ X
    K[:p, p:] = R.T
    K[p:, :p] = R
    rhs = np.concatenate([X.T @ y, r])
    return np.linalg.solve(K, rhs)[:p]


def brute_force_loocv(X, y, R, r):
    """Sum of squared leave-one-out prediction errors from ``n`` refits."""
    n = X.shape[0]
    total = 0.0
    for i in range(n):
        keep = np.arange(n) != i
        beta = kkt_fit(X[keep], y[keep], R, r)
        total += float(y[i] - X[i] @ beta) ** 2
    return total


def rel(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


# k-forms written out independently, term by term, in the variable-selection notation


def aicc_k(rss, n, k):
    return n * math.log(rss / n) + n * (n + k) / (n - k - 2)


def raicc_k(rss, n, k):
    return n * math.log(rss / n) + n * n * (n - 1) / ((n - k - 2) * (n - k - 1))


def cp_k(rss, rss_full, n, p, k):
    return rss + rss_full / (n - p) * (2 * k)


def fpe_k(rss, n, k):
    return rss * ((n + k) / (n - k))


def rcp_k(rss, rss_full, n, p, k):
    return rss + rss_full / (n - p) * (k * (2 + (k + 1) / (n - k - 1)))


def sp_k(rss, n, k):
    return rss * (n * (n - 1) / ((n - k) * (n - k - 1)))


def bic_k(rss, n, k):
    return n * math.log(rss / n) + math.log(n) * k


def gcv_k(rss, n, k):
    return rss * (n * n / ((n - k) * (n - k)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
