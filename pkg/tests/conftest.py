import numpy as np
import pytest

from qou import QParams, build_transition_table


@pytest.fixture(scope="session")
def qp0():
    return QParams(0.0)


@pytest.fixture(scope="session")
def qp5():
    return QParams(0.5)


@pytest.fixture(scope="session")
def qpm5():
    return QParams(-0.5)


@pytest.fixture(scope="session")
def table0_n8(qp0):
    """Small default-step table for q = 0 used across sampler tests."""
    return build_transition_table(qp0, 8, nx=129, nu=257)


@pytest.fixture(scope="session")
def table5_n8(qp5):
    return build_transition_table(qp5, 8, nx=129, nu=257)


def semicircle_cdf(y):
    """Closed-form stationary CDF at q = 0 (radius-2 semicircle)."""
    y = np.clip(np.asarray(y, dtype=float), -2.0, 2.0)
    return 0.5 + (y * np.sqrt(4.0 - y * y) / 4.0 + np.arcsin(y / 2.0)) / np.pi


def ks_statistic(samples, cdf_values):
    """Two-sided Kolmogorov-Smirnov distance of sorted samples vs CDF values
    evaluated at those samples."""
    n = len(samples)
    order = np.argsort(samples)
    F = np.asarray(cdf_values)[order]
    up = np.max(np.arange(1, n + 1) / n - F)
    down = np.max(F - np.arange(n) / n)
    return max(float(up), float(down))
