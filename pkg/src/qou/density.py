"""Stationary and transition densities of the q-Ornstein-Uhlenbeck process,
with derived CDFs, moments, and consistency residuals.

The stationary density on [-L, L], L = 2/sqrt(1-q), is

    p(x) = sqrt(1-q) (q;q)_inf / (2 pi) * sqrt(4 - (1-q) x^2)
           * prod_{k>=1} [ (1+q^k)^2 - (1-q) x^2 q^k ],

and the time-t transition density factorizes as kernel_ratio(t, x, y) * p(y)
with kernel_ratio = (e^{-2t}; q)_inf * prod_{k>=0} 1/phi_{q,k}(t, x, y).
All k-products are evaluated in the log domain (every factor is strictly
positive on the valid domain), so parameters near |q| -> 1 stay stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .numerics import DEFAULT_QUAD, QuadConfig, integrate_1d, integrate_edge
from .qseries import (
    DEFAULT_SERIES,
    QParams,
    SeriesConfig,
    _log_phi_sum,
    _qpochhammer_raw,
    _terms_needed,
)

__all__ = [
    "DensityPoint",
    "TransitionQuery",
    "marginal_pdf",
    "transition_pdf",
    "kernel_ratio",
    "kernel_ratio_upper_bound",
    "kernel_ratio_lower_bound",
    "marginal_cdf",
    "conditional_cdf",
    "moment",
    "chapman_kolmogorov_residual",
]


@dataclass(frozen=True)
class DensityPoint:
    """A state-space coordinate together with its probability density."""

    x: float
    value: float

    def __post_init__(self) -> None:
        if self.value < 0.0:
            raise ValueError(f"density cannot be negative, got {self.value!r}")


@dataclass(frozen=True)
class TransitionQuery:
    """Elapsed time and state pair for a transition-density evaluation.

    t = 0 is excluded: the kernel product diverges on the diagonal in the
    zero-lag limit, which is handled analytically through psi instead.
    """

    t: float
    x: float
    y: float

    def validate(self, qp: QParams) -> None:
        if not self.t > 0.0:
            raise DomainError(f"elapsed time must be > 0, got {self.t!r}")
        if abs(self.x) > qp.L or abs(self.y) > qp.L:
            raise DomainError(f"states must lie in [-{qp.L!r}, {qp.L!r}]")


# |marginal factor - 1| = |(2 - (1-q)x^2) q^k + q^{2k}| <= 7 |q|^k on the support.
_MARGINAL_COEFF = 7.0


def marginal_pdf(qp: QParams, x, cfg: SeriesConfig = DEFAULT_SERIES):
    """Stationary density p(x); zero outside the support.  Array-capable."""
    q = qp.q
    xa = np.asarray(x, dtype=float)
    inside = np.abs(xa) < qp.L
    xs = np.where(inside, xa, 0.0)
    # 4 - (1-q) L^2 is 0 up to rounding; clip tiny negatives before sqrt.
    edge = np.sqrt(np.clip(4.0 - (1.0 - q) * xs * xs, 0.0, None))
    pref = math.sqrt(1.0 - q) * qp.qq_inf / (2.0 * math.pi)
    if q == 0.0:
        out = pref * edge
    else:
        n = _terms_needed(abs(q), _MARGINAL_COEFF, cfg, start=1)
        x2 = (1.0 - q) * xs * xs
        if xs.size <= 8192:
            s = q ** np.arange(1, n) if n > 1 else np.empty(0)
            acc = np.log((1.0 + s) ** 2 - x2[..., None] * s).sum(axis=-1)
        else:
            acc = np.zeros_like(xs)
            for k in range(1, n):
                s = q**k
                acc += np.log((1.0 + s) ** 2 - x2 * s)
        out = pref * edge * np.exp(acc)
    out = np.where(inside, out, 0.0)
    return float(out) if np.ndim(x) == 0 else out


def kernel_ratio(qp: QParams, t: float, x, y, cfg: SeriesConfig = DEFAULT_SERIES):
    """Transition-to-stationary density ratio p_{0,t}(x, y) / p(y).

    Equals (e^{-2t}; q)_inf * prod_{k>=0} 1/phi_{q,k}(t, x, y); finite and
    positive on the closed support square for t > 0.  Array-capable.
    """
    if not t > 0.0:
        raise DomainError(f"elapsed time must be > 0, got {t!r}")
    lead = _qpochhammer_raw(math.exp(-2.0 * t), qp.q, cfg)
    out = np.exp(math.log(lead) - _log_phi_sum(qp, t, x, y, cfg))
    return float(out) if np.ndim(out) == 0 else out


def transition_pdf(qp: QParams, query: TransitionQuery, cfg: SeriesConfig = DEFAULT_SERIES) -> float:
    """Transition density p_{0,t}(x, y) for a validated query."""
    query.validate(qp)
    return float(
        kernel_ratio(qp, query.t, query.x, query.y, cfg) * marginal_pdf(qp, query.y, cfg)
    )


def _transition_pdf_y(qp: QParams, t: float, x, y, cfg: SeriesConfig = DEFAULT_SERIES):
    """Unvalidated array-capable p_{0,t}(x, y); broadcasting in x and y."""
    return kernel_ratio(qp, t, x, y, cfg) * marginal_pdf(qp, y, cfg)


def kernel_ratio_upper_bound(qp: QParams, t: float, cfg: SeriesConfig = DEFAULT_SERIES) -> float:
    """Uniform upper bound (e^{-2t}; q)_inf / (e^{-t}; q)_inf^4 of the kernel
    ratio, attained at the corner x = y = +-L."""
    rho = math.exp(-t)
    return _qpochhammer_raw(rho * rho, qp.q, cfg) / _qpochhammer_raw(rho, qp.q, cfg) ** 4


def kernel_ratio_lower_bound(
    qp: QParams, rho: float, x, cfg: SeriesConfig = DEFAULT_SERIES
):
    """Uniform-in-y lower bound C(x, rho, q) of the kernel ratio at rho = e^{-t}.

    Built by replacing each factor phi_{q,k}(t, x, .) with its maximum over
    the support, attained at y = -sign(x q^k) L:

        sup_y phi_{q,k} = (1 + rho^2 q^{2k})^2
                          + 2 sqrt(1-q) rho |q|^k (1 + rho^2 q^{2k}) |x|
                          + (1-q) rho^2 q^{2k} x^2,

    so C = (rho^2; q)_inf / prod_k sup_y phi_{q,k} <= inf_y ratio.
    Array-capable in x; satisfies 1 - C = O(rho) uniformly on the support.
    """
    if not (0.0 < rho < 1.0):
        raise DomainError(f"rho must lie in (0, 1), got {rho!r}")
    q = qp.q
    ax = np.abs(np.asarray(x, dtype=float))
    if np.any(ax > qp.L * (1.0 + 1e-12)):
        raise DomainError("x outside support")
    # coeff: 3 (square) + 8 (|x| term, 2 sqrt(1-q) L <= ... = 8) + 4 (x^2 term)
    n = _terms_needed(abs(q), 15.0, cfg)
    num = math.log(_qpochhammer_raw(rho * rho, q, cfg))
    acc = np.zeros_like(ax)
    sq = math.sqrt(1.0 - q)
    for k in range(n):
        q2k = q ** (2 * k)
        aqk = abs(q) ** k
        a = 1.0 + rho * rho * q2k
        acc += np.log(a * a + 2.0 * sq * rho * aqk * a * ax + (1.0 - q) * rho * rho * q2k * ax * ax)
    out = np.exp(num - acc)
    return float(out) if np.ndim(out) == 0 else out


_EDGE_FRACTION = 0.25  # fraction of L handled by the substituted edge rule


def _cdf_via_edges(
    integrand,
    qp: QParams,
    upper_limit: float,
    quad_cfg: QuadConfig,
    breakpoints=None,
) -> float:
    """integral of `integrand` from -L to upper_limit with substituted edge
    handling near both boundaries."""
    L = qp.L
    w = _EDGE_FRACTION * L
    x = float(np.clip(upper_limit, -L, L))
    if x <= -L:
        return 0.0
    total = 0.0
    # Lower-edge piece via y = -L + u^2.
    lo_width = min(x + L, w)
    total += integrate_edge(integrand, "lower", lo_width, qp, quad_cfg).value
    if x <= -L + w:
        return total
    # Interior piece.
    mid_hi = min(x, L - w)
    if mid_hi > -L + w:
        total += integrate_1d(integrand, -L + w, mid_hi, quad_cfg, breakpoints=breakpoints).value
    # Upper-edge partial piece via y = L - u^2: u runs from sqrt(L-x) to sqrt(w).
    if x > L - w:
        g = lambda u: integrand(L - u * u) * 2.0 * u
        u_lo = math.sqrt(max(L - x, 0.0))
        u_hi = math.sqrt(w)
        if u_hi > u_lo:
            total += integrate_1d(g, u_lo, u_hi, quad_cfg).value
    return total


def marginal_cdf(
    qp: QParams,
    x: float,
    cfg: QuadConfig = DEFAULT_QUAD,
    series_cfg: SeriesConfig = DEFAULT_SERIES,
) -> float:
    """Stationary CDF integral from -L to x, clamped to [0, 1]."""
    if x <= -qp.L:
        return 0.0
    if x >= qp.L:
        return 1.0
    f = lambda y: float(marginal_pdf(qp, y, series_cfg))
    return float(np.clip(_cdf_via_edges(f, qp, x, cfg), 0.0, 1.0))


def conditional_cdf(
    qp: QParams,
    t: float,
    x: float,
    y: float,
    cfg: QuadConfig = DEFAULT_QUAD,
    series_cfg: SeriesConfig = DEFAULT_SERIES,
) -> float:
    """CDF of the time-t conditional law started at x, evaluated at y."""
    if not t > 0.0:
        raise DomainError(f"elapsed time must be > 0, got {t!r}")
    if abs(x) > qp.L:
        raise DomainError("source state outside support")
    if y <= -qp.L:
        return 0.0
    y = min(y, qp.L)
    f = lambda z: float(_transition_pdf_y(qp, t, x, z, series_cfg))
    # For small t the conditional mass concentrates near x; hint the peak.
    peak = float(np.clip(x * math.exp(-t), -qp.L, qp.L))
    return float(np.clip(_cdf_via_edges(f, qp, y, cfg, breakpoints=[peak]), 0.0, 1.0))


def moment(
    qp: QParams,
    r: int,
    cfg: QuadConfig = DEFAULT_QUAD,
    series_cfg: SeriesConfig = DEFAULT_SERIES,
) -> float:
    """r-th moment of the stationary law, via edge-substituted quadrature."""
    if r < 0:
        raise ValueError(f"moment order must be >= 0, got {r!r}")
    f = lambda y: y**r * float(marginal_pdf(qp, y, series_cfg))
    return _full_support_integral(f, qp, cfg)


def _full_support_integral(f, qp: QParams, cfg: QuadConfig) -> float:
    L = qp.L
    w = _EDGE_FRACTION * L
    total = integrate_edge(f, "lower", w, qp, cfg).value
    total += integrate_1d(f, -L + w, L - w, cfg).value
    total += integrate_edge(f, "upper", w, qp, cfg).value
    return total


def chapman_kolmogorov_residual(
    qp: QParams,
    s: float,
    t: float,
    x: float,
    y: float,
    cfg: QuadConfig = DEFAULT_QUAD,
    series_cfg: SeriesConfig = DEFAULT_SERIES,
) -> float:
    """| integral of p_{0,s}(x, z) p_{0,t}(z, y) dz  -  p_{0,s+t}(x, y) |."""
    if not (s > 0.0 and t > 0.0):
        raise DomainError("elapsed times must be > 0")
    if abs(x) > qp.L or abs(y) > qp.L:
        raise DomainError("states outside support")

    p_y = float(marginal_pdf(qp, y, series_cfg))

    def f(z: float) -> float:
        return float(
            _transition_pdf_y(qp, s, x, z, series_cfg)
            * kernel_ratio(qp, t, z, y, series_cfg)
        ) * p_y

    lhs = _full_support_integral(f, qp, cfg)
    rhs = transition_pdf(qp, TransitionQuery(s + t, x, y), series_cfg)
    return abs(lhs - rhs)
