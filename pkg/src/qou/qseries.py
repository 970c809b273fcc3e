"""Infinite products and kernel factor functions for the q-Ornstein-Uhlenbeck
process.

Every quantity here is built from products whose k-th factor differs from 1
by at most ``c * |q|**k`` for a small explicit constant ``c``.  Products are
evaluated as exponentials of log-sums when all factors are positive (which
holds on the valid domains), and truncated using the a-priori geometric tail
bound ``2*c*|q|**K / (1 - |q|) < tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, NonConvergent, SingularInput

__all__ = [
    "SeriesConfig",
    "QParams",
    "DEFAULT_SERIES",
    "qpochhammer_inf",
    "alpha_q",
    "phi",
    "psi",
    "Psi_inf",
    "phi_lower_bound",
    "phi0_lower_bound",
]


@dataclass(frozen=True)
class SeriesConfig:
    """Truncation policy for all infinite products.

    tol is an absolute tolerance on log-scale partial sums; max_terms is a
    hard cap on the number of product terms.
    """

    tol: float = 1e-12
    max_terms: int = 10_000

    def __post_init__(self) -> None:
        if not (self.tol > 0.0):
            raise ValueError(f"tol must be > 0, got {self.tol!r}")
        if self.max_terms < 1:
            raise ValueError(f"max_terms must be >= 1, got {self.max_terms!r}")


DEFAULT_SERIES = SeriesConfig()


def _terms_needed(absq: float, coeff: float, cfg: SeriesConfig, start: int = 0) -> int:
    """Index K at which the product tail may be dropped.

    Factors k >= K contribute at most sum_k 2*coeff*|q|^k = 2*coeff*|q|^K/(1-|q|)
    to the log of the product; we also require coeff*|q|^K <= 1/2 so the
    per-factor log bound |log(1+c_k)| <= 2*coeff*|q|^k is valid.
    """
    if coeff <= 0.0:
        return start
    if absq == 0.0:
        return max(start, 1)
    needed = max(
        math.log(cfg.tol * (1.0 - absq) / (2.0 * coeff)) / math.log(absq),
        math.log(0.5 / coeff) / math.log(absq),
        float(start),
    )
    k = int(math.ceil(needed))
    # Guard against boundary rounding of the ceil.
    while 2.0 * coeff * absq**k / (1.0 - absq) > cfg.tol or coeff * absq**k > 0.5:
        k += 1
    if k > cfg.max_terms:
        raise NonConvergent(
            f"product needs {k} terms for tol={cfg.tol:g} at |q|={absq:g}, "
            f"exceeding max_terms={cfg.max_terms}"
        )
    return k


@lru_cache(maxsize=4096)
def _qpochhammer_raw(a: float, q: float, cfg: SeriesConfig) -> float:
    """(a; q)_inf = prod_{k>=0} (1 - a q^k) for a plain float q."""
    if not (-1.0 < q < 1.0):
        raise DomainError(f"|q| must be < 1, got q={q!r}")
    if a == 0.0:
        return 1.0
    n = _terms_needed(abs(q), abs(a), cfg)
    k = np.arange(n)
    factors = 1.0 - a * q**k
    if np.all(factors > 0.0):
        return float(np.exp(np.sum(np.log(factors))))
    # A factor hit zero or went negative (possible for a >= 1): multiply
    # term by term in the linear domain instead.
    return float(np.prod(factors))


@dataclass(frozen=True)
class QParams:
    """Model parameter q with derived support half-width and cached constants.

    The process lives on [-L, L] with L = 2/sqrt(1-q); qq_inf caches the
    Euler product (q; q)_inf used as a prefactor by every density formula.
    """

    q: float
    L: float = field(init=False)
    qq_inf: float = field(init=False)

    def __post_init__(self) -> None:
        q = float(self.q)
        if not (-1.0 < q < 1.0):
            raise DomainError(f"q must lie strictly inside (-1, 1), got {q!r}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "L", 2.0 / math.sqrt(1.0 - q))
        object.__setattr__(self, "qq_inf", _qpochhammer_raw(q, q, DEFAULT_SERIES))


def qpochhammer_inf(a: float, qp: QParams, cfg: SeriesConfig = DEFAULT_SERIES) -> float:
    """Infinite product (a; q)_inf = prod_{k>=0} (1 - a q^k)."""
    return _qpochhammer_raw(a, qp.q, cfg)


def alpha_q(qp: QParams, cfg: SeriesConfig = DEFAULT_SERIES) -> float:
    """Limiting Poisson rate of boundary-to-boundary crossings.

    alpha_q = (1-q)^{3/2} / (18 pi^2) * prod_{k>=1} (1-q^k)^7 / (1+q^k)^4.

    The ratio (1-q^k)^7/(1+q^k)^4 is formed per term before multiplying so
    that alternating growth cancels for q < 0 (the two separate products
    under/overflow near q = -1).
    """
    q = qp.q
    prefactor = (1.0 - q) ** 1.5 / (18.0 * math.pi**2)
    if q == 0.0:
        return prefactor
    # |log((1-u)^7 (1+u)^-4)| <= 22|u| for |u| <= 1/2, so coeff 11 works
    # with the factor-2 convention of _terms_needed.
    n = _terms_needed(abs(q), 11.0, cfg, start=1)
    k = np.arange(1, n)
    u = q**k
    log_terms = 7.0 * np.log1p(-u) - 4.0 * np.log1p(u)
    return prefactor * float(np.exp(np.sum(log_terms)))


def _check_support(qp: QParams, *values):
    for v in values:
        if np.any(np.abs(v) > qp.L * (1.0 + 1e-12)):
            raise DomainError(f"state outside support [-{qp.L!r}, {qp.L!r}]")


def phi(qp: QParams, k: int, delta: float, x, y):
    """Quadratic factor of the transition-kernel product at lag delta.

    phi_{q,k}(delta, x, y) = (1 - e^{-2 delta} q^{2k})^2
        - (1-q) e^{-delta} q^k (1 + e^{-2 delta} q^{2k}) x y
        + (1-q) e^{-2 delta} q^{2k} (x^2 + y^2)

    Accepts scalars or broadcasting numpy arrays in x, y.
    """
    _check_support(qp, x, y)
    q = qp.q
    r = math.exp(-delta)
    s = q**k
    rs = r * s
    return (1.0 - rs * rs) ** 2 - (1.0 - q) * rs * (1.0 + rs * rs) * np.multiply(x, y) + (
        1.0 - q
    ) * rs * rs * (np.square(x) + np.square(y))


def psi(qp: QParams, k: int, y1, y2):
    """Zero-lag limit of phi: psi_{q,k}(y1,y2) = lim_{delta->0} phi_{q,k}."""
    _check_support(qp, y1, y2)
    q = qp.q
    s = q**k
    return (1.0 - s * s) ** 2 - (1.0 - q) * s * (1.0 + s * s) * np.multiply(y1, y2) + (
        1.0 - q
    ) * s * s * (np.square(y1) + np.square(y2))


def phi_lower_bound(qp: QParams, k: int, delta: float) -> float:
    """Global minimum of phi_{q,k}(delta, ., .) over the support square:
    (1 - e^{-delta} |q|^k)^4."""
    return (1.0 - math.exp(-delta) * abs(qp.q) ** k) ** 4


def phi0_lower_bound(qp: QParams, delta: float, x, y):
    """Lower envelope for the k=0 factor:
    e^{-2 delta} * (16 sinh^4(delta/2) + (1-q)(x-y)^2)."""
    return math.exp(-2.0 * delta) * (
        16.0 * math.sinh(delta / 2.0) ** 4 + (1.0 - qp.q) * np.square(np.subtract(x, y))
    )


# Deviation-from-1 coefficients: |factor_k - 1| <= c * |q|^k on the support
# square, using (1-q) L^2 = 4.  For phi/psi: 3 (square term) + 8 (xy term)
# + 8 (x^2+y^2 term) = 19.
_PHI_COEFF = 19.0

# Inputs up to this many elements take the broadcast (..., k) path (one log
# call); larger arrays accumulate per k to bound temporary memory.
_VECTOR_K_LIMIT = 8192


def _log_phi_sum(qp: QParams, delta: float, x, y, cfg: SeriesConfig):
    """sum_{k>=0} log phi_{q,k}(delta, x, y), array-capable."""
    q = qp.q
    n = _terms_needed(abs(q), _PHI_COEFF, cfg)
    r = math.exp(-delta)
    xy = np.multiply(x, y)
    ss = np.square(x) + np.square(y)
    shape = np.broadcast(np.asarray(xy), np.asarray(ss)).shape
    if int(np.prod(shape, dtype=np.int64)) <= _VECTOR_K_LIMIT:
        rs = r * q ** np.arange(n)
        terms = (
            (1.0 - rs * rs) ** 2
            - (1.0 - q) * rs * (1.0 + rs * rs) * np.asarray(xy)[..., None]
            + (1.0 - q) * rs * rs * np.asarray(ss)[..., None]
        )
        return np.log(terms).sum(axis=-1)
    acc = np.zeros(shape)
    for k in range(n):
        rs = r * q**k
        acc += np.log(
            (1.0 - rs * rs) ** 2 - (1.0 - q) * rs * (1.0 + rs * rs) * xy + (1.0 - q) * rs * rs * ss
        )
    return acc


def _log_psi_sum(qp: QParams, y1, y2, cfg: SeriesConfig):
    """sum_{k>=0} log psi_{q,k}(y1, y2), array-capable; the k=0 factor is
    (1-q)(y1-y2)^2 and must be nonzero."""
    q = qp.q
    n = _terms_needed(abs(q), _PHI_COEFF, cfg)
    xy = np.multiply(y1, y2)
    ss = np.square(y1) + np.square(y2)
    k0 = (1.0 - q) * np.square(np.subtract(y1, y2))
    if np.any(k0 == 0.0):
        raise SingularInput("psi_{q,0}(y,y) = 0: the zero-lag product diverges on the diagonal")
    shape = np.broadcast(np.asarray(xy), np.asarray(ss)).shape
    if int(np.prod(shape, dtype=np.int64)) <= _VECTOR_K_LIMIT:
        s = q ** np.arange(1, n) if n > 1 else np.empty(0)
        terms = (
            (1.0 - s * s) ** 2
            - (1.0 - q) * s * (1.0 + s * s) * np.asarray(xy)[..., None]
            + (1.0 - q) * s * s * np.asarray(ss)[..., None]
        )
        return np.log(k0) + np.log(terms).sum(axis=-1)
    acc = np.log(k0)
    for k in range(1, n):
        s = q**k
        acc += np.log((1.0 - s * s) ** 2 - (1.0 - q) * s * (1.0 + s * s) * xy + (1.0 - q) * s * s * ss)
    return acc


def Psi_inf(qp: QParams, y1, y2, cfg: SeriesConfig = DEFAULT_SERIES):
    """prod_{k>=0} 1 / psi_{q,k}(y1, y2).

    Raises SingularInput on the diagonal y1 == y2 where the k=0 factor
    vanishes.  Accepts scalars or broadcasting arrays.
    """
    _check_support(qp, y1, y2)
    out = np.exp(-_log_psi_sum(qp, y1, y2, cfg))
    if np.ndim(out) == 0:
        return float(out)
    return out
