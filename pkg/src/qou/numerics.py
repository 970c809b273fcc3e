"""Adaptive quadrature and monotone inversion.

integrate_1d wraps QUADPACK (scipy.integrate.quad) behind the package's
error-reporting contract.  integrate_edge removes the square-root vanishing
of the density at the support boundary with the substitution y = -L + u^2
(resp. y = L - u^2) before delegating to integrate_1d; without it, adaptive
subdivision converges too slowly for the eps^{3/2} margin masses needed by
the crossing-rate experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from scipy import integrate as _sp_integrate

from .errors import BracketInvalid, MaxSubdivisionsExceeded, NonFinite
from .qseries import QParams

__all__ = [
    "QuadConfig",
    "QuadResult",
    "DEFAULT_QUAD",
    "integrate_1d",
    "integrate_edge",
    "integrate_2d",
    "invert_monotone",
]


@dataclass(frozen=True)
class QuadConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 60

    def __post_init__(self) -> None:
        if not (self.abs_tol > 0.0 and self.rel_tol > 0.0):
            raise ValueError("quadrature tolerances must be strictly positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


@dataclass(frozen=True)
class QuadResult:
    value: float
    err_estimate: float
    evaluations: int


DEFAULT_QUAD = QuadConfig()


def integrate_1d(
    f: Callable[[float], float],
    a: float,
    b: float,
    cfg: QuadConfig = DEFAULT_QUAD,
    breakpoints: Sequence[float] | None = None,
) -> QuadResult:
    """Adaptive estimate of the integral of f over [a, b].

    `breakpoints` optionally marks interior feature locations (e.g. a sharp
    conditional-density peak) to guide subdivision; points outside (a, b)
    are ignored.
    """
    if not a < b:
        raise ValueError(f"need a < b, got a={a!r}, b={b!r}")
    count = [0]

    def wrapped(x: float) -> float:
        count[0] += 1
        v = f(x)
        if not math.isfinite(v):
            raise NonFinite(f"integrand returned {v!r} at x={x!r}")
        return v

    pts = None
    if breakpoints is not None:
        pts = [p for p in breakpoints if a < p < b]
        if not pts:
            pts = None
    result = _sp_integrate.quad(
        wrapped,
        a,
        b,
        epsabs=cfg.abs_tol,
        epsrel=cfg.rel_tol,
        limit=cfg.max_subdivisions,
        points=pts,
        full_output=1,
    )
    if len(result) > 3:
        value, err = result[0], result[1]
        raise MaxSubdivisionsExceeded(
            f"quadrature did not converge on [{a:g}, {b:g}]: {result[3]} "
            f"(value~{value:.6g}, err~{err:.2g})"
        )
    value, err, info = result
    return QuadResult(value=float(value), err_estimate=float(err), evaluations=int(info["neval"]))


def integrate_edge(
    f: Callable[[float], float],
    endpoint: str,
    width: float,
    qp: QParams,
    cfg: QuadConfig = DEFAULT_QUAD,
) -> QuadResult:
    """Integral of f over the margin of given width at one support endpoint.

    lower: integral over [-L, -L + width] via y = -L + u^2;
    upper: integral over [L - width, L] via y = L - u^2.
    """
    if not (0.0 < width < 2.0 * qp.L):
        raise ValueError(f"width must lie in (0, 2L), got {width!r}")
    L = qp.L
    if endpoint == "lower":
        g = lambda u: f(-L + u * u) * 2.0 * u
    elif endpoint == "upper":
        g = lambda u: f(L - u * u) * 2.0 * u
    else:
        raise ValueError(f"endpoint must be 'lower' or 'upper', got {endpoint!r}")
    return integrate_1d(g, 0.0, math.sqrt(width), cfg)


def integrate_2d(
    f: Callable[[float, float], float],
    box: tuple[float, float, float, float],
    cfg: QuadConfig = DEFAULT_QUAD,
) -> QuadResult:
    """Tensorized (nested 1-D) adaptive estimate over box = (x0, x1, y0, y1)."""
    x0, x1, y0, y1 = box
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"degenerate box {box!r}")
    inner_cfg = QuadConfig(
        abs_tol=max(cfg.abs_tol / (4.0 * (x1 - x0)), 1e-15),
        rel_tol=cfg.rel_tol / 4.0,
        max_subdivisions=cfg.max_subdivisions,
    )
    inner_err = [0.0]
    inner_evals = [0]

    def outer(x: float) -> float:
        r = integrate_1d(lambda y: f(x, y), y0, y1, inner_cfg)
        inner_err[0] = max(inner_err[0], r.err_estimate)
        inner_evals[0] += r.evaluations
        return r.value

    out = integrate_1d(outer, x0, x1, cfg)
    return QuadResult(
        value=out.value,
        err_estimate=out.err_estimate + (x1 - x0) * inner_err[0],
        evaluations=inner_evals[0] + out.evaluations,
    )


def invert_monotone(
    F: Callable[[float], float],
    target: float,
    bracket: tuple[float, float],
    cfg: QuadConfig = DEFAULT_QUAD,
    max_iter: int = 200,
) -> float:
    """Solve F(x) = target for nondecreasing F on the bracket.

    Illinois-damped regula falsi with bisection fallback; stops when
    |F(x) - target| <= cfg.abs_tol.
    """
    a, b = bracket
    if not a <= b:
        raise ValueError(f"invalid bracket {bracket!r}")
    fa = F(a) - target
    fb = F(b) - target
    if fa > 0.0 or fb < 0.0:
        raise BracketInvalid(
            f"target {target!r} outside [F(a), F(b)] = [{fa + target!r}, {fb + target!r}]"
        )
    if abs(fa) <= cfg.abs_tol:
        return a
    if abs(fb) <= cfg.abs_tol:
        return b
    side = 0
    for _ in range(max_iter):
        denom = fb - fa
        if denom != 0.0:
            x = a - fa * (b - a) / denom
            # Keep strictly inside; degenerate steps fall back to bisection.
            if not (a < x < b):
                x = 0.5 * (a + b)
        else:
            x = 0.5 * (a + b)
        fx = F(x) - target
        if abs(fx) <= cfg.abs_tol:
            return x
        if fx < 0.0:
            a, fa = x, fx
            if side == -1:
                fb *= 0.5
            side = -1
        else:
            b, fb = x, fx
            if side == +1:
                fa *= 0.5
            side = +1
        if b - a <= 1e-15 * max(1.0, abs(a), abs(b)):
            break
    raise MaxSubdivisionsExceeded(
        f"monotone inversion did not reach |F(x)-target| <= {cfg.abs_tol:g} "
        f"in {max_iter} iterations"
    )
