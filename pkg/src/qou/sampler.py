"""Sampling: stationary draws, inverse-CDF transition tables, and dyadic
path simulation.

Per-step rejection against the stationary envelope is infeasible at small
time steps (the kernel sup-ratio grows like delta^-3), so transitions are
sampled from a precomputed conditional quantile surface: for each source
state on a cosine-spaced grid, the conditional CDF is accumulated on a
boundary-substituted mesh and inverted by per-panel Newton iterations at
endpoint-refined probability levels.  Sampling is then a bilinear lookup.

Randomness contract: a draw stream is identified by (master_seed,
stream_id, substream).  Identical identifiers give bit-identical sequences;
distinct identifiers give independent Philox streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import IO

import numpy as np

from . import _kernels
from .density import _transition_pdf_y, marginal_pdf
from .qseries import DEFAULT_SERIES, QParams, SeriesConfig

__all__ = [
    "RngSeed",
    "TransitionTable",
    "PathGrid",
    "sample_stationary",
    "stationary_envelope",
    "build_transition_table",
    "sample_transition",
    "simulate_path",
]

_UINT64_MASK = (1 << 64) - 1

# Substream tags: one logical stream per (seed, purpose).
SUB_STATIONARY = 0
SUB_PATH = 1


@dataclass(frozen=True)
class RngSeed:
    """Identifies one reproducible random stream."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not (0 <= v <= _UINT64_MASK):
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v!r}")


def stream_generator(seed: RngSeed, substream: int) -> np.random.Generator:
    """Philox generator for the given (seed, substream)."""
    ss = np.random.SeedSequence(entropy=(seed.master_seed, seed.stream_id, substream))
    return np.random.Generator(np.random.Philox(ss))


def block_generator(
    master_seed: int, substream: int, block: int, first_row: int, row_len: int
) -> np.random.Generator:
    """Generator positioned at row `first_row` of the logical uniform matrix
    keyed by (master_seed, substream, block), rows of length row_len.

    row_len must be a multiple of 4 (the Philox counter advances in blocks
    of four 64-bit outputs).  Used by the batched Monte Carlo engine so any
    chunk of replicate rows can be produced independently of chunking.
    """
    if row_len % 4 != 0:
        raise ValueError("row_len must be a multiple of 4")
    bg = np.random.Philox(np.random.SeedSequence(entropy=(master_seed, substream, block)))
    if first_row:
        bg.advance(first_row * row_len // 4)
    return np.random.Generator(bg)


@lru_cache(maxsize=32)
def stationary_envelope(qp: QParams) -> float:
    """Envelope constant for uniform-proposal rejection: a tight upper bound
    on sup_x p(x), found by grid search plus local refinement."""
    xs = np.linspace(-qp.L, qp.L, 8193)
    vals = marginal_pdf(qp, xs)
    i = int(np.argmax(vals))
    lo = xs[max(i - 1, 0)]
    hi = xs[min(i + 1, len(xs) - 1)]
    for _ in range(60):
        grid = np.linspace(lo, hi, 9)
        v = marginal_pdf(qp, grid)
        j = int(np.argmax(v))
        lo = grid[max(j - 1, 0)]
        hi = grid[min(j + 1, 8)]
    peak = max(float(np.max(vals)), float(np.max(v)))
    return peak * (1.0 + 1e-9)


def sample_stationary(
    qp: QParams,
    seed: RngSeed,
    size: int | None = None,
    cfg: SeriesConfig = DEFAULT_SERIES,
    return_trials: bool = False,
):
    """Draw from the stationary law by rejection with a uniform proposal on
    [-L, L].  Expected trials per draw: 2 L sup p.  Returns a scalar when
    size is None, else an array; optionally also the total trial count."""
    n = 1 if size is None else int(size)
    gen = stream_generator(seed, SUB_STATIONARY)
    env = stationary_envelope(qp)
    out = np.empty(n)
    filled = 0
    trials = 0
    # Expected acceptance rate is 1 / (2 L env); batch accordingly.
    per_draw = max(2.0 * qp.L * env, 1.0)
    while filled < n:
        m = max(64, int(math.ceil(1.3 * (n - filled) * per_draw)))
        u = gen.random((m, 2))
        cand = -qp.L + 2.0 * qp.L * u[:, 0]
        acc = u[:, 1] * env <= marginal_pdf(qp, cand, cfg)
        take = cand[acc]
        k = min(len(take), n - filled)
        out[filled : filled + k] = take[:k]
        filled += k
        trials += m
    if size is None:
        result = float(out[0])
    else:
        result = out
    if return_trials:
        return result, trials
    return result


@dataclass(frozen=True)
class TransitionTable:
    """Conditional quantile surface of the one-step kernel for one (q, delta).

    quantiles[i, j] is the u_grid[j]-quantile of the conditional law started
    from x_grid[i] after time delta = 2^-n.  Rows are nondecreasing in u and
    stay within [-L, L]; sampling interpolates bilinearly.
    """

    qp: QParams
    delta: float
    x_grid: np.ndarray
    u_grid: np.ndarray
    quantiles: np.ndarray
    lut_x: np.ndarray = field(repr=False, default=None)
    lut_u: np.ndarray = field(repr=False, default=None)

    def __post_init__(self) -> None:
        if self.lut_x is None:
            object.__setattr__(
                self, "lut_x", _kernels.build_cell_lut(self.x_grid, -self.qp.L, self.qp.L)
            )
        if self.lut_u is None:
            object.__setattr__(self, "lut_u", _kernels.build_cell_lut(self.u_grid, 0.0, 1.0))


def _gl_nodes(panel_edges: np.ndarray, deg: int):
    """Gauss-Legendre nodes/weights on each panel; returns (P, deg) arrays."""
    gx, gw = np.polynomial.legendre.leggauss(deg)
    h = np.diff(panel_edges)
    mid = 0.5 * (panel_edges[:-1] + panel_edges[1:])
    nodes = mid[:, None] + 0.5 * h[:, None] * gx[None, :]
    weights = 0.5 * h[:, None] * gw[None, :]
    return nodes, weights


def _half_masses(qp, delta, x_rows, edges, deg, side, cfg):
    """Per-panel conditional masses on one substituted half of the support.

    side 'lower': y = -L + s^2 covers [-L, 0]; 'upper': y = L - v^2 covers
    [0, L] with the cumulative taken from the boundary inward.
    """
    nodes, weights = _gl_nodes(edges, deg)
    s = nodes.ravel()
    if side == "lower":
        y = -qp.L + s * s
    else:
        y = qp.L - s * s
    g = _transition_pdf_y(qp, delta, x_rows[:, None], y[None, :], cfg) * (2.0 * s)[None, :]
    g = g.reshape(len(x_rows), len(edges) - 1, deg)
    masses = np.einsum("rpd,pd->rp", g, weights)
    return np.maximum(masses, 0.0)


def _invert_half(qp, delta, x_of_pair, edges, cum_rows, pair_rows, targets, side, deg, iters, cfg):
    """Solve cumulative(s) = target within located panels by vectorized
    Newton iterations; returns the substituted coordinate s."""
    npairs = len(targets)
    if npairs == 0:
        return np.empty(0)
    # Locate panels: cum_rows has shape (rows, P+1) cumulative at edges.
    pan = np.empty(npairs, dtype=np.int64)
    for r in np.unique(pair_rows):
        m = pair_rows == r
        pan[m] = np.searchsorted(cum_rows[r], targets[m], side="right") - 1
    pan = np.clip(pan, 0, len(edges) - 2)
    s_lo = edges[pan]
    s_hi = edges[pan + 1]
    c_lo = cum_rows[pair_rows, pan]
    c_hi = cum_rows[pair_rows, pan + 1]
    dm = np.maximum(c_hi - c_lo, 1e-300)
    s = s_lo + (targets - c_lo) / dm * (s_hi - s_lo)
    gx, gw = np.polynomial.legendre.leggauss(deg)
    xs = x_of_pair
    for _ in range(iters):
        h = s - s_lo
        nodes = s_lo[:, None] + h[:, None] * (0.5 * (gx + 1.0))[None, :]
        if side == "lower":
            yn = -qp.L + nodes * nodes
        else:
            yn = qp.L - nodes * nodes
        gvals = _transition_pdf_y(qp, delta, xs[:, None], yn, cfg) * 2.0 * nodes
        local = 0.5 * h * (gvals @ gw)
        resid = c_lo + local - targets
        if side == "lower":
            ys = -qp.L + s * s
        else:
            ys = qp.L - s * s
        deriv = _transition_pdf_y(qp, delta, xs, ys, cfg) * 2.0 * s
        step = resid / np.maximum(deriv, 1e-300)
        s = np.clip(s - step, s_lo, s_hi)
    return s


def build_transition_table(
    qp: QParams,
    n: int,
    nx: int = 512,
    nu: int = 1024,
    cfg: SeriesConfig = DEFAULT_SERIES,
    panels: int = 512,
    gl_deg: int = 10,
    newton_iters: int = 4,
    row_slab: int = 64,
) -> TransitionTable:
    """Build the conditional quantile surface for time step delta = 2^-n.

    x_grid is cosine-spaced (denser near +-L where the conditional law
    pins to the boundary); u_grid is endpoint-refined Chebyshev so extreme
    quantiles are resolved.  Each row's CDF is accumulated by composite
    Gauss-Legendre quadrature in the boundary-substituted coordinate and
    inverted by per-panel Newton steps, vectorized across rows and levels.
    """
    if n < 0:
        raise ValueError(f"dyadic resolution n must be >= 0, got {n!r}")
    if nx < 2 or nu < 2:
        raise ValueError("need nx >= 2 and nu >= 2")
    delta = 0.5**n
    L = qp.L
    x_grid = -L * np.cos(np.pi * np.arange(nx) / (nx - 1))
    x_grid[0], x_grid[-1] = -L, L
    u_grid = 0.5 * (1.0 - np.cos(np.pi * np.arange(nu) / (nu - 1)))
    u_grid[0], u_grid[-1] = 0.0, 1.0

    edges = math.sqrt(L) * np.linspace(0.0, 1.0, panels + 1)
    quant = np.empty((nx, nu))
    quant[:, 0] = -L
    quant[:, -1] = L
    inner = u_grid[1:-1]

    for lo in range(0, nx, row_slab):
        rows = x_grid[lo : lo + row_slab]
        m_lo = _half_masses(qp, delta, rows, edges, gl_deg, "lower", cfg)
        m_hi = _half_masses(qp, delta, rows, edges, gl_deg, "upper", cfg)
        cum_lo = np.concatenate([np.zeros((len(rows), 1)), np.cumsum(m_lo, axis=1)], axis=1)
        cum_hi = np.concatenate([np.zeros((len(rows), 1)), np.cumsum(m_hi, axis=1)], axis=1)
        z = cum_lo[:, -1] + cum_hi[:, -1]

        # Flatten (row, level) pairs and split by half.
        tgt = inner[None, :] * z[:, None]
        pair_rows = np.repeat(np.arange(len(rows)), len(inner))
        tgt_flat = tgt.ravel()
        left = tgt_flat <= np.repeat(cum_lo[:, -1], len(inner))

        y_flat = np.empty(len(tgt_flat))
        s = _invert_half(
            qp, delta, rows[pair_rows[left]], edges, cum_lo, pair_rows[left],
            tgt_flat[left], "lower", 6, newton_iters, cfg,
        )
        y_flat[left] = -L + s * s
        right = ~left
        tail = np.repeat(z, len(inner))[right] - tgt_flat[right]
        s = _invert_half(
            qp, delta, rows[pair_rows[right]], edges, cum_hi, pair_rows[right],
            tail, "upper", 6, newton_iters, cfg,
        )
        y_flat[right] = L - s * s
        quant[lo : lo + row_slab, 1:-1] = y_flat.reshape(len(rows), len(inner))

    # Guarantee the monotone-row invariant against float dust.
    quant = np.maximum.accumulate(quant, axis=1)
    np.clip(quant, -L, L, out=quant)
    return TransitionTable(qp=qp, delta=delta, x_grid=x_grid, u_grid=u_grid, quantiles=quant)


def sample_transition(table: TransitionTable, x, u):
    """Quantile-surface transition draw: bilinear interpolation at (x, u),
    clamped to the support.  Array-capable."""
    out = _kernels.interp_bilinear(
        table.x_grid, table.u_grid, table.quantiles, table.qp.L, x, u
    )
    if np.ndim(x) == 0 and np.ndim(u) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class PathGrid:
    """A trajectory sampled on the dyadic grid i / 2^n, i = 0..horizon*2^n."""

    n: int
    horizon: int
    values: np.ndarray
    seed: RngSeed

    def __post_init__(self) -> None:
        expected = self.horizon * 2**self.n + 1
        if len(self.values) != expected:
            raise ValueError(
                f"values must have length horizon*2^n + 1 = {expected}, got {len(self.values)}"
            )

    def write_csv(self, fh: IO[str]) -> None:
        """CSV with header t,x; t in fixed-point decimal of i/2^n."""
        step = 0.5**self.n
        fh.write("t,x\n")
        for i, v in enumerate(self.values):
            fh.write(f"{i * step:.{self.n}f},{float(v)!r}\n")


def simulate_path(
    qp: QParams,
    n: int,
    horizon: int,
    seed: RngSeed,
    table: TransitionTable,
) -> PathGrid:
    """Simulate one trajectory: stationary start, then table-sampled
    transitions driven by the seed's path substream."""
    if table.qp != qp or table.delta != 0.5**n:
        raise ValueError("table was built for different (q, n)")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon!r}")
    steps = horizon * 2**n
    values = np.empty(steps + 1)
    values[0] = sample_stationary(qp, seed)
    u = stream_generator(seed, SUB_PATH).random(steps)
    if _kernels.HAVE_NUMBA:
        state = values[:1].copy()
        out = np.empty((1, steps))
        _kernels.evolve_store(
            state, u[None, :], table.x_grid, table.u_grid, table.quantiles,
            table.lut_x, table.lut_u, qp.L, out,
        )
        values[1:] = out[0]
    else:
        x = values[0]
        for i in range(steps):
            x = sample_transition(table, x, u[i])
            values[i + 1] = x
    return PathGrid(n=n, horizon=horizon, values=values, seed=seed)
