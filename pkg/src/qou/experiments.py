"""Quantitative experiments: quadrature verification of the cubic crossing
law, Monte Carlo crossing statistics with a Poisson goodness-of-fit, and
grid verification of every kernel inequality and expansion the analysis
relies on.

Deterministic experiments are bit-reproducible from their configuration.
Monte Carlo experiments are bit-reproducible from (configuration,
master_seed) for any thread count: replicate r consumes uniforms only from
logical stream row r of counter-keyed Philox blocks, and all accumulators
are per-replicate slots combined in fixed order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _sp_stats

from . import _kernels
from .density import (
    kernel_ratio,
    kernel_ratio_lower_bound,
    kernel_ratio_upper_bound,
    marginal_pdf,
)
from .errors import BudgetExceeded, DomainError
from .numerics import DEFAULT_QUAD, QuadConfig, integrate_2d, integrate_edge
from .qseries import (
    DEFAULT_SERIES,
    Psi_inf,
    QParams,
    SeriesConfig,
    alpha_q,
    phi,
    phi0_lower_bound,
    phi_lower_bound,
)
from .sampler import (
    SUB_PATH,
    SUB_STATIONARY,
    TransitionTable,
    block_generator,
    build_transition_table,
    stationary_envelope,
)

__all__ = [
    "Estimate",
    "ExperimentReport",
    "quadrature_jump_rate",
    "margin_mass_asymptotics",
    "mc_jump_probability",
    "mc_poisson_limit",
    "mc_double_jump",
    "verify_kernel_bounds",
    "verify_small_rho_expansions",
    "mixing_decay",
]

DEFAULT_STEP_CAP = 2e10  # transitions per experiment invocation

_CHUNK_REPLICATES = 65536  # fixed so results never depend on thread count
_BLOCK_STEPS = 4096  # multiple of 4 (Philox counter granularity)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float = 0.0


@dataclass
class ExperimentReport:
    """Structured result of one experiment run."""

    experiment_name: str
    config: dict
    estimates: dict[str, Estimate] = field(default_factory=dict)
    verdicts: dict[str, bool] = field(default_factory=dict)
    seed: int | None = None
    wall_time_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_json_dict(self) -> dict:
        return {
            "name": self.experiment_name,
            "config": self.config,
            "estimates": {
                k: {"value": float(e.value), "stderr": float(e.stderr)}
                for k, e in self.estimates.items()
            },
            "verdicts": {k: bool(v) for k, v in self.verdicts.items()},
            "seed": self.seed,
            "wall_time": self.wall_time_seconds,
        }


def _set_threads(threads: int | None) -> int:
    if not _kernels.HAVE_NUMBA:
        return 1
    import numba

    n = 1 if threads is None else int(threads)
    n = max(1, min(n, numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


# ---------------------------------------------------------------------------
# Batched Monte Carlo engine
# ---------------------------------------------------------------------------


def _stationary_batch(
    qp: QParams, master_seed: int, r0: int, r1: int, cfg: SeriesConfig
) -> np.ndarray:
    """Stationary draws for replicate rows [r0, r1) by vectorized rejection.

    Round t draws one (proposal, accept) pair per replicate from the
    counter block keyed (master_seed, SUB_STATIONARY, t); a replicate's
    value depends only on its own row, so chunking is immaterial.
    """
    env = stationary_envelope(qp)
    m = r1 - r0
    out = np.empty(m)
    pending = np.ones(m, dtype=bool)
    rnd = 0
    while pending.any():
        gen = block_generator(master_seed, SUB_STATIONARY, rnd, r0, 4)
        u = gen.random((m, 4))
        cand = -qp.L + 2.0 * qp.L * u[:, 0]
        acc = pending & (u[:, 1] * env <= marginal_pdf(qp, cand, cfg))
        out[acc] = cand[acc]
        pending &= ~acc
        rnd += 1
        if rnd > 100_000:  # pragma: no cover - acceptance rate is O(1)
            raise RuntimeError("stationary rejection failed to terminate")
    return out


def _run_crossing_mc(
    qp: QParams,
    table: TransitionTable,
    epsilon: float,
    n: int,
    horizon: int,
    replicates: int,
    master_seed: int,
    threads: int | None = None,
    snapshot_steps: tuple[int, ...] = (),
    series_cfg: SeriesConfig = DEFAULT_SERIES,
    force_numpy: bool = False,
):
    """Simulate `replicates` paths of `horizon` unit intervals, counting
    margin crossings per interval.

    Returns (W, ge2, snapshots): W[r] = number of unit intervals with at
    least one crossing, ge2[r] = True if some interval had two or more,
    snapshots[step] = states of all replicates at that global step.
    """
    spu = 2**n
    total_steps = horizon * spu
    lo_thr = -qp.L + epsilon
    hi_thr = qp.L - epsilon
    _set_threads(threads)
    use_numba = _kernels.HAVE_NUMBA and not force_numpy

    W = np.zeros(replicates, dtype=np.int64)
    ge2 = np.zeros(replicates, dtype=bool)
    snapshots = {int(s): np.empty(replicates) for s in snapshot_steps}

    for r0 in range(0, replicates, _CHUNK_REPLICATES):
        r1 = min(r0 + _CHUNK_REPLICATES, replicates)
        states = _stationary_batch(qp, master_seed, r0, r1, series_cfg)
        if 0 in snapshots:
            snapshots[0][r0:r1] = states
        cnt = np.zeros(r1 - r0, dtype=np.int64)
        w = np.zeros(r1 - r0, dtype=np.int64)
        g2 = np.zeros(r1 - r0, dtype=bool)
        step0 = 0
        block = 0
        while step0 < total_steps:
            b_len = min(_BLOCK_STEPS, total_steps - step0)
            padded = (b_len + 3) // 4 * 4
            gen = block_generator(master_seed, SUB_PATH, block, r0, padded)
            U = gen.random((r1 - r0, padded))[:, :b_len]
            # Split at interior snapshot steps; uniforms come from the fixed
            # block schedule either way, so snapshots do not perturb paths.
            cuts = sorted(
                {s - step0 for s in snapshots if step0 < s <= step0 + b_len} | {b_len}
            )
            seg_start = 0
            for cut in cuts:
                seg = np.ascontiguousarray(U[:, seg_start:cut])
                if seg.shape[1]:
                    args = (
                        states, seg, table.x_grid, table.u_grid, table.quantiles,
                        table.lut_x, table.lut_u, qp.L, lo_thr, hi_thr, spu,
                        step0 + seg_start, cnt, w, g2,
                    )
                    if use_numba:
                        _kernels.evolve_count(*args)
                    else:
                        _kernels.evolve_count_numpy(*args)
                if step0 + cut in snapshots:
                    snapshots[step0 + cut][r0:r1] = states
                seg_start = cut
            step0 += b_len
            block += 1
        W[r0:r1] = w
        ge2[r0:r1] = g2
    return W, ge2, snapshots


# ---------------------------------------------------------------------------
# Deterministic quadrature experiments
# ---------------------------------------------------------------------------


def quadrature_jump_rate(
    qp: QParams,
    epsilon: float,
    quad_cfg: QuadConfig = DEFAULT_QUAD,
    series_cfg: SeriesConfig = DEFAULT_SERIES,
) -> ExperimentReport:
    """Deterministic corner-integral value of the unit-interval crossing rate.

    F(eps) = 2 (q;q)_inf * double integral of p(y1) p(y2) Psi(y1, y2) over
    the corner box [-L, -L+eps] x [L-eps, L], computed with the boundary
    substitutions y1 = -L + s^2, y2 = L - t^2 on both axes.  Reports F,
    F/eps^3, the ratio against the limiting rate alpha_q eps^3, and the
    corner-product factorization diagnostics.
    """
    t_start = time.perf_counter()
    L = qp.L
    if not (0.0 < epsilon < L / 4.0):
        raise DomainError(f"epsilon must lie in (0, L/4) for the corner regime, got {epsilon!r}")

    def integrand(s: float, t: float) -> float:
        y1 = -L + s * s
        y2 = L - t * t
        return (
            float(marginal_pdf(qp, y1, series_cfg))
            * float(marginal_pdf(qp, y2, series_cfg))
            * Psi_inf(qp, y1, y2, series_cfg)
            * 4.0
            * s
            * t
        )

    r = math.sqrt(epsilon)
    inner = integrate_2d(integrand, (0.0, r, 0.0, r), quad_cfg)
    F = 2.0 * qp.qq_inf * inner.value
    F_err = 2.0 * qp.qq_inf * inner.err_estimate
    a = alpha_q(qp, series_cfg)
    mass = integrate_edge(lambda y: float(marginal_pdf(qp, y, series_cfg)), "lower", epsilon, qp, quad_cfg)
    psi_corner = Psi_inf(qp, -L, L, series_cfg)
    corner_cap = 2.0 * qp.qq_inf * psi_corner * mass.value**2

    report = ExperimentReport(
        experiment_name="quadrature_jump_rate",
        config={
            "q": qp.q,
            "epsilon": epsilon,
            "abs_tol": quad_cfg.abs_tol,
            "rel_tol": quad_cfg.rel_tol,
            "series_tol": series_cfg.tol,
        },
        seed=None,
    )
    report.estimates = {
        "F": Estimate(F, F_err),
        "F_over_eps3": Estimate(F / epsilon**3, F_err / epsilon**3),
        "ratio_to_alpha": Estimate(F / (a * epsilon**3), F_err / (a * epsilon**3)),
        "alpha_q": Estimate(a),
        "margin_mass": Estimate(mass.value, mass.err_estimate),
        # Corner-value factorization F / (2 (q;q)_inf Psi(-L,L) m(eps)^2);
        # tends to 1 as eps -> 0 (from above for q >= 0: the corner is where
        # Psi is smallest on the box, so the factorized value floors F).
        "corner_ratio": Estimate(F / corner_cap),
    }
    report.verdicts = {
        "rate_positive": F > 0.0,
        "corner_ratio_positive": F / corner_cap > 0.0,
    }
    report.wall_time_seconds = time.perf_counter() - t_start
    return report


def margin_mass_asymptotics(
    qp: QParams,
    epsilon_list: tuple[float, ...],
    quad_cfg: QuadConfig = DEFAULT_QUAD,
    series_cfg: SeriesConfig = DEFAULT_SERIES,
) -> ExperimentReport:
    """Boundary-margin stationary mass against its cubic-root-law asymptote
    (q;q)_inf^3/(2 pi) * (4/3) (eps sqrt(1-q))^{3/2} along an epsilon ladder."""
    t_start = time.perf_counter()
    eps = sorted(epsilon_list, reverse=True)
    if not eps or not all(0.0 < e < qp.L / 4.0 for e in eps):
        raise DomainError("epsilon ladder must lie in (0, L/4)")
    f = lambda y: float(marginal_pdf(qp, y, series_cfg))
    ratios = []
    report = ExperimentReport(
        experiment_name="margin_mass_asymptotics",
        config={
            "q": qp.q,
            "epsilon_list": list(eps),
            "abs_tol": quad_cfg.abs_tol,
            "rel_tol": quad_cfg.rel_tol,
            "symmetry_tolerance": 1e-12,
        },
        seed=None,
    )
    sym_ok = True
    for e in eps:
        lo = integrate_edge(f, "lower", e, qp, quad_cfg)
        hi = integrate_edge(f, "upper", e, qp, quad_cfg)
        asym = qp.qq_inf**3 / (2.0 * math.pi) * (4.0 / 3.0) * (e * math.sqrt(1.0 - qp.q)) ** 1.5
        ratio = lo.value / asym
        ratios.append(ratio)
        sym_ok &= abs(lo.value - hi.value) <= 1e-12 * max(1.0, lo.value)
        report.estimates[f"mass[{e:g}]"] = Estimate(lo.value, lo.err_estimate)
        report.estimates[f"ratio[{e:g}]"] = Estimate(ratio, lo.err_estimate / asym)
    gaps = [abs(r - 1.0) for r in ratios]
    report.verdicts = {
        "ratio_gap_strictly_decreasing": all(b < a for a, b in zip(gaps, gaps[1:])),
        "margins_symmetric": bool(sym_ok),
    }
    report.wall_time_seconds = time.perf_counter() - t_start
    return report


# ---------------------------------------------------------------------------
# Monte Carlo experiments
# ---------------------------------------------------------------------------


def _check_budget(steps: float, step_cap: float) -> None:
    if steps > step_cap:
        raise BudgetExceeded(
            f"run would take {steps:.3g} transition steps, exceeding the cap {step_cap:.3g}; "
            "raise step_cap explicitly to proceed"
        )


def mc_jump_probability(
    qp: QParams,
    epsilon: float,
    n: int,
    replicates: int,
    seed: int,
    threads: int | None = None,
    table: TransitionTable | None = None,
    quad_cfg: QuadConfig = DEFAULT_QUAD,
    series_cfg: SeriesConfig = DEFAULT_SERIES,
    step_cap: float = DEFAULT_STEP_CAP,
    table_doubling_check: bool = False,
) -> ExperimentReport:
    """Monte Carlo estimate of the unit-interval crossing probability at
    dyadic resolution n, compared against the quadrature rate F(eps)."""
    t_start = time.perf_counter()
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if not (0.0 < epsilon < qp.L):
        raise DomainError(f"epsilon must lie in (0, L), got {epsilon!r}")
    _check_budget(float(replicates) * 2**n * (2.0 if table_doubling_check else 1.0), step_cap)
    if table is None:
        table = build_transition_table(qp, n, cfg=series_cfg)
    W, _, _ = _run_crossing_mc(
        qp, table, epsilon, n, 1, replicates, seed, threads, series_cfg=series_cfg
    )
    hits = int((W >= 1).sum())
    p_hat = hits / replicates
    se = math.sqrt(p_hat * (1.0 - p_hat) / replicates)
    in_corner_regime = epsilon < qp.L / 4.0

    report = ExperimentReport(
        experiment_name="mc_jump_probability",
        config={
            "q": qp.q,
            "epsilon": epsilon,
            "n": n,
            "replicates": replicates,
            "series_tol": series_cfg.tol,
            "agreement_band_se": 3.0,
            "quadrature_comparison": in_corner_regime,
        },
        seed=seed,
    )
    report.estimates = {
        "p_hat": Estimate(p_hat, se),
        "p_hat_over_eps3": Estimate(p_hat / epsilon**3, se / epsilon**3),
        "alpha_eps3": Estimate(alpha_q(qp, series_cfg) * epsilon**3),
        "crossings_observed": Estimate(float(hits)),
    }
    if in_corner_regime:
        rate = quadrature_jump_rate(qp, epsilon, quad_cfg, series_cfg)
        F = rate.estimates["F"].value
        report.estimates["quadrature_F"] = Estimate(F, rate.estimates["F"].stderr)
        report.estimates["mc_over_quadrature"] = Estimate(
            p_hat / F if F else math.nan, se / F if F else math.nan
        )
        combined = 3.0 * (se + rate.estimates["F"].stderr)
        report.verdicts["within_3se_of_quadrature"] = abs(p_hat - F) <= combined

    if table_doubling_check:
        dense = build_transition_table(
            qp, n, nx=2 * len(table.x_grid), nu=2 * len(table.u_grid), cfg=series_cfg
        )
        W2, _, _ = _run_crossing_mc(
            qp, dense, epsilon, n, 1, replicates, seed, threads, series_cfg=series_cfg
        )
        p2 = float((W2 >= 1).mean())
        se2 = math.sqrt(p2 * (1.0 - p2) / replicates)
        report.estimates["p_hat_doubled_table"] = Estimate(p2, se2)
        report.verdicts["table_bias_below_mc_error"] = abs(p2 - p_hat) <= max(se + se2, 1e-12)
    report.wall_time_seconds = time.perf_counter() - t_start
    return report


def _poisson_chi2(w_hist: np.ndarray, lam: float, replicates: int):
    """Chi-square GOF statistic and p-value against Poisson(lam), merging
    bins with expected count below 5 into the tail."""
    kmax = len(w_hist) - 1
    pois = np.array([math.exp(-lam) * lam**k / math.factorial(k) for k in range(kmax + 1)])
    tail = max(1.0 - pois.sum(), 0.0)
    expected = np.append(pois, tail) * replicates
    observed = np.append(w_hist, 0).astype(float)
    # Merge from the right until every kept bin expects >= 5.
    obs_m, exp_m = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed[::-1], expected[::-1]):
        acc_o += o
        acc_e += e
        if acc_e >= 5.0:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0.0 and exp_m:
        obs_m[-1] += acc_o
        exp_m[-1] += acc_e
    obs_m = np.array(obs_m[::-1])
    exp_m = np.array(exp_m[::-1])
    dof = len(obs_m) - 2  # lambda was estimated from the sample
    if dof < 1:
        return 0.0, 1.0, len(obs_m)
    stat = float(np.sum((obs_m - exp_m) ** 2 / exp_m))
    return stat, float(_sp_stats.chi2.sf(stat, dof)), len(obs_m)


def mc_poisson_limit(
    qp: QParams,
    epsilon: float,
    n: int,
    window_scale: float,
    replicates: int,
    seed: int,
    threads: int | None = None,
    table: TransitionTable | None = None,
    series_cfg: SeriesConfig = DEFAULT_SERIES,
    step_cap: float = DEFAULT_STEP_CAP,
) -> ExperimentReport:
    """Distribution of the number of crossing-active unit intervals over the
    enlarged window of ceil(window_scale / eps^3) intervals, against the
    Poisson law with the empirically matched mean."""
    t_start = time.perf_counter()
    if window_scale <= 0.0:
        raise ValueError("window_scale must be positive")
    if not (0.0 < epsilon < qp.L):
        raise DomainError(f"epsilon must lie in (0, L), got {epsilon!r}")
    T = int(math.ceil(window_scale / epsilon**3))
    _check_budget(float(T) * 2**n * replicates, step_cap)
    if table is None:
        table = build_transition_table(qp, n, cfg=series_cfg)
    W, _, _ = _run_crossing_mc(
        qp, table, epsilon, n, T, replicates, seed, threads, series_cfg=series_cfg
    )
    lam = float(W.mean())
    var = float(W.var(ddof=1)) if replicates > 1 else 0.0
    hist = np.bincount(W)
    stat, pval, bins = _poisson_chi2(hist, lam, replicates) if lam > 0 else (0.0, 1.0, 1)
    kmax = len(hist) - 1
    pois = np.array([math.exp(-lam) * lam**k / math.factorial(k) for k in range(kmax + 1)])
    tv = 0.5 * (np.abs(hist / replicates - pois).sum() + max(1.0 - pois.sum(), 0.0))

    p_ge1 = float((W >= 1).mean())
    p_ge2 = float((W >= 2).mean())
    pois_ge1 = 1.0 - math.exp(-lam)
    pois_ge2 = pois_ge1 - lam * math.exp(-lam)

    report = ExperimentReport(
        experiment_name="mc_poisson_limit",
        config={
            "q": qp.q,
            "epsilon": epsilon,
            "n": n,
            "window_scale": window_scale,
            "window_intervals": T,
            "replicates": replicates,
            "series_tol": series_cfg.tol,
            "chi2_pvalue_floor": 0.01,
            "var_over_mean_band": [0.8, 1.25],
        },
        seed=seed,
    )
    se_lam = math.sqrt(var / replicates) if replicates > 1 else 0.0
    report.estimates = {
        "lambda_hat": Estimate(lam, se_lam),
        "mean_W": Estimate(lam, se_lam),
        "var_W": Estimate(var),
        "var_over_mean": Estimate(var / lam if lam > 0 else math.nan),
        "tv_distance": Estimate(float(tv)),
        "chi2_stat": Estimate(stat),
        "chi2_pvalue": Estimate(pval),
        "chi2_bins": Estimate(float(bins)),
        "p_ge1": Estimate(p_ge1, math.sqrt(p_ge1 * (1 - p_ge1) / replicates)),
        "p_ge2": Estimate(p_ge2, math.sqrt(p_ge2 * (1 - p_ge2) / replicates)),
        "poisson_p_ge1": Estimate(pois_ge1),
        "poisson_p_ge2": Estimate(pois_ge2),
    }
    vm = var / lam if lam > 0 else math.nan
    report.verdicts = {
        "chi2_pvalue_above_floor": bool(pval > 0.01),
        "var_over_mean_in_band": bool(lam > 0 and 0.8 <= vm <= 1.25),
    }
    report.wall_time_seconds = time.perf_counter() - t_start
    return report


def mc_double_jump(
    qp: QParams,
    epsilon: float,
    n: int,
    replicates: int,
    seed: int,
    threads: int | None = None,
    table: TransitionTable | None = None,
    series_cfg: SeriesConfig = DEFAULT_SERIES,
    step_cap: float = DEFAULT_STEP_CAP,
) -> ExperimentReport:
    """Estimate of the probability of two or more crossings within one unit
    interval; reports the rule-of-three bound when no event is observed."""
    t_start = time.perf_counter()
    _check_budget(float(replicates) * 2**n, step_cap)
    if table is None:
        table = build_transition_table(qp, n, cfg=series_cfg)
    W, ge2, _ = _run_crossing_mc(
        qp, table, epsilon, n, 1, replicates, seed, threads, series_cfg=series_cfg
    )
    p1 = float((W >= 1).mean())
    doubles = int(ge2.sum())
    p2 = doubles / replicates
    se2 = math.sqrt(p2 * (1.0 - p2) / replicates)
    p2_ub = 3.0 / replicates if doubles == 0 else p2 + 3.0 * se2

    report = ExperimentReport(
        experiment_name="mc_double_jump",
        config={
            "q": qp.q,
            "epsilon": epsilon,
            "n": n,
            "replicates": replicates,
            "dominance_factor": 0.2,
        },
        seed=seed,
    )
    report.estimates = {
        "p_single": Estimate(p1, math.sqrt(p1 * (1 - p1) / replicates)),
        "p_double": Estimate(p2, se2),
        "p_double_ub95": Estimate(p2_ub),
        "doubles_observed": Estimate(float(doubles)),
    }
    report.verdicts = {
        "double_rate_dominated": p2_ub <= 0.2 * p1 if p1 > 0 else doubles == 0,
    }
    report.wall_time_seconds = time.perf_counter() - t_start
    return report


# ---------------------------------------------------------------------------
# Inequality and expansion verification
# ---------------------------------------------------------------------------


def _refine_minimum(fn, x0: float, y0: float, lo: float, hi: float, rounds: int = 60):
    """Shrinking-window grid descent for a smooth bivariate minimum."""
    x, y = x0, y0
    half = (hi - lo) / 16.0
    best = fn(x, y)
    for _ in range(rounds):
        xs = np.clip(np.linspace(x - half, x + half, 9), lo, hi)
        ys = np.clip(np.linspace(y - half, y + half, 9), lo, hi)
        vals = fn(xs[:, None], ys[None, :])
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        x, y, best = float(xs[i]), float(ys[j]), float(vals[i, j])
        half *= 0.6
    return best, x, y


def verify_kernel_bounds(
    qp: QParams,
    delta_list: tuple[float, ...],
    grid_size: int = 128,
    series_cfg: SeriesConfig = DEFAULT_SERIES,
) -> ExperimentReport:
    """Grid verification of the kernel-factor inequalities.

    (a) the located minimum of the k-th kernel factor over the support
        square equals (1 - e^{-delta} |q|^k)^4;
    (b) the k = 0 factor dominates e^{-2 delta}(16 sinh^4(delta/2)
        + (1-q)(x-y)^2) everywhere;
    (c) the transition/stationary density ratio lies between the envelope
        lower bound C(x, e^{-t}, q) and (e^{-2t};q)_inf / (e^{-t};q)_inf^4
        for every t >= 0.1 in the list.
    Violations are counted at the tolerances recorded in the config.
    """
    t_start = time.perf_counter()
    if grid_size < 100:
        raise ValueError("grid_size must be >= 100 per axis")
    L = qp.L
    min_tol = 1e-10
    dominance_dust = 1e-12
    ratio_rel_tol = 1e-8

    report = ExperimentReport(
        experiment_name="verify_kernel_bounds",
        config={
            "q": qp.q,
            "delta_list": list(delta_list),
            "grid_size": grid_size,
            "min_match_tolerance": min_tol,
            "dominance_dust_tolerance": dominance_dust,
            "ratio_relative_tolerance": ratio_rel_tol,
            "ratio_min_time": 0.1,
        },
        seed=None,
    )
    xs = np.linspace(-L, L, grid_size)
    grid_x = xs[:, None]
    grid_y = xs[None, :]

    worst_min_gap = 0.0
    dominance_violations = 0
    dominance_witness = None
    for d in delta_list:
        for k in (0, 1, 2):
            vals = phi(qp, k, d, grid_x, grid_y)
            i, j = np.unravel_index(np.argmin(vals), vals.shape)
            located, _, _ = _refine_minimum(
                lambda a, b: phi(qp, k, d, a, b), float(xs[i]), float(xs[j]), -L, L
            )
            gap = abs(located - phi_lower_bound(qp, k, d))
            worst_min_gap = max(worst_min_gap, gap)
            report.estimates[f"phi_min_gap[k={k},delta={d:g}]"] = Estimate(gap)
        lhs = phi(qp, 0, d, grid_x, grid_y)
        rhs = phi0_lower_bound(qp, d, grid_x, grid_y)
        bad = lhs - rhs < -dominance_dust
        dominance_violations += int(bad.sum())
        if bad.any() and dominance_witness is None:
            i, j = np.unravel_index(np.argmax(bad), bad.shape)
            dominance_witness = (float(xs[i]), float(xs[j]), d)

    ratio_violations = 0
    ratio_witness = None
    for t in delta_list:
        if t < 0.1:
            continue
        ratio = kernel_ratio(qp, t, grid_x, grid_y, series_cfg)
        ub = kernel_ratio_upper_bound(qp, t, series_cfg)
        lb = kernel_ratio_lower_bound(qp, math.exp(-t), xs, series_cfg)[:, None]
        bad = (ratio > ub * (1.0 + ratio_rel_tol)) | (ratio < lb * (1.0 - ratio_rel_tol))
        ratio_violations += int(bad.sum())
        if bad.any() and ratio_witness is None:
            i, j = np.unravel_index(np.argmax(bad), bad.shape)
            ratio_witness = (float(xs[i]), float(xs[j]), t)
        report.estimates[f"ratio_sup[t={t:g}]"] = Estimate(float(ratio.max()))
        report.estimates[f"ratio_upper_bound[t={t:g}]"] = Estimate(ub)

    report.estimates["worst_phi_min_gap"] = Estimate(worst_min_gap)
    report.estimates["dominance_violations"] = Estimate(float(dominance_violations))
    report.estimates["ratio_bound_violations"] = Estimate(float(ratio_violations))
    if dominance_witness:
        report.config["dominance_witness"] = dominance_witness
    if ratio_witness:
        report.config["ratio_witness"] = ratio_witness
    report.verdicts = {
        "phi_min_matches": worst_min_gap <= min_tol,
        "phi0_dominance_holds": dominance_violations == 0,
        "kernel_ratio_bounds_hold": ratio_violations == 0,
    }
    report.wall_time_seconds = time.perf_counter() - t_start
    return report


def verify_small_rho_expansions(
    qp: QParams,
    rho_list: tuple[float, ...],
    series_cfg: SeriesConfig = DEFAULT_SERIES,
) -> ExperimentReport:
    """Small-rho behavior of the kernel sup-ratio and the lower envelope.

    g(rho) = (rho^2;q)_inf/(rho;q)_inf^4 - 1 must approach 4 rho/(1-q);
    the envelope C(x, rho, q) must stay at or below 1 with
    [1 - C]/rho <= (7 + 8 sqrt 2)/(1-|q|) plus an O(rho) allowance.
    """
    t_start = time.perf_counter()
    rhos = sorted(rho_list, reverse=True)
    if not rhos or not all(0.0 < r <= 0.1 for r in rhos):
        raise DomainError("rho ladder must lie in (0, 0.1]")
    target = 4.0 / (1.0 - qp.q)
    cap = (7.0 + 8.0 * math.sqrt(2.0)) / (1.0 - abs(qp.q))
    slack_coeff = 20.0 / (1.0 - abs(qp.q))
    xs = np.linspace(-qp.L, qp.L, 41)

    report = ExperimentReport(
        experiment_name="verify_small_rho_expansions",
        config={
            "q": qp.q,
            "rho_list": list(rhos),
            "limit_tolerance_at_min_rho": 0.02,
            "envelope_cap": cap,
            "envelope_slack_coeff": slack_coeff,
        },
        seed=None,
    )
    devs = []
    env_ok = True
    le1_ok = True
    g_pos = True
    for rho in rhos:
        g = kernel_ratio_upper_bound(qp, -math.log(rho), series_cfg) - 1.0
        ratio = g / rho
        devs.append(abs(ratio - target))
        g_pos &= g > 0.0
        C = kernel_ratio_lower_bound(qp, rho, xs, series_cfg)
        le1_ok &= bool(np.all(C <= 1.0 + 1e-12))
        env_ok &= bool(np.all((1.0 - C) / rho <= cap + slack_coeff * rho))
        report.estimates[f"g_over_rho[{rho:g}]"] = Estimate(ratio)
        report.estimates[f"max_one_minus_C_over_rho[{rho:g}]"] = Estimate(
            float(np.max((1.0 - C) / rho))
        )
    report.estimates["g_over_rho_target"] = Estimate(target)
    rel_dev_min = devs[-1] / target
    report.estimates["relative_deviation_at_min_rho"] = Estimate(rel_dev_min)
    report.verdicts = {
        "g_limit_within_tolerance": rel_dev_min <= 0.02,
        "g_positive": bool(g_pos),
        "envelope_at_most_one": bool(le1_ok),
        "envelope_slope_capped": bool(env_ok),
    }
    report.wall_time_seconds = time.perf_counter() - t_start
    return report


def mixing_decay(
    qp: QParams,
    t_list: tuple[float, ...],
    grid_size: int = 50,
    series_cfg: SeriesConfig = DEFAULT_SERIES,
) -> ExperimentReport:
    """Sup-grid deviation of the kernel ratio from 1 as a function of t,
    with the fitted exponential decay rate."""
    t_start = time.perf_counter()
    ts = sorted(t_list)
    if len(ts) < 4 or ts[0] < 1.0 or ts[-1] > 16.0:
        raise DomainError("need at least 4 time points within [1, 16]")
    xs = np.linspace(-qp.L, qp.L, grid_size)
    D = []
    for t in ts:
        ratio = kernel_ratio(qp, t, xs[:, None], xs[None, :], series_cfg)
        D.append(float(np.max(np.abs(ratio - 1.0))))
    slope, intercept = np.polyfit(ts, np.log(D), 1)
    c_q = max(math.exp(t) * d for t, d in zip(ts, D))

    report = ExperimentReport(
        experiment_name="mixing_decay",
        config={
            "q": qp.q,
            "t_list": list(ts),
            "grid_size": grid_size,
            "slope_band": [-1.15, -0.85],
        },
        seed=None,
    )
    for t, d in zip(ts, D):
        report.estimates[f"D[{t:g}]"] = Estimate(d)
    report.estimates["slope"] = Estimate(float(slope))
    report.estimates["intercept"] = Estimate(float(intercept))
    report.estimates["empirical_C_q"] = Estimate(c_q)
    report.verdicts = {
        "D_strictly_decreasing": all(b < a for a, b in zip(D, D[1:])),
        "slope_in_band": -1.15 <= slope <= -0.85,
    }
    report.wall_time_seconds = time.perf_counter() - t_start
    return report
