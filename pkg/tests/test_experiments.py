import json
import math

import numpy as np
import pytest

from qou import (
    BudgetExceeded,
    QParams,
    build_transition_table,
    count_events,
    JumpSpec,
    margin_mass_asymptotics,
    mc_double_jump,
    mc_jump_probability,
    mc_poisson_limit,
    mixing_decay,
    quadrature_jump_rate,
    verify_kernel_bounds,
    verify_small_rho_expansions,
)
from qou.experiments import _poisson_chi2, _run_crossing_mc, _stationary_batch
from qou.sampler import SUB_PATH, PathGrid, RngSeed, block_generator
from qou import _kernels
from tests.conftest import ks_statistic
from tests.test_sampler import numeric_cdf_interp


class TestQuadratureRate:
    def test_ladder_converges_to_alpha(self, qp0):
        reports = [quadrature_jump_rate(qp0, e) for e in (0.2, 0.1, 0.05)]
        gaps = [abs(r.estimates["ratio_to_alpha"].value - 1.0) for r in reports]
        assert gaps[0] > gaps[1] > gaps[2]
        corner_gaps = [abs(r.estimates["corner_ratio"].value - 1.0) for r in reports]
        assert corner_gaps[0] > corner_gaps[1] > corner_gaps[2]
        assert all(r.verdicts["corner_ratio_positive"] for r in reports)
        assert all(r.verdicts["rate_positive"] for r in reports)

    def test_corner_factorization_ratio(self, qp5):
        r1 = quadrature_jump_rate(qp5, 0.2)
        r2 = quadrature_jump_rate(qp5, 0.05)
        c1 = r1.estimates["corner_ratio"].value
        c2 = r2.estimates["corner_ratio"].value
        assert c1 > 0.0 and c2 > 0.0
        assert abs(c2 - 1.0) < abs(c1 - 1.0)

    def test_rejects_large_epsilon(self, qp0):
        with pytest.raises(Exception):
            quadrature_jump_rate(qp0, qp0.L)


class TestMarginMass:
    def test_ladder_and_symmetry(self, qp0):
        report = margin_mass_asymptotics(qp0, (0.2, 0.1, 0.05, 0.02))
        assert report.verdicts["ratio_gap_strictly_decreasing"]
        assert report.verdicts["margins_symmetric"]
        assert abs(report.estimates["ratio[0.02]"].value - 1.0) < 0.01

    def test_small_epsilon_closer_than_large(self, qp5):
        report = margin_mass_asymptotics(qp5, (0.2, 0.01))
        r_large = report.estimates["ratio[0.2]"].value
        r_small = report.estimates["ratio[0.01]"].value
        assert abs(r_small - 1.0) < abs(r_large - 1.0)


class TestKernelBounds:
    @pytest.mark.parametrize("q", (-0.5, 0.0, 0.5))
    def test_full_inequality_suite(self, q):
        report = verify_kernel_bounds(QParams(q), (0.1, 0.5, 1.0, 4.0), grid_size=100)
        assert report.verdicts["phi_min_matches"], report.estimates["worst_phi_min_gap"]
        assert report.verdicts["phi0_dominance_holds"]
        assert report.verdicts["kernel_ratio_bounds_hold"]

    def test_located_minimum_value(self, qp0):
        report = verify_kernel_bounds(qp0, (1.0,), grid_size=100)
        gap = report.estimates["phi_min_gap[k=0,delta=1]"].value
        assert gap <= 1e-10

    def test_grid_size_guard(self, qp0):
        with pytest.raises(ValueError):
            verify_kernel_bounds(qp0, (1.0,), grid_size=50)


class TestExpansions:
    @pytest.mark.parametrize("q", (0.0, 0.5))
    def test_g_limit_and_envelope(self, q):
        report = verify_small_rho_expansions(QParams(q), (0.05, 0.01, 0.001))
        assert report.verdicts["g_limit_within_tolerance"]
        assert report.verdicts["g_positive"]
        assert report.verdicts["envelope_at_most_one"]
        assert report.verdicts["envelope_slope_capped"]
        got = report.estimates["g_over_rho[0.001]"].value
        assert got == pytest.approx(4.0 / (1.0 - q), rel=0.02)


class TestMixing:
    def test_decay_rate_q0(self, qp0):
        report = mixing_decay(qp0, (1.0, 2.0, 4.0, 8.0), grid_size=50)
        assert report.verdicts["D_strictly_decreasing"]
        assert report.verdicts["slope_in_band"]
        assert report.estimates["empirical_C_q"].value < math.inf

    def test_decay_rate_q_half_tail(self, qp5):
        # At q = 0.5 the t = 1 sup-deviation sits far above the asymptotic
        # e^{-t} envelope, so the 4-point fit lands outside the band (the
        # acceptance suite tracks this as a known-failing criterion); the
        # tail rate between t = 4 and t = 8 is the honest -1 check.
        report = mixing_decay(qp5, (1.0, 2.0, 4.0, 8.0), grid_size=50)
        assert report.verdicts["D_strictly_decreasing"]
        d4 = report.estimates["D[4]"].value
        d8 = report.estimates["D[8]"].value
        tail_rate = math.log(d8 / d4) / 4.0
        assert tail_rate == pytest.approx(-1.0, abs=0.15)
        assert not report.verdicts["slope_in_band"]


class TestMonteCarloEngine:
    def test_budget_guard(self, qp0):
        with pytest.raises(BudgetExceeded):
            mc_jump_probability(qp0, 0.3, 8, 10**9, seed=0, step_cap=1e6)
        with pytest.raises(BudgetExceeded):
            mc_poisson_limit(qp0, 0.3, 8, 10.0, 10**6, seed=0, step_cap=1e6)

    def test_reproducible_and_thread_invariant(self, qp0, table0_n8):
        runs = [
            _run_crossing_mc(qp0, table0_n8, 1.2, 8, 2, 300, 99, threads=t)
            for t in (1, 2)
        ]
        assert np.array_equal(runs[0][0], runs[1][0])
        assert np.array_equal(runs[0][1], runs[1][1])

    def test_numba_and_numpy_paths_agree(self, qp0, table0_n8):
        a = _run_crossing_mc(qp0, table0_n8, 1.2, 8, 1, 200, 7, force_numpy=False)
        b = _run_crossing_mc(qp0, table0_n8, 1.2, 8, 1, 200, 7, force_numpy=True)
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])

    def test_counts_match_path_rescan(self, qp0, table0_n8):
        """Reconstruct each replicate's trajectory from the engine's stream
        layout and verify the fused counting against the path-level
        detector."""
        from qou.qseries import DEFAULT_SERIES

        eps, n, horizon, reps, seed = 1.0, 8, 2, 64, 31415
        W, ge2, _ = _run_crossing_mc(qp0, table0_n8, eps, n, horizon, reps, seed)
        steps = horizon * 2**n
        states = _stationary_batch(qp0, seed, 0, reps, DEFAULT_SERIES)
        U = np.empty((reps, steps))
        step0 = 0
        block = 0
        while step0 < steps:
            b_len = min(4096, steps - step0)
            padded = (b_len + 3) // 4 * 4
            gen = block_generator(seed, SUB_PATH, block, 0, padded)
            U[:, step0 : step0 + b_len] = gen.random((reps, padded))[:, :b_len]
            step0 += b_len
            block += 1
        spec = JumpSpec(qp=qp0, epsilon=eps, window=(0, horizon))
        for r in range(reps):
            vals = np.empty(steps + 1)
            vals[0] = states[r]
            x = states[r]
            for i in range(steps):
                x = float(
                    _kernels.interp_bilinear(
                        table0_n8.x_grid, table0_n8.u_grid, table0_n8.quantiles, qp0.L, x, U[r, i]
                    )
                )
                vals[i + 1] = x
            count = count_events(
                PathGrid(n=n, horizon=horizon, values=vals, seed=RngSeed(seed, r)), spec
            )
            ind = count.per_unit_interval
            assert int((ind >= 1).sum()) == W[r]
            assert bool((ind >= 2).any()) == ge2[r]

    def test_snapshot_states_are_stationary(self, qp0, table0_n8):
        reps = 8192
        _, _, snaps = _run_crossing_mc(
            qp0, table0_n8, 1.0, 8, 2, reps, 2718, snapshot_steps=(0, 256, 512)
        )
        for step, states in snaps.items():
            ks = ks_statistic(states, numeric_cdf_interp(qp0, states))
            assert ks < 1.95 / math.sqrt(reps), f"step {step}: ks={ks}"

    def test_snapshots_do_not_perturb_results(self, qp0, table0_n8):
        a = _run_crossing_mc(qp0, table0_n8, 1.2, 8, 2, 256, 5, snapshot_steps=())
        b = _run_crossing_mc(qp0, table0_n8, 1.2, 8, 2, 256, 5, snapshot_steps=(100, 300))
        assert np.array_equal(a[0], b[0])

    def test_unit_interval_autocorrelation_decays(self, qp0, table0_n8):
        reps = 4096
        spu = 256
        _, _, snaps = _run_crossing_mc(
            qp0, table0_n8, 1.0, 8, 4, reps, 11, snapshot_steps=(0, spu, 2 * spu, 4 * spu)
        )
        x0 = snaps[0]
        corr = [
            float(np.corrcoef(x0, snaps[m * spu])[0, 1]) for m in (1, 2, 4)
        ]
        assert corr[0] > corr[1] > corr[2]
        # Matched-seed decay should be positive and below 1 at unit lag.
        assert 0.0 < corr[0] < 1.0


class TestJumpProbability:
    def test_small_run_schema_and_agreement_fields(self, qp0, table0_n8):
        report = mc_jump_probability(
            qp0, 0.45, 8, 60_000, seed=4, table=table0_n8, threads=2
        )
        d = report.to_json_dict()
        assert set(d) == {"name", "config", "estimates", "verdicts", "seed", "wall_time"}
        assert d["seed"] == 4
        p = report.estimates["p_hat"].value
        F = report.estimates["quadrature_F"].value
        se = report.estimates["p_hat"].stderr
        assert report.verdicts["within_3se_of_quadrature"] == (abs(p - F) <= 3.0 * (se + report.estimates["quadrature_F"].stderr))
        assert p > 0.0

    def test_table_doubling_check(self, qp0):
        small = build_transition_table(qp0, 6, nx=65, nu=129)
        report = mc_jump_probability(
            qp0, 1.0, 6, 5_000, seed=8, table=small, table_doubling_check=True,
            step_cap=1e9,
        )
        assert report.config["quadrature_comparison"] is False
        assert "quadrature_F" not in report.estimates
        assert "p_hat_doubled_table" in report.estimates
        assert "table_bias_below_mc_error" in report.verdicts


class TestCrossValidation:
    def test_negative_q_mc_agrees_with_quadrature(self, qpm5):
        # alpha_{-0.5} is large, so crossings are frequent enough to test the
        # full pipeline (density -> table -> sampling -> counting) against
        # the deterministic corner integral at moderate replicates.
        table = build_transition_table(qpm5, 8, nx=129, nu=257)
        rep = mc_jump_probability(qpm5, 0.3, 8, 100_000, seed=42, table=table, threads=2)
        assert rep.verdicts["within_3se_of_quadrature"], {
            k: v.value for k, v in rep.estimates.items()
        }

    def test_refinement_monotone_within_error(self, qp0):
        # Dyadic refinement can only add crossing opportunities; the
        # empirical rate at n+1 must not drop below n by more than noise.
        p = {}
        se = {}
        for n in (6, 7):
            table = build_transition_table(qp0, n, nx=129, nu=257)
            rep = mc_jump_probability(
                qp0, 1.2, n, 40_000, seed=5150, table=table, step_cap=1e9
            )
            p[n] = rep.estimates["p_hat"].value
            se[n] = rep.estimates["p_hat"].stderr
        assert p[7] >= p[6] - 3.0 * math.hypot(se[6], se[7])


class TestPoisson:
    def test_degenerate_small_window(self, qp0, table0_n8):
        # Window of one interval: W is 0 almost surely, TV vs Poisson ~ 0.
        report = mc_poisson_limit(
            qp0, 0.9, 8, 0.9**3, 2_000, seed=12, table=table0_n8
        )
        assert report.config["window_intervals"] == 1
        assert report.estimates["tv_distance"].value < 0.05
        assert report.verdicts["chi2_pvalue_above_floor"]

    def test_moderate_lambda_smoke(self, qp0, table0_n8):
        report = mc_poisson_limit(
            qp0, 1.0, 8, 60.0, 400, seed=99, table=table0_n8, threads=2
        )
        assert report.config["window_intervals"] == 60
        lam = report.estimates["lambda_hat"].value
        assert lam > 0.2
        assert report.estimates["chi2_pvalue"].value > 0.0
        ge1 = report.estimates["p_ge1"].value
        pois1 = report.estimates["poisson_p_ge1"].value
        se = report.estimates["p_ge1"].stderr
        assert abs(ge1 - pois1) < 5 * se + 0.05


class TestDoubleJump:
    def test_rule_of_three_on_zero_events(self, qp0, table0_n8):
        report = mc_double_jump(qp0, 0.5, 8, 3_000, seed=1, table=table0_n8)
        assert report.estimates["doubles_observed"].value == 0.0
        assert report.estimates["p_double_ub95"].value == pytest.approx(3.0 / 3_000)

    def test_double_detection_on_synthetic_path(self, qp0):
        # Two crossings inside one unit interval must register as >= 2.
        vals = np.zeros(9)
        vals[1], vals[2] = -qp0.L + 0.1, qp0.L - 0.1
        vals[3], vals[4] = -qp0.L + 0.1, qp0.L - 0.1
        path = PathGrid(n=3, horizon=1, values=vals, seed=RngSeed(0, 0))
        count = count_events(path, JumpSpec(qp=qp0, epsilon=0.5, window=(0, 1)))
        assert count.per_unit_interval[0] >= 2


class TestChiSquareHelper:
    def test_poisson_synthetic_accepts(self):
        rng = np.random.default_rng(0)
        for lam in (0.5, 2.0, 5.0):
            w = rng.poisson(lam, 4000)
            stat, pval, bins = _poisson_chi2(np.bincount(w), float(w.mean()), len(w))
            assert pval > 0.01

    def test_geometric_synthetic_rejects(self):
        rng = np.random.default_rng(1)
        w = rng.geometric(0.3, 4000) - 1
        stat, pval, bins = _poisson_chi2(np.bincount(w), float(w.mean()), len(w))
        assert pval < 0.01


def test_report_json_round_trip(qp0):
    report = mixing_decay(qp0, (1.0, 2.0, 4.0, 8.0))
    blob = json.dumps(report.to_json_dict())
    back = json.loads(blob)
    assert back["name"] == "mixing_decay"
    assert isinstance(back["verdicts"]["slope_in_band"], bool)
    assert back["config"]["slope_band"] == [-1.15, -0.85]
