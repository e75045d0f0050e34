import math

import numpy as np
import pytest

from sacsim import besov
from sacsim.experiment import (
    METRIC_X,
    METRIC_Y,
    ExperimentConfig,
    coupled_error,
    eval_indices,
    fit_rate,
    mc_moment,
    run_convergence,
    run_z_wick,
    sample_cell_errors,
    z_wick_error,
)
from sacsim.noise import NoisePath, SeedSpec, restrict_modes
from sacsim.scheme import SchemeParams
from sacsim.spectral import project
from sacsim.wick import renorm_constant, wick_with_initial


def small_config(samples=2, metric=METRIC_X, a=(0.0, 0.0, 0.0, -1.0), master=777):
    tmpl = SchemeParams(8, 32, 1.0, a=a, seed=SeedSpec(master, 0, base_steps=32))
    return ExperimentConfig(template=tmpl, N_list=[2, 4], M_list=[4, 8],
                            N_ref=8, M_ref=32, samples=samples, metric=metric,
                            eval_steps=16, space_steps=8)


class TestEvalIndices:
    def test_small_M_all_points(self):
        assert eval_indices(8, 256) == list(range(1, 9))

    def test_capped_and_contains_ends(self):
        ks = eval_indices(4096, 256)
        assert 1 in ks and 4096 in ks
        assert len(ks) <= 260
        assert all(k >= 1 for k in ks)


class TestCoupledError:
    def test_self_comparison_is_zero(self):
        cfg = small_config()
        err = coupled_error(cfg, 8, 32, 0)
        assert err.error == 0.0
        assert err.N == 8 and err.M == 32 and err.sample_index == 0

    def test_nonnegative_and_decreasing_in_N(self):
        cfg = small_config(samples=1)
        e2 = coupled_error(cfg, 2, 32, 0).error
        e4 = coupled_error(cfg, 4, 32, 0).error
        assert e2 > 0 and e4 > 0

    def test_drift_free_reduces_to_linear_part(self):
        # a == 0: the coupled error must equal the Galerkin tail of Zbar,
        # reconstructable from the noise path alone (no scheme in the oracle)
        cfg = small_config(a=(0.0, 0.0, 0.0, 0.0))
        N, M = 4, 8
        got = coupled_error(cfg, N, M, 3).error
        seed = cfg.seed_for(3)
        path = NoisePath.build(8, 32, 1.0, seed)
        small = restrict_modes(path, N)
        worst = 0.0
        from sacsim.noise import zero_initial_value

        for k in eval_indices(M, cfg.eval_steps):
            t = k / M
            zr = zero_initial_value(path, t)
            zs = zero_initial_value(small, t)
            diff = zr - project(zs, 8)
            v = t**cfg.template.gamma * besov.besov_norm(
                diff, -cfg.template.alpha, oversample=2).value
            worst = max(worst, v)
        assert got == pytest.approx(worst, rel=1e-12)

    def test_y_metric_runs(self):
        cfg = small_config(metric=METRIC_Y)
        err = coupled_error(cfg, 4, 16, 0)
        assert err.error >= 0.0


class TestMoments:
    def test_constant_errors(self):
        for p in (1.0, 2.0, 3.5):
            m, se = mc_moment([0.7, 0.7, 0.7, 0.7], p)
            assert m == pytest.approx(0.7, rel=1e-12)

    def test_two_point_example(self):
        m, _ = mc_moment([0.0, 2.0], 2.0)
        assert m == pytest.approx(math.sqrt(2), rel=1e-12)

    def test_p_one_is_mean(self):
        vals = [0.1, 0.4, 0.9]
        m, _ = mc_moment(vals, 1.0)
        assert m == pytest.approx(np.mean(vals), rel=1e-12)

    def test_duplication_self_consistency(self):
        vals = list(np.random.default_rng(0).uniform(0.1, 1.0, 50))
        m1, _ = mc_moment(vals, 2.0)
        m2, _ = mc_moment(vals + vals, 2.0)
        assert m2 == pytest.approx(m1, rel=1e-12)

    def test_bootstrap_se_sane(self):
        rng = np.random.default_rng(1)
        vals = rng.uniform(0.5, 1.5, 200)
        m, se = mc_moment(vals, 2.0)
        assert 0 < se < 0.1 * m


class TestRateFit:
    def test_exact_power_law(self):
        Ns = [4, 8, 16, 32]
        errs = [2.0 * N**-0.3 for N in Ns]
        pts = [(math.log2(N), math.log2(e)) for N, e in zip(Ns, errs)]
        fit = fit_rate(pts, "space")
        assert fit.slope == pytest.approx(0.3, abs=1e-12)
        assert fit.residual == pytest.approx(0.0, abs=1e-12)
        assert fit.intercept == pytest.approx(1.0, abs=1e-12)

    def test_two_points(self):
        fit = fit_rate([(1.0, 1.0), (2.0, 0.0)], "time")
        assert fit.slope == pytest.approx(1.0, rel=1e-12)

    def test_noisy_line_recovered_within_ci(self):
        rng = np.random.default_rng(2)
        res = [4, 8, 16, 32]
        errors_by_cell = [np.exp(rng.normal(0, 0.05, 300)) * r**-0.3 for r in res]
        from sacsim.experiment import _moment_points, bootstrap_rate_ci

        pts = _moment_points(res, errors_by_cell, 2.0)
        fit = fit_rate(pts, "space")
        lo, hi = bootstrap_rate_ci(res, errors_by_cell, 2.0, "space")
        assert lo <= 0.3 <= hi
        assert fit.slope == pytest.approx(0.3, abs=0.05)

    def test_insufficient_points(self):
        with pytest.raises(ValueError):
            fit_rate([(1.0, 1.0)])


class TestSweep:
    def test_shared_reference_consistent_with_coupled_error(self):
        cfg = small_config(samples=1)
        cells = [(2, 8), (4, 8), (8, 4)]
        row = sample_cell_errors(cfg, cells, 0)
        for cell, err in zip(cells, row):
            single = coupled_error(cfg, cell[0], cell[1], 0).error
            assert err == single

    def test_run_convergence_both_axes(self):
        cfg = small_config(samples=3)
        report = run_convergence(cfg, axes=("space", "time"), workers=1)
        assert report.errors.shape == (3, 4)
        assert set(report.rates) == {"space", "time"}
        assert len(report.moments) == 4
        assert report.cells[0] == (2, cfg.space_M)

    def test_worker_determinism(self):
        cfg = small_config(samples=4)
        r1 = run_convergence(cfg, axes=("space",), workers=1)
        r2 = run_convergence(cfg, axes=("space",), workers=2)
        assert np.array_equal(r1.errors, r2.errors)
        assert r1.moments == r2.moments
        assert r1.rates["space"].slope == r2.rates["space"].slope

    def test_validation_rejects_bad_lists(self):
        cfg = small_config()
        cfg.M_list = [3, 8]
        assert any("divide" in e for e in cfg.validate())
        cfg = small_config()
        cfg.N_list = [4, 16]
        assert any("N_ref" in e for e in cfg.validate())


class TestZWick:
    def test_reference_cutoff_zero_error(self):
        cfg = small_config(samples=1)
        cfg.N_list = [4, 8]
        assert z_wick_error(cfg, 8, 1, 0) == 0.0

    def test_ball_limited_path_no_n1_error(self):
        # a path whose modes all lie in the small ball loses nothing under P_N
        cfg = small_config(samples=1)
        seed = cfg.seed_for(0)
        path = NoisePath.build(8, 32, 1.0, seed)
        from sacsim.noise import half_modes

        modes = half_modes(8)
        outside = (modes[:, 0] ** 2 + modes[:, 1] ** 2) > 16
        path.values[:, outside] = 0.0
        small = restrict_modes(path, 4)
        R8, R4 = renorm_constant(8), renorm_constant(4)
        x0 = cfg.template.initial
        for t in (0.25, 1.0):
            a = wick_with_initial(path, t, R8, x0)
            b = wick_with_initial(small, t, R4, x0)
            diff = a.z1 - project(b.z1, 8)
            assert np.max(np.abs(diff.coeffs)) < 1e-14

    def test_run_z_wick_structure(self):
        tmpl = SchemeParams(16, 32, 1.0, seed=SeedSpec(777, 0, base_steps=64))
        cfg = ExperimentConfig(template=tmpl, N_list=[2, 4, 8], M_list=[4],
                               N_ref=16, M_ref=64, samples=6, eval_steps=8,
                               space_steps=4)
        out = run_z_wick(cfg, workers=1)
        assert set(out["rates"]) == {1, 2, 3}
        assert all(out["moments"][(N, n)] >= 0 for N in cfg.N_list for n in (1, 2, 3))
        # the Monte Carlo moment decreases across N_list (finer Galerkin cutoff);
        # pathwise monotonicity is NOT asserted, only the end-to-end statistic
        for n in (1, 2, 3):
            assert out["moments"][(8, n)] < out["moments"][(2, n)]

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            z_wick_error(small_config(samples=1), 4, 5, 0)
