import numpy as np
import pytest

from toomlab import engine, oracle, stats
from toomlab.engine import symmetric_noise
from toomlab.errors import ConfigError
from toomlab.rules import builtin
from toomlab.stats import (
    FitResult,
    fit_log_decay,
    is_flip_symmetric,
    minus_density_run,
    density_vs_epsilon_scan,
    spatial_correlation,
    stationary_sample,
    temporal_autocorrelation,
    two_phase_divergence,
)

STAV = builtin("stavskaya")
NEC = builtin("nec")


def exact_spin_stats(rule, noise, dims, lag=0, distance=0):
    """Reference moments from the exact kernel: mean, and the requested
    two-point moment (spatial at `distance` along axis 0, or temporal at
    `lag`)."""
    pi = oracle.stationary_distribution(rule, noise, dims, tol=1e-12)
    n = int(np.prod(dims))
    states = np.arange(1 << n, dtype=np.uint64)

    def spin(flat):
        return ((states >> np.uint64(flat)) & 1).astype(np.float64) * 2.0 - 1.0

    mean = float((pi.probs * spin(0)).sum())
    if lag == 0:
        other = spin(int(np.ravel_multi_index(
            (distance,) + (0,) * (len(dims) - 1), dims)))
        moment = float((pi.probs * spin(0) * other).sum())
    else:
        k = oracle.ExactKernel(rule, noise, dims)
        vec = pi.probs * spin(0)
        for _ in range(lag):
            vec = k.apply(vec)
        moment = float((vec * spin(0)).sum())
    return mean, moment - mean * mean


class TestFit:
    def test_clean_exponential(self):
        xs = np.arange(10)
        ys = 3.0 * 0.5**xs
        fit = fit_log_decay(xs, ys)
        assert fit.valid and fit.rate == pytest.approx(0.5, rel=1e-12)
        assert fit.r_squared == pytest.approx(1.0)

    def test_noise_floor_filtering(self):
        xs = [0, 1, 2, 3]
        ys = [1.0, 0.5, 1e-6, 1e-7]
        errs = [1e-3, 1e-3, 1e-3, 1e-3]
        fit = fit_log_decay(xs, ys, errs)
        assert fit.n_points == 2 and not fit.valid

    def test_growing_sequence_invalid(self):
        fit = fit_log_decay([0, 1, 2, 3], [1.0, 2.0, 4.0, 8.0])
        assert not fit.valid and fit.rate is None


class TestDensityRun:
    def test_zero_noise_identically_zero(self):
        run = minus_density_run(STAV, symmetric_noise(0.0), (16,), 20, 5, seed=1)
        assert np.all(run.density_series == 0.0)
        assert run.density_mean == 0.0

    def test_half_noise_half_density(self):
        run = minus_density_run(NEC, symmetric_noise(0.5), (32, 32), 200, 50, seed=2)
        n_draws = 32 * 32 * 150
        assert abs(run.density_mean - 0.5) < 4.0 / (2.0 * np.sqrt(n_draws))

    def test_agrees_with_exact_marginal(self):
        noise = symmetric_noise(0.1)
        mean, _ = exact_spin_stats(STAV, noise, (8,))
        exact_density = 0.5 * (1.0 - mean)
        bits = stationary_sample(STAV, noise, (8,), burn_in=150, replicas=30000, seed=3)
        dens = 1.0 - bits.mean(axis=1)
        se = dens.std(ddof=1) / np.sqrt(len(dens))
        assert abs(dens.mean() - exact_density) < 3.0 * se

    def test_burn_in_bounds(self):
        with pytest.raises(ConfigError):
            minus_density_run(STAV, symmetric_noise(0.1), (8,), 10, 11, seed=1)

    def test_reproducible(self):
        a = minus_density_run(STAV, symmetric_noise(0.2), (32,), 50, 10, seed=9)
        b = minus_density_run(STAV, symmetric_noise(0.2), (32,), 50, 10, seed=9)
        assert np.array_equal(a.density_series, b.density_series)


class TestScan:
    def test_zero_grid(self):
        rows = density_vs_epsilon_scan(STAV, "symmetric", [0.0], (16,), 20, 5, seed=1)
        assert rows[0]["density"] == 0.0

    def test_monotone_in_eps(self):
        rows = density_vs_epsilon_scan(
            STAV, "symmetric", [0.02, 0.05, 0.1, 0.2], (128,), 300, 150, seed=4
        )
        dens = [r["density"] for r in rows]
        assert all(a <= b + 3.0 * (rows[i]["stderr"] + rows[i + 1]["stderr"])
                   for i, (a, b) in enumerate(zip(dens, dens[1:])))
        assert dens[-1] - dens[0] > 5.0 * (rows[0]["stderr"] + rows[-1]["stderr"])

    def test_unsorted_grid_rejected(self):
        with pytest.raises(ConfigError):
            density_vs_epsilon_scan(STAV, "symmetric", [0.1, 0.05], (16,), 10, 0, seed=1)

    def test_nec_grid_regression(self):
        # frozen from the first run of this configuration; the ladder is
        # monotone and the endpoints differ by far more than 5 SE
        rows = density_vs_epsilon_scan(
            NEC, "symmetric", [0.005, 0.01, 0.02, 0.04], (256, 256),
            steps=400, burn_in=200, seed=31,
        )
        expected = [0.005085, 0.010318, 0.021410, 0.046584]
        for row, want in zip(rows, expected):
            assert row["density"] == pytest.approx(want, abs=5e-6)
        dens = [r["density"] for r in rows]
        assert all(a <= b for a, b in zip(dens, dens[1:]))
        assert dens[-1] - dens[0] > 5.0 * (rows[0]["stderr"] + rows[-1]["stderr"])

    def test_biased_scan_low_vs_high(self):
        # low bias keeps the plus phase; strong bias floods the ring
        rows = density_vs_epsilon_scan(
            STAV, "biased", [0.02, 0.4], (256,), steps=600, burn_in=300, seed=32
        )
        assert rows[0]["density"] < 0.5
        assert rows[1]["density"] > 0.99


class TestSpatialCorrelation:
    def test_zero_noise_trivial(self):
        summary, fit = spatial_correlation(
            STAV, symmetric_noise(0.0), (16,), [1, 2], samples=100, seed=1, burn_in=5
        )
        assert all(row[1] == 0.0 for row in summary.table)
        assert not fit.valid

    def test_half_noise_uncorrelated(self):
        summary, _ = spatial_correlation(
            NEC, symmetric_noise(0.5), (16, 16), [1, 2, 3], samples=2000, seed=2,
            burn_in=3,
        )
        for _, est, se, _ in summary.table:
            assert abs(est) < 4.0 * se

    def test_matches_exact_covariance(self):
        noise = symmetric_noise(0.1)
        _, exact_cov = exact_spin_stats(STAV, noise, (8,), distance=2)
        summary, _ = spatial_correlation(
            STAV, noise, (8,), [2], samples=40000, seed=6, burn_in=150
        )
        _, est, se, _ = summary.table[0]
        assert abs(est - exact_cov) < 4.0 * se

    def test_distance_bound(self):
        with pytest.raises(ConfigError):
            spatial_correlation(STAV, symmetric_noise(0.1), (8,), [4], 10, seed=1)


class TestTemporalAutocorrelation:
    def test_lag_zero_is_variance(self):
        summary, _ = temporal_autocorrelation(
            STAV, symmetric_noise(0.2), (12,), [0], samples=2000, seed=3, burn_in=30
        )
        lag, est, se, n = summary.table[0]
        assert lag == 0 and est >= 0.0 and n == 2000

    def test_half_noise_decorrelates_in_one_step(self):
        summary, _ = temporal_autocorrelation(
            STAV, symmetric_noise(0.5), (12,), [1, 2], samples=4000, seed=4, burn_in=10
        )
        for _, est, se, _ in summary.table:
            assert abs(est) < 4.0 * se

    def test_matches_exact_lag2(self):
        noise = symmetric_noise(0.1)
        _, exact_cov = exact_spin_stats(STAV, noise, (8,), lag=2)
        summary, _ = temporal_autocorrelation(
            STAV, noise, (8,), [2], samples=40000, seed=7, burn_in=150
        )
        _, est, se, _ = summary.table[0]
        assert abs(est - exact_cov) < 4.0 * se

    def test_negative_lag_rejected(self):
        with pytest.raises(ConfigError):
            temporal_autocorrelation(STAV, symmetric_noise(0.1), (8,), [-1], 10, seed=1)


class TestTwoPhase:
    def test_half_noise_merges_immediately(self):
        res = two_phase_divergence(NEC, symmetric_noise(0.5), (16, 16), steps=10, seed=1)
        assert res.classification == stats.MERGED
        assert np.all(res.mag_plus[1:] == res.mag_minus[1:])

    def test_low_noise_separates(self):
        res = two_phase_divergence(NEC, symmetric_noise(0.01), (32, 32), steps=300, seed=2)
        assert res.classification == stats.SEPARATED
        assert res.gap_mean > 1.5

    def test_asymmetric_rule_inapplicable(self):
        res = two_phase_divergence(STAV, symmetric_noise(0.1), (16,), steps=10, seed=1)
        assert res.classification == stats.INAPPLICABLE

    def test_flip_symmetry_detector(self):
        assert is_flip_symmetric(NEC)
        assert is_flip_symmetric(builtin("majority1d"))
        assert is_flip_symmetric(builtin("identity"))
        assert not is_flip_symmetric(STAV)

    def test_gap_nonnegative_under_coupling(self):
        res = two_phase_divergence(NEC, symmetric_noise(0.05), (16, 16), steps=100, seed=3)
        assert np.all(res.mag_plus - res.mag_minus >= 0.0)

    def test_reproducible(self):
        a = two_phase_divergence(NEC, symmetric_noise(0.1), (8, 8), steps=40, seed=11)
        b = two_phase_divergence(NEC, symmetric_noise(0.1), (8, 8), steps=40, seed=11)
        assert np.array_equal(a.mag_plus, b.mag_plus)
        assert a.classification == b.classification


class TestWindowMarginalAgreement:
    def test_mc_window_marginal_matches_exact(self):
        # empirical two-site window law over 1e5 replicas vs the exact
        # stationary marginal, each entry within 4 binomial standard errors
        noise = symmetric_noise(0.1)
        dims = (8,)
        pi = oracle.stationary_distribution(STAV, noise, dims, tol=1e-12)
        exact = oracle.window_marginal(pi, [(0,), (1,)])
        replicas = 100_000
        bits = stationary_sample(STAV, noise, dims, burn_in=150, replicas=replicas, seed=21)
        codes = bits[:, 0].astype(np.int64) | (bits[:, 1].astype(np.int64) << 1)
        counts = np.bincount(codes, minlength=4)
        for entry in range(4):
            p_hat = counts[entry] / replicas
            se = np.sqrt(max(exact[entry] * (1.0 - exact[entry]), 1e-12) / replicas)
            assert abs(p_hat - exact[entry]) < 4.0 * se
