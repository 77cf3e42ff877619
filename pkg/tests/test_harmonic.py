"""
Tests for the harmonic function estimates, the τ tail and the hat-measure sampler
"""

import math

import numpy as np
import pytest

from mbpre.harmonic import (
    HarmonicEstimate,
    LatticeHarmonic,
    TabulatedHarmonic,
    estimate_h,
    exact_killed_walk,
    fit_bound_constants,
    fit_envelope,
    fixed_k_check,
    harmonicity_residual,
    hat_sampler,
    hat_series,
    tabulate_h,
    tau_tail,
)
from mbpre.runner import RandomStreams

LN2 = math.log(2.0)


def _estimate(a, h_hat):
    return HarmonicEstimate(
        x=np.ones(1), a=a, grid=np.array([10]), values=np.array([h_hat]), stderr=np.array([0.0]),
        survival=np.array([1.0]), replicas=1, h_hat=h_hat,
    )


class TestExactKilledWalk:
    @pytest.mark.parametrize("multiple", [1, 2, 3])
    def test_lattice_expectation_is_conserved(self, lattice, multiple):
        a = multiple * LN2
        exact = exact_killed_walk(None, a, lattice, 12)
        np.testing.assert_allclose(exact.expectation, a, rtol=1e-10)
        assert np.all(np.diff(exact.survival) <= 1e-15)

    def test_one_step_survival(self, lattice):
        exact = exact_killed_walk(None, LN2, lattice, 1)
        assert exact.survival[1] == pytest.approx(0.5)

    def test_states_are_merged(self, lattice):
        assert exact_killed_walk(None, LN2, lattice, 30).states <= 31

    def test_requires_finite_support(self):
        from mbpre.environment import build_scenario

        model = build_scenario(
            {
                "kind": "fractional_linear",
                "parameter_sets": [
                    {"weight": 1.0, "stall": [{"uniform": [0.1, 0.3]}], "geometric": [0.5], "mixers": [[1.0]]}
                ],
            }
        )
        with pytest.raises(ValueError, match="finite-support"):
            exact_killed_walk(None, 1.0, model, 3)


class TestHarmonicEstimate:
    @pytest.mark.filterwarnings("ignore")
    def test_lattice_estimate_matches_level(self, lattice, executor):
        a = 2 * LN2
        estimate = estimate_h(None, a, lattice, [50, 100], 4000, RandomStreams(11, 4), executor)
        assert estimate.values[-1] == pytest.approx(a, abs=4.0 * estimate.stderr[-1])
        assert np.all(np.diff(estimate.survival) <= 0)

    @pytest.mark.filterwarnings("ignore")
    def test_killed_mean_is_conserved_at_every_n(self, lattice, executor):
        a = 3 * LN2
        grid = [5, 10, 20]
        replicas = 20000
        estimate = estimate_h(None, a, lattice, grid, replicas, RandomStreams(22, 4), executor)
        assert np.all(np.abs(estimate.values - a) <= 3.0 * estimate.stderr)

        exact = exact_killed_walk(None, a, lattice, 20)
        np.testing.assert_allclose(exact.expectation[grid], a, rtol=1e-10)
        expected = exact.survival[grid]
        tolerance = 3.0 * np.sqrt(expected * (1.0 - expected) / replicas)
        assert np.all(np.abs(estimate.survival - expected) <= tolerance)

    def test_rejects_nonpositive_start(self, lattice):
        with pytest.raises(ValueError, match="positive"):
            estimate_h(None, 0.0, lattice, [10], 10, RandomStreams(0, 4))

    def test_rows(self):
        rows = _estimate(1.0, 1.5).rows("x1")
        assert rows == [{"x_id": "x1", "a": 1.0, "n": 10, "estimate": 1.5, "stderr": 0.0}]


class TestHarmonicity:
    def test_lattice_function(self):
        h = LatticeHarmonic(LN2)
        levels = np.array([LN2, 1.5 * LN2, 2 * LN2, 0.0, -LN2])
        np.testing.assert_allclose(h(np.ones((5, 1)), levels), [LN2, 2 * LN2, 2 * LN2, 0.0, 0.0])

    @pytest.mark.parametrize("multiple", [1, 2, 5])
    def test_lattice_residual_vanishes(self, lattice, multiple):
        residual = harmonicity_residual(None, multiple * LN2, lattice, LatticeHarmonic(LN2))
        assert residual == pytest.approx(0.0, abs=1e-12)

    def test_constant_function_is_not_harmonic(self, lattice):
        def constant(points, levels):
            return np.ones(len(levels))

        assert harmonicity_residual(None, LN2, lattice, constant) == pytest.approx(0.5)

    def test_tabulated_interpolation(self):
        h = TabulatedHarmonic(np.array([[1.0]]), np.array([1.0, 2.0]), np.array([[1.0, 2.0]]))
        values = h(np.ones((4, 1)), np.array([1.5, 3.0, 0.5, -1.0]))
        np.testing.assert_allclose(values, [1.5, 3.0, 0.5, 0.0])

    def test_tabulated_picks_nearest_anchor(self):
        anchors = np.array([[1.0, 0.0], [0.0, 1.0]])
        h = TabulatedHarmonic(anchors, np.array([1.0, 2.0]), np.array([[1.0, 2.0], [10.0, 20.0]]))
        values = h(np.array([[0.9, 0.1], [0.2, 0.8]]), np.array([1.0, 2.0]))
        np.testing.assert_allclose(values, [1.0, 20.0])

    def test_tabulated_shape_checked(self):
        with pytest.raises(ValueError):
            TabulatedHarmonic(np.array([[1.0]]), np.array([1.0, 2.0]), np.array([[1.0, 2.0, 3.0]]))

    def test_tabulate_h_on_lattice(self, lattice, executor):
        h = tabulate_h(lattice, [None], [LN2, 2 * LN2], 40, 4000, RandomStreams(12, 4), executor)
        assert h.table.shape == (1, 2)
        np.testing.assert_allclose(h.table[0], [LN2, 2 * LN2], rtol=0.15)


class TestTauTail:
    def test_lattice_tail(self, lattice, executor):
        report = tau_tail(None, LN2, lattice, [16, 64, 256], 4000, RandomStreams(13, 5), executor)
        assert report.monotone
        assert report.sigma2 == pytest.approx(LN2 ** 2, rel=0.1)
        assert report.implied_constant > 0
        np.testing.assert_allclose(report.sqrt_n_p, np.sqrt(report.grid) * report.p_hat)
        assert np.isfinite(report.flatness())

    def test_flatness_needs_quarter_grid(self, lattice, executor):
        report = tau_tail(None, LN2, lattice, [10, 30], 200, RandomStreams(14, 5), executor)
        assert math.isnan(report.flatness())

    def test_envelope(self, lattice, executor):
        reports = [
            tau_tail(None, a, lattice, [16, 64], 1000, RandomStreams(15, 5), executor)
            for a in (LN2, 3 * LN2)
        ]
        fit = fit_envelope(reports)
        assert fit.holds()
        assert fit.ratios.shape == (2, 2)
        assert fit.c_hat == pytest.approx(fit.ratios.max())

    def test_envelope_over_levels(self, lattice, executor):
        levels = (1.0, 2.0, 4.0, 8.0)
        reports = [
            tau_tail(None, a, lattice, [16, 64, 256], 2000, RandomStreams(23, 5), executor)
            for a in levels
        ]
        fit = fit_envelope(reports)
        assert fit.ratios.shape == (4, 3)
        assert fit.holds()
        assert fit.c_hat <= 1.5

    def test_envelope_needs_reports(self):
        with pytest.raises(ValueError):
            fit_envelope([])

    @pytest.mark.slow
    def test_lattice_tail_constant(self, lattice):
        from mbpre.runner import ReplicaExecutor

        k = 2
        report = tau_tail(
            None, k * LN2, lattice, [1024, 4096], 100000, RandomStreams(21, 5),
            ReplicaExecutor(num_workers=1, chunk_size=5000),
        )
        assert report.sqrt_n_p[-1] == pytest.approx(k * math.sqrt(2.0 / math.pi), rel=0.1)
        assert report.flatness() == pytest.approx(1.0, abs=0.15)
        assert abs(report.sigma2 - LN2 ** 2) <= 3.0 * report.sigma2_stderr

    @pytest.mark.slow
    def test_tail_ratio_is_free_of_start(self, two_type_critical):
        from mbpre.runner import ReplicaExecutor

        executor = ReplicaExecutor(num_workers=1, chunk_size=5000)
        ratios = []
        for j, x in enumerate(([0.5, 0.5], [1.0, 0.0], [0.0, 1.0])):
            for a in (1.0, 2.0):
                report = tau_tail(x, a, two_type_critical, [256, 1024], 40000, RandomStreams(24 + j, 5), executor)
                assert report.h_hat > 0
                ratios.append(report.sqrt_n_p[-1] / report.h_hat)
        ratios = np.array(ratios)
        assert (ratios.max() - ratios.min()) / ratios.mean() <= 0.15


class TestBoundConstants:
    def test_fit_holds_on_its_sample(self):
        fit = fit_bound_constants([_estimate(1.0, 1.2), _estimate(2.0, 2.1), _estimate(4.0, 3.9)])
        assert fit.c_hat == pytest.approx(0.6)
        assert fit.d_hat == pytest.approx(0.1, abs=1e-8)
        assert fit.holds

    def test_zero_estimate_breaks_strict_lower_bound(self):
        fit = fit_bound_constants([_estimate(1.0, 0.0), _estimate(2.0, 1.5)])
        assert fit.d_hat >= 1.0
        assert not fit.lower_holds
        assert fit.upper_holds


class TestHatMeasure:
    def test_one_step_from_lowest_level(self, lattice, executor):
        ensemble = hat_sampler(
            None, LN2, lattice, 1, 1000, RandomStreams(16, 6), LatticeHarmonic(LN2), executor=executor
        )
        assert ensemble.survivors > 0
        assert ensemble.weights.sum() == pytest.approx(1.0)
        assert ensemble.expectation(ensemble.level_at(1)) == pytest.approx(2 * LN2)

    def test_unrecorded_step(self, lattice, executor):
        ensemble = hat_sampler(
            None, LN2, lattice, 3, 100, RandomStreams(17, 6), LatticeHarmonic(LN2), executor=executor
        )
        with pytest.raises(ValueError, match="not recorded"):
            ensemble.level_at(1)

    def test_fixed_k_from_lowest_level(self, lattice, executor):
        check = fixed_k_check(
            None, LN2, lattice, 1, 4, 2000, RandomStreams(18, 6), LatticeHarmonic(LN2), executor
        )
        assert check.survivors > 0
        assert check.conditional == 1.0
        assert check.hat == pytest.approx(1.0)
        assert check.agree

    @pytest.mark.parametrize("seed", [1, 42, 12345])
    def test_certain_indicator_agrees(self, lattice, executor, seed):
        check = fixed_k_check(
            None, LN2, lattice, 1, 4, 200, RandomStreams(seed, 7), LatticeHarmonic(LN2), executor
        )
        assert check.conditional == 1.0
        assert check.conditional_stderr == 0.0
        assert check.hat == pytest.approx(1.0, abs=1e-12)
        assert check.agree

    def test_fixed_k_uses_branches_of_given_streams(self, lattice, executor):
        branches = []

        class RecordingStreams(RandomStreams):
            def substream(self, index):
                branches.append(index)
                return super().substream(index)

        streams = RecordingStreams(3, 4)
        check = fixed_k_check(None, LN2, lattice, 1, 4, 50, streams, LatticeHarmonic(LN2), executor)
        assert sorted(branches) == [0, 1]
        assert check.agree
        assert [entry["branch"] for entry in executor.chunk_log[-2:]] == [[0], [1]]

    def test_fixed_k_range(self, lattice):
        with pytest.raises(ValueError):
            fixed_k_check(None, LN2, lattice, 5, 4, 10, RandomStreams(0, 6), LatticeHarmonic(LN2))

    @pytest.mark.slow
    def test_fixed_k_agreement(self, lattice):
        from mbpre.runner import ReplicaExecutor

        check = fixed_k_check(
            None, 2 * LN2, lattice, 5, 2000, 200000, RandomStreams(19, 6), LatticeHarmonic(LN2),
            ReplicaExecutor(num_workers=1, chunk_size=5000),
        )
        assert check.agree

    def test_series(self, lattice, executor):
        series = hat_series(
            None, LN2, lattice, [5, 20], 2000, RandomStreams(20, 6), LatticeHarmonic(LN2), executor
        )
        assert series.grid.tolist() == [5, 20]
        assert np.all(np.isfinite(series.values))
        assert np.all(series.values > 0)
