"""
Tests for annealed survival, the scaling fit and the particle simulation
"""

import math

import numpy as np
import pytest

from mbpre.environment import EnvironmentComponent, OffspringLaw, finite_mixture, permute_types
from mbpre.runner import RandomStreams, ReplicaExecutor
from mbpre.survival import (
    BranchingState,
    annealed_survival,
    fit_beta,
    population_survival,
    simulate_population,
    split_survival,
)


@pytest.fixture
def pair_model(pair_component):
    return finite_mixture([pair_component], [1.0])


@pytest.fixture
def childless_model():
    component = EnvironmentComponent.from_laws([OffspringLaw.deterministic([0])], strict=False)
    return finite_mixture([component], [1.0])


class TestAnnealedSurvival:
    def test_critical_geometric(self, geometric_model, executor):
        grid = [1, 2, 4, 8, 16]
        report = annealed_survival(geometric_model, 0, grid, 20, RandomStreams(1, 2), executor)
        np.testing.assert_allclose(report.p_hat, 1.0 / (np.array(grid) + 1.0), rtol=1e-12)
        np.testing.assert_array_equal(report.stderr, 0.0)
        assert report.monotone_violations == 0
        assert report.fit is not None
        assert report.fit.slope_ci[0] == report.fit.slope_ci[1]

    def test_doubling_never_dies(self, doubling_model, executor):
        report = annealed_survival(doubling_model, 0, [1, 5, 10], 10, RandomStreams(2, 2), executor, fit=False)
        np.testing.assert_array_equal(report.p_hat, 1.0)

    def test_frame_columns(self, geometric_model, executor):
        frame = annealed_survival(geometric_model, 0, [1, 2], 4, RandomStreams(3, 2), executor).to_frame()
        assert list(frame.columns) == ["type_i", "n", "p_hat", "stderr", "sqrt_n_p", "capped_fraction"]
        assert frame["type_i"].tolist() == [1, 1]

    def test_grid_and_type_checked(self, two_type_critical):
        with pytest.raises(ValueError, match="out of range"):
            annealed_survival(two_type_critical, 2, [1, 2], 4, RandomStreams(0, 2))
        with pytest.raises(ValueError, match="increasing"):
            annealed_survival(two_type_critical, 0, [4, 2], 4, RandomStreams(0, 2))

    def test_survival_is_monotone_per_replica(self, two_type_critical, executor):
        report = annealed_survival(two_type_critical, 1, [1, 3, 9, 27], 200, RandomStreams(4, 2), executor)
        assert report.monotone_violations == 0
        assert np.all(np.diff(report.p_hat) <= 0)


class TestFitBeta:
    GRID = np.array([64, 128, 256, 512, 1024, 2048, 4096])

    def test_inverse_square_root(self):
        p_hat = 0.8 / np.sqrt(self.GRID)
        fit = fit_beta(self.GRID, p_hat, 0.01 * p_hat)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.beta_hat == pytest.approx(0.8, rel=1e-12)
        assert fit.beta_ci[0] < 0.8 < fit.beta_ci[1]
        assert fit.points == 4

    def test_inverse_linear(self):
        p_hat = 3.0 / self.GRID
        fit = fit_beta(self.GRID, p_hat, 0.01 * p_hat)
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)
        assert fit.slope_ci[0] < -1.0 < fit.slope_ci[1]

    def test_summary_keys(self):
        p_hat = 0.8 / np.sqrt(self.GRID)
        summary = fit_beta(self.GRID, p_hat, np.zeros(self.GRID.size)).summary()
        assert set(summary) == {"slope", "slope_ci_lo", "slope_ci_hi", "beta_hat", "beta_ci_lo", "beta_ci_hi"}
        assert summary["beta_ci_lo"] == summary["beta_ci_hi"]

    @pytest.mark.parametrize("grid", [[1, 2, 4], [1, 2, 4, 7]])
    def test_short_grid(self, grid):
        with pytest.raises(ValueError, match="grid too short"):
            fit_beta(grid, np.full(len(grid), 0.5), np.full(len(grid), 0.01))


def _asymmetric_components(perm=(0, 1)):
    """行和がおよそ 2.2 と 0.44 の非対称な2成分（タイプを perm で付け替え）"""
    tables = [
        [
            [([0, 0], 0.2), ([2, 1], 0.5), ([1, 2], 0.3)],
            [([0, 0], 0.3), ([3, 1], 0.4), ([0, 1], 0.3)],
        ],
        [
            [([0, 0], 0.7), ([1, 0], 0.2), ([0, 1], 0.1)],
            [([0, 0], 0.6), ([0, 1], 0.3), ([1, 1], 0.1)],
        ],
    ]
    return [
        EnvironmentComponent.from_laws(permute_types([OffspringLaw.from_points(t) for t in table], perm))
        for table in tables
    ]


class TestTypePermutation:
    GRID = [8, 16, 32, 64, 128, 256, 512]

    def test_relabeled_model_swaps_estimates(self, executor):
        model = finite_mixture(_asymmetric_components(), [0.5, 0.5])
        swapped = finite_mixture(_asymmetric_components((1, 0)), [0.5, 0.5])
        for i in range(2):
            streams = RandomStreams(10 + i, 2)
            original = annealed_survival(model, i, self.GRID, 300, streams, executor)
            relabeled = annealed_survival(swapped, 1 - i, self.GRID, 300, streams, executor)
            np.testing.assert_allclose(relabeled.p_hat, original.p_hat, rtol=1e-9)
            assert relabeled.fit.beta_hat == pytest.approx(original.fit.beta_hat, rel=1e-8)

    def test_symmetric_scenario_has_equal_constants(self, executor):
        components = _asymmetric_components() + _asymmetric_components((1, 0))
        model = finite_mixture(components, [0.25] * 4)
        fits = [
            annealed_survival(model, i, self.GRID, 400, RandomStreams(12 + i, 2), executor).fit
            for i in range(2)
        ]
        assert fits[0].beta_ci[0] <= fits[1].beta_ci[1]
        assert fits[1].beta_ci[0] <= fits[0].beta_ci[1]


class TestSplitSurvival:
    def test_parts_add_up_to_annealed_estimate(self, two_type_critical, executor):
        streams = RandomStreams(5, 2)
        grid = [2, 8, 32]
        annealed = annealed_survival(two_type_critical, 0, grid, 300, streams, executor, fit=False)
        split = split_survival(two_type_critical, 0, 1.0, grid, 300, streams, executor)
        np.testing.assert_array_equal(split.total, annealed.p_hat)
        assert np.all(split.inside >= 0) and np.all(split.outside >= 0)
        assert "sqrt_n_inside" in split.to_frame().columns

    def test_rejects_nonpositive_level(self, two_type_critical):
        with pytest.raises(ValueError, match="positive"):
            split_survival(two_type_critical, 0, 0.0, [1, 2], 4, RandomStreams(0, 2))


class TestPopulation:
    def test_pair_offspring_doubles(self, pair_model, rng):
        trajectory = simulate_population(pair_model, BranchingState.single(2, 0), 6, rng=rng)
        counts = trajectory.counts()
        np.testing.assert_array_equal(counts[0], [1, 0])
        for n in range(1, 7):
            np.testing.assert_array_equal(counts[n], [2 ** (n - 1), 2 ** (n - 1)])
        assert trajectory.extinct_at is None

    def test_childless_dies_at_first_generation(self, childless_model, rng):
        trajectory = simulate_population(childless_model, BranchingState.single(1, 0), 10, rng=rng)
        assert trajectory.extinct_at == 1
        assert trajectory.alive_at(0)
        assert not trajectory.alive_at(1)

    def test_cap(self, doubling_model, rng):
        trajectory = simulate_population(doubling_model, BranchingState.single(1, 0), 50, cap=100, rng=rng)
        assert trajectory.capped
        assert trajectory.states[-1].total == 128
        assert trajectory.alive_at(50)

    def test_state_validation(self, doubling_model):
        with pytest.raises(ValueError):
            BranchingState(np.array([-1]), 0)
        with pytest.raises(ValueError, match="types"):
            simulate_population(doubling_model, BranchingState.single(2, 0), 3)

    def test_geometric_frequency(self, geometric_model, executor):
        result = population_survival(geometric_model, 0, [1, 4], 4000, RandomStreams(6, 3), executor=executor)
        expected = 1.0 / (result.grid + 1.0)
        assert np.all(np.abs(result.frequency - expected) <= 4.0 * result.stderr)
        np.testing.assert_array_equal(result.capped_fraction, 0.0)

    def test_workers_do_not_change_frequency(self, geometric_model):
        args = (geometric_model, 0, [1, 3], 600, RandomStreams(7, 3))
        serial = population_survival(*args, executor=ReplicaExecutor(1, 100))
        parallel = population_survival(*args, executor=ReplicaExecutor(2, 100))
        np.testing.assert_array_equal(serial.frequency, parallel.frequency)


@pytest.mark.slow
class TestAcceptance:
    def test_particles_agree_with_generating_functions(self, two_type_critical):
        executor = ReplicaExecutor(num_workers=1, chunk_size=5000)
        grid = [2, 8, 30]
        annealed = annealed_survival(two_type_critical, 0, grid, 100000, RandomStreams(8, 2), executor)
        particles = population_survival(
            two_type_critical, 0, grid, 100000, RandomStreams(8, 3), executor=executor
        )
        combined = np.sqrt(particles.stderr ** 2 + annealed.stderr ** 2)
        assert np.all(np.abs(particles.frequency - annealed.p_hat) <= 3.0 * combined)

    def test_critical_slope(self, two_type_critical):
        executor = ReplicaExecutor(num_workers=1, chunk_size=5000)
        grid = [64, 128, 256, 512, 1024, 2048, 4096]
        report = annealed_survival(two_type_critical, 0, grid, 100000, RandomStreams(9, 2), executor)
        assert report.fit.points == 4
        assert -0.57 <= report.fit.slope <= -0.43
        assert report.sqrt_n_p[-2] / report.sqrt_n_p[-1] == pytest.approx(1.0, abs=0.1)
        assert math.isfinite(report.fit.beta_hat)
