"""
Tests for the projective chain, the associated walk and the condition checkers
"""

import math

import numpy as np
import pytest

from mbpre.environment import EnvironmentComponent, OffspringLaw, finite_mixture
from mbpre.runner import RandomStreams
from mbpre.walk import (
    ProjectivePoint,
    advance_walks,
    check_conditions,
    cocycle,
    explicit_log_norm,
    invariant_measure,
    lyapunov,
    positive_product_length,
    projective_action,
    ratio_constant,
    run_walk,
    sample_block,
)
from mbpre.walk.conditions import FLAGGED, INCONCLUSIVE, PASS

LN2 = math.log(2.0)


@pytest.fixture
def row_sum_three():
    """平均行列 [[1, 2], [2, 1]] の固定環境"""
    laws = [OffspringLaw.deterministic([1, 2]), OffspringLaw.deterministic([2, 1])]
    return finite_mixture([EnvironmentComponent.from_laws(laws)], [1.0])


class TestProjective:
    def test_action(self):
        y = projective_action([0.5, 0.5], np.array([[1.0, 0.0], [0.0, 3.0]]))
        np.testing.assert_allclose(y.x, [0.25, 0.75])
        assert y.x.sum() == pytest.approx(1.0, abs=1e-12)

    def test_annihilated_point(self):
        with pytest.raises(ValueError, match=r"\|xA\| = 0"):
            projective_action([1.0, 0.0], np.array([[0.0, 0.0], [1.0, 1.0]]))

    def test_cocycle(self):
        assert cocycle([0.5, 0.5], np.array([[1.0, 0.0], [0.0, 3.0]])) == pytest.approx(LN2)
        assert cocycle([0.3, 0.7], np.eye(2)) == pytest.approx(0.0, abs=1e-15)

    def test_cocycle_sums_to_explicit_log_norm(self, rng):
        matrices = [rng.uniform(0.1, 2.0, size=(3, 3)) for _ in range(12)]
        point = ProjectivePoint.uniform(3)
        total = 0.0
        for matrix in matrices:
            total += cocycle(point, matrix)
            point = projective_action(point, matrix)
        assert total == pytest.approx(explicit_log_norm(ProjectivePoint.uniform(3), matrices), rel=1e-10)

    def test_point_must_be_normalized(self):
        with pytest.raises(ValueError):
            ProjectivePoint(np.array([0.5, 0.6]))
        np.testing.assert_allclose(ProjectivePoint.normalized([1.0, 3.0]).x, [0.25, 0.75])

    def test_vertex(self):
        np.testing.assert_array_equal(ProjectivePoint.vertex(3, 1).x, [0.0, 1.0, 0.0])
        with pytest.raises(ValueError):
            ProjectivePoint.vertex(3, 3)

    def test_ratio_constant(self):
        assert ratio_constant(np.array([[1.0, 2.0], [4.0, 1.0]])) == 4.0
        assert ratio_constant(np.eye(2)) == math.inf


class TestRunWalk:
    def test_tau_matches_recorded_values(self, lattice):
        rng = np.random.default_rng(8)
        for _ in range(50):
            path = run_walk(None, LN2, lattice, 40, rng)
            assert path.tau == path.first_nonpositive()
            if path.tau is not None:
                assert np.all(path.values[1:path.tau] > 0)

    def test_identity_environment_stays_put(self, identity_model, rng):
        path = run_walk([0.3, 0.7], 1.0, identity_model, 20, rng)
        np.testing.assert_allclose(path.values, 1.0)
        np.testing.assert_allclose(path.points, np.tile([0.3, 0.7], (21, 1)))
        assert path.tau is None

    def test_common_eigenvector_increments(self, two_type_critical, rng):
        v = np.asarray(two_type_critical.parameters["v"])
        path = run_walk(v, 5.0, two_type_critical, 30, rng)
        np.testing.assert_allclose(np.abs(path.increments), LN2, rtol=1e-12)
        np.testing.assert_allclose(path.points, np.tile(v, (31, 1)), atol=1e-12)

    def test_common_eigenvector_long_walk(self, two_type_critical):
        v = np.asarray(two_type_critical.parameters["v"])
        streams = RandomStreams(79, 1)
        n, a = 1000, 3.0
        for r in range(100):
            path = run_walk(v, a, two_type_critical, n, streams.generator(r))
            env = two_type_critical.sample_path(streams.generator(r), n)
            rho = [(v @ two_type_critical.mean_matrix_at(env, k)).sum() for k in range(n)]
            assert abs(path.values[-1] - (a + np.sum(np.log(rho)))) < 1e-10

    def test_block_matches_single_path(self, two_type_critical):
        streams = RandomStreams(77, 1)
        x = np.array([0.2, 0.8])
        n = 25
        block = sample_block(two_type_critical, range(4), streams, n)
        walked = advance_walks(block, x, 2.0, [n])
        for r in range(4):
            path = run_walk(x, 2.0, two_type_critical, n, streams.generator(r))
            assert walked.values[r, 0] == pytest.approx(path.values[-1], abs=1e-10)
            assert (walked.tau[r] or None) == path.tau

    def test_scalar_block_matches_single_path(self, lattice):
        streams = RandomStreams(78, 1)
        block = sample_block(lattice, range(6), streams, 30)
        walked = advance_walks(block, np.ones(1), LN2, [10, 30])
        for r in range(6):
            path = run_walk(None, LN2, lattice, 30, streams.generator(r))
            assert walked.values[r, 0] == pytest.approx(path.values[10], abs=1e-12)
            assert (walked.tau[r] or None) == path.tau

    def test_negative_length(self, lattice, rng):
        with pytest.raises(ValueError):
            run_walk(None, 1.0, lattice, -1, rng)


class TestLyapunov:
    def test_constant_row_sums(self, row_sum_three, executor):
        estimate = lyapunov(row_sum_three, 50, 100, RandomStreams(1, 7), executor=executor)
        assert estimate.estimate == pytest.approx(math.log(3.0), rel=1e-12)
        assert estimate.stderr == 0.0

    def test_lattice_is_critical(self, lattice, executor):
        estimate, stderr = lyapunov(lattice, 400, 2000, RandomStreams(2, 7), executor=executor)
        assert stderr > 0
        assert abs(estimate) <= 4.0 * stderr

    def test_scalar_estimate_is_mean_log_offspring_mean(self, executor):
        components = [EnvironmentComponent.from_laws([OffspringLaw.deterministic([m])]) for m in (1, 2, 3)]
        model = finite_mixture(components, [0.5, 0.2, 0.3])
        streams = RandomStreams(3, 7)
        n, replicas = 40, 60
        estimate = lyapunov(model, n, replicas, streams, executor=executor)
        logs = [
            math.log(model.mean_matrix_at(path, k)[0, 0])
            for path in (model.sample_path(streams.generator(r), n) for r in range(replicas))
            for k in range(n)
        ]
        assert estimate.estimate == pytest.approx(np.mean(logs), abs=1e-12)

    @pytest.mark.slow
    def test_lattice_acceptance(self, lattice):
        from mbpre.runner import ReplicaExecutor

        estimate, stderr = lyapunov(
            lattice, 100, 100000, RandomStreams(4, 7), executor=ReplicaExecutor(num_workers=1, chunk_size=5000)
        )
        assert abs(estimate) <= 3.0 * stderr

    def test_requires_positive_sizes(self, lattice):
        with pytest.raises(ValueError):
            lyapunov(lattice, 0, 10, RandomStreams(0, 7))


class TestInvariantMeasure:
    def test_scalar_model_is_trivial(self, lattice, rng):
        measure = invariant_measure(lattice, 10, 200, rng)
        np.testing.assert_allclose(measure.points, 1.0)
        assert measure.stationary

    def test_common_eigenvector_is_fixed(self, two_type_critical, rng):
        v = np.asarray(two_type_critical.parameters["v"])
        measure = invariant_measure(two_type_critical, 20, 500, rng, x=v)
        np.testing.assert_allclose(measure.mean(), v, atol=1e-12)
        assert measure.max_residual < 1e-10
        assert measure.stationary

    def test_residual_shrinks_with_samples(self):
        from mbpre.environment import build_preset

        model = build_preset("two_type_fractional")
        means = []
        for samples in (500, 2000, 8000):
            residuals = [
                invariant_measure(model, 50, samples, np.random.default_rng(seed)).max_residual
                for seed in range(12)
            ]
            means.append(np.mean(residuals))
        assert means[0] > means[1] > means[2]
        assert means[2] < 0.5 * means[0]


class TestConditions:
    def test_positive_product_length(self):
        matrices = np.array([[[1.0, 1.0], [1.0, 0.0]]])
        assert positive_product_length(matrices) == 2
        assert positive_product_length(np.array([np.eye(2)])) is None

    def test_identity_environment(self, identity_model, executor):
        report = check_conditions(
            identity_model, n=20, replicas=50, streams=RandomStreams(3, 8), executor=executor
        )
        assert report.exact
        assert report.get("H2").status == INCONCLUSIVE
        assert report.get("H3").status == FLAGGED
        assert report.get("H4").status == PASS
        assert report.get("H4").estimate == 0.0

    def test_lattice_h5_probability(self, lattice, executor):
        report = check_conditions(
            lattice, delta_grid=(0.1, 0.5), n=50, replicas=200, streams=RandomStreams(4, 8), executor=executor
        )
        assert report.get("H5[delta=0.5]").estimate == pytest.approx(0.5)
        assert report.get("H5[delta=0.1]").status == PASS
        assert report.get("ExponFinite").estimate == pytest.approx(0.5 * 0.5 + 0.5 * 2.0)

    def test_frame_and_text(self, lattice, executor):
        report = check_conditions(lattice, n=20, replicas=40, streams=RandomStreams(5, 8), executor=executor)
        frame = report.to_frame()
        assert list(frame.columns) == ["quantity", "status", "estimate", "stderr"]
        assert len(frame) == len(report.results)
        assert "H4" in report.format_text()
