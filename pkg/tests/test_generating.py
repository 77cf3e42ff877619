"""
Tests for generating-function evaluation, composition and the telescoping identity
"""

import numpy as np
import pytest

from mbpre.generating import (
    CompositionChain,
    GfHandle,
    compose,
    delta2,
    evaluate,
    h_derivatives,
    h_of_z,
    kozlov_gap,
    psi,
    quenched_survival,
    telescope,
    telescope_explicit,
)
from mbpre.verify import random_chain, random_point


class TestEvaluate:
    def test_doubling_at_half(self, doubling_component):
        assert evaluate(doubling_component, np.array([0.5]))[0] == pytest.approx(0.25)

    def test_normalized_at_one(self, geometric_component, pair_component):
        assert evaluate(geometric_component, np.array([1.0]))[0] == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(evaluate(pair_component, np.ones(2)), np.ones(2), atol=1e-12)

    def test_geometric_closed_form_matches_truncated_sum(self, geometric_component):
        truncated = GfHandle.from_laws(geometric_component.laws)
        closed = GfHandle.from_component(geometric_component)
        s = np.array([0.0])
        assert evaluate(closed, s)[0] == pytest.approx(0.5, abs=1e-15)
        assert evaluate(truncated, s)[0] == pytest.approx(evaluate(closed, s)[0], abs=1e-12)

    def test_rejects_points_outside_cube(self, doubling_component):
        with pytest.raises(ValueError, match="unit cube"):
            evaluate(doubling_component, np.array([1.5]))

    def test_monotone(self, pair_component):
        low = evaluate(pair_component, np.array([0.2, 0.3]))
        high = evaluate(pair_component, np.array([0.4, 0.3]))
        assert np.all(low <= high)


class TestCompose:
    def test_empty_range_returns_seed(self, geometric_component):
        s = np.array([0.3])
        np.testing.assert_array_equal(compose([geometric_component] * 3, s, 3, 3), s)

    def test_geometric_iterates(self, geometric_component):
        assert compose([geometric_component] * 3, np.array([0.0]))[0] == pytest.approx(0.75)

    def test_doubling_keeps_zero(self, doubling_component):
        assert compose([doubling_component] * 5, np.array([0.0]))[0] == 0.0

    def test_associativity_is_exact(self, rng):
        chain = CompositionChain(random_chain(rng, 2, 8))
        s = np.array([0.2, 0.7])
        direct = compose(chain, s, 2, 8)
        split = compose(chain, compose(chain, s, 5, 8), 2, 5)
        np.testing.assert_array_equal(direct, split)

    def test_dimension_mismatch(self, geometric_component, pair_component):
        with pytest.raises(ValueError, match="share p"):
            CompositionChain([geometric_component, pair_component])


class TestQuenchedSurvival:
    def test_geometric(self, geometric_component):
        assert quenched_survival([geometric_component] * 4, 0) == pytest.approx(0.2, abs=1e-12)

    def test_doubling_never_dies(self, doubling_component):
        assert quenched_survival([doubling_component] * 10, 0) == 1.0

    def test_type_index_checked(self, geometric_component):
        with pytest.raises(ValueError):
            quenched_survival([geometric_component], 1)


class TestDerivedQuantities:
    def test_delta2(self, doubling_component, geometric_component):
        assert delta2(doubling_component, np.array([0.0]))[0] == pytest.approx(2.0)
        assert delta2(doubling_component, np.array([1.0]))[0] == 0.0
        assert delta2(geometric_component, np.array([0.5]))[0] == pytest.approx(0.5, abs=1e-8)

    def test_h_of_z(self, doubling_component, geometric_component):
        A = np.array([[1.0]])
        s = np.array([0.0])
        for z in (0.0, 0.3, 0.9):
            assert h_of_z(doubling_component, A, s, z) == pytest.approx(z ** 2)
        assert h_of_z(geometric_component, A, s, 0.5) == pytest.approx(2.0 / 3.0)
        assert h_of_z(geometric_component, A, np.array([0.4]), 1.0) == pytest.approx(1.0)

    def test_h_of_z_rejects_zero_matrix(self, doubling_component):
        with pytest.raises(ValueError, match=r"\|A\| = 0"):
            h_of_z(doubling_component, np.zeros((1, 1)), np.array([0.0]), 0.5)

    def test_h_derivatives(self, pair_component):
        A = np.array([[1.0, 2.0], [0.5, 0.5]])
        s = np.array([0.25, 0.5])
        first, second = h_derivatives(pair_component, A, s)
        q = 1.0 - s
        assert first == pytest.approx((A @ pair_component.mean_matrix @ q).sum() / A.sum())
        assert second == pytest.approx((A @ delta2(pair_component, s)).sum() / A.sum())

    def test_kozlov_gap_for_geometric(self, geometric_component):
        gap, upper = kozlov_gap(geometric_component, np.array([[1.0]]), np.array([0.0]), 0.5)
        assert gap == pytest.approx(1.0, abs=1e-12)
        assert upper == pytest.approx(2.0, abs=1e-8)


class TestPsi:
    @pytest.mark.parametrize("s", [0.0, 0.25, 0.5, 0.99])
    def test_geometric_is_one(self, geometric_component, s):
        assert psi(geometric_component, np.array([[1.0]]), None, np.array([s])) == pytest.approx(1.0, abs=1e-9)

    def test_doubling_at_zero(self, doubling_component):
        assert psi(doubling_component, np.array([[1.0]]), None, np.array([0.0])) == pytest.approx(0.5)

    def test_undefined_at_one(self, doubling_component):
        with pytest.raises(ValueError, match="s = 1"):
            psi(doubling_component, np.array([[1.0]]), None, np.array([1.0]))


class TestTelescope:
    def test_geometric_two_steps(self, geometric_component):
        report = telescope([geometric_component] * 2, [1.0], np.array([0.0]))
        assert report.lhs == pytest.approx(3.0)
        np.testing.assert_allclose(report.psi_terms, [1.0, 1.0], atol=1e-12)
        assert report.leading == pytest.approx(1.0)
        assert report.residual < 1e-12

    def test_doubling_one_step(self, doubling_component):
        report = telescope([doubling_component], [1.0], np.array([0.0]))
        assert report.lhs == pytest.approx(1.0)
        assert report.leading == pytest.approx(0.5)
        np.testing.assert_allclose(report.psi_terms, [0.5])
        assert report.rhs == pytest.approx(1.0)

    def test_rejects_unnormalized_start(self, doubling_component):
        with pytest.raises(ValueError):
            telescope([doubling_component], [2.0], np.array([0.0]))

    def test_random_instances_satisfy_identity(self, rng):
        for _ in range(20):
            p = int(rng.integers(1, 4))
            n = int(rng.integers(1, 16))
            chain = CompositionChain(random_chain(rng, p, n, positive_means=True))
            report = telescope(chain, random_point(rng, p), rng.random(p))
            assert report.residual < 1e-9
            assert report.min_psi >= -1e-12 * abs(report.lhs)

    def test_explicit_products_agree(self, rng):
        for _ in range(10):
            p = int(rng.integers(1, 4))
            chain = CompositionChain(random_chain(rng, p, 10, positive_means=True))
            x = random_point(rng, p)
            incremental = telescope(chain, x, np.zeros(p))
            explicit = telescope_explicit(chain, x, np.zeros(p))
            assert explicit.residual < 1e-9
            assert explicit.lhs == incremental.lhs
            np.testing.assert_allclose(explicit.log_norms, incremental.log_norms, rtol=1e-10, atol=1e-10)

    def test_survival_bound_along_sampled_environments(self, two_type_critical):
        rng = np.random.default_rng(31)
        for _ in range(30):
            path = two_type_critical.sample_path(rng, 60)
            chain = CompositionChain([two_type_critical.component_at(path, k) for k in range(60)])
            for i in range(2):
                report = telescope(chain, np.eye(2)[i], np.zeros(2))
                assert report.lhs == pytest.approx(1.0 / quenched_survival(chain, i), rel=1e-12)
                assert report.leading == pytest.approx(np.exp(-report.log_norms[-1]), rel=1e-12)
                assert np.isfinite(report.bound)
                assert report.bound_slack >= -1e-9 * abs(report.lhs)

    def test_explicit_products_limited(self, doubling_component):
        with pytest.raises(ValueError, match="n <= 20"):
            telescope_explicit([doubling_component] * 21, [1.0], np.array([0.0]))

