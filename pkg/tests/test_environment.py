"""
Tests for offspring laws, environment components and models
"""

import math

import numpy as np
import pytest

from mbpre.environment import (
    PRESET_SCENARIOS,
    EnvironmentComponent,
    ModelKind,
    OffspringLaw,
    ScenarioSpecError,
    build_preset,
    build_scenario,
    common_left_eigenvector,
    dump_law_table,
    finite_mixture,
    fractional_linear_model,
    geometric_form_with_mean,
    make_fractional_linear,
    mean_matrix,
    permute_types,
    sample_component,
    second_moments,
)
from mbpre.environment.models import FractionalLinearFamily


class TestOffspringLaw:
    def test_rejects_probabilities_not_summing_to_one(self):
        with pytest.raises(ValueError, match="sum"):
            OffspringLaw.from_points([([1], 0.5), ([2], 0.4)])

    def test_rejects_duplicate_support(self):
        with pytest.raises(ValueError, match="distinct"):
            OffspringLaw.from_points([([1], 0.5), ([1], 0.5)])

    def test_rejects_negative_counts(self):
        with pytest.raises(ValueError):
            OffspringLaw.from_points([([-1], 1.0)])

    def test_generate_and_complement_agree(self):
        law = OffspringLaw.from_points([([0, 1], 0.25), ([2, 1], 0.5), ([0, 0], 0.25)])
        s = np.array([0.3, 0.8])
        assert law.complement(1.0 - s) == pytest.approx(1.0 - law.generate(s), abs=1e-15)

    def test_complement_keeps_precision_near_one(self):
        law = OffspringLaw.deterministic([2])
        q = np.array([1e-20])
        assert law.complement(q) == pytest.approx(2e-20, rel=1e-12)

    @pytest.mark.filterwarnings("error")
    def test_complement_at_one_is_silent(self):
        law = OffspringLaw.from_points([([0, 1], 0.25), ([2, 1], 0.5), ([0, 0], 0.25)])
        assert law.complement(np.ones(2)) == pytest.approx(1.0 - law.generate(np.zeros(2)), abs=1e-15)


class TestMoments:
    def test_mean_matrix_of_explicit_laws(self):
        laws = [
            OffspringLaw.deterministic([1, 1]),
            OffspringLaw.from_points([([2, 0], 0.5), ([0, 0], 0.5)]),
        ]
        np.testing.assert_allclose(mean_matrix(laws), [[1.0, 1.0], [1.0, 0.0]])

    def test_doubling_moments(self):
        hessians, mu, eta = second_moments([OffspringLaw.deterministic([2])])
        np.testing.assert_allclose(hessians, [[[2.0]]])
        assert mu == 2.0
        assert eta == 0.5

    def test_geometric_moments(self):
        laws, form = make_fractional_linear(1, [0.5], [0.5], [[1.0]])
        np.testing.assert_allclose(mean_matrix(laws), [[1.0]], atol=1e-10)
        _, mu, eta = second_moments(laws)
        assert mu == pytest.approx(2.0, abs=1e-8)
        assert eta == pytest.approx(2.0, abs=1e-8)
        np.testing.assert_allclose(form.mean_matrix(), [[1.0]])
        np.testing.assert_allclose(form.hessians(), [[[2.0]]])

    def test_pair_offspring_moments(self, pair_component):
        for hessian in pair_component.hessians:
            np.testing.assert_allclose(hessian, [[0.0, 1.0], [1.0, 0.0]])
        assert pair_component.mu == 4.0
        assert pair_component.eta == 0.25

    def test_eta_undefined_without_offspring(self):
        with pytest.raises(ValueError, match=r"\|M\| = 0"):
            second_moments([OffspringLaw.deterministic([0])])

    def test_eta_invariant_under_type_permutation(self, rng):
        laws = [
            OffspringLaw.from_points([([0, 1, 2], 0.3), ([1, 0, 0], 0.7)]),
            OffspringLaw.from_points([([3, 0, 1], 0.6), ([0, 0, 0], 0.4)]),
            OffspringLaw.from_points([([1, 1, 1], 1.0)]),
        ]
        _, _, eta = second_moments(laws)
        for _ in range(5):
            _, _, permuted = second_moments(permute_types(laws, rng.permutation(3)))
            assert permuted == pytest.approx(eta, rel=1e-12)


class TestFractionalLinear:
    def test_critical_geometric_series(self):
        laws, form = make_fractional_linear(1, [0.5], [0.5], [[1.0]])
        law = laws[0]
        for z, prob in zip(law.support[:10], law.probs[:10]):
            assert prob == pytest.approx(0.5 ** (z[0] + 1), rel=1e-10)
        assert form.evaluate(np.array([0.0]))[0] == pytest.approx(0.5)
        assert law.generate(np.array([0.0])) == pytest.approx(0.5, abs=1e-12)

    def test_closed_form_is_normalized(self):
        _, form = make_fractional_linear(2, [0.2, 0.4], [0.3, 0.6], [[0.5, 0.5], [0.1, 0.9]])
        np.testing.assert_allclose(form.evaluate(np.ones(2)), np.ones(2), atol=1e-12)

    def test_truncated_mean_matches_closed_form(self):
        laws, form = make_fractional_linear(2, [0.2, 0.4], [0.3, 0.6], [[0.5, 0.5], [0.1, 0.9]])
        np.testing.assert_allclose(mean_matrix(laws), form.mean_matrix(), atol=1e-10)

    def test_stall_one_has_no_children(self):
        laws, _ = make_fractional_linear(1, [1.0], [0.5], [[1.0]])
        np.testing.assert_array_equal(laws[0].support, [[0]])
        with pytest.raises(ValueError):
            EnvironmentComponent.from_laws(laws)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            make_fractional_linear(1, [1.5], [0.5], [[1.0]])
        with pytest.raises(ValueError):
            make_fractional_linear(1, [0.5], [1.0], [[1.0]])
        with pytest.raises(ValueError):
            make_fractional_linear(1, [0.5], [0.5], [[0.7]])

    def test_geometric_form_with_mean(self):
        means = np.array([[1.2, 0.8], [0.5, 1.5]])
        np.testing.assert_allclose(geometric_form_with_mean(means).mean_matrix(), means, rtol=1e-12)


class TestModels:
    def test_scalar_symmetric_draws(self, lattice):
        rng = np.random.default_rng(0)
        draws = np.array([sample_component(lattice, rng).mean_matrix[0, 0] for _ in range(4000)])
        assert set(np.round(draws, 12)) == {2.0, 0.5}
        assert np.mean(draws > 1) == pytest.approx(0.5, abs=0.03)

    def test_degenerate_mixture(self, geometric_component):
        model = finite_mixture([geometric_component], [1.0])
        rng = np.random.default_rng(1)
        assert all(sample_component(model, rng) is geometric_component for _ in range(10))

    def test_mixture_weights_must_sum_to_one(self, geometric_component, doubling_component):
        with pytest.raises(ValueError, match="sum"):
            finite_mixture([geometric_component, doubling_component], [0.5, 0.4])

    def test_common_left_eigenvector(self):
        model = common_left_eigenvector([0.5, 0.5], [4.0], mixing=[-0.5])
        M = model.atoms[0].mean_matrix
        np.testing.assert_allclose(M, [[1.0, 3.0], [3.0, 1.0]], atol=1e-12)
        v = np.array([0.5, 0.5])
        assert np.abs(v @ M - 4.0 * v).max() < 1e-12

    def test_preset_eigenvector_residual(self, two_type_critical):
        v = np.asarray(two_type_critical.parameters["v"])
        for atom in two_type_critical.atoms:
            rho = atom.mean_matrix[0].sum()
            assert np.abs(v @ atom.mean_matrix - rho * v).max() < 1e-12

    def test_parametric_model_samples_valid_components(self):
        family = FractionalLinearFamily(
            1.0,
            np.array([0.1, 0.2]), np.array([0.3, 0.4]),
            np.array([0.2, 0.5]), np.array([0.4, 0.6]),
            np.array([[0.5, 0.5], [0.5, 0.5]]), np.array([[0.5, 0.5], [0.5, 0.5]]),
        )
        model = fractional_linear_model([family])
        assert not model.is_finite
        rng = np.random.default_rng(3)
        component = sample_component(model, rng)
        np.testing.assert_allclose(
            mean_matrix(component.laws), component.closed_form.mean_matrix(), atol=1e-10
        )

    def test_dump_law_table(self):
        law = OffspringLaw.from_points([([0, 1], 0.25), ([2, 0], 0.75)])
        assert dump_law_table(law) == "z_1,z_2,prob\n0,1,0.25\n2,0,0.75\n"


class TestScenarios:
    @pytest.mark.parametrize("name", sorted(PRESET_SCENARIOS))
    def test_presets_build(self, name):
        model = build_preset(name)
        assert model.name == name
        assert model.p >= 1

    def test_lattice_preset(self):
        model = build_preset("lattice")
        assert model.kind is ModelKind.SCALAR_SYMMETRIC
        assert model.parameters["delta"] == pytest.approx(math.log(2.0))

    def test_weights_error_names_field(self):
        spec = {
            "kind": "finite_mixture",
            "components": [
                {"weight": 0.5, "geometric_means": [[1.0]]},
                {"weight": 0.4, "geometric_means": [[2.0]]},
            ],
        }
        with pytest.raises(ScenarioSpecError) as info:
            build_scenario(spec)
        assert any("weight" in path for path, _ in info.value.issues)

    def test_unknown_kind(self):
        with pytest.raises(ScenarioSpecError):
            build_scenario({"kind": "markov"})

    def test_uniform_range_makes_parametric_model(self):
        spec = {
            "kind": "fractional_linear",
            "parameter_sets": [
                {"weight": 1.0, "stall": [{"uniform": [0.1, 0.3]}], "geometric": [0.5], "mixers": [[1.0]]}
            ],
        }
        model = build_scenario(spec)
        assert model.kind is ModelKind.FRACTIONAL_LINEAR
        assert not model.is_finite
