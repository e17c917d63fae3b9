# tests/test_base_space.py
import math

import numpy as np
import pytest
from pydantic import ValidationError

from core.base_space import (
    FiniteBaseSpace,
    be_defect,
    best_be_constant,
    build_circle,
    build_two_state,
    check_log_harnack_base,
    check_sub_markov_base,
    continuum_rate,
    default_f_samples,
    exact_be_constant,
    generator_apply,
    interval_integral,
    semigroup_matrix,
    spectral_gap,
    square_field,
)
from core.errors import InvalidInputError, ReducibleBaseError


# ---------------------------------------------------------------------------
# Construction and validation
# ---------------------------------------------------------------------------


class TestFixtures:
    def test_two_state_shape(self):
        space = build_two_state(1.5)
        assert space.n == 2
        assert space.total_mass == pytest.approx(2.0)
        assert np.allclose(space.generator.sum(axis=1), 0.0)
        assert space.metric[0, 1] == 1.0

    def test_circle_metric_is_arc_length(self):
        space = build_circle(8)
        h = 2 * math.pi / 8
        assert space.metric[0, 1] == pytest.approx(h)
        assert space.metric[0, 4] == pytest.approx(math.pi)
        assert space.metric[1, 7] == pytest.approx(2 * h)
        assert space.weights.sum() == pytest.approx(2 * math.pi)

    def test_circle_needs_three_points(self):
        with pytest.raises(InvalidInputError):
            build_circle(2)

    def test_non_positive_rate_rejected(self):
        with pytest.raises(InvalidInputError):
            build_two_state(0.0)

    def test_continuum_rate(self):
        assert continuum_rate(16) == pytest.approx((16 / (2 * math.pi)) ** 2)


class TestValidation:
    def test_row_sums_must_vanish(self):
        with pytest.raises(ValidationError):
            FiniteBaseSpace(states=["a", "b"], m=[1, 1], Q=[[-1, 2], [1, -1]])

    def test_detailed_balance(self):
        with pytest.raises(ValidationError):
            FiniteBaseSpace(states=["a", "b"], m=[1, 2], Q=[[-1, 1], [1, -1]])

    def test_reversible_with_unequal_weights(self):
        space = FiniteBaseSpace(states=["a", "b"], m=[1, 2], Q=[[-2, 2], [1, -1]])
        assert space.is_irreducible

    def test_positive_weights(self):
        with pytest.raises(ValidationError):
            FiniteBaseSpace(states=["a", "b"], m=[1, 0], Q=[[-1, 1], [1, -1]])

    def test_duplicate_labels(self):
        with pytest.raises(ValidationError):
            FiniteBaseSpace(states=["a", "a"], m=[1, 1], Q=[[-1, 1], [1, -1]])

    def test_metric_triangle(self):
        with pytest.raises(ValidationError):
            FiniteBaseSpace(
                states=["a", "b", "c"],
                m=[1, 1, 1],
                Q=[[-2, 1, 1], [1, -2, 1], [1, 1, -2]],
                d=[[0, 1, 5], [1, 0, 1], [5, 1, 0]],
            )

    def test_reducible_base(self):
        space = FiniteBaseSpace(states=["a", "b"], m=[1, 1], Q=[[0, 0], [0, 0]])
        assert not space.is_irreducible
        with pytest.raises(ReducibleBaseError):
            space.require_irreducible()

    def test_missing_metric(self):
        space = FiniteBaseSpace(states=["a", "b"], m=[1, 1], Q=[[-1, 1], [1, -1]])
        with pytest.raises(InvalidInputError):
            space.require_metric()

    def test_json_document(self):
        space = build_circle(5)
        again = FiniteBaseSpace.from_json(space.to_json())
        assert again.states == space.states
        assert np.allclose(again.generator, space.generator)

    def test_index_of_unknown_label(self):
        with pytest.raises(InvalidInputError):
            build_two_state(1.0).index_of("z")


# ---------------------------------------------------------------------------
# Generator, square field, semigroup
# ---------------------------------------------------------------------------


class TestCalculus:
    def test_square_field_two_state(self):
        space = build_two_state(3.0)
        gamma = square_field(space, np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        assert gamma == pytest.approx([1.5, 1.5])

    def test_square_field_identity(self):
        space = build_circle(6)
        rng = np.random.default_rng(0)
        f, g = rng.standard_normal(6), rng.standard_normal(6)
        identity = 0.5 * (generator_apply(space, f * g) - f * generator_apply(space, g) - g * generator_apply(space, f))
        assert np.allclose(square_field(space, f, g), identity, atol=1e-12)

    def test_generator_kills_constants(self):
        assert np.allclose(generator_apply(build_circle(7), np.ones(7)), 0.0)

    def test_two_state_heat_kernel(self):
        space = build_two_state(1.0)
        h = semigroup_matrix(space, 0.3)
        assert h[0, 0] == pytest.approx(0.5 * (1 + math.exp(-0.6)))
        assert h.sum(axis=1) == pytest.approx([1.0, 1.0])

    def test_semigroup_at_zero(self):
        assert np.array_equal(semigroup_matrix(build_circle(4), 0.0), np.eye(4))

    def test_negative_time(self):
        with pytest.raises(InvalidInputError):
            semigroup_matrix(build_two_state(1.0), -1.0)

    def test_spectral_gap_two_state(self):
        assert spectral_gap(build_two_state(1.25)) == pytest.approx(2.5)

    def test_interval_integral(self):
        assert interval_integral(0.0, 0.7) == pytest.approx(0.7)
        assert interval_integral(2.0, 0.5) == pytest.approx((math.e - 1) / 2)

    def test_sub_markov(self):
        report = check_sub_markov_base(build_circle(6), [0.1, 1.0], count=8)
        assert report.passed

    def test_default_samples_start_with_indicators(self):
        samples = default_f_samples(build_circle(4), count=3, seed=1)
        assert len(samples) == 7
        assert np.array_equal(samples[2], np.eye(4)[2])


# ---------------------------------------------------------------------------
# Gradient estimate constant
# ---------------------------------------------------------------------------


class TestGradientEstimate:
    def test_two_state_exact_constant(self):
        result = exact_be_constant(build_two_state(1.0), 1.0, [0.5, 1.0])
        assert result.K_best == pytest.approx(2.0, abs=1e-8)

    def test_two_state_sampled_constant(self):
        space = build_two_state(1.0)
        result = best_be_constant(space, 1.0, [0.5, 1.0], default_f_samples(space, 4))
        assert result.K_best == pytest.approx(2.0, abs=1e-5)

    def test_sampled_never_below_exact(self):
        space = build_circle(6)
        grid = [0.1, 0.5, 1.0]
        exact = exact_be_constant(space, 1.0, grid)
        sampled = best_be_constant(space, 1.0, grid, default_f_samples(space, 16))
        assert sampled.K_best >= exact.K_best - 1e-6

    def test_extremal_function_saturates(self):
        space = build_circle(5)
        grid = [0.2, 1.0]
        exact = exact_be_constant(space, 1.0, grid)
        f = np.asarray(exact.witness["function"])
        assert be_defect(space, exact.K_best, 1.0, grid, [f]) <= 1e-9
        assert be_defect(space, exact.K_best + 0.05, 1.0, grid, [f]) > 0

    def test_short_times_on_a_fine_circle(self):
        # far heat kernel entries underflow at these times
        space = build_circle(16)
        grid = [0.005, 0.01, 0.02, 0.05]
        exact = exact_be_constant(space, 1.0, grid)
        assert math.isfinite(exact.K_best)
        assert be_defect(space, exact.K_best, 1.0, grid, default_f_samples(space)) <= 1e-8

    def test_c_below_one(self):
        with pytest.raises(InvalidInputError):
            exact_be_constant(build_two_state(1.0), 0.5, [1.0])

    def test_log_harnack_two_state_k_zero(self):
        space = build_two_state(1.0)
        report = check_log_harnack_base(space, 0.0, [0.5], [np.array([1.0, 2.0])])
        assert report.tier == "asymptotic"
        assert report.passed is None

    def test_log_harnack_needs_positive(self):
        with pytest.raises(InvalidInputError):
            check_log_harnack_base(build_two_state(1.0), 0.0, [0.5], [np.array([1.0, -1.0])])
