"""Unit and property tests for the Poisson binomial machinery.

The enumeration path is the oracle for the convolution path; the
configuration posterior is the oracle for the leave-one-out instance
posteriors.  Hand-checkable values are frozen in the assertions.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llpkit.errors import CapacityError, UsageError
from llpkit.poisson_binomial import (
    CLAMP_EPS,
    bag_log_likelihood,
    clamp_probabilities,
    configuration_posterior,
    enumerate_configurations,
    instance_posteriors,
    pb_dp,
    pb_enumerated,
)


@st.composite
def bag_probabilities(draw, max_n=12):
    n = draw(st.integers(min_value=1, max_value=max_n))
    p = draw(
        st.lists(
            st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
            min_size=n,
            max_size=n,
        )
    )
    y = draw(st.integers(min_value=0, max_value=n))
    return p, y


class TestEnumerateConfigurations:
    def test_three_choose_two(self):
        assert enumerate_configurations(3, 2) == [(0, 1, 1), (1, 0, 1), (1, 1, 0)]

    def test_zero_positives(self):
        assert enumerate_configurations(4, 0) == [(0, 0, 0, 0)]

    def test_count_matches_binomial_coefficient(self):
        configs = enumerate_configurations(12, 6)
        assert len(configs) == math.comb(12, 6) == 924
        assert len(set(configs)) == len(configs)
        assert all(sum(h) == 6 for h in configs)

    def test_lexicographic_order(self):
        configs = enumerate_configurations(6, 3)
        assert configs == sorted(configs)

    def test_capacity_guard(self):
        with pytest.raises(CapacityError):
            enumerate_configurations(21, 1)

    def test_bad_count(self):
        with pytest.raises(UsageError):
            enumerate_configurations(3, 4)


class TestPmf:
    def test_symmetric_pair(self):
        assert pb_enumerated([0.5, 0.5], 1) == pytest.approx(0.5, abs=1e-12)
        assert pb_dp([0.5, 0.5], 1) == pytest.approx(0.5, abs=1e-12)

    def test_single_bernoulli(self):
        assert pb_enumerated([0.3], 0) == pytest.approx(0.7, abs=1e-12)

    def test_hand_enumeration(self):
        # Configurations for y=2: (1,1,0) -> 0.03, (1,0,1) -> 0.07,
        # (0,1,1) -> 0.28; total 0.38.
        assert pb_enumerated([0.2, 0.5, 0.7], 2) == pytest.approx(0.38, abs=1e-12)
        assert pb_dp([0.2, 0.5, 0.7], 2) == pytest.approx(0.38, abs=1e-12)

    def test_large_bag_binomial_closed_form(self):
        p = [0.5] * 128
        expected = math.comb(128, 64) * 0.5**128
        assert pb_dp(p, 64) == pytest.approx(expected, rel=1e-10)

    def test_dp_has_no_size_limit(self):
        assert pb_dp([0.1] * 200, 0) > 0.0

    @given(bag_probabilities())
    @settings(max_examples=120, deadline=None)
    def test_dp_matches_enumeration(self, case):
        p, y = case
        assert abs(pb_dp(p, y) - pb_enumerated(p, y)) <= 1e-12

    @given(bag_probabilities())
    @settings(max_examples=60, deadline=None)
    def test_pmf_normalizes(self, case):
        p, _ = case
        total = sum(pb_dp(p, y) for y in range(len(p) + 1))
        assert total == pytest.approx(1.0, abs=1e-10)

    @given(
        st.integers(min_value=1, max_value=40),
        st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
    )
    @settings(max_examples=60, deadline=None)
    def test_constant_p_reduces_to_binomial(self, n, p):
        clamped = float(clamp_probabilities([p])[0])
        for y in range(n + 1):
            expected = (
                math.comb(n, y) * clamped**y * (1.0 - clamped) ** (n - y)
            )
            assert pb_dp([p] * n, y) == pytest.approx(expected, rel=1e-10)

    def test_rejects_bad_probabilities(self):
        with pytest.raises(UsageError):
            pb_dp([1.2], 0)
        with pytest.raises(UsageError):
            pb_dp([float("nan")], 0)
        with pytest.raises(UsageError):
            pb_dp([0.5], 2)


class TestConfigurationPosterior:
    def test_symmetric_pair(self):
        post = configuration_posterior([0.5, 0.5], 1)
        assert post[(1, 0)] == pytest.approx(0.5, abs=1e-12)
        assert post[(0, 1)] == pytest.approx(0.5, abs=1e-12)

    def test_hand_normalization(self):
        post = configuration_posterior([0.2, 0.5, 0.7], 2)
        assert post[(1, 1, 0)] == pytest.approx(0.03 / 0.38, abs=1e-12)
        assert post[(1, 0, 1)] == pytest.approx(0.07 / 0.38, abs=1e-12)
        assert post[(0, 1, 1)] == pytest.approx(0.28 / 0.38, abs=1e-12)

    def test_all_positive_bag_is_deterministic(self):
        post = configuration_posterior([0.2, 0.9, 0.4], 3)
        assert post == {(1, 1, 1): pytest.approx(1.0, abs=1e-12)}

    @given(bag_probabilities(max_n=10))
    @settings(max_examples=60, deadline=None)
    def test_weights_sum_to_one(self, case):
        p, y = case
        post = configuration_posterior(p, y)
        assert sum(post.values()) == pytest.approx(1.0, abs=1e-10)
        assert all(sum(h) == y for h in post)


class TestInstancePosteriors:
    def test_symmetry_forces_uniform_targets(self):
        phi = instance_posteriors([0.5, 0.5, 0.5, 0.5], 2)
        np.testing.assert_allclose(phi, 0.5, atol=1e-12)

    def test_hand_leave_one_out(self):
        # 0.2 * 0.5 / 0.38, 0.5 * 0.62 / 0.38, 0.7 * 0.5 / 0.38.
        phi = instance_posteriors([0.2, 0.5, 0.7], 2)
        np.testing.assert_allclose(
            phi, [0.1 / 0.38, 0.31 / 0.38, 0.35 / 0.38], atol=1e-12
        )

    def test_degenerate_counts(self):
        np.testing.assert_array_equal(instance_posteriors([0.3, 0.9], 0), [0.0, 0.0])
        np.testing.assert_array_equal(instance_posteriors([0.3, 0.9], 2), [1.0, 1.0])

    @given(bag_probabilities())
    @settings(max_examples=80, deadline=None)
    def test_sum_equals_count_and_bounds(self, case):
        p, y = case
        phi = instance_posteriors(p, y)
        assert phi.sum() == pytest.approx(y, abs=1e-10)
        assert np.all(phi >= 0.0) and np.all(phi <= 1.0)

    @given(bag_probabilities())
    @settings(max_examples=60, deadline=None)
    def test_matches_enumeration_marginals(self, case):
        p, y = case
        phi = instance_posteriors(p, y)
        post = configuration_posterior(p, y)
        marginals = np.zeros(len(p))
        for config, weight in post.items():
            marginals += weight * np.asarray(config)
        np.testing.assert_allclose(phi, marginals, atol=1e-10)


class TestBagLogLikelihood:
    def test_symmetric_pair(self):
        assert bag_log_likelihood([0.5, 0.5], 1) == pytest.approx(
            math.log(0.5), abs=1e-12
        )

    def test_hand_value(self):
        assert bag_log_likelihood([0.2, 0.5, 0.7], 2) == pytest.approx(
            math.log(0.38), abs=1e-12
        )

    def test_finite_even_for_saturated_outputs(self):
        value = bag_log_likelihood([0.0, 0.0, 0.0], 3)
        assert math.isfinite(value)
        assert value == pytest.approx(3 * math.log(CLAMP_EPS), rel=1e-9)


class TestClamping:
    def test_interior_values_untouched(self):
        p = np.array([0.2, 0.5, 0.7])
        np.testing.assert_array_equal(clamp_probabilities(p), p)

    def test_boundaries_pulled_inside(self):
        clamped = clamp_probabilities([0.0, 1.0])
        assert clamped[0] == CLAMP_EPS
        assert clamped[1] == 1.0 - CLAMP_EPS

    def test_same_clamping_on_both_pmf_paths(self):
        p = [0.0, 1.0, 0.5]
        for y in range(4):
            assert abs(pb_dp(p, y) - pb_enumerated(p, y)) <= 1e-15
