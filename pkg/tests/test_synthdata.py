"""Tests for the synthetic profile curves and dataset generator."""

import numpy as np
import pytest

from tcsim.errors import InvalidInputError
from tcsim.synthdata import PROFILE_IDS, SynthConfig, generate, profile, uneven_grid

FINE_GRID = np.linspace(0.0, 1.0, 1000)
MIN_SQUARED_SEPARATION = 0.0225


class TestProfiles:
    def test_anchor_values(self):
        assert profile(1, np.array([0.25]))[0] == pytest.approx(0.5, abs=1e-12)
        assert profile(2, np.array([0.5]))[0] == 0.0
        assert profile(3, np.array([0.5]))[0] == pytest.approx(0.25, abs=1e-12)

    def test_bounded(self):
        for pid in PROFILE_IDS:
            values = profile(pid, FINE_GRID)
            assert values.min() >= -0.5
            assert values.max() <= 0.6

    def test_pairwise_l2_separation(self):
        # trapezoid quadrature of (P_i - P_j)^2 over [0, 1]
        for i in PROFILE_IDS:
            for j in PROFILE_IDS:
                if i >= j:
                    continue
                diff = profile(i, FINE_GRID) - profile(j, FINE_GRID)
                assert np.trapezoid(diff**2, FINE_GRID) > MIN_SQUARED_SEPARATION

    def test_domain_validated(self):
        with pytest.raises(InvalidInputError):
            profile(1, np.array([-0.1]))
        with pytest.raises(InvalidInputError):
            profile(1, np.array([1.1]))

    def test_unknown_id(self):
        with pytest.raises(InvalidInputError):
            profile(4, np.array([0.5]))


class TestUnevenGrid:
    def test_band_layout_at_default_length(self):
        grid = uneven_grid(15)
        assert grid.size == 15
        assert np.all(np.diff(grid) > 0)
        assert np.sum((grid >= 0.0) & (grid <= 0.3)) == 7
        assert np.sum((grid >= 0.4) & (grid <= 0.6)) == 3
        assert np.sum((grid >= 0.8) & (grid <= 1.0)) == 5
        assert grid[0] == 0.0 and grid[-1] == 1.0

    def test_middle_gap_is_sparse(self):
        grid = uneven_grid(15)
        assert np.sum((grid > 0.3) & (grid < 0.4)) == 0
        assert np.sum((grid > 0.6) & (grid < 0.8)) == 0

    def test_too_short_rejected(self):
        # two points cannot cover three bands
        with pytest.raises(InvalidInputError):
            uneven_grid(2)

    def test_minimal_length_still_covers_bands(self):
        grid = uneven_grid(3)
        assert grid.size == 3
        assert np.all(np.diff(grid) > 0)


class TestSynthConfig:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            SynthConfig(n_per_profile=0)
        with pytest.raises(InvalidInputError):
            SynthConfig(length=1)
        with pytest.raises(InvalidInputError):
            SynthConfig(noise_std=-0.1)
        with pytest.raises(InvalidInputError):
            SynthConfig(noise_std=np.nan)
        with pytest.raises(InvalidInputError):
            SynthConfig(sampling="random")

    def test_dropout_bounds_only_checked_for_async(self):
        SynthConfig(sampling="even", dropout_counts=(99,))
        with pytest.raises(InvalidInputError):
            SynthConfig(sampling="async", dropout_counts=(14,), length=15)
        with pytest.raises(InvalidInputError):
            SynthConfig(sampling="async", dropout_counts=(-1,))
        with pytest.raises(InvalidInputError):
            SynthConfig(sampling="async", dropout_counts=())


class TestGenerate:
    def test_shapes_and_truth(self):
        courses, truth = generate(SynthConfig(n_per_profile=4, seed=0))
        assert len(courses) == 12
        assert truth.k == 3
        np.testing.assert_array_equal(np.bincount(truth.labels), [4, 4, 4])
        assert truth.ids == tuple(tc.id for tc in courses)
        assert len(set(truth.ids)) == 12

    def test_even_grid_shared(self):
        courses, _ = generate(SynthConfig(n_per_profile=3, seed=1))
        want = np.linspace(0.0, 1.0, 15)
        for tc in courses:
            np.testing.assert_array_equal(tc.times, want)

    def test_uneven_grid_shared(self):
        courses, _ = generate(SynthConfig(n_per_profile=3, sampling="uneven", seed=1))
        want = uneven_grid(15)
        for tc in courses:
            np.testing.assert_array_equal(tc.times, want)

    def test_zero_noise_reproduces_profiles(self):
        courses, truth = generate(SynthConfig(n_per_profile=2, noise_std=0.0, seed=5))
        for tc, group in zip(courses, truth.labels):
            np.testing.assert_array_equal(tc.values, profile(PROFILE_IDS[group], tc.times))

    def test_deterministic_given_seed(self):
        a, _ = generate(SynthConfig(seed=42))
        b, _ = generate(SynthConfig(seed=42))
        for tc_a, tc_b in zip(a, b):
            assert tc_a.id == tc_b.id
            np.testing.assert_array_equal(tc_a.times, tc_b.times)
            np.testing.assert_array_equal(tc_a.values, tc_b.values)

    def test_seed_changes_noise(self):
        a, _ = generate(SynthConfig(seed=0))
        b, _ = generate(SynthConfig(seed=1))
        assert not np.array_equal(a[0].values, b[0].values)

    def test_noise_independent_across_courses(self):
        courses, _ = generate(SynthConfig(n_per_profile=2, seed=3))
        # same profile, same grid, different draws
        assert not np.array_equal(courses[0].values, courses[1].values)

    def test_noise_moment(self):
        config = SynthConfig(n_per_profile=200, noise_std=0.08, seed=7)
        courses, truth = generate(config)
        residuals = np.concatenate(
            [
                tc.values - profile(PROFILE_IDS[g], tc.times)
                for tc, g in zip(courses, truth.labels)
            ]
        )
        assert abs(residuals.std() - 0.08) < 0.01
        assert abs(residuals.mean()) < 0.01

    def test_async_grids(self):
        config = SynthConfig(sampling="async", dropout_counts=(6, 7, 8), seed=9)
        courses, _ = generate(config)
        base = set(np.linspace(0.0, 1.0, 15))
        seen_lengths = set()
        for tc in courses:
            assert tc.times[0] == 0.0 and tc.times[-1] == 1.0
            assert set(tc.times) <= base
            seen_lengths.add(tc.times.size)
        assert seen_lengths == {7, 8, 9}

    def test_async_grids_vary_between_courses(self):
        config = SynthConfig(sampling="async", seed=11)
        courses, _ = generate(config)
        keys = {tuple(tc.times) for tc in courses}
        assert len(keys) > 10
