"""Tests for shadow_1d module."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorenz_shadow.errors import AccuracyError, ParameterError, PseudoOrbitError
from lorenz_shadow.shadow_1d import (
    Interval,
    PseudoOrbit1D,
    build_interval_chain,
    chain_invariants,
    generate_pseudo_orbit_1d,
    pullback_interval,
    pullback_stack,
    run_1d_pipeline,
    shadow_bound_ok,
    solve_shadow_point_1d,
    strict_nesting_depth,
    validate_pseudo_orbit_1d,
    verify_rhs_shift,
)
from tests.conftest import assert_close, assert_nested, assert_pseudo_orbit_1d


class TestInterval:
    """Test the Interval helper."""

    def test_centered(self):
        interval = Interval.centered(0.5, 0.1)
        assert_close(interval.center, 0.5, 1e-15)
        assert_close(interval.length, 0.2, 1e-15)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Interval(1.0, 0.0)

    def test_containment(self):
        outer = Interval(0.0, 1.0)
        assert outer.contains(0.5)
        assert not outer.contains(1.5)
        assert outer.contains_interval(Interval(0.2, 0.3))
        assert Interval(0.2, 0.3).strictly_inside(outer)
        assert not Interval(0.0, 0.3).strictly_inside(outer)

    def test_mirrored(self):
        assert Interval(0.2, 0.5).mirrored() == Interval(-0.5, -0.2)


class TestPseudoOrbitGeneration:
    """Test generate_pseudo_orbit_1d and validate_pseudo_orbit_1d."""

    def test_noise_orbit_is_pseudo_orbit(self, reference_spec, map_constants):
        """Every step stays within delta of the shifted image."""
        orbit = generate_pseudo_orbit_1d(reference_spec, map_constants, 200, seed=0)
        assert len(orbit) == 201
        assert orbit.mu == map_constants.mu_hat
        assert np.all(np.abs(orbit.points) <= 1.0)
        assert_pseudo_orbit_1d(reference_spec, orbit.points, orbit.mu, map_constants.delta)
        validate_pseudo_orbit_1d(orbit, reference_spec)

    def test_same_seed_same_orbit(self, reference_spec, map_constants):
        first = generate_pseudo_orbit_1d(reference_spec, map_constants, 100, seed=7)
        second = generate_pseudo_orbit_1d(reference_spec, map_constants, 100, seed=7)
        other = generate_pseudo_orbit_1d(reference_spec, map_constants, 100, seed=8)
        assert np.array_equal(first.points, second.points)
        assert not np.array_equal(first.points, other.points)

    def test_gamma_terminal_ends_at_zero(self, reference_spec, map_constants):
        """x_50 = 0 exactly."""
        orbit = generate_pseudo_orbit_1d(
            reference_spec, map_constants, 50, seed=3, mode='gamma-terminal'
        )
        assert orbit.terminal_gamma
        assert orbit.points[50] == 0.0
        validate_pseudo_orbit_1d(orbit, reference_spec)

    def test_gamma_crossing_visits_singular_point(self, reference_spec, map_constants):
        """Some x_k lies within epsilon1/2 of 0."""
        orbit = generate_pseudo_orbit_1d(
            reference_spec, map_constants, 80, seed=11, mode='gamma-crossing'
        )
        assert np.min(np.abs(orbit.points)) <= 0.5 * map_constants.epsilon1
        validate_pseudo_orbit_1d(orbit, reference_spec)

    def test_validator_reports_first_bad_step(self, reference_spec, map_constants):
        orbit = generate_pseudo_orbit_1d(reference_spec, map_constants, 30, seed=1)
        points = orbit.points.copy()
        points[12] = np.clip(points[12] + 10.0 * map_constants.delta, -1.0, 1.0)
        broken = PseudoOrbit1D(points, orbit.delta, orbit.mu)
        with pytest.raises(PseudoOrbitError) as info:
            validate_pseudo_orbit_1d(broken, reference_spec)
        assert info.value.index == 11

    def test_validator_rejects_points_outside_square(self, reference_spec, map_constants):
        broken = PseudoOrbit1D(np.array([0.5, 1.5]), map_constants.delta, map_constants.mu_hat)
        with pytest.raises(PseudoOrbitError):
            validate_pseudo_orbit_1d(broken, reference_spec)

    def test_invalid_arguments(self, reference_spec, map_constants):
        with pytest.raises(ParameterError):
            generate_pseudo_orbit_1d(reference_spec, map_constants, 0, seed=0)
        with pytest.raises(ParameterError):
            generate_pseudo_orbit_1d(reference_spec, map_constants, 10, seed=0, mode='chaos')


class TestIntervalChain:
    """Test build_interval_chain and its invariants."""

    def test_first_interval_centered(self, reference_spec, map_constants):
        """l_0 has length 2*epsilon1 and centre x_0."""
        orbit = generate_pseudo_orbit_1d(reference_spec, map_constants, 60, seed=2)
        chain = build_interval_chain(reference_spec, orbit, map_constants)
        assert len(chain) == 61
        first = chain.interval(0)
        assert_close(first.length, 2.0 * map_constants.epsilon1, 1e-12)
        assert_close(first.center, float(orbit.points[0]), 1e-12)

    @pytest.mark.parametrize('seed', [0, 1, 2, 3, 4])
    def test_noise_chain_invariants(self, reference_spec, map_constants, seed):
        orbit = generate_pseudo_orbit_1d(reference_spec, map_constants, 150, seed=seed)
        chain = build_interval_chain(reference_spec, orbit, map_constants)
        report = chain_invariants(chain, orbit)
        assert report.passed, report.violations
        assert report.checked_steps == 151

    def test_straddle_step_recorded(self, reference_spec, map_constants):
        """A step close to 0 is recorded with a long third image and a wide gap."""
        orbit = generate_pseudo_orbit_1d(
            reference_spec, map_constants, 80, seed=11, mode='gamma-crossing'
        )
        chain = build_interval_chain(reference_spec, orbit, map_constants)
        assert chain.straddles
        for record in chain.straddles:
            assert record.image_length > 3.9 * map_constants.epsilon1
            assert record.side in (1, -1)
        assert chain_invariants(chain, orbit).passed

    def test_pullbacks_nest(self, reference_spec, map_constants):
        """l_m^(n) lies in l_n for every n along the stack."""
        orbit = generate_pseudo_orbit_1d(reference_spec, map_constants, 40, seed=5)
        chain = build_interval_chain(reference_spec, orbit, map_constants)
        stack = pullback_stack(chain, 40, 0)
        assert len(stack) == 41
        for n, interval in enumerate(stack):
            assert_nested(interval, chain.interval(n))
        assert stack[0].length < chain.interval(0).length

    def test_pullback_shrinks_with_depth(self, reference_spec, map_constants):
        orbit = generate_pseudo_orbit_1d(reference_spec, map_constants, 40, seed=5)
        chain = build_interval_chain(reference_spec, orbit, map_constants)
        widths = [pullback_interval(chain, m, 0).length for m in (5, 10, 20)]
        assert widths[0] > widths[1] > widths[2]

    def test_pullback_arguments(self, reference_spec, map_constants):
        orbit = generate_pseudo_orbit_1d(reference_spec, map_constants, 10, seed=5)
        chain = build_interval_chain(reference_spec, orbit, map_constants)
        with pytest.raises(ParameterError):
            pullback_interval(chain, 3, 3)
        with pytest.raises(ParameterError):
            pullback_stack(chain, 20, 0)

    def test_strict_nesting(self, reference_spec, map_constants):
        orbit = generate_pseudo_orbit_1d(reference_spec, map_constants, 30, seed=6)
        chain = build_interval_chain(reference_spec, orbit, map_constants)
        depth = strict_nesting_depth(chain, 0)
        assert depth is not None and depth >= 1


class TestRightHandShift:
    """Test verify_rhs_shift."""

    def test_both_endpoints_shifted(self):
        assert verify_rhs_shift(Interval(0.0, 1.0), Interval(0.1, 1.1), 0.05, 0.2)

    def test_shift_too_large(self):
        assert not verify_rhs_shift(Interval(0.0, 1.0), Interval(0.3, 1.3), 0.05, 0.2)

    def test_one_endpoint_fixed(self):
        assert not verify_rhs_shift(Interval(0.0, 1.0), Interval(0.1, 1.0), 0.05, 0.2)

    def test_shift_to_the_left(self):
        assert not verify_rhs_shift(Interval(0.0, 1.0), Interval(-0.1, 0.9), 0.05, 0.2)

    @given(st.floats(min_value=0.06, max_value=0.19), st.floats(min_value=-0.9, max_value=0.0))
    def test_shifts_inside_window(self, shift, lo):
        l = Interval(lo, lo + 0.5)
        assert verify_rhs_shift(l, Interval(l.lo + shift, l.hi + shift), 0.05, 0.2)

    @given(st.floats(min_value=0.0, max_value=0.04), st.floats(min_value=-0.9, max_value=0.0))
    def test_small_shifts_rejected(self, shift, lo):
        l = Interval(lo, lo + 0.5)
        assert not verify_rhs_shift(l, Interval(l.lo + shift, l.hi + shift), 0.05, 0.2)


class TestShadowSolver:
    """Test solve_shadow_point_1d and run_1d_pipeline."""

    @pytest.mark.parametrize('seed', [0, 1, 2])
    def test_noise_bound(self, reference_spec, map_constants, seed):
        """The true orbit stays within 8*epsilon1 of the pseudo-orbit."""
        run = run_1d_pipeline(reference_spec, map_constants, 200, seed)
        assert run.result.max_error <= 8.0 * map_constants.epsilon1
        assert run.result.max_defect <= 1e-9
        assert not run.result.gamma_exact
        assert shadow_bound_ok(run.result, map_constants)
        assert run.invariants.passed

    def test_orbit_is_true_alpha_orbit(self, reference_spec, map_constants):
        run = run_1d_pipeline(reference_spec, map_constants, 50, seed=4)
        orbit = run.result.orbit
        assert orbit[0] == run.result.z
        for n in range(50):
            image = reference_spec.alpha.c * abs(orbit[n]) ** 0.75 - 1.0
            image = image if orbit[n] > 0 else -image
            assert abs(image - orbit[n + 1]) <= 1e-9

    def test_gamma_crossing_bound(self, reference_spec, small_map_constants):
        run = run_1d_pipeline(reference_spec, small_map_constants, 120, 9, 'gamma-crossing')
        assert run.result.max_error <= 8.0 * small_map_constants.epsilon1

    def test_gamma_terminal_lands_on_zero(self, reference_spec, map_constants):
        """The shadow orbit hits Gamma exactly at the last step."""
        run = run_1d_pipeline(reference_spec, map_constants, 50, 3, 'gamma-terminal')
        assert run.result.gamma_exact
        assert run.result.orbit[-1] == 0.0
        assert np.all(run.result.orbit[:-1] != 0.0)
        assert run.result.max_error <= 8.0 * map_constants.epsilon1

    def test_terminal_variant_needs_terminal_orbit(self, reference_spec, map_constants):
        orbit = generate_pseudo_orbit_1d(reference_spec, map_constants, 20, seed=0)
        chain = build_interval_chain(reference_spec, orbit, map_constants)
        with pytest.raises(ParameterError):
            solve_shadow_point_1d(chain, orbit, map_constants, variant='gamma-terminal')
        with pytest.raises(ParameterError):
            solve_shadow_point_1d(chain, orbit, map_constants, variant='finite')

    def test_infinite_variant_rejects_orbit_ending_at_zero(self, reference_spec, map_constants):
        orbit = generate_pseudo_orbit_1d(reference_spec, map_constants, 2, 3, 'gamma-terminal')
        chain = build_interval_chain(reference_spec, orbit, map_constants)
        assert chain.interval(2).center == 0.0
        with pytest.raises(ParameterError):
            solve_shadow_point_1d(chain, orbit, map_constants, variant='infinite')
        untagged = dataclasses.replace(orbit, terminal_gamma=False)
        with pytest.raises(AccuracyError, match="last step 2"):
            solve_shadow_point_1d(chain, untagged, map_constants, variant='infinite')

    def test_summary(self, reference_spec, map_constants):
        run = run_1d_pipeline(reference_spec, map_constants, 20, seed=0)
        summary = run.result.summary()
        assert summary['n_steps'] == 20
        assert summary['z'] == run.result.z
