"""Tests for shadow_2d module."""

import dataclasses

import numpy as np
import pytest

from lorenz_shadow.errors import ParameterError, PseudoOrbitError
from lorenz_shadow.map_core import PlanarPoint
from lorenz_shadow.shadow_1d import run_1d_pipeline
from lorenz_shadow.shadow_2d import (
    PseudoOrbit2D,
    estimate_shadow_distance,
    generate_pseudo_orbit_2d,
    grid_shadow_distance,
    komuro_probe,
    run_map_pipeline,
    shadowing_set,
    solve_shadow_point_2d,
    validate_pseudo_orbit_2d,
    verify_contraction_steps,
    verify_shadow_2d,
)


class TestPlanarPseudoOrbit:
    """Test generate_pseudo_orbit_2d and validate_pseudo_orbit_2d."""

    def test_shape_and_validity(self, reference_spec, map_constants):
        orbit = generate_pseudo_orbit_2d(reference_spec, map_constants, 100, seed=0)
        assert orbit.points.shape == (101, 2)
        assert np.all(np.abs(orbit.points) <= 1.0)
        validate_pseudo_orbit_2d(orbit, reference_spec)

    def test_deterministic(self, reference_spec, map_constants):
        first = generate_pseudo_orbit_2d(reference_spec, map_constants, 50, seed=21)
        second = generate_pseudo_orbit_2d(reference_spec, map_constants, 50, seed=21)
        assert np.array_equal(first.points, second.points)

    def test_x_part(self, reference_spec, map_constants):
        orbit = generate_pseudo_orbit_2d(reference_spec, map_constants, 20, seed=1)
        x_orbit = orbit.x_part()
        assert np.array_equal(x_orbit.points, orbit.points[:, 0])
        assert x_orbit.mu == orbit.mu

    def test_terminal_orbit_ends_on_gamma(self, reference_spec, map_constants):
        orbit = generate_pseudo_orbit_2d(
            reference_spec, map_constants, 30, seed=2, mode='gamma-terminal'
        )
        assert orbit.terminal_gamma
        assert orbit.points[-1, 0] == 0.0
        validate_pseudo_orbit_2d(orbit, reference_spec)

    def test_broken_fibre_step_rejected(self, reference_spec, map_constants):
        orbit = generate_pseudo_orbit_2d(reference_spec, map_constants, 20, seed=3)
        points = orbit.points.copy()
        points[5, 1] = points[5, 1] - 0.1 if points[5, 1] > 0 else points[5, 1] + 0.1
        with pytest.raises(PseudoOrbitError) as info:
            validate_pseudo_orbit_2d(PseudoOrbit2D(points, orbit.delta, orbit.mu), reference_spec)
        assert info.value.index == 4


class TestPlanarShadowing:
    """Test solve_shadow_point_2d and verify_shadow_2d."""

    @pytest.mark.parametrize('seed', [0, 1, 2])
    def test_noise_runs_pass(self, reference_spec, map_constants, seed):
        """Horizontal error within epsilon/8, vertical within 7 epsilon/8."""
        run = run_map_pipeline(reference_spec, map_constants, 200, seed)
        eps = map_constants.epsilon
        assert run.result.x_error <= eps / 8.0
        assert run.result.y_error <= 7.0 * eps / 8.0
        assert run.result.max_error <= eps
        assert run.report.passed
        assert run.report.n_checked == 201
        assert run.contraction_failures == []
        assert run.result.segment_avoidance

    def test_fibre_follows_beta(self, reference_spec, map_constants):
        run = run_map_pipeline(reference_spec, map_constants, 30, seed=4)
        orbit = run.result.orbit
        b = reference_spec.beta
        for n in range(30):
            x, y = orbit[n]
            offset = b.e_plus if x > 0 else b.e_minus
            assert orbit[n + 1, 1] == pytest.approx(offset + b.d * abs(x) * y, abs=1e-15)

    def test_terminal_run(self, reference_spec, map_constants):
        run = run_map_pipeline(reference_spec, map_constants, 40, 5, 'gamma-terminal')
        assert run.result.gamma_step == 40
        assert run.result.orbit[-1, 0] == 0.0
        assert run.result.result_1d.gamma_exact

    def test_explicit_variant(self, reference_spec, map_constants):
        orbit = generate_pseudo_orbit_2d(reference_spec, map_constants, 30, seed=6)
        result = solve_shadow_point_2d(reference_spec, orbit, map_constants, variant='infinite')
        assert result.gamma_step is None
        assert result.z.as_tuple() == tuple(result.orbit[0])

    def test_perturbed_start_fails_verification(self, reference_spec, small_map_constants):
        """Moving z half a unit along the fibre breaks the epsilon bound at step 0."""
        orbit = generate_pseudo_orbit_2d(reference_spec, small_map_constants, 60, seed=7)
        result = solve_shadow_point_2d(reference_spec, orbit, small_map_constants)
        y = result.z.y - 0.5 if result.z.y > 0 else result.z.y + 0.5
        moved = dataclasses.replace(result, z=PlanarPoint(result.z.x, y))
        report = verify_shadow_2d(reference_spec, orbit, moved, small_map_constants.epsilon)
        assert not report.passed
        assert report.first_failure == 0
        assert report.sup_distance > small_map_constants.epsilon

    @pytest.mark.parametrize('seed', [0, 7, 11])
    def test_start_moved_by_two_epsilon_fails_early(self, reference_spec, map_constants, seed):
        orbit = generate_pseudo_orbit_2d(reference_spec, map_constants, 60, seed=seed)
        result = solve_shadow_point_2d(reference_spec, orbit, map_constants)
        shift = 2.0 * map_constants.epsilon
        x = result.z.x - shift if result.z.x > 0 else result.z.x + shift
        moved = dataclasses.replace(result, z=PlanarPoint(max(-1.0, min(1.0, x)), result.z.y))
        report = verify_shadow_2d(reference_spec, orbit, moved, map_constants.epsilon)
        assert not report.passed
        assert report.first_failure is not None and report.first_failure <= 20

    @pytest.mark.parametrize('seed', [0, 7, 11])
    def test_small_offset_grows_past_epsilon(self, reference_spec, map_constants, seed):
        """alpha expands by at least sqrt(2), so an offset of epsilon/64 escapes within 20 steps."""
        orbit = generate_pseudo_orbit_2d(reference_spec, map_constants, 60, seed=seed)
        result = solve_shadow_point_2d(reference_spec, orbit, map_constants)
        offset = map_constants.epsilon / 64.0
        x = result.z.x - offset if result.z.x > 0 else result.z.x + offset
        moved = dataclasses.replace(result, z=PlanarPoint(x, result.z.y))
        report = verify_shadow_2d(reference_spec, orbit, moved, map_constants.epsilon)
        assert not report.passed
        assert 1 <= report.first_failure <= 20

    def test_empty_orbit_passes_vacuously(self, reference_spec, map_constants):
        run = run_map_pipeline(reference_spec, map_constants, 10, seed=0)
        empty = PseudoOrbit2D(np.empty((0, 2)), map_constants.delta, map_constants.mu_hat)
        report = verify_shadow_2d(reference_spec, empty, run.result, map_constants.epsilon)
        assert report.passed
        assert report.n_checked == 0
        assert report.sup_distance == 0.0

    def test_contraction_check(self, reference_spec, map_constants):
        orbit = generate_pseudo_orbit_2d(reference_spec, map_constants, 50, seed=8)
        result = solve_shadow_point_2d(reference_spec, orbit, map_constants)
        assert verify_contraction_steps(reference_spec, orbit, result) == []

    def test_report_serializes(self, reference_spec, map_constants):
        run = run_map_pipeline(reference_spec, map_constants, 10, seed=0)
        data = run.report.to_dict()
        assert data['pass'] is True
        assert data['first_failure'] is None


class TestShadowDistanceEstimate:
    """Test the shadow distance estimate and the search for unshadowable orbits."""

    def test_true_orbit_has_zero_estimate(self, reference_spec):
        """An exact alpha-orbit is shadowed by its own start."""
        xs = [0.37]
        for _ in range(8):
            x = xs[-1]
            value = 1.95 * abs(x) ** 0.75 - 1.0
            xs.append(value if x > 0 else -value)
        bound, z = estimate_shadow_distance(reference_spec, np.array(xs))
        assert bound <= 1e-9
        assert z == pytest.approx(0.37, abs=1e-8)

    def test_gap_distance_is_exact(self, reference_spec):
        """Nothing maps past alpha(1) = 0.95, so 0.99 after 1 is missed by 0.04."""
        xs = np.array([1.0, 0.99])
        assert shadowing_set(reference_spec, xs, 0.03) == []
        assert shadowing_set(reference_spec, xs, 0.05)
        bound, z = estimate_shadow_distance(reference_spec, xs)
        assert bound == pytest.approx(0.04, abs=1e-9)
        assert z == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize('seed', [3, 5])
    def test_shadowable_orbit_has_small_estimate(self, reference_spec, map_constants, seed):
        run = run_1d_pipeline(reference_spec, map_constants, 60, seed=seed)
        bound, z = estimate_shadow_distance(reference_spec, run.orbit.points)
        assert bound <= run.result.max_error + 1e-9
        assert abs(z - run.orbit.points[0]) <= bound + 1e-9

    def test_grid_is_an_upper_bound(self, reference_spec, map_constants):
        run = run_1d_pipeline(reference_spec, map_constants, 12, seed=1)
        bound, _ = estimate_shadow_distance(reference_spec, run.orbit.points)
        grid, _ = grid_shadow_distance(reference_spec, run.orbit.points, radius=0.01, step=1e-4)
        assert bound <= grid + 1e-9

    def test_zero_delta_gives_zero_bound(self, reference_spec):
        report = komuro_probe(
            reference_spec, epsilon_star=0.05, delta=0.0, n_steps=6, seed=0,
            search_budget=2, radius=0.01, step=1e-4,
        )
        assert report.bound <= 1e-9
        assert not report.found
        assert report.notice is not None
        assert report.restarts == 2

    def test_deterministic(self, reference_spec):
        kwargs = dict(epsilon_star=0.05, delta=0.01, n_steps=6, seed=4,
                      search_budget=2, radius=0.01, step=1e-4)
        first = komuro_probe(reference_spec, **kwargs)
        second = komuro_probe(reference_spec, **kwargs)
        assert first.to_dict() == second.to_dict()
        assert np.array_equal(first.orbit.points, second.orbit.points)

    def test_orbit_is_delta_pseudo_orbit(self, reference_spec):
        report = komuro_probe(
            reference_spec, epsilon_star=0.05, delta=0.01, n_steps=6, seed=1,
            search_budget=1, radius=0.01, step=1e-4,
        )
        assert report.orbit.mu == 0.0
        assert report.to_dict()['n_steps'] == 6
        validate_pseudo_orbit_2d(report.orbit, reference_spec)

    def test_invalid_arguments(self, reference_spec):
        with pytest.raises(ParameterError):
            komuro_probe(reference_spec, 0.05, 0.01, n_steps=0, seed=0)
        with pytest.raises(ParameterError):
            komuro_probe(reference_spec, 0.05, 0.01, n_steps=5, seed=0, search_budget=0)
