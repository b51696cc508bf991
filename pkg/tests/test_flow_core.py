"""Tests for flow_core module."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorenz_shadow.errors import DomainError, ParameterError
from lorenz_shadow.flow_core import (
    LINEAR,
    STABLE,
    TUBE_MINUS,
    TUBE_PLUS,
    FlowSpec,
    FlowState,
    TrappingRegion,
    box_event_times,
    derive_tau_hat,
    exit_map,
    exit_map_inverse,
    exit_time,
    first_return,
    flow_evaluate,
    pieces_positions,
    sample_trajectory,
    time_inside_box,
    trajectory_pieces,
    velocity,
)
from lorenz_shadow.map_core import PlanarPoint, eval_map_mu
from tests.conftest import assert_close

FS = FlowSpec()
section_x = st.floats(min_value=1e-6, max_value=1.0).flatmap(
    lambda a: st.sampled_from([a, -a])
)
fibre_y = st.floats(min_value=-1.0, max_value=1.0)
shifts = st.floats(min_value=0.0, max_value=0.02)


class TestFlowSpec:
    """Test FlowSpec validation."""

    def test_reference_rates(self, flow_spec):
        assert (flow_spec.lambda1, flow_spec.lambda2, flow_spec.lambda3) == (2.0, 5.0, 1.0)
        assert flow_spec.to_dict()['map']['mu0'] == 0.02

    def test_rate_ordering(self):
        """0 < lambda3 < lambda1 < lambda2 is required."""
        with pytest.raises(ParameterError):
            FlowSpec(lambda1=6.0)
        with pytest.raises(ParameterError):
            FlowSpec(lambda3=3.0)

    def test_tube_time_positive(self):
        with pytest.raises(ParameterError):
            FlowSpec(tube_time=0.0)


class TestExitMap:
    """Test the side-face exit map and its inverse."""

    def test_closed_form(self, flow_spec):
        side, y_e, z_e = exit_map(flow_spec, PlanarPoint(0.25, 0.5))
        assert side == 1.0
        assert_close(y_e, 0.5 * 0.25 ** 2.5, 1e-15)
        assert_close(z_e, 0.5, 1e-15)

    def test_inverse_height(self, flow_spec):
        """Exit height 0.25 comes from |x_0| = 0.25^2."""
        origin = exit_map_inverse(flow_spec, (-1.0, 0.0, 0.25))
        assert_close(origin.x, -0.0625, 1e-15)
        assert origin.y == 0.0

    def test_inverse_rejects_interior_points(self, flow_spec):
        with pytest.raises(DomainError):
            exit_map_inverse(flow_spec, (0.5, 0.0, 0.25))
        with pytest.raises(DomainError):
            exit_map_inverse(flow_spec, (1.0, 0.0, 0.0))

    def test_gamma_never_exits(self, flow_spec):
        with pytest.raises(DomainError):
            exit_map(flow_spec, PlanarPoint(0.0, 0.2))
        assert exit_time(flow_spec, 0.0) == math.inf

    @given(x=section_x.filter(lambda v: abs(v) >= 1e-3), y=fibre_y)
    def test_round_trip(self, x, y):
        origin = exit_map_inverse(FS, exit_map(FS, PlanarPoint(x, y)))
        assert_close(origin.x, x, 1e-12)
        assert_close(origin.y, y, 1e-9)

    def test_exit_time(self, flow_spec):
        assert_close(exit_time(flow_spec, 0.25), math.log(4.0) / 2.0, 1e-15)
        assert exit_time(flow_spec, 1.0) == 0.0


class TestFirstReturn:
    """Test that the first return to Sigma realises L_mu."""

    @given(x=section_x, y=fibre_y, mu=shifts)
    def test_return_is_lorenz_map(self, x, y, mu):
        p = PlanarPoint(x, y)
        target, tau = first_return(FS, mu, p)
        expected = eval_map_mu(FS.map, mu, p)
        assert target.distance(expected) <= 1e-9
        assert_close(tau, -math.log(abs(x)) / FS.lambda1 + FS.tube_time, 1e-12)

    def test_flow_reaches_return_point(self, flow_spec):
        p = PlanarPoint(0.3, -0.4)
        target, tau = first_return(flow_spec, 0.01, p)
        state = flow_evaluate(flow_spec, 0.01, FlowState.on_section(p), tau)
        assert np.linalg.norm(state.projection() - np.array([target.x, target.y, 1.0])) <= 1e-9

    def test_gamma_has_no_return(self, flow_spec):
        with pytest.raises(DomainError):
            first_return(flow_spec, 0.0, PlanarPoint(0.0, 0.5))

    def test_tau_hat(self, flow_spec):
        """The shortest return is tube_time, reached at |x| = 1."""
        assert_close(derive_tau_hat(flow_spec), 1.0 / 6.0, 1e-15)


class TestFlowEvaluate:
    """Test flow_evaluate and trajectory sampling."""

    def test_zero_duration_is_identity(self, flow_spec):
        state = FlowState.on_section(PlanarPoint(0.4, 0.2))
        assert flow_evaluate(flow_spec, 0.0, state, 0.0) == state

    def test_stable_manifold_decays(self, flow_spec):
        state = FlowState.in_box(0.0, 0.5, 1.0)
        assert state.mode == STABLE
        later = flow_evaluate(flow_spec, 0.0, state, 1.0)
        assert later.mode == STABLE
        assert later.position[0] == 0.0
        assert_close(later.position[1], 0.5 * math.exp(-5.0), 1e-15)
        assert_close(later.position[2], math.exp(-1.0), 1e-15)

    def test_side_follows_sign_of_x(self, flow_spec):
        right = flow_evaluate(flow_spec, 0.0, FlowState.on_section(PlanarPoint(0.5, 0.0)), 0.5)
        left = flow_evaluate(flow_spec, 0.0, FlowState.on_section(PlanarPoint(-0.5, 0.0)), 0.5)
        assert right.mode == TUBE_PLUS
        assert left.mode == TUBE_MINUS

    @given(
        x=section_x.filter(lambda v: abs(v) >= 1e-2),
        y=fibre_y,
        t=st.floats(min_value=0.0, max_value=2.0),
        s=st.floats(min_value=0.0, max_value=2.0),
    )
    def test_semigroup(self, x, y, t, s):
        """Flowing for t then s lands where flowing for t + s does."""
        state = FlowState.on_section(PlanarPoint(x, y))
        direct = flow_evaluate(FS, 0.01, state, t + s)
        stepped = flow_evaluate(FS, 0.01, flow_evaluate(FS, 0.01, state, t), s)
        assert np.allclose(direct.projection(), stepped.projection(), atol=1e-8)

    def test_rejects_bad_input(self, flow_spec):
        state = FlowState.on_section(PlanarPoint(0.4, 0.2))
        with pytest.raises(ParameterError):
            flow_evaluate(flow_spec, 0.0, state, -1.0)
        with pytest.raises(ParameterError):
            flow_evaluate(flow_spec, 0.5, state, 1.0)
        with pytest.raises(DomainError):
            flow_evaluate(flow_spec, 0.0, FlowState.in_box(0.5, 0.9, 0.1), 1.0)

    def test_velocity_matches_difference_quotient(self, flow_spec):
        state = FlowState.in_box(0.2, 0.1, 0.8)
        h = 1e-7
        later = flow_evaluate(flow_spec, 0.0, state, h)
        quotient = (later.projection() - state.projection()) / h
        assert np.allclose(quotient, velocity(flow_spec, state), atol=1e-5)

    def test_sample_times_must_increase(self, flow_spec):
        state = FlowState.on_section(PlanarPoint(0.4, 0.2))
        with pytest.raises(ParameterError):
            sample_trajectory(flow_spec, 0.0, state, [0.5, 0.1])

    def test_pieces_agree_with_sampling(self, flow_spec):
        """Vectorised piece positions match step-by-step evaluation."""
        state = FlowState.on_section(PlanarPoint(0.3, 0.2))
        _, tau = first_return(flow_spec, 0.0, PlanarPoint(0.3, 0.2))
        duration = tau + 0.5
        pieces = trajectory_pieces(flow_spec, 0.0, state, duration)
        assert [p[2].mode for p in pieces] == [LINEAR, TUBE_PLUS, LINEAR]
        times = np.linspace(0.0, duration, 40)
        expected, modes = sample_trajectory(flow_spec, 0.0, state, times)
        observed, piece_modes = pieces_positions(flow_spec, pieces, times)
        assert np.allclose(observed, expected, atol=1e-9)
        assert modes == piece_modes


class TestTrappingRegion:
    """Test membership and small-box helpers."""

    def test_membership(self, flow_spec):
        region = TrappingRegion(flow_spec)
        assert region.contains(FlowState.on_section(PlanarPoint(0.5, -0.5)))
        assert not region.contains(FlowState.in_box(0.5, 0.9, 0.1))
        assert not region.contains(FlowState(mode='nowhere'))

    def test_distance(self):
        a = FlowState.in_box(0.1, 0.0, 1.0)
        b = FlowState.in_box(0.4, 0.4, 1.0)
        assert_close(TrappingRegion.distance(a, b), 0.5, 1e-15)

    def test_small_box(self):
        assert TrappingRegion.in_small_box(np.array([0.01, -0.01, 0.02]), 0.05)
        assert not TrappingRegion.in_small_box(np.array([0.01, -0.01, 0.2]), 0.05)

    def test_min_fibre_height(self, flow_spec):
        assert_close(TrappingRegion(flow_spec).min_fibre_height(0.5 ** 5), 0.5, 1e-12)

    def test_time_inside_box(self, flow_spec):
        """Enter through the top at ln(1/eta)/l3, leave through the side at ln(eta/|x|)/l1."""
        p = PlanarPoint(1e-4, 0.0)
        expected = math.log(0.1 / 1e-4) / 2.0 - math.log(10.0)
        assert_close(time_inside_box(flow_spec, p, 0.1), expected, 1e-12)
        assert time_inside_box(flow_spec, PlanarPoint(0.01, 0.0), 0.1) == 0.0

    def test_box_event_times(self, flow_spec):
        events = box_event_times(flow_spec, FlowState.in_box(1e-4, 0.0, 1.0), 0.1)
        assert len(events) == 2
        assert_close(events[0], math.log(10.0), 1e-12)
        assert_close(events[1], math.log(1000.0) / 2.0, 1e-12)
