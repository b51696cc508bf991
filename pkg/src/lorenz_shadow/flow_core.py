"""Hybrid geometric Lorenz flow.

Inside the box Pi = [-1, 1]^2 x [0, 1] the flow is the linear saddle
(x e^{l1 t}, y e^{-l2 t}, z e^{-l3 t}). A trajectory leaving through a side
face |x| = 1 enters a return tube: a cubic path, traversed in tube_time,
from the exit point to L_mu of the section point it started from. The top
face Sigma = {z = 1} is the cross-section and the first return map to it is
exactly L_mu.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, ParameterError
from .map_core import LorenzMapSpec, PlanarPoint, check_shift, eval_map_mu

logger = logging.getLogger(__name__)

LINEAR = 'linear'
TUBE_PLUS = 'tube+'
TUBE_MINUS = 'tube-'
STABLE = 'stable-manifold'
MODES = (LINEAR, TUBE_PLUS, TUBE_MINUS, STABLE)

# Hermite tangents of the tube path: outward then up at the exit, down onto Sigma
TUBE_OUT = 6.0
TUBE_UP = 3.0
TUBE_DOWN = 3.0
MEMBERSHIP_TOL = 1e-12

Vector = Tuple[float, float, float]


@dataclass(frozen=True)
class FlowSpec:
    """Rates of the saddle, the return map it realises and the tube transit time."""
    map: LorenzMapSpec = field(default_factory=LorenzMapSpec)
    lambda1: float = 2.0
    lambda2: float = 5.0
    lambda3: float = 1.0
    tube_time: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.lambda3 < self.lambda1 < self.lambda2:
            raise ParameterError(
                f"need 0 < lambda3 < lambda1 < lambda2, got "
                f"{self.lambda3}, {self.lambda1}, {self.lambda2}"
            )
        if self.tube_time <= 0.0:
            raise ParameterError(f"tube_time must be positive, got {self.tube_time}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lambda1': self.lambda1,
            'lambda2': self.lambda2,
            'lambda3': self.lambda3,
            'tube_time': self.tube_time,
            'map': self.map.to_dict(),
        }


@dataclass(frozen=True)
class FlowState:
    """
    A point of the trapping region.

    Linear and stable-manifold states carry their box coordinates; tube
    states carry the side-face entry point, the Sigma target and the
    fraction of tube_time already spent.
    """
    mode: str
    position: Vector = (0.0, 0.0, 0.0)
    entry: Optional[Vector] = None
    target: Optional[Tuple[float, float]] = None
    progress: float = 0.0

    @classmethod
    def in_box(cls, x: float, y: float, z: float) -> "FlowState":
        mode = STABLE if x == 0.0 else LINEAR
        return cls(mode=mode, position=(float(x), float(y), float(z)))

    @classmethod
    def on_section(cls, p: PlanarPoint) -> "FlowState":
        return cls.in_box(p.x, p.y, 1.0)

    @classmethod
    def in_tube(cls, entry: Vector, target: Tuple[float, float], progress: float = 0.0) -> "FlowState":
        mode = TUBE_PLUS if entry[0] > 0 else TUBE_MINUS
        return cls(mode=mode, entry=entry, target=target, progress=progress)

    @property
    def in_tube_mode(self) -> bool:
        return self.mode in (TUBE_PLUS, TUBE_MINUS)

    def projection(self) -> np.ndarray:
        """Position in R^3."""
        if self.in_tube_mode:
            assert self.entry is not None and self.target is not None
            return tube_point(self.entry, self.target, smoothstep(self.progress))
        return np.array(self.position, dtype=float)

    def on_sigma(self) -> bool:
        return not self.in_tube_mode and self.position[2] == 1.0

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'mode': self.mode}
        if self.in_tube_mode:
            data.update(entry=list(self.entry or ()), target=list(self.target or ()),
                        progress=self.progress)
        else:
            data['position'] = list(self.position)
        return data


def smoothstep(u: float) -> float:
    return u * u * (3.0 - 2.0 * u)


def tube_point(entry: Vector, target: Tuple[float, float], s: float) -> np.ndarray:
    """Cubic Hermite path from the exit point to (X, Y, 1), at path parameter s."""
    side = 1.0 if entry[0] > 0 else -1.0
    s2, s3 = s * s, s * s * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    x = h00 * entry[0] + h10 * side * TUBE_OUT + h01 * target[0]
    y = h00 * entry[1] + h01 * target[1]
    z = h00 * entry[2] + h10 * TUBE_UP + h01 * 1.0 - h11 * TUBE_DOWN
    return np.array([x, y, z])


def tube_velocity(entry: Vector, target: Tuple[float, float], u: float, tube_time: float) -> np.ndarray:
    side = 1.0 if entry[0] > 0 else -1.0
    s = smoothstep(u)
    ds_dt = 6.0 * u * (1.0 - u) / tube_time
    d00 = 6.0 * s * s - 6.0 * s
    d10 = 3.0 * s * s - 4.0 * s + 1.0
    d01 = -6.0 * s * s + 6.0 * s
    d11 = 3.0 * s * s - 2.0 * s
    dx = d00 * entry[0] + d10 * side * TUBE_OUT + d01 * target[0]
    dy = d00 * entry[1] + d01 * target[1]
    dz = d00 * entry[2] + d10 * TUBE_UP + d01 - d11 * TUBE_DOWN
    return np.array([dx, dy, dz]) * ds_dt


def exit_time(fs: FlowSpec, x: float) -> float:
    """Time for a linear state with coordinate x to reach |x| = 1."""
    if x == 0.0:
        return math.inf
    return max(0.0, -math.log(abs(x)) / fs.lambda1)


def exit_map(fs: FlowSpec, p: PlanarPoint) -> Vector:
    """Side-face point reached from p in Sigma."""
    if p.on_gamma:
        raise DomainError("points of Gamma never leave the box")
    ax = abs(p.x)
    side = 1.0 if p.x > 0 else -1.0
    return (side, p.y * ax ** (fs.lambda2 / fs.lambda1), ax ** (fs.lambda3 / fs.lambda1))


def exit_map_inverse(fs: FlowSpec, p: Sequence[float]) -> PlanarPoint:
    """The Sigma point whose linear trajectory leaves the box at p = (+-1, y_e, z_e)."""
    x_e, y_e, z_e = float(p[0]), float(p[1]), float(p[2])
    if abs(x_e) != 1.0:
        raise DomainError(f"({x_e}, {y_e}, {z_e}) is not on a side face")
    if z_e <= 0.0:
        raise DomainError("exit height z_e <= 0 has no origin on Sigma")
    x0 = math.copysign(z_e ** (fs.lambda1 / fs.lambda3), x_e)
    y0 = y_e * z_e ** (-fs.lambda2 / fs.lambda3)
    return PlanarPoint(x0, y0)


def _evolve_linear(fs: FlowSpec, position: Vector, t: float) -> Vector:
    x, y, z = position
    return (
        x * math.exp(fs.lambda1 * t),
        y * math.exp(-fs.lambda2 * t),
        z * math.exp(-fs.lambda3 * t),
    )


def _handoff(fs: FlowSpec, mu: float, exit_point: Vector) -> FlowState:
    origin = exit_map_inverse(fs, exit_point)
    target = eval_map_mu(fs.map, mu, origin)
    return FlowState.in_tube(exit_point, (target.x, target.y))


def flow_evaluate(fs: FlowSpec, mu: float, s0: FlowState, t: float) -> FlowState:
    """
    phi_mu(s0, t) with closed-form event times.

    Linear states run until |x| = 1 and then hand off to the tube on that
    side; a tube arriving at Sigma continues as a linear state. States with
    x = 0 decay towards the origin and never leave the box.
    """
    if t < 0.0:
        raise ParameterError(f"duration must be non-negative, got {t}")
    check_shift(fs.map, mu)
    if not TrappingRegion(fs).contains(s0):
        raise DomainError(f"state outside the trapping region: {s0}")

    state = s0
    remaining = float(t)
    while True:
        if state.mode == STABLE:
            return FlowState(STABLE, _evolve_linear(fs, state.position, remaining))
        if state.mode == LINEAR:
            to_exit = exit_time(fs, state.position[0])
            if remaining < to_exit:
                return FlowState(LINEAR, _evolve_linear(fs, state.position, remaining))
            x, y, z = _evolve_linear(fs, state.position, to_exit)
            exit_point = (math.copysign(1.0, x), y, z)
            state = _handoff(fs, mu, exit_point)
            remaining -= to_exit
            continue
        to_arrival = (1.0 - state.progress) * fs.tube_time
        if remaining < to_arrival:
            progress = min(1.0, state.progress + remaining / fs.tube_time)
            return FlowState.in_tube(state.entry, state.target, progress)  # type: ignore[arg-type]
        assert state.target is not None
        state = FlowState.in_box(state.target[0], state.target[1], 1.0)
        remaining -= to_arrival


def velocity(fs: FlowSpec, state: FlowState) -> np.ndarray:
    """Time derivative of the projected trajectory."""
    if state.in_tube_mode:
        assert state.entry is not None and state.target is not None
        return tube_velocity(state.entry, state.target, state.progress, fs.tube_time)
    x, y, z = state.position
    return np.array([fs.lambda1 * x, -fs.lambda2 * y, -fs.lambda3 * z])


def sample_trajectory(
    fs: FlowSpec, mu: float, state: FlowState, times: Sequence[float]
) -> Tuple[np.ndarray, List[str]]:
    """Projected positions and modes of phi_mu(state, t) at increasing times."""
    positions = np.empty((len(times), 3))
    modes: List[str] = []
    current, clock = state, 0.0
    for k, t in enumerate(times):
        if t < clock:
            raise ParameterError("sample times must be non-decreasing")
        current = flow_evaluate(fs, mu, current, t - clock)
        clock = t
        positions[k] = current.projection()
        modes.append(current.mode)
    return positions, modes


def first_return(fs: FlowSpec, mu: float, p: PlanarPoint) -> Tuple[PlanarPoint, float]:
    """Return point on Sigma and return time tau = -ln|x|/lambda1 + tube_time."""
    if p.on_gamma:
        raise DomainError("points of Gamma flow into the saddle and never return")
    check_shift(fs.map, mu)
    exit_point = exit_map(fs, p)
    target = eval_map_mu(fs.map, mu, exit_map_inverse(fs, exit_point))
    return target, exit_time(fs, p.x) + fs.tube_time


def time_inside_box(fs: FlowSpec, p: PlanarPoint, eta: float) -> float:
    """Time the trajectory from p in Sigma spends in Pi(eta) before its return."""
    if eta >= 1.0:
        return exit_time(fs, p.x) if not p.on_gamma else math.inf
    enter_z = math.log(1.0 / eta) / fs.lambda3
    enter_y = math.log(abs(p.y) / eta) / fs.lambda2 if abs(p.y) > eta else 0.0
    if p.on_gamma:
        return math.inf
    leave_x = math.log(eta / abs(p.x)) / fs.lambda1
    return max(0.0, leave_x - max(enter_z, enter_y))


def box_event_times(fs: FlowSpec, state: FlowState, eta: float) -> List[float]:
    """Times before the side exit at which a box state crosses a face of Pi(eta)."""
    if state.in_tube_mode:
        return []
    x, y, z = state.position
    horizon = exit_time(fs, x)
    events = []
    if x != 0.0 and abs(x) < eta:
        events.append(math.log(eta / abs(x)) / fs.lambda1)
    if abs(y) > eta:
        events.append(math.log(abs(y) / eta) / fs.lambda2)
    if z > eta:
        events.append(math.log(z / eta) / fs.lambda3)
    return sorted(t for t in events if 0.0 < t < horizon)


def derive_tau_hat(fs: FlowSpec, mu0: Optional[float] = None, grid_n: int = 2001) -> float:
    """One sixth of the smallest return time over a grid of Sigma and mu in {0, mu0}."""
    mu0 = fs.map.mu0 if mu0 is None else mu0
    xs = np.linspace(-1.0, 1.0, grid_n)
    xs = xs[xs != 0.0]
    shortest = math.inf
    for mu in (0.0, mu0):
        for x in xs:
            _, tau = first_return(fs, mu, PlanarPoint(float(x), 0.0))
            shortest = min(shortest, tau)
    return shortest / 6.0


class TrappingRegion:
    """The box Pi together with the two return tubes."""

    def __init__(self, fs: FlowSpec):
        self.fs = fs
        self._sweep_exponent = fs.lambda2 / fs.lambda3

    def contains(self, state: FlowState) -> bool:
        if state.mode not in MODES:
            return False
        if state.in_tube_mode:
            if state.entry is None or state.target is None:
                return False
            x_e, y_e, z_e = state.entry
            return (
                abs(x_e) == 1.0
                and abs(y_e) <= 1.0
                and 0.0 < z_e <= 1.0
                and abs(state.target[0]) <= 1.0
                and abs(state.target[1]) <= 1.0
                and 0.0 <= state.progress <= 1.0
            )
        x, y, z = state.position
        if state.mode == STABLE and x != 0.0:
            return False
        if state.mode == LINEAR and x == 0.0:
            return False
        # box states lie on trajectories from Sigma: |y| <= z^(l2/l3)
        return (
            abs(x) <= 1.0
            and 0.0 < z <= 1.0 + MEMBERSHIP_TOL
            and abs(y) <= z ** self._sweep_exponent + MEMBERSHIP_TOL
        )

    @staticmethod
    def distance(a: FlowState, b: FlowState) -> float:
        return float(np.linalg.norm(a.projection() - b.projection()))

    @staticmethod
    def in_small_box(point: np.ndarray, eta: float) -> bool:
        """Membership of a projected point in Pi(eta) = [-eta, eta]^2 x [0, eta]."""
        return bool(abs(point[0]) <= eta and abs(point[1]) <= eta and 0.0 <= point[2] <= eta)

    def min_fibre_height(self, y: float) -> float:
        """Smallest z with |y| <= z^(l2/l3)."""
        return abs(y) ** (1.0 / self._sweep_exponent)


Piece = Tuple[float, float, FlowState]


def trajectory_pieces(fs: FlowSpec, mu: float, state: FlowState, duration: float) -> List[Piece]:
    """Split phi_mu(state, [0, duration]) into (start, end, state at start) runs of one mode."""
    pieces: List[Piece] = []
    clock, current = 0.0, state
    while True:
        if current.mode == STABLE:
            end = math.inf
        elif current.mode == LINEAR:
            end = clock + exit_time(fs, current.position[0])
        else:
            end = clock + (1.0 - current.progress) * fs.tube_time
        if end >= duration:
            pieces.append((clock, duration, current))
            return pieces
        pieces.append((clock, end, current))
        current = flow_evaluate(fs, mu, current, end - clock)
        clock = end


def piece_positions(fs: FlowSpec, state: FlowState, local_times: np.ndarray) -> np.ndarray:
    """Projected positions, shape (k, 3), of a single-mode run at times since its start."""
    ts = np.asarray(local_times, dtype=float)
    if state.in_tube_mode:
        assert state.entry is not None and state.target is not None
        u = np.minimum(1.0, state.progress + ts / fs.tube_time)
        s = u * u * (3.0 - 2.0 * u)
        return np.asarray(tube_point(state.entry, state.target, s)).T.reshape(len(ts), 3)
    x, y, z = state.position
    return np.column_stack([
        x * np.exp(fs.lambda1 * ts),
        y * np.exp(-fs.lambda2 * ts),
        z * np.exp(-fs.lambda3 * ts),
    ])


def pieces_positions(fs: FlowSpec, pieces: Sequence[Piece], times: np.ndarray) -> Tuple[np.ndarray, List[str]]:
    """Positions and modes at sorted times, each taken from the piece it falls in."""
    times = np.asarray(times, dtype=float)
    starts = np.array([p[0] for p in pieces])
    owner = np.clip(np.searchsorted(starts, times, side='right') - 1, 0, len(pieces) - 1)
    positions = np.empty((len(times), 3))
    modes: List[str] = [''] * len(times)
    for k in np.unique(owner):
        start, _, state = pieces[int(k)]
        idx = np.nonzero(owner == k)[0]
        positions[idx] = piece_positions(fs, state, times[idx] - start)
        for i in idx:
            modes[int(i)] = state.mode
    return positions, modes
