"""
Shadowing for the hybrid flow.

A (delta, tau)-chain of phi_mu is split into steps of duration in
[tau, 2 tau], interpolated into flow segments joined by connectors and cut
at its section crossings. The crossings, nudged off Gamma where needed,
form a pseudo-orbit of the return map; its planar shadow lifts back to a
true trajectory of phi_0, and a monotone reparametrization h matches the
two trajectories piece by piece.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    ConstantSearchError,
    CrossingError,
    ParameterError,
    ProjectionError,
    PseudoOrbitError,
    ReparametrizationError,
    SplitError,
    NoPreimageError,
)
from .flow_core import (
    LINEAR,
    STABLE,
    FlowSpec,
    FlowState,
    Piece,
    TrappingRegion,
    box_event_times,
    derive_tau_hat,
    exit_time,
    first_return,
    flow_evaluate,
    pieces_positions,
    time_inside_box,
    trajectory_pieces,
)
from .map_core import (
    MapConstants,
    PlanarPoint,
    cusp_vertex,
    derive_map_constants,
    eval_map_mu,
    invert_alpha_branch,
)
from .seeding import derive_seed
from .shadow_2d import PseudoOrbit2D, ShadowResult2D, solve_shadow_point_2d, validate_pseudo_orbit_2d

logger = logging.getLogger(__name__)

FLOW_MODES = ('noise', 'gamma', 'terminal', 'stall')
SAMPLES_PER_STEP = 50
DURATION_TOL = 1e-12
FACE_TOL = 1e-9
PAUSE = 0.05
BOX_SUBDIVISIONS = 8
TUBE_FRACTIONS = (0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99)
EPSILON1_START = 1.0 / 20.0
MAX_HALVINGS = 60
RETURN_BUDGET_FACTOR = 4.0


@dataclass
class FlowPseudoOrbit:
    """States x_0..x_N with durations tau_0..tau_(N-1); x_0 lies on Sigma."""
    states: List[FlowState]
    durations: np.ndarray
    delta: float
    tau: float
    mu: float
    terminal: bool = False
    seed: Optional[int] = None
    mode: str = 'noise'

    def __len__(self) -> int:
        return len(self.states)

    def start_times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)])


@dataclass(frozen=True)
class FlowConstants:
    epsilon: float
    tau_hat: float
    eta0: float
    eta1: float
    delta0: float
    delta1: float
    s0: float
    epsilon1: float
    mu1: float
    xi0: float
    mu_hat: float
    eta2: float
    xi1: float
    delta2: float
    delta3: float
    delta4: float
    delta_hat: float
    map_constants: MapConstants

    def to_dict(self) -> Dict[str, Any]:
        data = {name: getattr(self, name) for name in self.__dataclass_fields__ if name != 'map_constants'}
        data['map_constants'] = self.map_constants.to_dict()
        return data


@dataclass
class Segment:
    index: int
    start: float
    duration: float
    pieces: List[Piece]
    times: np.ndarray
    positions: np.ndarray
    modes: List[str]
    end_state: FlowState


@dataclass
class InterpolatedChain:
    """Flow segments Phi_n on absolute chain time plus straight connectors sigma_n."""
    orbit: FlowPseudoOrbit
    fs: FlowSpec
    segments: List[Segment]
    connectors: List[Tuple[np.ndarray, np.ndarray]]

    @property
    def end_time(self) -> float:
        last = self.segments[-1]
        return last.start + last.duration

    def timeline(self) -> List[Piece]:
        """All single-mode runs on absolute chain time."""
        runs: List[Piece] = []
        for segment in self.segments:
            runs.extend((segment.start + a, segment.start + b, s) for a, b, s in segment.pieces)
        return runs

    def rows(self) -> List[Tuple[int, float, float, float, float, int]]:
        """(step, t, x, y, z, is_connector) for export."""
        out = []
        for segment in self.segments:
            for t, p in zip(segment.times, segment.positions):
                out.append((segment.index, float(segment.start + t), float(p[0]), float(p[1]), float(p[2]), 0))
            if segment.index < len(self.connectors):
                _, end = self.connectors[segment.index]
                t_end = segment.start + segment.duration
                out.append((segment.index, float(t_end), float(end[0]), float(end[1]), float(end[2]), 1))
        return out


@dataclass(frozen=True)
class Crossing:
    step: int
    time: float
    point: PlanarPoint
    via_connector: bool = False


@dataclass
class CrossingSequence:
    crossings: List[Crossing]
    terminal: bool = False

    def __len__(self) -> int:
        return len(self.crossings)

    def points(self) -> np.ndarray:
        return np.array([c.point.as_tuple() for c in self.crossings], dtype=float)

    def times(self) -> np.ndarray:
        return np.array([c.time for c in self.crossings])


@dataclass
class ProjectedCrossings:
    """Map-level pseudo-orbit w with the case of each index and the bounds it meets."""
    w: np.ndarray
    cases: List[int]
    gaps: np.ndarray
    displacements: np.ndarray
    terminal: bool = False

    def to_orbit(self, constants: FlowConstants) -> PseudoOrbit2D:
        return PseudoOrbit2D(
            points=self.w.copy(),
            delta=constants.xi0,
            mu=constants.mu_hat,
            terminal_gamma=self.terminal,
            mode='flow-crossings',
        )


@dataclass
class ReturnProfile:
    """Box landmarks of one return on an absolute clock."""
    start: float
    corner: Optional[float]
    corner_x: float
    exit: Optional[float]
    arrival: float
    reach: Callable[[float], Optional[float]]


@dataclass
class Reparametrization:
    chain_knots: np.ndarray
    true_knots: np.ndarray
    interpolant: PchipInterpolator
    end: float
    terminal_shift: Optional[float] = None

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        values = self.interpolant(np.clip(t, 0.0, self.chain_knots[-1]))
        if self.terminal_shift is not None:
            values = np.where(t > self.chain_knots[-1], t + self.terminal_shift, values)
        return values

    def slope_deviation(self, t: np.ndarray) -> float:
        inside = np.asarray(t)[np.asarray(t) <= self.chain_knots[-1]]
        if len(inside) == 0:
            return 0.0
        return float(np.max(np.abs(self.interpolant.derivative()(inside) - 1.0)))


@dataclass
class FlowShadowReport:
    epsilon: float
    sup_distance: float
    passed: bool
    n_samples: int
    bypass_samples: int
    bypass_max: float
    sampling_gap: float
    max_slope_deviation: float
    terminal_ray_ok: Optional[bool] = None
    escape_violations: List[int] = field(default_factory=list)
    crossing_error: float = 0.0
    crossing_bound: float = math.inf

    @property
    def certified_bound(self) -> float:
        return self.sup_distance + self.sampling_gap

    @property
    def crossings_ok(self) -> bool:
        """max_i |y_i - L^i(z)| stays below the flow epsilon1."""
        return self.crossing_error < self.crossing_bound

    def to_dict(self) -> Dict[str, Any]:
        return {
            'epsilon': self.epsilon,
            'sup_distance': self.sup_distance,
            'pass': self.passed,
            'n_samples': self.n_samples,
            'bypass_samples': self.bypass_samples,
            'bypass_max': self.bypass_max,
            'sampling_gap': self.sampling_gap,
            'certified_bound': self.certified_bound,
            'max_slope_deviation': self.max_slope_deviation,
            'terminal_ray_ok': self.terminal_ray_ok,
            'escape_violations': list(self.escape_violations),
            'crossing_error': self.crossing_error,
            'crossing_bound': self.crossing_bound,
            'crossings_ok': self.crossings_ok,
        }


# ---------------------------------------------------------------- pseudo-orbits


def validate_flow_pseudo_orbit(
    orbit: FlowPseudoOrbit, fs: FlowSpec, delta: Optional[float] = None, tau: Optional[float] = None
) -> None:
    """Raise PseudoOrbitError at the first step breaking membership, duration or jump bounds."""
    delta = orbit.delta if delta is None else delta
    tau = orbit.tau if tau is None else tau
    bound = delta * (1.0 + 1e-9) + 1e-15
    region = TrappingRegion(fs)
    if not orbit.states or not orbit.states[0].on_sigma():
        raise PseudoOrbitError(0, "x_0 is not on Sigma")
    if len(orbit.durations) != len(orbit.states) - 1:
        raise PseudoOrbitError(0, "need one duration per step")
    for n, state in enumerate(orbit.states):
        if not region.contains(state):
            raise PseudoOrbitError(n, "state outside the trapping region")
    for n, duration in enumerate(orbit.durations):
        if not tau * (1.0 - DURATION_TOL) <= duration <= 2.0 * tau * (1.0 + DURATION_TOL):
            raise PseudoOrbitError(n, f"duration {duration:.6g} outside [{tau:.6g}, {2 * tau:.6g}]")
        end = flow_evaluate(fs, orbit.mu, orbit.states[n], float(duration))
        jump = float(np.linalg.norm(end.projection() - orbit.states[n + 1].projection()))
        if jump > bound:
            raise PseudoOrbitError(n, f"|phi(x_n, tau_n) - x_(n+1)| = {jump:.6g} > {bound:.6g}")


def _perturb_box(region: TrappingRegion, state: FlowState, rng: np.random.Generator,
                 delta: float, exact: bool = False) -> FlowState:
    # noise acts on (x, z) only; clipping to the box keeps each coordinate move smaller
    x, y, z = state.position
    radius = delta if exact else delta * math.sqrt(rng.uniform())
    angle = rng.uniform(0.0, 2.0 * math.pi)
    dx = 0.0 if state.mode == STABLE else radius * math.cos(angle)
    dz = radius * math.sin(angle)
    new_x = min(1.0, max(-1.0, x + dx))
    floor = max(region.min_fibre_height(y), 0.5 * z)
    new_z = min(1.0, max(floor, z + dz))
    return FlowState.in_box(new_x, y, new_z)


def _perturb_tube(state: FlowState, rng: np.random.Generator, delta: float, exact: bool = False) -> FlowState:
    assert state.target is not None and state.entry is not None
    radius = delta if exact else delta * math.sqrt(rng.uniform())
    angle = rng.uniform(0.0, 2.0 * math.pi)
    X = min(1.0, max(-1.0, state.target[0] + radius * math.cos(angle)))
    Y = min(1.0, max(-1.0, state.target[1] + radius * math.sin(angle)))
    return FlowState.in_tube(state.entry, (X, Y), state.progress)


def _perturb(region: TrappingRegion, state: FlowState, rng: np.random.Generator,
             delta: float, exact: bool = False) -> FlowState:
    if state.in_tube_mode:
        return _perturb_tube(state, rng, delta, exact)
    return _perturb_box(region, state, rng, delta, exact)


def _arrivals(pieces: Sequence[Piece]) -> List[Tuple[float, FlowState]]:
    """Section arrivals strictly after the start of a step."""
    return [(a, s) for a, _, s in pieces[1:] if not s.in_tube_mode and s.position[2] == 1.0]


def _plan_crossings(fs: FlowSpec, mu: float, special: float, returns: int,
                    rng: np.random.Generator) -> List[float]:
    """x-coordinates of returns ending at `special`, built by random-branch inversion."""
    plan = [special]
    top = fs.map.alpha.c - 1.0 - mu
    for _ in range(returns):
        target = plan[-1]
        if target > top - 1e-3:
            branches = [-1]
        elif target < -top + 1e-3:
            branches = [1]
        else:
            branches = [int(rng.choice([-1, 1]))]
            branches.append(-branches[0])
        for branch in branches:
            try:
                plan.append(invert_alpha_branch(fs.map, target, branch, mu))
                break
            except NoPreimageError:
                continue
    plan.reverse()
    return plan


def _special_crossing(mode: str, delta: float, rng: np.random.Generator) -> float:
    sign = float(rng.choice([-1.0, 1.0]))
    if mode == 'gamma':
        return sign * rng.uniform(0.1, 1.0) * delta * 1e-3
    if mode == 'stall':
        # deep enough for the box passage to come within delta/4 of the origin
        return sign * rng.uniform(0.1, 1.0) * 0.5 * (delta / 10.0) ** 3
    return 0.0


def generate_flow_pseudo_orbit(
    fs: FlowSpec,
    constants: FlowConstants,
    n_steps: int,
    seed: int,
    mode: str = 'noise',
    delta: Optional[float] = None,
    stall_steps: int = 8,
    max_steps: int = 200_000,
) -> FlowPseudoOrbit:
    """
    Generate a (delta, tau_hat)-chain of phi_{mu_hat} from a point of Sigma.

    noise: random jumps of size at most delta after every step.
    gamma: the chain is steered onto a crossing within delta/1000 of Gamma,
        and its x-sign is flipped at the first box step after it.
    stall: as gamma but deeper and without the flip; the chain repeats a
        state next to the saddle stall_steps times.
    terminal: the chain is steered onto Gamma and follows the stable
        manifold until it is inside Pi(eta0); n_steps does not bound it.
    """
    if mode not in FLOW_MODES:
        raise ParameterError(f"unknown mode {mode!r}; expected one of {FLOW_MODES}")
    if n_steps < 1:
        raise ParameterError(f"n_steps must be positive, got {n_steps}")
    delta = constants.delta_hat if delta is None else delta
    tau, mu = constants.tau_hat, constants.mu_hat
    rng = np.random.default_rng(derive_seed(seed, 'flow', mode))
    region = TrappingRegion(fs)

    plan: Optional[List[float]] = None
    if mode == 'noise':
        start = PlanarPoint(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9))
    else:
        plan = _plan_crossings(fs, mu, _special_crossing(mode, delta, rng), int(rng.integers(2, 5)), rng)
        start = PlanarPoint(plan[0], rng.uniform(-0.9, 0.9))
    special = len(plan) - 1 if plan is not None else -1

    states = [FlowState.on_section(start)]
    durations: List[float] = []
    crossings, flipped, stalls = 0, False, stall_steps
    state = states[0]
    while True:
        n = len(durations)
        if mode != 'terminal' and n >= n_steps:
            break
        if n >= max_steps:
            raise CrossingError(f"{mode} chain did not finish within {max_steps} steps")
        tau_n = float(rng.uniform(tau, 2.0 * tau))

        if mode == 'stall' and crossings == special and stalls > 0 and np.linalg.norm(state.projection()) <= delta / 4.0:
            durations.append(tau_n)
            states.append(state)
            stalls -= 1
            continue

        pieces = trajectory_pieces(fs, mu, state, tau_n)
        crossings += len(_arrivals(pieces))
        end = flow_evaluate(fs, mu, state, tau_n)
        following = end
        if plan is not None and crossings < special:
            if end.in_tube_mode:
                assert end.target is not None and end.entry is not None
                want, (X, Y) = plan[crossings + 1], end.target
                X = want if abs(want - X) <= delta else X + math.copysign(delta, want - X)
                following = FlowState.in_tube(end.entry, (X, Y), end.progress)
        elif plan is not None and crossings == special:
            if mode == 'gamma' and not flipped and end.mode == LINEAR and abs(end.position[0]) <= delta / 2.0:
                x, y, z = end.position
                following = FlowState.in_box(-x, y, z)
                flipped = True
            elif mode == 'gamma' and flipped:
                following = _perturb(region, end, rng, delta)
        elif mode != 'terminal':
            following = _perturb(region, end, rng, delta)

        durations.append(tau_n)
        states.append(following)
        state = following
        if mode == 'terminal' and crossings >= special and state.mode == STABLE \
                and region.in_small_box(state.projection(), constants.eta0):
            break

    orbit = FlowPseudoOrbit(
        states=states,
        durations=np.array(durations),
        delta=delta,
        tau=tau,
        mu=mu,
        terminal=mode == 'terminal',
        seed=seed,
        mode=mode,
    )
    logger.debug(f"flow chain ({mode}): {len(durations)} steps, {crossings} arrivals")
    return orbit


def _split_durations(total: float, tau: float) -> List[float]:
    parts = []
    remaining = total
    while remaining > 2.0 * tau:
        take = 2.0 * tau if remaining - 2.0 * tau >= tau else remaining - tau
        parts.append(take)
        remaining -= take
    parts.append(remaining)
    return parts


def split_long_steps(orbit: FlowPseudoOrbit, fs: FlowSpec) -> FlowPseudoOrbit:
    """Cut every step longer than 2 tau at exact flow points into pieces in [tau, 2 tau]."""
    tau = orbit.tau
    states = [orbit.states[0]]
    durations: List[float] = []
    for n, duration in enumerate(orbit.durations):
        duration = float(duration)
        if duration < tau * (1.0 - DURATION_TOL):
            raise SplitError(n, duration, tau)
        parts = _split_durations(duration, tau) if duration > 2.0 * tau * (1.0 + DURATION_TOL) else [duration]
        state = orbit.states[n]
        for part in parts[:-1]:
            state = flow_evaluate(fs, orbit.mu, state, part)
            states.append(state)
            durations.append(part)
        durations.append(parts[-1])
        states.append(orbit.states[n + 1])
    return FlowPseudoOrbit(
        states=states,
        durations=np.array(durations),
        delta=orbit.delta,
        tau=tau,
        mu=orbit.mu,
        terminal=orbit.terminal,
        seed=orbit.seed,
        mode=orbit.mode,
    )


# ---------------------------------------------------------------- interpolation and crossings


def interpolate_chain(
    orbit: FlowPseudoOrbit,
    fs: FlowSpec,
    samples_per_step: int = SAMPLES_PER_STEP,
    eta0: Optional[float] = None,
) -> InterpolatedChain:
    """Sample every flow segment, including its mode changes and the faces of Pi(eta0) it crosses."""
    if samples_per_step < 2:
        raise ParameterError("need at least two samples per step")
    starts = orbit.start_times()
    segments: List[Segment] = []
    connectors: List[Tuple[np.ndarray, np.ndarray]] = []
    for n, duration in enumerate(orbit.durations):
        duration = float(duration)
        state = orbit.states[n]
        pieces = trajectory_pieces(fs, orbit.mu, state, duration)
        extra = [a for a, _, _ in pieces]
        if eta0 is not None:
            for a, b, piece_state in pieces:
                extra.extend(a + t for t in box_event_times(fs, piece_state, eta0) if a + t < b)
        times = np.unique(np.concatenate([np.linspace(0.0, duration, samples_per_step), extra]))
        times = times[(times >= 0.0) & (times <= duration)]
        positions, modes = pieces_positions(fs, pieces, times)
        end_state = flow_evaluate(fs, orbit.mu, state, duration)
        segments.append(Segment(n, float(starts[n]), duration, pieces, times, positions, modes, end_state))
        connectors.append((end_state.projection(), orbit.states[n + 1].projection()))
    return InterpolatedChain(orbit, fs, segments, connectors)


def _segment_crossing(segment: Segment) -> Optional[Tuple[float, PlanarPoint]]:
    first = segment.pieces[0][2]
    if first.on_sigma():
        return 0.0, PlanarPoint(first.position[0], first.position[1])
    arrivals = _arrivals(segment.pieces)
    if arrivals:
        t, state = arrivals[0]
        return t, PlanarPoint(state.position[0], state.position[1])
    return None


def _connector_crossing(start: np.ndarray, end: np.ndarray) -> Optional[PlanarPoint]:
    a, b = start[2] - 1.0, end[2] - 1.0
    if a * b > 0.0 or a == b or a == 0.0:
        return None
    lam = a / (a - b)
    point = start + lam * (end - start)
    if abs(point[0]) > 1.0 or abs(point[1]) > 1.0:
        return None
    return PlanarPoint(float(point[0]), float(point[1]))


def extract_crossing_sequence(chain: InterpolatedChain) -> CrossingSequence:
    """
    Crossings y_i of the interpolated chain with Sigma.

    n_i is a step whose extended segment meets Sigma while the previous one
    does not; y_i is the flow-segment point when there is one, else the
    connector point.
    """
    found: List[Optional[Crossing]] = []
    for segment in chain.segments:
        hit = _segment_crossing(segment)
        if hit is not None:
            t, point = hit
            found.append(Crossing(segment.index, segment.start + t, point))
            continue
        start, end = chain.connectors[segment.index]
        point = _connector_crossing(start, end)
        if point is not None:
            found.append(Crossing(segment.index, segment.start + segment.duration, point, True))
        else:
            found.append(None)

    crossings = [c for n, c in enumerate(found) if c is not None and (n == 0 or found[n - 1] is None)]
    if not crossings or crossings[0].step != 0:
        raise CrossingError("the chain does not start on Sigma")
    if len(crossings) < 2:
        raise CrossingError("the chain never returns to Sigma")
    terminal = chain.orbit.terminal and crossings[-1].point.x == 0.0
    if chain.orbit.terminal and not terminal:
        raise CrossingError("terminal chain does not end with a crossing on Gamma")
    return CrossingSequence(crossings, terminal)


def project_crossing_to_map_orbit(crossings: CrossingSequence, constants: FlowConstants, fs: FlowSpec) -> ProjectedCrossings:
    """
    Turn the crossings into a xi0-pseudo-orbit w of L_{mu_hat}.

    Case 1 keeps y_i. Case 2 (|y_i.x| < xi1) moves y_i off Gamma to
    |x| = xi1/2 on the side whose image lies next to y_(i+1). Case 3 is a
    Case 1 index followed by a Case 2 one. A final crossing on Gamma of a
    terminal chain is kept on Gamma.
    """
    y = crossings.points()
    m = len(y) - 1
    w = y.copy()
    cases = [1] * (m + 1)
    xi0, xi1 = constants.xi0, constants.xi1
    for i in range(m + 1):
        if crossings.terminal and i == m:
            cases[i] = 2
            continue
        if abs(y[i, 0]) < xi1:
            if i < m and y[i + 1, 0] != 0.0:
                iota = -math.copysign(1.0, y[i + 1, 0])
            else:
                iota = math.copysign(1.0, y[i, 0]) if y[i, 0] != 0.0 else 1.0
            w[i, 0] = iota * xi1 / 2.0
            cases[i] = 2
    for i in range(m):
        if cases[i] == 1 and cases[i + 1] == 2:
            cases[i] = 3

    vertices = (cusp_vertex(fs.map, 1), cusp_vertex(fs.map, -1))
    gaps = np.zeros(m)
    for i in range(m):
        p, successor = PlanarPoint(*w[i]), PlanarPoint(*w[i + 1])
        if p.on_gamma:
            gaps[i] = min(successor.distance(v) for v in vertices)
        else:
            gaps[i] = eval_map_mu(fs.map, constants.mu_hat, p).distance(successor)
        if gaps[i] >= xi0:
            raise ProjectionError(i, cases[i], f"|w_(i+1) - L(w_i)| = {gaps[i]:.3g} >= xi0 = {xi0:.3g}")
    displacements = np.hypot(*(y - w).T)
    worst = int(np.argmax(displacements))
    if displacements[worst] >= constants.epsilon1 / 2.0:
        raise ProjectionError(worst, cases[worst], f"|y_i - w_i| = {displacements[worst]:.3g}")
    return ProjectedCrossings(w, cases, gaps, displacements, crossings.terminal)


# ---------------------------------------------------------------- reparametrization


def _first_linear_time(runs: Sequence[Piece], start: float, stop: float,
                       wait: Callable[[float, float], float], fs: FlowSpec) -> Optional[float]:
    """First time in [start, stop] at which a linear run satisfies the condition timed by `wait`."""
    for a, b, state in runs:
        if b < start or a > stop or state.mode != LINEAR:
            continue
        a0 = max(a, start)
        x, _, z = state.position
        if a0 > a:
            x *= math.exp(fs.lambda1 * (a0 - a))
            z *= math.exp(-fs.lambda3 * (a0 - a))
        t = a0 + wait(abs(x), z)
        if t <= min(b, stop):
            return t
    return None


def _chain_profile(runs: Sequence[Piece], start: float, arrival: float, fs: FlowSpec) -> ReturnProfile:
    rate = fs.lambda1 + fs.lambda3

    def corner_wait(ax: float, z: float) -> float:
        return 0.0 if ax >= z else math.log(z / ax) / rate

    corner = _first_linear_time(runs, start, arrival, corner_wait, fs)
    corner_x = 1.0
    if corner is not None:
        position, _ = pieces_positions(fs, list(runs), np.array([corner]))
        corner_x = abs(float(position[0, 0]))
    tube_starts = [a for a, _, s in runs if s.in_tube_mode and start - 1e-12 <= a < arrival]
    exit_at = tube_starts[0] if tube_starts else None

    def reach(level: float) -> Optional[float]:
        return _first_linear_time(
            runs, start, arrival, lambda ax, z: 0.0 if ax >= level else math.log(level / ax) / fs.lambda1, fs
        )

    return ReturnProfile(start, corner, corner_x, exit_at, arrival, reach)


def _sigma_profile(fs: FlowSpec, p: PlanarPoint, start: float) -> ReturnProfile:
    ax = abs(p.x)
    rate = fs.lambda1 + fs.lambda3
    exit_rel = exit_time(fs, p.x)

    def reach(level: float) -> Optional[float]:
        return start + max(0.0, math.log(level / ax) / fs.lambda1)

    return ReturnProfile(
        start=start,
        corner=start + math.log(1.0 / ax) / rate,
        corner_x=ax ** (fs.lambda3 / rate),
        exit=start + exit_rel,
        arrival=start + exit_rel + fs.tube_time,
        reach=reach,
    )


def _subdivide(knots: List[Tuple[float, float]], parts: int) -> List[Tuple[float, float]]:
    out = [knots[0]]
    for (s0, t0), (s1, t1) in zip(knots[:-1], knots[1:]):
        for k in range(1, parts + 1):
            f = k / parts
            out.append((s0 + f * (s1 - s0), t0 + f * (t1 - t0)))
    return out


def return_knots(a: ReturnProfile, b: ReturnProfile) -> List[Tuple[float, float]]:
    """
    Matching times of one return of trajectory a and one of trajectory b.

    Both descend together until the earlier corner (|x| = z). The one whose
    corner lies further out then idles for a short pause while the other
    catches up to the same |x|; from there both leave at equal speed and
    the tubes are matched by progress.
    """
    box = [(a.start, b.start)]
    if a.corner is not None and b.corner is not None and a.exit is not None and b.exit is not None:
        c1 = min(a.corner - a.start, b.corner - b.start)
        box.append((a.start + c1, b.start + c1))
        level = max(a.corner_x, b.corner_x)
        ta, tb = a.reach(level), b.reach(level)
        if level < 1.0 and ta is not None and tb is not None:
            ta, tb = max(ta, a.start + c1), max(tb, b.start + c1)
            if ta - a.start <= tb - b.start:
                ta += min(PAUSE, 0.25 * (a.exit - ta))
            else:
                tb += min(PAUSE, 0.25 * (b.exit - tb))
            box.append((ta, tb))
    if a.exit is not None and b.exit is not None:
        box.append((a.exit, b.exit))
        knots = _subdivide(box, BOX_SUBDIVISIONS)
        for u in TUBE_FRACTIONS:
            knots.append((a.exit + u * (a.arrival - a.exit), b.exit + u * (b.arrival - b.exit)))
    else:
        knots = box
    knots.append((a.arrival, b.arrival))
    return knots


def _strictly_increasing(knots: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    kept = [knots[0]]
    for s, t in knots[1:]:
        if s > kept[-1][0] + 1e-12 and t > kept[-1][1] + 1e-12:
            kept.append((s, t))
    return kept


def true_crossing_times(fs: FlowSpec, true_orbit: np.ndarray) -> np.ndarray:
    """T_i: the times at which phi_0 from z_0 meets Sigma at z_i."""
    m = len(true_orbit) - 1
    times = np.zeros(m + 1)
    for i in range(m):
        times[i + 1] = times[i] + exit_time(fs, float(true_orbit[i, 0])) + fs.tube_time
    return times


def build_reparametrization(
    chain: InterpolatedChain,
    crossings: CrossingSequence,
    true_orbit: np.ndarray,
    fs: FlowSpec,
) -> Reparametrization:
    """
    Monotone C^1 h with h(S_i) = T_i, through the landmarks of every return.

    The knots are interpolated with PCHIP, which keeps h strictly increasing.
    After a terminal crossing h is the identity shift t -> t + T_m - S_m.
    """
    S = crossings.times()
    T = true_crossing_times(fs, true_orbit)
    if np.any(np.diff(S) <= 0.0) or np.any(np.diff(T) <= 0.0):
        raise ReparametrizationError("crossing times are not strictly increasing")
    runs = chain.timeline()
    knots: List[Tuple[float, float]] = []
    for i in range(len(S) - 1):
        a = _chain_profile(runs, float(S[i]), float(S[i + 1]), fs)
        b = _sigma_profile(fs, PlanarPoint(*true_orbit[i]), float(T[i]))
        knots.extend(return_knots(a, b))
    knots = _strictly_increasing(knots)
    if len(knots) < 2:
        raise ReparametrizationError("fewer than two reparametrization knots")
    chain_knots = np.array([k[0] for k in knots])
    true_knots = np.array([k[1] for k in knots])
    interpolant = PchipInterpolator(chain_knots, true_knots)
    shift = float(T[-1] - S[-1]) if crossings.terminal else None
    end = chain.end_time if crossings.terminal else float(S[-1])
    return Reparametrization(chain_knots, true_knots, interpolant, end, shift)


# ---------------------------------------------------------------- verification


def _sigma_positions(fs: FlowSpec, p: PlanarPoint, local_times: np.ndarray) -> np.ndarray:
    horizon = float(np.max(local_times)) if len(local_times) else 0.0
    pieces = trajectory_pieces(fs, 0.0, FlowState.on_section(p), horizon)
    positions, _ = pieces_positions(fs, pieces, local_times)
    return positions


def true_positions(fs: FlowSpec, true_orbit: np.ndarray, crossing_times: np.ndarray, s: np.ndarray) -> np.ndarray:
    """phi_0(z_0, s) assembled return by return from the certified crossings z_i."""
    s = np.asarray(s, dtype=float)
    owner = np.clip(np.searchsorted(crossing_times, s, side='right') - 1, 0, len(true_orbit) - 1)
    out = np.empty((len(s), 3))
    for i in np.unique(owner):
        idx = np.nonzero(owner == i)[0]
        local = np.maximum(0.0, s[idx] - crossing_times[i])
        order = np.argsort(local)
        out[idx[order]] = _sigma_positions(fs, PlanarPoint(*true_orbit[int(i)]), local[order])
    return out


def _in_small_box(points: np.ndarray, eta: float) -> np.ndarray:
    return (np.abs(points[:, 0]) <= eta) & (np.abs(points[:, 1]) <= eta) & (points[:, 2] >= 0.0) & (points[:, 2] <= eta)


def _touches(positions: np.ndarray, eta0: float) -> Tuple[bool, bool]:
    """Whether a sampled segment touches a side face or the top face of Pi(eta0)."""
    tol = FACE_TOL * eta0
    square = (np.abs(positions[:, 1]) <= eta0) & (positions[:, 2] >= 0.0)
    side = np.any(square & (positions[:, 2] <= eta0) & (np.abs(np.abs(positions[:, 0]) - eta0) <= tol))
    top = np.any(square & (np.abs(positions[:, 0]) <= eta0) & (np.abs(positions[:, 2] - eta0) <= tol))
    return bool(side), bool(top)


def top_face_escape_check(chain: InterpolatedChain, eta0: float) -> List[int]:
    """Steps n touching the top face of Pi(eta0) whose step n + 2 reaches that face again."""
    tol = FACE_TOL * eta0
    violations = []
    segments = chain.segments
    for n in range(len(segments) - 2):
        _, top = _touches(segments[n].positions, eta0)
        if not top:
            continue
        later = segments[n + 2].positions
        inside = (np.abs(later[:, 0]) <= eta0) & (np.abs(later[:, 1]) <= eta0)
        if np.any(later[inside, 2] >= eta0 - tol):
            violations.append(n)
    return violations


def escape_property_check(chain: InterpolatedChain, eta0: float) -> List[int]:
    """
    Steps n that touch a face of Pi(eta0) although step n + 2 still meets it.

    A side-face touch requires step n + 2 to miss Pi(eta0) entirely; a
    top-face touch requires it to stay below the top face.
    """
    violations = set(top_face_escape_check(chain, eta0))
    segments = chain.segments
    for n in range(len(segments) - 2):
        side, _ = _touches(segments[n].positions, eta0)
        if side and np.any(_in_small_box(segments[n + 2].positions, eta0 * (1.0 - FACE_TOL))):
            violations.add(n)
    return sorted(violations)


def terminal_ray_check(fs: FlowSpec, z_last: PlanarPoint, eta0: float) -> bool:
    """After reaching the top face of Pi(eta0) the stable ray from z_last stays inside it."""
    if not z_last.on_gamma:
        return False
    upsilon = math.log(1.0 / eta0) / fs.lambda3
    return abs(z_last.y) * math.exp(-fs.lambda2 * upsilon) <= eta0


def verify_flow_shadowing(
    chain: InterpolatedChain,
    crossings: CrossingSequence,
    true_orbit: np.ndarray,
    reparam: Reparametrization,
    fs: FlowSpec,
    constants: FlowConstants,
    epsilon: Optional[float] = None,
) -> FlowShadowReport:
    """
    Sup distance between the chain and phi_0(z_0, h(t)) on the sampled chain.

    Samples where both points lie in Pi(eta0) are counted separately; there
    the distance is bounded by the diameter of that box whatever h does.
    The crossings must also stay within the flow epsilon1 of the map orbit
    L^i(z), which joins the projection bound to the map shadowing bound.
    """
    epsilon = constants.epsilon if epsilon is None else epsilon
    T = true_crossing_times(fs, true_orbit)
    all_t, all_chain = [], []
    chord = 0.0
    for segment in chain.segments:
        t = segment.start + segment.times
        keep = t <= reparam.end + 1e-12
        if not np.any(keep):
            break
        all_t.append(t[keep])
        all_chain.append(segment.positions[keep])
        if keep.sum() > 1:
            chord = max(chord, float(np.max(np.linalg.norm(np.diff(segment.positions[keep], axis=0), axis=1))))
    t = np.concatenate(all_t)
    chain_points = np.concatenate(all_chain)
    order = np.argsort(t, kind='stable')
    t, chain_points = t[order], chain_points[order]

    s = reparam(t)
    truth = true_positions(fs, true_orbit, T, s)
    distances = np.linalg.norm(chain_points - truth, axis=1)
    both_inside = _in_small_box(chain_points, constants.eta0) & _in_small_box(truth, constants.eta0)
    true_chord = float(np.max(np.linalg.norm(np.diff(truth, axis=0), axis=1))) if len(truth) > 1 else 0.0

    terminal_ok: Optional[bool] = None
    if crossings.terminal:
        terminal_ok = terminal_ray_check(fs, PlanarPoint(*true_orbit[-1]), constants.eta0)

    y = crossings.points()
    paired = min(len(y), len(true_orbit))
    crossing_error = float(np.max(np.hypot(*(y[:paired] - true_orbit[:paired]).T))) if paired else 0.0

    sup = float(distances.max())
    report = FlowShadowReport(
        epsilon=epsilon,
        sup_distance=sup,
        passed=sup <= epsilon and terminal_ok is not False and crossing_error < constants.epsilon1,
        n_samples=len(t),
        bypass_samples=int(both_inside.sum()),
        bypass_max=float(distances[both_inside].max()) if both_inside.any() else 0.0,
        sampling_gap=0.5 * (chord + true_chord),
        max_slope_deviation=reparam.slope_deviation(t),
        terminal_ray_ok=terminal_ok,
        escape_violations=escape_property_check(chain, constants.eta0),
        crossing_error=crossing_error,
        crossing_bound=constants.epsilon1,
    )
    logger.info(
        f"flow shadowing: sup={report.sup_distance:.4g} (epsilon={epsilon}), "
        f"{report.bypass_samples} samples in Pi(eta0), gap={report.sampling_gap:.3g}"
    )
    if not report.crossings_ok:
        logger.warning(
            f"crossings drift {crossing_error:.3g} from the map orbit (epsilon1={constants.epsilon1:.3g})"
        )
    return report


@dataclass
class RunFlow:
    orbit: FlowPseudoOrbit
    chain: InterpolatedChain
    crossings: CrossingSequence
    projection: ProjectedCrossings
    map_result: ShadowResult2D
    reparametrization: Reparametrization
    report: FlowShadowReport


def run_flow_pipeline(
    fs: FlowSpec,
    constants: FlowConstants,
    n_steps: int,
    seed: int,
    mode: str = 'noise',
    samples_per_step: int = SAMPLES_PER_STEP,
) -> RunFlow:
    """Generate, split, interpolate, cross, project, solve, reparametrize and verify one chain."""
    orbit = generate_flow_pseudo_orbit(fs, constants, n_steps, seed, mode)
    orbit = split_long_steps(orbit, fs)
    validate_flow_pseudo_orbit(orbit, fs)
    chain = interpolate_chain(orbit, fs, samples_per_step, eta0=constants.eta0)
    crossings = extract_crossing_sequence(chain)
    projection = project_crossing_to_map_orbit(crossings, constants, fs)
    w_orbit = projection.to_orbit(constants)
    validate_pseudo_orbit_2d(w_orbit, fs.map)
    map_result = solve_shadow_point_2d(fs.map, w_orbit, constants.map_constants)
    reparam = build_reparametrization(chain, crossings, map_result.orbit, fs)
    report = verify_flow_shadowing(chain, crossings, map_result.orbit, reparam, fs, constants)
    return RunFlow(orbit, chain, crossings, projection, map_result, reparam, report)


# ---------------------------------------------------------------- constants


def _advance_margin(fs: FlowSpec, eta0: float, tau: float) -> float:
    """Smallest move over tau off a face of Pi(eta0): outward from a side face, down from the top."""
    # the linear flow moves every point of a face by the same amount
    side = eta0 * math.expm1(fs.lambda1 * tau)
    top = -eta0 * math.expm1(-fs.lambda3 * tau)
    return min(side, top)


def _polyline_length(points: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))


def _crossing_segment_length(fs: FlowSpec, p: PlanarPoint, lead: float, tau: float, samples: int = 200) -> float:
    """Arclength of the duration-tau segment of the trajectory from p that meets Sigma `lead` before its arrival."""
    tau_p = exit_time(fs, p.x) + fs.tube_time
    start = max(0.0, tau_p - lead)
    times = np.linspace(start, start + tau, samples)
    pieces = trajectory_pieces(fs, 0.0, FlowState.on_section(p), start + tau)
    positions, _ = pieces_positions(fs, pieces, times)
    return _polyline_length(positions)


def _min_crossing_length(fs: FlowSpec, tau: float) -> float:
    shortest = math.inf
    for x in (-0.99, -0.8, -0.5, -0.2, -0.05, 0.05, 0.2, 0.5, 0.8, 0.99):
        for y in (-0.9, 0.0, 0.9):
            for lead in np.linspace(0.0, tau, 5):
                length = _crossing_segment_length(fs, PlanarPoint(x, y), float(lead), tau)
                shortest = min(shortest, length)
    return shortest


def _outside_time(fs: FlowSpec, p: PlanarPoint, eta0: float) -> float:
    tau_p = exit_time(fs, p.x) + fs.tube_time
    return tau_p - time_inside_box(fs, p, eta0)


def _max_outside_time(fs: FlowSpec, eta0: float) -> float:
    longest = 0.0
    for x in np.concatenate([-np.logspace(-14, -0.01, 40), np.logspace(-14, -0.01, 40)]):
        for y in (-1.0, 0.0, 1.0):
            longest = max(longest, _outside_time(fs, PlanarPoint(float(x), y), eta0))
    return longest


def aligned_return_distance(fs: FlowSpec, p: PlanarPoint, q: PlanarPoint, eta0: float, per_knot: int = 6) -> float:
    """Sup distance between the returns from p and q under knot matching, outside Pi(eta0)."""
    a, b = _sigma_profile(fs, p, 0.0), _sigma_profile(fs, q, 0.0)
    knots = _strictly_increasing(return_knots(a, b))
    ka = np.array([k[0] for k in knots])
    kb = np.array([k[1] for k in knots])
    fractions = np.linspace(0.0, 1.0, per_knot, endpoint=False)
    ta = np.concatenate([k0 + fractions * (k1 - k0) for k0, k1 in zip(ka[:-1], ka[1:])] + [ka[-1:]])
    tb = np.interp(ta, ka, kb)
    pa = _sigma_positions(fs, p, ta)
    order = np.argsort(tb)
    pb = np.empty_like(pa)
    pb[order] = _sigma_positions(fs, q, tb[order])
    outside = ~(_in_small_box(pa, eta0) & _in_small_box(pb, eta0))
    distances = np.linalg.norm(pa - pb, axis=1)[outside]
    return float(distances.max()) if len(distances) else 0.0


def _epsilon1_pairs(epsilon1: float) -> List[Tuple[PlanarPoint, PlanarPoint]]:
    pairs = []
    for ax in (1e-10, 1e-6, 1e-3, 0.01, 0.1, 0.3, 0.6, 0.9):
        for sign in (-1.0, 1.0):
            for y in (-0.8, 0.8):
                p = PlanarPoint(sign * ax, y)
                for dx, dy in ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (math.sqrt(0.5), math.sqrt(0.5))):
                    qx = p.x + sign * dx * epsilon1
                    qy = min(1.0, max(-1.0, p.y + dy * epsilon1))
                    if qx == 0.0 or math.copysign(1.0, qx) != sign or abs(qx) > 1.0:
                        continue
                    pairs.append((p, PlanarPoint(qx, qy)))
    return pairs


def _search_epsilon1(fs: FlowSpec, eta0: float, epsilon: float) -> float:
    candidate = EPSILON1_START
    for _ in range(MAX_HALVINGS):
        if all(aligned_return_distance(fs, p, q, eta0) <= epsilon / 2.0 for p, q in _epsilon1_pairs(candidate)):
            return candidate
        candidate /= 2.0
    raise ConstantSearchError('epsilon1')


def _funnel_distance(fs: FlowSpec, mu: float, p: PlanarPoint) -> float:
    image = eval_map_mu(fs.map, mu, p)
    return image.distance(cusp_vertex(fs.map, 1 if p.x > 0 else -1))


def _eta2_ok(fs: FlowSpec, eta: float, mu_hat: float, xi0: float) -> bool:
    ax = eta ** (1.0 + fs.lambda1 / fs.lambda3)
    if ax == 0.0:
        return True
    for sign in (-1.0, 1.0):
        for y in (-1.0, 0.0, 1.0):
            for mu in (0.0, mu_hat):
                if _funnel_distance(fs, mu, PlanarPoint(sign * ax, y)) > xi0 / 6.0:
                    return False
    return True


def _search_eta2(fs: FlowSpec, eta0: float, mu_hat: float, xi0: float) -> float:
    if _eta2_ok(fs, eta0, mu_hat, xi0):
        return eta0
    lo, hi = 0.0, eta0
    for _ in range(MAX_HALVINGS):
        mid = 0.5 * (lo + hi)
        if _eta2_ok(fs, mid, mu_hat, xi0):
            lo = mid
        else:
            hi = mid
    if lo <= 0.0:
        raise ConstantSearchError('eta2')
    return lo


@dataclass
class NoisyReturn:
    crossing: PlanarPoint
    exit_side: int
    met_box: bool


def return_step_budget(fs: FlowSpec, delta: float, tau: float) -> int:
    """
    Steps a noisy chain gets to come back to Sigma.

    A jump of size delta leaves |x| of order delta, from where the box is
    left within log(1/delta)/lambda1; the tube adds tube_time.
    """
    horizon = math.log(1.0 / min(delta, 0.5)) / fs.lambda1 + fs.tube_time + 1.0
    return int(math.ceil(RETURN_BUDGET_FACTOR * horizon / tau)) + 16


def noisy_return(
    fs: FlowSpec,
    mu: float,
    p: PlanarPoint,
    delta: float,
    tau: float,
    rng: np.random.Generator,
    eta: Optional[float] = None,
    max_steps: Optional[int] = None,
) -> NoisyReturn:
    """Run a chain with jumps of size exactly delta from p until its next arrival on Sigma."""
    region = TrappingRegion(fs)
    state = FlowState.on_section(p)
    exit_side = 0
    met = False
    if max_steps is None:
        max_steps = return_step_budget(fs, delta, tau)
    for _ in range(max_steps):
        tau_n = float(rng.uniform(tau, 2.0 * tau))
        pieces = trajectory_pieces(fs, mu, state, tau_n)
        for a, b, run in pieces:
            if run.in_tube_mode and exit_side == 0:
                assert run.entry is not None
                exit_side = 1 if run.entry[0] > 0 else -1
            if eta is not None and not met and not run.in_tube_mode:
                local = np.linspace(0.0, b - a, 24)
                positions, _ = pieces_positions(fs, [(0.0, b - a, run)], local)
                met = bool(np.any(_in_small_box(positions, eta)))
        arrivals = _arrivals(pieces)
        if arrivals:
            landed = arrivals[0][1]
            return NoisyReturn(PlanarPoint(landed.position[0], landed.position[1]), exit_side, met)
        state = _perturb(region, flow_evaluate(fs, mu, state, tau_n), rng, delta, exact=True)
    raise CrossingError(f"noisy chain from {p} did not return within {max_steps} steps")


def _draw_returns(fs: FlowSpec, mu: float, delta: float, tau: float, origins: Sequence[PlanarPoint],
                  rng: np.random.Generator, draws: int, eta: Optional[float] = None):
    """Yield (origin, return) pairs; a chain that never comes back yields None."""
    for p in origins:
        for _ in range(draws):
            try:
                yield p, noisy_return(fs, mu, p, delta, tau, rng, eta=eta)
            except CrossingError as e:
                logger.debug(f"delta={delta:.3g}: {e}")
                yield p, None


def _case1_origins(xi1: float) -> List[PlanarPoint]:
    return [PlanarPoint(sign * ax, y)
            for ax in (xi1, 10.0 * xi1, 1e-3, 0.1, 0.9)
            for sign in (1.0, -1.0)
            for y in (-0.8, 0.8)]


def _funnel_origins(eta2: float, exponent: float) -> List[PlanarPoint]:
    edge = eta2 ** exponent
    return [PlanarPoint(sign * ax, y)
            for ax in (0.5 * edge, 1e-3 * edge, 1e-40)
            for sign in (1.0, -1.0)
            for y in (-0.8, 0.8)]


def _return_gap_ok(fs: FlowSpec, mu: float, delta: float, tau: float, origins: Sequence[PlanarPoint],
                   bound: float, rng: np.random.Generator, draws: int = 1) -> bool:
    for p, result in _draw_returns(fs, mu, delta, tau, origins, rng, draws):
        if result is None or result.crossing.distance(eval_map_mu(fs.map, mu, p)) >= bound:
            return False
    return True


def _funnel_ok(fs: FlowSpec, mu: float, delta: float, tau: float, origins: Sequence[PlanarPoint],
               eta2: float, bound: float, rng: np.random.Generator, draws: int = 1) -> bool:
    vertices = (cusp_vertex(fs.map, 1), cusp_vertex(fs.map, -1))
    for _, result in _draw_returns(fs, mu, delta, tau, origins, rng, draws, eta=eta2):
        if result is None or not result.met_box:
            return False
        if min(result.crossing.distance(v) for v in vertices) >= bound:
            return False
    return True


def _side_kept_ok(fs: FlowSpec, mu: float, delta: float, tau: float, origins: Sequence[PlanarPoint],
                  rng: np.random.Generator, draws: int = 1) -> bool:
    for p, result in _draw_returns(fs, mu, delta, tau, origins, rng, draws):
        if result is None or result.exit_side != (1 if p.x > 0 else -1):
            return False
    return True


def _halve_until(name: str, start: float, accept: Callable[[float], bool]) -> float:
    candidate = start
    for _ in range(MAX_HALVINGS):
        if accept(candidate):
            logger.debug(f"{name} = {candidate:.6g}")
            return candidate
        candidate /= 2.0
    raise ConstantSearchError(name)


def shift_gap(fs: FlowSpec, mu: float, p: PlanarPoint) -> float:
    """Distance between the returns of phi_mu and phi_0 from p."""
    return first_return(fs, mu, p)[0].distance(first_return(fs, 0.0, p)[0])


def _mu1_ok(fs: FlowSpec, mu: float, epsilon1: float) -> bool:
    xs = np.linspace(-1.0, 1.0, 41)
    return all(
        shift_gap(fs, mu, PlanarPoint(float(x), y)) <= epsilon1 / 2.0
        for x in xs[xs != 0.0]
        for y in (-0.9, 0.0, 0.9)
    )


def _map_constants_for(fs: FlowSpec, mu1: float, epsilon1: float) -> MapConstants:
    """Map constants at accuracy epsilon1/2 with shifts capped at mu1."""
    return derive_map_constants(replace(fs.map, mu0=mu1), epsilon1 / 2.0)


@lru_cache(maxsize=8)
def derive_flow_constants(fs: FlowSpec, epsilon: float, seed: int = 0) -> FlowConstants:
    """
    All flow constants for the target accuracy epsilon.

    Each one is the result of a grid or sampled search against its defining
    property; all of them are then re-checked on fresh samples by
    check_flow_constants and a failure raises ConstantSearchError. Results
    are cached per (fs, epsilon, seed).
    """
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    tau = derive_tau_hat(fs)
    eta0 = epsilon / 30.0
    eta1 = _advance_margin(fs, eta0, tau)
    delta1 = min(eta0, eta1 / 2.0) / 2.0
    delta0 = _min_crossing_length(fs, tau) / 6.0
    s0 = 2.0 * _max_outside_time(fs, eta0)
    epsilon1 = _search_epsilon1(fs, eta0, epsilon)
    mu1 = _halve_until('mu1', fs.map.mu0, lambda mu: _mu1_ok(fs, mu, epsilon1))
    map_constants = _map_constants_for(fs, mu1, epsilon1)
    xi0, mu_hat = map_constants.delta, map_constants.mu_hat
    eta2 = _search_eta2(fs, eta0, mu_hat, xi0)
    exponent = 1.0 + fs.lambda1 / fs.lambda3
    xi1 = min(xi0 / 4.0, eta2 ** exponent / 2.0)
    delta2 = min(delta1, delta0)

    case1 = _case1_origins(xi1)
    funnel = _funnel_origins(eta2, exponent)
    rng = np.random.default_rng(derive_seed(seed, 'flow-constants'))
    delta3 = _halve_until(
        'delta3', delta2, lambda d: _return_gap_ok(fs, mu_hat, d, tau, case1, xi0 / 4.0, rng)
    )
    delta4 = _halve_until(
        'delta4', delta3, lambda d: _funnel_ok(fs, mu_hat, d, tau, funnel, eta2, xi0 / 4.0, rng)
    )
    kept = _halve_until('delta_hat', delta4, lambda d: _side_kept_ok(fs, mu_hat, d, tau, case1, rng))

    constants = FlowConstants(
        epsilon=epsilon,
        tau_hat=tau,
        eta0=eta0,
        eta1=eta1,
        delta0=delta0,
        delta1=delta1,
        s0=s0,
        epsilon1=epsilon1,
        mu1=mu1,
        xi0=xi0,
        mu_hat=mu_hat,
        eta2=eta2,
        xi1=xi1,
        delta2=delta2,
        delta3=delta3,
        delta4=delta4,
        delta_hat=kept / 2.0,
        map_constants=map_constants,
    )
    failures = check_flow_constants(fs, constants, seed=seed + 1)
    if failures:
        raise ConstantSearchError(failures[0], "falsified on fresh samples")
    logger.info(f"flow constants for epsilon={epsilon}: {constants.to_dict()}")
    return constants


def _sigma_sample(rng: np.random.Generator, low: float = 0.02) -> PlanarPoint:
    return PlanarPoint(math.copysign(rng.uniform(low, 1.0), rng.uniform(-1, 1)), rng.uniform(-1.0, 1.0))


def check_flow_constants(fs: FlowSpec, constants: FlowConstants, seed: int = 1, samples: int = 12,
                         noisy: bool = True) -> List[str]:
    """
    Names of the constants whose defining property fails on fresh random samples.

    Every constant draws its own samples. noisy=False skips the three
    noisy-chain constants (delta3, delta4, delta_hat), which dominate the cost.
    """
    def rng_for(name: str) -> np.random.Generator:
        return np.random.default_rng(derive_seed(seed, 'flow-constants-check', name))

    c = constants
    failures = []
    tau, eta0 = c.tau_hat, c.eta0
    exponent = 1.0 + fs.lambda1 / fs.lambda3
    edge = c.eta2 ** exponent

    rng = rng_for('tau_hat')
    for _ in range(samples):
        mu = float(rng.choice([0.0, c.mu_hat, fs.map.mu0]))
        _, return_time = first_return(fs, mu, _sigma_sample(rng, low=1e-6))
        if return_time < 6.0 * tau * (1.0 - 1e-12):
            failures.append('tau_hat')
            break

    rng = rng_for('eta1')
    moves = []
    for _ in range(samples):
        side_point = FlowState.in_box(math.copysign(eta0, rng.uniform(-1, 1)), 0.0, rng.uniform(0.1, 1.0) * eta0)
        moved = flow_evaluate(fs, c.mu_hat, side_point, tau).position
        moves.append(abs(moved[0]) - eta0)
        top_point = FlowState.in_box(rng.uniform(0.1, 1.0) * eta0, 0.0, eta0)
        moves.append(eta0 - flow_evaluate(fs, c.mu_hat, top_point, tau).position[2])
    if min(moves) < c.eta1 * (1.0 - 1e-9):
        failures.append('eta1')

    rng = rng_for('delta0')
    lengths = [_crossing_segment_length(fs, _sigma_sample(rng), float(rng.uniform(0.0, tau)), tau)
               for _ in range(samples)]
    if min(lengths) <= 3.0 * c.delta0:
        failures.append('delta0')

    rng = rng_for('s0')
    outside = [
        _outside_time(fs, PlanarPoint(math.copysign(10.0 ** rng.uniform(-14, 0), rng.uniform(-1, 1)),
                                      rng.uniform(-1.0, 1.0)), eta0)
        for _ in range(samples)
    ]
    if max(outside) > c.s0:
        failures.append('s0')

    rng = rng_for('epsilon1')
    if not c.epsilon1 < 0.1:
        failures.append('epsilon1')
    else:
        for _ in range(samples):
            p = _sigma_sample(rng, low=1e-8)
            angle = rng.uniform(0.0, 2.0 * math.pi)
            q = PlanarPoint(p.x + math.copysign(c.epsilon1 * abs(math.cos(angle)), p.x),
                            min(1.0, max(-1.0, p.y + c.epsilon1 * math.sin(angle))))
            if abs(q.x) > 1.0:
                q = PlanarPoint(math.copysign(1.0, p.x), q.y)
            if aligned_return_distance(fs, p, q, eta0) > c.epsilon / 2.0:
                failures.append('epsilon1')
                break

    rng = rng_for('mu1')
    if not c.mu_hat <= c.mu1 <= fs.map.mu0:
        failures.append('mu1')
    else:
        for _ in range(samples):
            mu = float(rng.uniform(0.0, c.mu1))
            if shift_gap(fs, mu, _sigma_sample(rng, low=1e-6)) > c.epsilon1 / 2.0:
                failures.append('mu1')
                break

    expected = _map_constants_for(fs, c.mu1, c.epsilon1) if 'mu1' not in failures else None
    if expected is None or c.map_constants != expected or c.xi0 != expected.delta \
            or c.mu_hat != expected.mu_hat or not c.xi0 < c.epsilon1:
        failures.append('xi0')

    rng = rng_for('eta2')
    for _ in range(samples):
        p = PlanarPoint(math.copysign(rng.uniform(1e-3, 1.0) * edge, rng.uniform(-1, 1)),
                        rng.uniform(-1.0, 1.0))
        if _funnel_distance(fs, c.mu_hat, p) > c.xi0 / 6.0 * (1.0 + 1e-9):
            failures.append('eta2')
            break

    if c.xi1 > min(c.xi0 / 4.0, edge / 2.0):
        failures.append('xi1')
    if c.delta2 > min(c.delta0, c.delta1):
        failures.append('delta2')
    if not noisy:
        return failures

    rng = rng_for('noisy')
    fresh = [PlanarPoint(math.copysign(max(c.xi1, 10.0 ** rng.uniform(-10, -0.05)), rng.uniform(-1, 1)),
                         rng.uniform(-0.9, 0.9)) for _ in range(samples)]
    if not _return_gap_ok(fs, c.mu_hat, c.delta_hat, tau, fresh, c.xi0 / 2.0, rng):
        failures.append('delta3')
    if not _side_kept_ok(fs, c.mu_hat, c.delta_hat, tau, fresh, rng):
        failures.append('delta_hat')
    if not _funnel_ok(fs, c.mu_hat, c.delta_hat, tau, _funnel_origins(c.eta2, exponent)[:4],
                      c.eta2, c.xi0 / 2.0, rng):
        failures.append('delta4')
    return failures
