"""Planar shadowing for the skew product L and the parameter-fixed probe."""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import AccuracyError, ParameterError, PseudoOrbitError
from .map_core import (
    SQRT2,
    STRICT_BETA_BOUND,
    LorenzMapSpec,
    MapConstants,
    PlanarPoint,
    alpha_mu_array,
    branch_image,
    cusp_vertex,
    eval_alpha_mu,
    eval_beta,
    eval_map_mu,
    invert_alpha_branch,
)
from .seeding import derive_seed
from .shadow_1d import (
    Interval,
    ShadowResult1D,
    PseudoOrbit1D,
    build_interval_chain,
    generate_pseudo_orbit_1d,
    solve_shadow_point_1d,
)

logger = logging.getLogger(__name__)

VERIFY_DEFECT_TOL = 1e-9
PROBE_RADIUS = 0.1
MAX_PULLBACK_PIECES = 4096
GREEDY_TOL = 1e-7


@dataclass
class PseudoOrbit2D:
    """A delta-pseudo-orbit of L_mu; points has shape (n + 1, 2)."""
    points: np.ndarray
    delta: float
    mu: float
    terminal_gamma: bool = False
    seed: Optional[int] = None
    mode: str = 'noise'

    def __len__(self) -> int:
        return len(self.points)

    def point(self, n: int) -> PlanarPoint:
        return PlanarPoint(float(self.points[n, 0]), float(self.points[n, 1]))

    def x_part(self) -> PseudoOrbit1D:
        return PseudoOrbit1D(
            points=np.array(self.points[:, 0], dtype=float),
            delta=self.delta,
            mu=self.mu,
            terminal_gamma=self.terminal_gamma,
            seed=self.seed,
            mode=self.mode,
        )


@dataclass
class ShadowResult2D:
    z: PlanarPoint
    orbit: np.ndarray
    max_error: float
    x_error: float
    y_error: float
    errors: np.ndarray
    gamma_step: Optional[int]
    segment_avoidance: bool
    result_1d: ShadowResult1D

    def summary(self) -> Dict[str, Any]:
        return {
            'z': list(self.z.as_tuple()),
            'max_error': self.max_error,
            'x_error': self.x_error,
            'y_error': self.y_error,
            'gamma_step': self.gamma_step,
            'segment_avoidance': self.segment_avoidance,
            'n_steps': len(self.orbit) - 1,
        }


@dataclass
class VerificationReport2D:
    epsilon: float
    sup_distance: float
    passed: bool
    n_checked: int
    max_defect: float = 0.0
    first_failure: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'epsilon': self.epsilon,
            'sup_distance': self.sup_distance,
            'pass': self.passed,
            'n_checked': self.n_checked,
            'max_defect': self.max_defect,
            'first_failure': self.first_failure,
        }


def validate_pseudo_orbit_2d(
    orbit: PseudoOrbit2D, spec: LorenzMapSpec, delta: Optional[float] = None
) -> None:
    """Raise PseudoOrbitError at the first step breaking the Euclidean delta bound."""
    bound = (orbit.delta if delta is None else delta) * (1.0 + 1e-9) + 1e-15
    points = orbit.points
    if np.any(np.abs(points) > 1.0):
        index = int(np.argmax(np.any(np.abs(points) > 1.0, axis=1)))
        raise PseudoOrbitError(index, "point outside Sigma")
    if orbit.terminal_gamma and (len(points) == 0 or points[-1, 0] != 0.0):
        raise PseudoOrbitError(len(points) - 1, "terminal orbit does not end on Gamma")
    vertices = (cusp_vertex(spec, 1), cusp_vertex(spec, -1))
    for n in range(len(points) - 1):
        p, successor = orbit.point(n), orbit.point(n + 1)
        if p.on_gamma:
            gap = min(successor.distance(v) for v in vertices)
            if gap > bound:
                raise PseudoOrbitError(n, f"successor of a Gamma point is {gap:.3g} from v_+ and v_-")
            continue
        gap = eval_map_mu(spec, orbit.mu, p).distance(successor)
        if gap > bound:
            raise PseudoOrbitError(n, f"|L(p_n) - p_(n+1)| = {gap:.6g} > {bound:.6g}")


def generate_pseudo_orbit_2d(
    spec: LorenzMapSpec,
    constants: MapConstants,
    n_steps: int,
    seed: int,
    mode: str = 'noise',
    delta: Optional[float] = None,
) -> PseudoOrbit2D:
    """
    Generate a delta-pseudo-orbit of L_hat = L_{mu_hat}.

    The x-part is a 1d pseudo-orbit with per-axis noise delta/sqrt2 and the
    fibre coordinate follows beta with its own noise stream, so every step
    stays inside the Euclidean delta-ball.
    """
    delta = constants.delta if delta is None else delta
    axis_delta = delta / SQRT2
    x_orbit = generate_pseudo_orbit_1d(spec, constants, n_steps, seed, mode, delta=axis_delta)
    xs = x_orbit.points
    rng = np.random.default_rng(derive_seed(seed, 'fibre'))

    ys = np.empty_like(xs)
    ys[0] = rng.uniform(-0.9, 0.9)
    for n in range(len(xs) - 1):
        noise = rng.uniform(-axis_delta, axis_delta)
        if xs[n] == 0.0:
            # the successor sits next to v_- = (1, e_-) or v_+ = (-1, e_+)
            offset = spec.beta.e_minus if xs[n + 1] > 0 else spec.beta.e_plus
            ys[n + 1] = offset + noise
        else:
            ys[n + 1] = eval_beta(spec, float(xs[n]), float(ys[n])) + noise
        ys[n + 1] = min(1.0, max(-1.0, ys[n + 1]))

    return PseudoOrbit2D(
        points=np.column_stack([xs, ys]),
        delta=delta,
        mu=constants.mu_hat,
        terminal_gamma=x_orbit.terminal_gamma,
        seed=seed,
        mode=mode,
    )


def _first_violation(values: np.ndarray, bound: float) -> Optional[int]:
    over = np.nonzero(values > bound)[0]
    return int(over[0]) if len(over) else None


def solve_shadow_point_2d(
    spec: LorenzMapSpec,
    orbit: PseudoOrbit2D,
    constants: MapConstants,
    variant: Optional[str] = None,
) -> ShadowResult2D:
    """
    Shadow a planar pseudo-orbit by the orbit of z = (z*, y_0).

    z* comes from the 1d solver on first coordinates; the fibre coordinate is
    iterated forward under beta, which contracts, and the horizontal and
    vertical budgets epsilon/8 and 7*epsilon/8 are checked separately.
    """
    if variant is None:
        variant = 'gamma-terminal' if orbit.terminal_gamma else 'infinite'
    x_orbit = orbit.x_part()
    chain = build_interval_chain(spec, x_orbit, constants)
    result_1d = solve_shadow_point_1d(chain, x_orbit, constants, variant)
    true_x = result_1d.orbit

    n_points = len(true_x)
    true_y = np.empty(n_points)
    true_y[0] = orbit.points[0, 1]
    for n in range(n_points - 1):
        true_y[n + 1] = eval_beta(spec, float(true_x[n]), float(true_y[n]))
    trajectory = np.column_stack([true_x, true_y])

    x_err = np.abs(true_x - orbit.points[:, 0])
    y_err = np.abs(true_y - orbit.points[:, 1])
    errors = np.hypot(x_err, y_err)
    epsilon = constants.epsilon
    for values, bound, what in (
        (x_err, epsilon / 8.0, 'x-error'),
        (y_err, 7.0 * epsilon / 8.0, 'y-error'),
        (errors, epsilon, 'error'),
    ):
        index = _first_violation(values, bound)
        if index is not None:
            raise AccuracyError(index, bound, float(values[index]), what=what)

    # both x-coordinates share a sign wherever the pseudo-orbit is off Gamma
    pseudo_x = orbit.points[:-1, 0] if variant == 'gamma-terminal' else orbit.points[:, 0]
    shadow_x = true_x[: len(pseudo_x)]
    off_gamma = pseudo_x != 0.0
    segment_avoidance = bool(np.all(np.sign(pseudo_x[off_gamma]) == np.sign(shadow_x[off_gamma])))

    result = ShadowResult2D(
        z=PlanarPoint(float(true_x[0]), float(true_y[0])),
        orbit=trajectory,
        max_error=float(errors.max()),
        x_error=float(x_err.max()),
        y_error=float(y_err.max()),
        errors=errors,
        gamma_step=n_points - 1 if variant == 'gamma-terminal' else None,
        segment_avoidance=segment_avoidance,
        result_1d=result_1d,
    )
    logger.debug(
        f"2d shadow: x={result.x_error:.3g}, y={result.y_error:.3g}, total={result.max_error:.3g}"
    )
    return result


def verify_contraction_steps(
    spec: LorenzMapSpec, orbit: PseudoOrbit2D, result: ShadowResult2D
) -> List[int]:
    """Indices where |beta(L^n z) - beta(p_n)| exceeds (3/(4 sqrt2)) * sqrt2 * |L^n z - p_n|."""
    failures: List[int] = []
    factor = STRICT_BETA_BOUND * SQRT2
    for n in range(len(result.orbit) - 1):
        px, py = orbit.points[n]
        qx, qy = result.orbit[n]
        if px == 0.0 or qx == 0.0 or (px > 0) != (qx > 0):
            continue
        gap = abs(eval_beta(spec, float(qx), float(qy)) - eval_beta(spec, float(px), float(py)))
        if gap > factor * math.hypot(qx - px, qy - py) + 1e-15:
            failures.append(n)
    return failures


def verify_shadow_2d(
    spec: LorenzMapSpec,
    orbit: PseudoOrbit2D,
    result: ShadowResult2D,
    epsilon: float,
    defect_tol: float = VERIFY_DEFECT_TOL,
) -> VerificationReport2D:
    """
    Recompute L^n(z) and report the sup distance to the pseudo-orbit.

    Each step applies L to the current point; when the image agrees with the
    solver's orbit to within defect_tol the walk continues from the solver's
    point, otherwise from the raw image, so a wrong z drifts away.
    """
    points = orbit.points
    n_points = min(len(points), len(result.orbit))
    if n_points == 0:
        return VerificationReport2D(epsilon, 0.0, True, 0)

    current = result.z
    sup = 0.0
    max_defect = 0.0
    first_failure: Optional[int] = None
    checked = 0
    for n in range(n_points):
        distance = math.hypot(current.x - points[n, 0], current.y - points[n, 1])
        sup = max(sup, distance)
        checked += 1
        if distance > epsilon and first_failure is None:
            first_failure = n
        if n + 1 == n_points:
            break
        if current.on_gamma:
            first_failure = n if first_failure is None else first_failure
            sup = math.inf
            break
        image = eval_map_mu(spec, 0.0, current)
        anchor = PlanarPoint(float(result.orbit[n + 1, 0]), float(result.orbit[n + 1, 1]))
        defect = image.distance(anchor)
        if defect <= defect_tol:
            max_defect = max(max_defect, defect)
            current = anchor
        else:
            current = image

    return VerificationReport2D(
        epsilon=epsilon,
        sup_distance=sup,
        passed=sup <= epsilon,
        n_checked=checked,
        max_defect=max_defect,
        first_failure=first_failure,
    )


@dataclass
class Run2D:
    orbit: PseudoOrbit2D
    result: ShadowResult2D
    report: VerificationReport2D
    contraction_failures: List[int] = field(default_factory=list)


def run_map_pipeline(
    spec: LorenzMapSpec,
    constants: MapConstants,
    n_steps: int,
    seed: int,
    mode: str = 'noise',
) -> Run2D:
    """Generate, validate, solve and independently verify one planar run."""
    orbit = generate_pseudo_orbit_2d(spec, constants, n_steps, seed, mode)
    validate_pseudo_orbit_2d(orbit, spec)
    result = solve_shadow_point_2d(spec, orbit, constants)
    report = verify_shadow_2d(spec, orbit, result, constants.epsilon)
    return Run2D(orbit, result, report, verify_contraction_steps(spec, orbit, result))


@dataclass
class ProbeReport:
    """Outcome of the parameter-fixed adversarial search (empirical)."""
    bound: float
    delta: float
    seed: int
    epsilon_star: float
    found: bool
    restarts: int
    orbit: PseudoOrbit2D
    best_z: float
    grid_bound: Optional[float] = None
    notice: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'bound': self.bound,
            'delta': self.delta,
            'seed': self.seed,
            'epsilon_star': self.epsilon_star,
            'found': self.found,
            'restarts': self.restarts,
            'best_z': self.best_z,
            'grid_bound': self.grid_bound,
            'n_steps': len(self.orbit) - 1,
            'notice': self.notice,
        }


def _window(x: float, radius: float) -> Interval:
    return Interval(max(-1.0, x - radius), min(1.0, x + radius))


def _alpha_preimages(spec: LorenzMapSpec, piece: Interval) -> List[Interval]:
    """alpha^{-1}(piece) on each branch, as closed intervals."""
    top = branch_image(spec, 1)[1]
    pieces: List[Interval] = []
    for branch in (1, -1):
        lo, hi = (piece.lo, piece.hi) if branch > 0 else (-piece.hi, -piece.lo)
        lo, hi = max(lo, -1.0), min(hi, top)
        if lo > hi:
            continue
        found = Interval(invert_alpha_branch(spec, lo, 1), invert_alpha_branch(spec, hi, 1))
        pieces.append(found if branch > 0 else found.mirrored())
    return pieces


def _merge(pieces: List[Interval]) -> List[Interval]:
    merged: List[Interval] = []
    for piece in sorted(pieces, key=lambda p: p.lo):
        if merged and piece.lo <= merged[-1].hi:
            merged[-1] = Interval(merged[-1].lo, max(merged[-1].hi, piece.hi))
        else:
            merged.append(piece)
    return merged


def shadowing_set(
    spec: LorenzMapSpec, xs: np.ndarray, radius: float
) -> Optional[List[Interval]]:
    """
    Every z with |alpha^n(z) - x_n| <= radius for all n, as disjoint intervals.

    The radius-window around the last point is pulled back through both
    branches of alpha and cut down to the window around each earlier point.
    Returns None once the set splits into more than MAX_PULLBACK_PIECES parts.
    """
    pieces = [_window(float(xs[-1]), radius)]
    for n in range(len(xs) - 2, -1, -1):
        window = _window(float(xs[n]), radius)
        pulled = []
        for piece in pieces:
            for pre in _alpha_preimages(spec, piece):
                lo, hi = max(pre.lo, window.lo), min(pre.hi, window.hi)
                if lo <= hi:
                    pulled.append(Interval(lo, hi))
        pieces = _merge(pulled)
        if not pieces:
            return []
        if len(pieces) > MAX_PULLBACK_PIECES:
            return None
    return pieces


def estimate_shadow_distance(
    spec: LorenzMapSpec,
    xs: np.ndarray,
    tol: float = 1e-10,
    lower: float = 0.0,
    radius: float = PROBE_RADIUS,
    step: float = 1e-5,
) -> Tuple[float, float]:
    """
    min_z sup_n |alpha^n(z) - x_n|, by bisection on the radius of shadowing_set.

    Returns (estimate, z) with z the center of the surviving piece nearest x_0.
    `lower` is a known lower bound for the distance. Falls back to
    grid_shadow_distance when the pullback set fragments.
    """
    x0 = float(xs[0])
    lo, hi = max(0.0, lower), 2.0
    best = shadowing_set(spec, xs, hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        pieces = shadowing_set(spec, xs, mid)
        if pieces is None:
            logger.warning(f"pullback set fragmented at radius {mid:.3g}; using the candidate grid")
            return grid_shadow_distance(spec, xs, radius, step)
        if pieces:
            hi, best = mid, pieces
        else:
            lo = mid
    assert best
    nearest = min(best, key=lambda p: abs(p.center - x0))
    return hi, nearest.center


def _candidate_grid(x0: float, radius: float, step: float) -> np.ndarray:
    half = int(round(radius / step))
    grid = x0 + step * np.arange(-half, half + 1, dtype=float)
    grid[half] = x0
    grid = grid[(np.abs(grid) <= 1.0) & (grid != 0.0)]
    return grid


def grid_shadow_distance(
    spec: LorenzMapSpec, xs: np.ndarray, radius: float = PROBE_RADIUS, step: float = 1e-5
) -> Tuple[float, float]:
    """
    min over a candidate grid around x_0 of sup_n |alpha^n(z) - x_n|.

    An upper bound for estimate_shadow_distance, loose on long orbits since
    grid spacing grows by sqrt(2) per step. Candidates that land on 0 are discarded.
    """
    candidates = _candidate_grid(float(xs[0]), radius, step)
    sup = np.abs(candidates - xs[0])
    current = candidates
    alive = np.ones(len(candidates), dtype=bool)
    for n in range(1, len(xs)):
        alive &= current != 0.0
        safe = np.where(alive, current, 1.0)
        current = np.where(alive, alpha_mu_array(spec, 0.0, safe), 0.0)
        sup = np.maximum(sup, np.abs(current - xs[n]))
    sup = np.where(alive, sup, np.inf)
    best = int(np.argmin(sup))
    return float(sup[best]), float(candidates[best])


def komuro_probe(
    spec: LorenzMapSpec,
    epsilon_star: float,
    delta: float,
    n_steps: int,
    seed: int,
    search_budget: int = 16,
    radius: float = PROBE_RADIUS,
    step: float = 1e-5,
) -> ProbeReport:
    """
    Search for a delta-pseudo-orbit of the unshifted map L that no true orbit
    shadows within epsilon_star.

    Each restart draws x_0 and then greedily picks x_{n+1} among
    alpha(x_n) - delta, alpha(x_n), alpha(x_n) + delta to maximise the
    estimated shadow distance, pushing the orbit into the gap (alpha(1), 1)
    that alpha never reaches. The bound comes from bisecting pullback sets
    and is an estimate only; grid_bound repeats it on a candidate grid of
    the given radius and step.
    """
    if n_steps < 1:
        raise ParameterError(f"n_steps must be at least 1, got {n_steps}")
    if search_budget < 1:
        raise ParameterError(f"search_budget must be at least 1, got {search_budget}")

    best_bound = -1.0
    best_xs: Optional[np.ndarray] = None
    best_z = 0.0
    used = 0
    for restart in range(search_budget):
        used += 1
        rng = np.random.default_rng(derive_seed(seed, 'restart', restart))
        xs = [rng.uniform(-0.9, 0.9)]
        current = 0.0
        for _ in range(n_steps):
            x = xs[-1]
            image = eval_alpha_mu(spec, 0.0, x) if x != 0.0 else 1.0
            options = [image] if delta == 0.0 else [image - delta, image, image + delta]
            options = [min(1.0, max(-1.0, v)) for v in options if v != 0.0]
            scored = []
            for option in options:
                estimate, _ = estimate_shadow_distance(
                    spec, np.array(xs + [option]), tol=GREEDY_TOL,
                    lower=max(0.0, current - GREEDY_TOL), radius=radius, step=step,
                )
                scored.append((estimate, option))
            current, chosen = max(scored)
            xs.append(chosen)
        bound, z = estimate_shadow_distance(spec, np.array(xs), radius=radius, step=step)
        logger.debug(f"probe restart {restart}: bound {bound:.3g}")
        if bound > best_bound:
            best_bound, best_xs, best_z = bound, np.array(xs), z
        if best_bound > epsilon_star:
            break

    assert best_xs is not None
    grid_bound, _ = grid_shadow_distance(spec, best_xs, radius, step)
    ys = np.empty_like(best_xs)
    ys[0] = 0.0
    for n in range(len(best_xs) - 1):
        if best_xs[n] != 0.0:
            ys[n + 1] = eval_beta(spec, float(best_xs[n]), float(ys[n]))
        else:
            ys[n + 1] = spec.beta.e_minus if best_xs[n + 1] > 0 else spec.beta.e_plus
    orbit = PseudoOrbit2D(np.column_stack([best_xs, ys]), delta, 0.0, seed=seed, mode='probe')

    found = best_bound > epsilon_star
    notice = None
    if not found:
        notice = (
            f"search budget of {search_budget} restarts exhausted; "
            f"best bound {best_bound:.6g} <= epsilon_star {epsilon_star:.6g}"
        )
        logger.info(notice)
    return ProbeReport(
        bound=max(best_bound, 0.0),
        delta=delta,
        seed=seed,
        epsilon_star=epsilon_star,
        found=found,
        restarts=used,
        orbit=orbit,
        best_z=best_z,
        grid_bound=grid_bound,
        notice=notice,
    )
