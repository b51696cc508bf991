"""One-dimensional parameter-shifted shadowing.

A delta-pseudo-orbit {x_n} of the shifted map alpha_hat = alpha_{mu_hat} is
covered by a chain of intervals l_n with alpha(l_n) containing l_{n+1}.
Pulling the chain back along the recorded branches localises a point z
whose alpha-orbit stays within 8*epsilon1 of the pseudo-orbit.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .errors import (
    AccuracyError,
    ContainmentError,
    EmptyIntersectionError,
    ParameterError,
    PseudoOrbitError,
)
from .map_core import (
    SQRT2,
    TRAP_LOW,
    LorenzMapSpec,
    MapConstants,
    branch_image,
    eval_alpha_mu,
    invert_alpha_branch,
)

logger = logging.getLogger(__name__)

CONTAINMENT_SLACK = 1e-10
DEFECT_TOL = 1e-9
SEED_FACTOR = SQRT2 - 0.01
MODES = ('noise', 'gamma-crossing', 'gamma-terminal')
VARIANTS = ('infinite', 'gamma-terminal')

CENTERED = 'centered'
STRADDLE_SEED = 'straddle-seed'
EXPANSION = 'expansion'


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def centered(cls, center: float, radius: float) -> "Interval":
        return cls(center - radius, center + radius)

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= x <= self.hi + slack

    def contains_interval(self, other: "Interval", slack: float = 0.0) -> bool:
        return self.lo - slack <= other.lo and other.hi <= self.hi + slack

    def strictly_inside(self, other: "Interval") -> bool:
        """True if self lies in the interior of other."""
        return other.lo < self.lo and self.hi < other.hi

    def mirrored(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def to_dict(self) -> Dict[str, float]:
        return {'lo': self.lo, 'hi': self.hi}


@dataclass
class PseudoOrbit1D:
    """A delta-pseudo-orbit of alpha_mu."""
    points: np.ndarray
    delta: float
    mu: float
    terminal_gamma: bool = False
    seed: Optional[int] = None
    mode: str = 'noise'

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ChainStep:
    """Interval l_n and the part of it mapped onto l_{n+1}."""
    interval: Interval
    kind: str
    domain: Interval
    branch: int


@dataclass(frozen=True)
class StraddleRecord:
    """Bookkeeping for a step whose interval contains the singular point."""
    step: int
    side: int
    seed: Interval
    image_length: float
    shift_low: float
    shift_high: float
    gap: float


@dataclass
class IntervalChain:
    spec: LorenzMapSpec
    epsilon1: float
    steps: List[ChainStep]
    straddles: List[StraddleRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def interval(self, n: int) -> Interval:
        return self.steps[n].interval


@dataclass
class ShadowResult1D:
    z: float
    orbit: np.ndarray
    max_error: float
    gamma_exact: bool
    errors: np.ndarray
    max_defect: float
    pullback_width: float

    def summary(self) -> Dict[str, Any]:
        return {
            'z': self.z,
            'max_error': self.max_error,
            'gamma_exact': self.gamma_exact,
            'max_defect': self.max_defect,
            'pullback_width': self.pullback_width,
            'n_steps': len(self.orbit) - 1,
        }


@dataclass
class InvariantReport:
    checked_steps: int
    violations: List[str]

    @property
    def passed(self) -> bool:
        return not self.violations


def _sign(x: float) -> int:
    return 1 if x > 0 else -1


def _alpha(spec: LorenzMapSpec, x: float) -> float:
    return eval_alpha_mu(spec, 0.0, x)


def _image(spec: LorenzMapSpec, domain: Interval, branch: int) -> Interval:
    """alpha(domain) for a domain on one closed branch; 0 maps to the branch limit."""
    def value(x: float) -> float:
        if x == 0.0:
            return -1.0 if branch > 0 else 1.0
        return _alpha(spec, x)

    return Interval(value(domain.lo), value(domain.hi))


def validate_pseudo_orbit_1d(
    orbit: PseudoOrbit1D, spec: LorenzMapSpec, delta: Optional[float] = None
) -> None:
    """Raise PseudoOrbitError at the first step breaking the delta bound."""
    bound = (orbit.delta if delta is None else delta) * (1.0 + 1e-9) + 1e-15
    points = orbit.points
    for n in range(len(points)):
        if abs(points[n]) > 1.0:
            raise PseudoOrbitError(n, f"x_n={points[n]!r} outside [-1, 1]")
    if orbit.terminal_gamma and (len(points) == 0 or points[-1] != 0.0):
        raise PseudoOrbitError(len(points) - 1, "terminal orbit does not end at 0")
    for n in range(len(points) - 1):
        x, successor = float(points[n]), float(points[n + 1])
        if x == 0.0:
            gap = min(abs(successor - 1.0), abs(successor + 1.0))
            if gap > bound:
                raise PseudoOrbitError(n, f"successor of 0 is {gap:.3g} from the cusp vertices")
            continue
        gap = abs(eval_alpha_mu(spec, orbit.mu, x) - successor)
        if gap > bound:
            raise PseudoOrbitError(n, f"|alpha(x_n) - x_(n+1)| = {gap:.6g} > {bound:.6g}")


def _preimage(
    spec: LorenzMapSpec, mu: float, target: float, rng: np.random.Generator
) -> float:
    """A random-branch preimage of target under alpha_mu."""
    top = branch_image(spec, 1, mu)[1]
    if target > top:
        branch = -1
    elif target < -top:
        branch = 1
    else:
        branch = 1 if rng.random() < 0.5 else -1
    return invert_alpha_branch(spec, target, branch, mu)


def _steer_backward(
    spec: LorenzMapSpec,
    mu: float,
    delta: float,
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
) -> None:
    for j in range(k - 1, -1, -1):
        noise = rng.uniform(-delta, delta)
        target = float(np.clip(points[j + 1] - noise, -1.0, 1.0))
        points[j] = _preimage(spec, mu, target, rng)


def _step_forward(
    spec: LorenzMapSpec, mu: float, delta: float, x: float, rng: np.random.Generator
) -> float:
    if x == 0.0:
        side = 1.0 if rng.random() < 0.5 else -1.0
        return side * (1.0 - rng.uniform(0.0, delta))
    return float(np.clip(eval_alpha_mu(spec, mu, x) + rng.uniform(-delta, delta), -1.0, 1.0))


def generate_pseudo_orbit_1d(
    spec: LorenzMapSpec,
    constants: MapConstants,
    n_steps: int,
    seed: int,
    mode: str = 'noise',
    delta: Optional[float] = None,
) -> PseudoOrbit1D:
    """
    Generate a delta-pseudo-orbit x_0..x_{n_steps} of alpha_hat.

    noise perturbs every image uniformly in [-delta, delta]; gamma-crossing
    steers some x_k to within epsilon1/2 of 0; gamma-terminal ends at 0.
    """
    if n_steps < 1:
        raise ParameterError(f"n_steps must be at least 1, got {n_steps}")
    if mode not in MODES:
        raise ParameterError(f"unknown mode {mode!r}; expected one of {MODES}")
    delta = constants.delta if delta is None else delta
    mu = constants.mu_hat
    rng = np.random.default_rng(seed)
    points = np.zeros(n_steps + 1)

    if mode == 'gamma-terminal':
        points[n_steps] = 0.0
        _steer_backward(spec, mu, delta, points, n_steps, rng)
        return PseudoOrbit1D(points, delta, mu, terminal_gamma=True, seed=seed, mode=mode)

    start = 0
    if mode == 'gamma-crossing':
        start = int(rng.integers(1, n_steps)) if n_steps > 1 else 1
        half = 0.5 * constants.epsilon1
        tiny = 0.0
        while tiny == 0.0:
            tiny = rng.uniform(-half, half)
        points[start] = tiny
        _steer_backward(spec, mu, delta, points, start, rng)
    else:
        points[0] = rng.uniform(-0.9, 0.9)

    for n in range(start, n_steps):
        points[n + 1] = _step_forward(spec, mu, delta, float(points[n]), rng)
    return PseudoOrbit1D(points, delta, mu, seed=seed, mode=mode)


def _straddle_record(
    spec: LorenzMapSpec,
    mu_hat: float,
    step: int,
    side: int,
    x_n: float,
    far_end: float,
    seed_interval: Interval,
) -> StraddleRecord:
    exact = [seed_interval.lo, seed_interval.hi]
    shifted = list(exact)
    for _ in range(3):
        exact = [_alpha(spec, v) for v in exact]
        shifted = [eval_alpha_mu(spec, mu_hat, v) for v in shifted]
    exact_image = Interval(*exact)
    shifted_image = Interval(*shifted)
    if side < 0:
        exact_image, shifted_image = exact_image.mirrored(), shifted_image.mirrored()

    if x_n == 0.0 or _sign(x_n) == side:
        hat_image = float(side)
    else:
        hat_image = eval_alpha_mu(spec, mu_hat, x_n)
    return StraddleRecord(
        step=step,
        side=side,
        seed=seed_interval,
        image_length=exact_image.length,
        shift_low=exact_image.lo - shifted_image.lo,
        shift_high=exact_image.hi - shifted_image.hi,
        gap=side * (hat_image - far_end),
    )


def build_interval_chain(
    spec: LorenzMapSpec, orbit: PseudoOrbit1D, constants: MapConstants
) -> IntervalChain:
    """
    Cover the pseudo-orbit with intervals l_n such that alpha(l_n) contains l_{n+1}.

    Steps away from 0 use intervals of length 2*epsilon1 centred at x_n. A step
    whose interval contains 0 keeps the half mapping next to the vertex on the
    side of x_{n+1}, seeds a one-sided interval of length (sqrt2 - 1/100)*epsilon1
    at x_{n+1}, takes two full images and then resumes centring.
    """
    eps1 = constants.epsilon1
    points = orbit.points
    n_last = len(points) - 1
    seed_len = SEED_FACTOR * eps1

    intervals: List[Interval] = [Interval.centered(float(points[0]), eps1)]
    kinds: List[str] = [CENTERED]
    steps: List[ChainStep] = []
    straddles: List[StraddleRecord] = []

    n = 0
    while n < n_last:
        current = intervals[n]
        successor = float(points[n + 1])
        if current.lo <= 0.0 <= current.hi:
            side = _sign(successor)
            # the half mapping next to v_+ is the negative one and vice versa
            if side > 0:
                domain, branch = Interval(current.lo, 0.0), -1
                seed_interval = Interval(successor - seed_len, successor)
                far_end = _alpha(spec, current.lo) if current.lo < 0 else 1.0
            else:
                domain, branch = Interval(0.0, current.hi), 1
                seed_interval = Interval(successor, successor + seed_len)
                far_end = _alpha(spec, current.hi) if current.hi > 0 else -1.0
            straddles.append(
                _straddle_record(
                    spec, constants.mu_hat, n, side,
                    float(points[n]), far_end, seed_interval,
                )
            )
            logger.debug(f"straddle at step {n}, side {side:+d}")
            next_interval, next_kind = seed_interval, STRADDLE_SEED
        else:
            domain, branch = current, _sign(current.center)
            if kinds[n] == STRADDLE_SEED or (
                kinds[n] == EXPANSION and kinds[n - 1] == STRADDLE_SEED
            ):
                next_interval, next_kind = _image(spec, current, branch), EXPANSION
            else:
                next_interval, next_kind = Interval.centered(successor, eps1), CENTERED

        image = _image(spec, domain, branch)
        if not image.contains_interval(next_interval, CONTAINMENT_SLACK):
            raise ContainmentError(
                n,
                f"alpha(l_n)=[{image.lo:.17g}, {image.hi:.17g}] does not contain "
                f"l_(n+1)=[{next_interval.lo:.17g}, {next_interval.hi:.17g}]",
            )
        if next_kind == EXPANSION and next_interval.lo <= 0.0 <= next_interval.hi:
            raise ContainmentError(n + 1, "expanded interval reaches the singular point")

        steps.append(ChainStep(current, kinds[n], domain, branch))
        intervals.append(next_interval)
        kinds.append(next_kind)
        n += 1

    last = intervals[n_last]
    steps.append(ChainStep(last, kinds[n_last], last, _sign(last.center)))
    chain = IntervalChain(spec=spec, epsilon1=eps1, steps=steps, straddles=straddles)
    logger.debug(f"built chain of {len(steps)} intervals with {len(straddles)} straddles")
    return chain


def _pull_back(chain: IntervalChain, interval: Interval, k: int) -> Interval:
    """alpha^{-1}(interval) on the branch of step k, intersected with its domain."""
    step = chain.steps[k]
    lo = invert_alpha_branch(chain.spec, interval.lo, step.branch)
    hi = invert_alpha_branch(chain.spec, interval.hi, step.branch)
    lo, hi = max(lo, step.domain.lo), min(hi, step.domain.hi)
    if lo > hi:
        if lo - hi > CONTAINMENT_SLACK:
            raise EmptyIntersectionError(k + 1, k)
        lo = hi = 0.5 * (lo + hi)
    return Interval(lo, hi)


def pullback_stack(chain: IntervalChain, m: int, n: int = 0) -> List[Interval]:
    """[l_m^(n), l_m^(n+1), ..., l_m^(m)] with l_m^(m) = l_m."""
    if not 0 <= n <= m < len(chain):
        raise ParameterError(f"need 0 <= n <= m < {len(chain)}, got n={n}, m={m}")
    stack = [chain.interval(m)]
    for k in range(m - 1, n - 1, -1):
        try:
            stack.append(_pull_back(chain, stack[-1], k))
        except EmptyIntersectionError:
            raise EmptyIntersectionError(m, k) from None
    stack.reverse()
    return stack


def pullback_interval(chain: IntervalChain, m: int, n: int) -> Interval:
    """l_m^(n): the part of l_n that alpha^(m-n) maps onto l_m."""
    if m <= n:
        raise ParameterError(f"pullback needs m > n, got m={m}, n={n}")
    return pullback_stack(chain, m, n)[0]


def strict_nesting_depth(chain: IntervalChain, n: int = 0, max_depth: int = 64) -> Optional[int]:
    """Smallest m > n with l_m^(n) inside the interior of l_n, if one exists within max_depth."""
    target = chain.interval(n)
    for m in range(n + 1, min(len(chain), n + max_depth + 1)):
        current = pullback_interval(chain, m, n)
        if current.strictly_inside(target):
            return m
    return None


def verify_rhs_shift(l: Interval, l_shifted: Interval, gamma: float, eta: float) -> bool:
    """True iff both endpoints of l_shifted sit right of l's by an amount in [gamma, eta]."""
    low_shift = l_shifted.lo - l.lo
    high_shift = l_shifted.hi - l.hi
    return gamma <= low_shift <= eta and gamma <= high_shift <= eta


def chain_invariants(
    chain: IntervalChain, orbit: PseudoOrbit1D, tol: float = CONTAINMENT_SLACK
) -> InvariantReport:
    """Check the length, proximity, centring and containment properties of every step."""
    eps1 = chain.epsilon1
    points = orbit.points
    violations: List[str] = []
    for n, step in enumerate(chain.steps):
        l = step.interval
        x = float(points[n])
        if not eps1 - tol <= l.length <= 6.0 * eps1 + tol:
            violations.append(f"step {n}: length {l.length:.6g} outside [eps1, 6 eps1]")
        if max(abs(l.lo - x), abs(l.hi - x)) > 8.0 * eps1 + tol:
            violations.append(f"step {n}: endpoint farther than 8 eps1 from x_n")
        trapped = l.lo >= TRAP_LOW or l.hi <= -TRAP_LOW
        if not trapped and (
            abs(l.length - 2.0 * eps1) > 1e-12 or abs(l.center - x) > 1e-12
        ):
            violations.append(f"step {n}: untrapped interval is not centred at x_n")
        if n + 1 < len(chain):
            image = _image(chain.spec, step.domain, step.branch)
            if not image.contains_interval(chain.interval(n + 1), tol):
                violations.append(f"step {n}: alpha(l_n) does not contain l_(n+1)")
            if step.domain.lo < 0.0 < step.domain.hi:
                violations.append(f"step {n}: mapped domain contains 0 in its interior")
    for record in chain.straddles:
        if record.image_length <= 3.9 * eps1:
            violations.append(f"straddle {record.step}: |alpha^3(l)| = {record.image_length:.6g}")
        if record.gap < SQRT2 * eps1 - tol:
            violations.append(f"straddle {record.step}: gap {record.gap:.6g} < sqrt2 eps1")
    return InvariantReport(checked_steps=len(chain), violations=violations)


def solve_shadow_point_1d(
    chain: IntervalChain,
    orbit: PseudoOrbit1D,
    constants: MapConstants,
    variant: str = 'infinite',
) -> ShadowResult1D:
    """
    Materialise the true alpha-orbit that shadows the pseudo-orbit.

    The orbit is built backward from the last interval along the recorded
    branches (the midpoint of l_N for the infinite variant, 0 for the
    gamma-terminal one), so orbit[n] lies in the pullback l_N^(n); every
    forward step is then re-checked against alpha.
    """
    if variant not in VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant == 'gamma-terminal' and not orbit.terminal_gamma:
        raise ParameterError("gamma-terminal variant needs a pseudo-orbit ending at 0")
    if variant == 'infinite' and orbit.terminal_gamma:
        raise ParameterError("infinite variant needs a pseudo-orbit that does not end at 0")
    spec = chain.spec
    n_last = len(chain) - 1
    trajectory = np.empty(n_last + 1)
    trajectory[n_last] = 0.0 if variant == 'gamma-terminal' else chain.interval(n_last).center
    if variant == 'infinite' and trajectory[n_last] == 0.0:
        raise AccuracyError(n_last, 0.0, 0.0, message=f"orbit reaches 0 at its last step {n_last}")
    for k in range(n_last - 1, -1, -1):
        step = chain.steps[k]
        value = invert_alpha_branch(spec, float(trajectory[k + 1]), step.branch)
        trajectory[k] = min(max(value, step.domain.lo), step.domain.hi)

    pulled = pullback_stack(chain, n_last, 0)[0] if n_last > 0 else chain.interval(0)

    max_defect = 0.0
    for k in range(n_last):
        if trajectory[k] == 0.0:
            raise AccuracyError(k, 0.0, 0.0, message=f"orbit reaches 0 early, at step {k}")
        defect = abs(_alpha(spec, float(trajectory[k])) - trajectory[k + 1])
        if defect > DEFECT_TOL:
            raise AccuracyError(k, DEFECT_TOL, defect, what="forward defect")
        max_defect = max(max_defect, defect)

    errors = np.abs(trajectory - orbit.points)
    bound = 8.0 * constants.epsilon1
    worst = int(np.argmax(errors))
    if errors[worst] > bound:
        raise AccuracyError(worst, bound, float(errors[worst]))

    result = ShadowResult1D(
        z=float(trajectory[0]),
        orbit=trajectory,
        max_error=float(errors[worst]),
        gamma_exact=variant == 'gamma-terminal',
        errors=errors,
        max_defect=max_defect,
        pullback_width=pulled.length,
    )
    logger.debug(f"1d shadow: max_error={result.max_error:.3g}, bound={bound:.3g}")
    return result


@dataclass
class Run1D:
    orbit: PseudoOrbit1D
    chain: IntervalChain
    result: ShadowResult1D
    invariants: InvariantReport


def run_1d_pipeline(
    spec: LorenzMapSpec,
    constants: MapConstants,
    n_steps: int,
    seed: int,
    mode: str = 'noise',
) -> Run1D:
    """Generate, validate, chain, solve and check one seeded 1d run."""
    orbit = generate_pseudo_orbit_1d(spec, constants, n_steps, seed, mode)
    validate_pseudo_orbit_1d(orbit, spec)
    chain = build_interval_chain(spec, orbit, constants)
    variant = 'gamma-terminal' if orbit.terminal_gamma else 'infinite'
    result = solve_shadow_point_1d(chain, orbit, constants, variant)
    invariants = chain_invariants(chain, orbit)
    if not invariants.passed:
        logger.warning(f"seed {seed}: {len(invariants.violations)} chain invariant violations")
    return Run1D(orbit, chain, result, invariants)


def shadow_bound_ok(result: ShadowResult1D, constants: MapConstants) -> bool:
    return result.max_error <= 8.0 * constants.epsilon1 <= constants.epsilon / 8.0 + 1e-15
