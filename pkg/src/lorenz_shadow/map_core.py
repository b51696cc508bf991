"""Geometric Lorenz map family L_mu on the section Sigma.

The map is the skew product L_mu(x, y) = (alpha(x) - mu*x, beta(x, y)) with

    alpha(x) = sign(x) * (c*|x|**rho - 1)
    beta(x, y) = e_plus + d*|x|*y   (x > 0)
                 e_minus + d*|x|*y  (x < 0)

on Sigma = [-1, 1]^2 minus the singular line Gamma = {x = 0}.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import ConditionError, DomainError, NoPreimageError, ParameterError

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
STRICT_BETA_BOUND = 3.0 / (4.0 * SQRT2)
WEAK_BETA_BOUND = 1.0 / SQRT2
TRAP_LOW = 0.8
ETA_FLOOR = 1e-6
OVERSHOOT_TOL = 1e-12


@dataclass(frozen=True)
class AlphaSpec:
    """Expanding one-dimensional factor alpha."""
    c: float = 1.95
    rho: float = 0.75

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise ParameterError(f"rho must lie in (0, 1), got {self.rho}")
        if self.c <= 0.0:
            raise ParameterError(f"c must be positive, got {self.c}")

    def to_dict(self) -> Dict[str, float]:
        return {'c': self.c, 'rho': self.rho}


@dataclass(frozen=True)
class BetaSpec:
    """Contracting fibre factor beta."""
    d: float = 0.3
    e_plus: float = 0.65
    e_minus: float = -0.65

    def __post_init__(self) -> None:
        if self.d < 0.0:
            raise ParameterError(f"d must be non-negative, got {self.d}")

    def to_dict(self) -> Dict[str, float]:
        return {'d': self.d, 'e_plus': self.e_plus, 'e_minus': self.e_minus}


@dataclass(frozen=True)
class LorenzMapSpec:
    """The family L_mu for mu in [0, mu0]."""
    alpha: AlphaSpec = field(default_factory=AlphaSpec)
    beta: BetaSpec = field(default_factory=BetaSpec)
    mu0: float = 0.02

    def __post_init__(self) -> None:
        if self.mu0 < 0.0:
            raise ParameterError(f"mu0 must be non-negative, got {self.mu0}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'alpha': self.alpha.to_dict(),
            'beta': self.beta.to_dict(),
            'mu0': self.mu0,
        }


@dataclass(frozen=True)
class PlanarPoint:
    """A point of Sigma."""
    x: float
    y: float

    @property
    def on_gamma(self) -> bool:
        return self.x == 0.0

    def distance(self, other: "PlanarPoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_tuple(self) -> Tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class MapConstants:
    """Accuracy constants for the map-level shadowing construction."""
    epsilon: float
    eta0: float
    epsilon1: float
    delta: float
    mu_hat: float

    @classmethod
    def from_eta0(cls, mu0: float, eta0: float, epsilon: float) -> "MapConstants":
        epsilon1 = min(3.0 * mu0, eta0 / 8.0, epsilon / 64.0)
        if epsilon1 <= 0.0:
            raise ParameterError(
                f"epsilon1 must be positive (mu0={mu0}, eta0={eta0}, epsilon={epsilon})"
            )
        return cls(
            epsilon=epsilon,
            eta0=eta0,
            epsilon1=epsilon1,
            delta=epsilon1 / 100.0,
            mu_hat=epsilon1 / 3.0,
        )

    def to_dict(self) -> Dict[str, float]:
        return {
            'epsilon': self.epsilon,
            'eta0': self.eta0,
            'epsilon1': self.epsilon1,
            'delta': self.delta,
            'mu_hat': self.mu_hat,
        }


@dataclass(frozen=True)
class ConditionRow:
    """Margin of one condition at one shift."""
    condition: str
    mu: float
    margin: float
    detail: str

    @property
    def passed(self) -> bool:
        return self.margin > 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'condition': self.condition,
            'mu': self.mu,
            'margin': self.margin,
            'pass': self.passed,
            'detail': self.detail,
        }


@dataclass
class ConditionReport:
    """Per-condition margins for mu in {0, mu0/2, mu0}."""
    rows: List[ConditionRow]
    grid_n: int
    beta_bound: str = 'strict'

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def failures(self) -> List[ConditionRow]:
        return [row for row in self.rows if not row.passed]

    def margin(self, condition: str, mu: float) -> float:
        for row in self.rows:
            if row.condition == condition and row.mu == mu:
                return row.margin
        raise KeyError(f"no row for condition {condition!r} at mu={mu}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'pass': self.passed,
            'grid_n': self.grid_n,
            'beta_bound': self.beta_bound,
            'conditions': [row.to_dict() for row in self.rows],
        }


def check_shift(spec: LorenzMapSpec, mu: float) -> None:
    if not 0.0 <= mu <= spec.mu0:
        raise ParameterError(f"shift mu={mu} outside [0, {spec.mu0}]")


def _alpha(spec: LorenzMapSpec, x: float) -> float:
    # evaluated through |x| so that alpha(-x) == -alpha(x) bit for bit
    value = spec.alpha.c * abs(x) ** spec.alpha.rho - 1.0
    return value if x > 0 else -value


def eval_alpha_mu(spec: LorenzMapSpec, mu: float, x: float) -> float:
    """alpha_mu(x) = alpha(x) - mu*x for x != 0."""
    if x == 0.0:
        raise DomainError("alpha is undefined on Gamma (x = 0)")
    check_shift(spec, mu)
    return _alpha(spec, x) - mu * x


def alpha_mu_array(spec: LorenzMapSpec, mu: float, xs: np.ndarray) -> np.ndarray:
    """Vectorised alpha_mu; every entry of xs must be non-zero."""
    xs = np.asarray(xs, dtype=float)
    if np.any(xs == 0.0):
        raise DomainError("alpha is undefined on Gamma (x = 0)")
    check_shift(spec, mu)
    value = spec.alpha.c * np.abs(xs) ** spec.alpha.rho - 1.0
    return np.where(xs > 0, value, -value) - mu * xs


def alpha_mu_prime(spec: LorenzMapSpec, mu: float, x: float) -> float:
    if x == 0.0:
        raise DomainError("alpha' is unbounded at x = 0")
    return spec.alpha.c * spec.alpha.rho * abs(x) ** (spec.alpha.rho - 1.0) - mu


def eval_beta(spec: LorenzMapSpec, x: float, y: float) -> float:
    if x == 0.0:
        raise DomainError("beta is undefined on Gamma (x = 0)")
    offset = spec.beta.e_plus if x > 0 else spec.beta.e_minus
    return offset + spec.beta.d * abs(x) * y


def eval_map_mu(spec: LorenzMapSpec, mu: float, p: PlanarPoint) -> PlanarPoint:
    """L_mu(p) for p off Gamma."""
    if p.on_gamma:
        raise DomainError(f"L is undefined on Gamma: {p}")
    return PlanarPoint(eval_alpha_mu(spec, mu, p.x), eval_beta(spec, p.x, p.y))


def eval_map_mu_batch(
    spec: LorenzMapSpec, mu: float, xs: np.ndarray, ys: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    new_x = alpha_mu_array(spec, mu, xs)
    offsets = np.where(xs > 0, spec.beta.e_plus, spec.beta.e_minus)
    return new_x, offsets + spec.beta.d * np.abs(xs) * ys


def cusp_vertex(spec: LorenzMapSpec, side: int) -> PlanarPoint:
    """v_+ = (-1, e_plus) for side > 0, v_- = (1, e_minus) for side < 0."""
    if side > 0:
        return PlanarPoint(-1.0, spec.beta.e_plus)
    return PlanarPoint(1.0, spec.beta.e_minus)


def branch_image(spec: LorenzMapSpec, branch: int, mu: float = 0.0) -> Tuple[float, float]:
    """Closure of alpha_mu of the given branch: [-1, a] for +, [-a, 1] for -."""
    top = _alpha(spec, 1.0) - mu
    if branch > 0:
        return (-1.0, top)
    return (-top, 1.0)


def invert_alpha_branch(
    spec: LorenzMapSpec, target: float, branch: int, mu: float = 0.0
) -> float:
    """
    The unique x on the given branch with alpha_mu(x) = target.

    Solved in the variable u = |x|**rho where the branch is almost affine,
    so the root is well conditioned even for targets next to -1 or 1.
    """
    check_shift(spec, mu)
    if branch < 0:
        return -invert_alpha_branch(spec, -target, 1, mu)

    low, high = branch_image(spec, 1, mu)
    if target > high:
        if target - high > OVERSHOOT_TOL:
            raise NoPreimageError(target, branch)
        return 1.0
    if target <= low:
        if low - target > OVERSHOOT_TOL:
            raise NoPreimageError(target, branch)
        return 0.0

    c, rho = spec.alpha.c, spec.alpha.rho
    if mu == 0.0:
        u = (1.0 + target) / c
    else:
        def g(u: float) -> float:
            return c * u - 1.0 - mu * u ** (1.0 / rho) - target

        u = brentq(g, 0.0, 1.0, xtol=1e-16, rtol=1e-15, maxiter=200)
    return min(1.0, u ** (1.0 / rho))


def _condition1_row(spec: LorenzMapSpec, mu: float, grid: np.ndarray) -> ConditionRow:
    c, rho = spec.alpha.c, spec.alpha.rho
    # alpha' is decreasing on (0, 1] since rho < 1, so the minimum sits at x = 1
    analytic = c * rho - mu - SQRT2
    sampled = float(np.min(c * rho * grid ** (rho - 1.0) - mu)) - SQRT2
    alpha_one = _alpha(spec, 1.0) - mu
    margin = min(analytic, sampled, 1.0 - alpha_one)
    return ConditionRow(
        condition='1',
        mu=mu,
        margin=margin,
        detail=f"α(1)={alpha_one:.6g}, min α'={analytic + SQRT2:.6g} vs √2",
    )


def _condition2_row(spec: LorenzMapSpec, mu: float, grid: np.ndarray, bound: float) -> ConditionRow:
    d = spec.beta.d
    # |d beta/dx| = d|y| and |d beta/dy| = d|x| over the square
    sampled = float(np.max(d * np.abs(2.0 * grid - 1.0)))
    sup = max(d, sampled)
    return ConditionRow(
        condition='2',
        mu=mu,
        margin=bound - sup,
        detail=f"sup|∂β|={sup:.6g} vs {bound:.6g}",
    )


def _cusp_row(spec: LorenzMapSpec, mu: float) -> ConditionRow:
    b = spec.beta
    gap = b.e_plus - b.e_minus - 2.0 * b.d
    room = 1.0 - max(abs(b.e_plus), abs(b.e_minus)) - b.d
    return ConditionRow(
        condition='cusps',
        mu=mu,
        margin=min(gap, room),
        detail=f"cusp gap={gap:.6g}, room={room:.6g}",
    )


def _condition3_row(spec: LorenzMapSpec, mu: float) -> ConditionRow:
    a1 = _alpha(spec, 1.0) - mu
    if a1 == 0.0:
        return ConditionRow('3', mu, -math.inf, "α(1)=0 lies on Γ")
    a2 = _alpha(spec, a1) - mu * a1
    margin = min(a2 - TRAP_LOW, a1 - a2, 1.0 - a1)
    return ConditionRow(
        condition='3',
        mu=mu,
        margin=margin,
        detail=f"α²(1)={a2:.6g}, α(1)={a1:.6g}",
    )


def _condition4_row(spec: LorenzMapSpec, mu: float, grid: np.ndarray) -> ConditionRow:
    c, rho = spec.alpha.c, spec.alpha.rho
    analytic = c * rho * TRAP_LOW ** (rho - 1.0) - mu
    xs = TRAP_LOW + (1.0 - TRAP_LOW) * grid
    sampled = float(np.max(c * rho * xs ** (rho - 1.0) - mu))
    sup = max(analytic, sampled)
    return ConditionRow(
        condition='4',
        mu=mu,
        margin=2.0 - sup,
        detail=f"sup α' on (0.8,1]={sup:.6g} vs 2",
    )


def check_conditions(
    spec: LorenzMapSpec, grid_n: int = 100_000, beta_bound: str = 'strict'
) -> ConditionReport:
    """
    Report the margin of every map condition at mu in {0, mu0/2, mu0}.

    Failures are reported, never raised.
    """
    if grid_n < 1000:
        raise ParameterError(f"grid_n must be at least 1000, got {grid_n}")
    if beta_bound not in ('strict', 'weak'):
        raise ParameterError(f"beta_bound must be 'strict' or 'weak', got {beta_bound!r}")
    bound = STRICT_BETA_BOUND if beta_bound == 'strict' else WEAK_BETA_BOUND

    # half-open grid on (0, 1]
    grid = np.arange(1, grid_n + 1, dtype=float) / grid_n
    rows: List[ConditionRow] = []
    for mu in (0.0, spec.mu0 / 2.0, spec.mu0):
        rows.append(_condition1_row(spec, mu, grid))
        rows.append(_condition2_row(spec, mu, grid, bound))
        rows.append(_cusp_row(spec, mu))
        rows.append(_condition3_row(spec, mu))
        rows.append(_condition4_row(spec, mu, grid))

    report = ConditionReport(rows=rows, grid_n=grid_n, beta_bound=beta_bound)
    for row in report.failures():
        logger.info(f"condition ({row.condition}) fails at mu={row.mu}: {row.detail}")
    return report


def trapped_images(spec: LorenzMapSpec, mu: float, eta: float) -> List[float]:
    """
    Lower endpoints of |alpha_mu^i((0, eta])| for i = 1, 2, 3.

    alpha_mu maps (0, eta] onto (-1, alpha_mu(eta)]; by symmetry the absolute
    images are [a_i, b_i) intervals whose upper ends stay below alpha_mu(1) < 1.
    """
    lows: List[float] = []
    current = abs(_alpha(spec, eta) - mu * eta)
    lows.append(current)
    for _ in range(2):
        if current == 0.0:
            lows.append(0.0)
            continue
        current = abs(_alpha(spec, current) - mu * current)
        lows.append(current)
    return lows


def is_trapping_radius(spec: LorenzMapSpec, eta: float, shifts: Sequence[float]) -> bool:
    """True if (0, eta] maps below 0 and its first three images stay in [0.8, 1] up to sign."""
    for mu in shifts:
        if _alpha(spec, eta) - mu * eta >= 0.0:
            return False
        if any(low < TRAP_LOW for low in trapped_images(spec, mu, eta)):
            return False
    return True


def derive_eta0(spec: LorenzMapSpec, shifts: Optional[Sequence[float]] = None) -> float:
    """
    Largest eta in [1e-6, 1) such that alpha_mu < 0 on (0, eta] and the first
    three images of (0, eta] under every alpha_mu stay in [0.8, 1] up to sign.
    """
    if shifts is None:
        shifts = (0.0, spec.mu0 / 2.0, spec.mu0)
    if not is_trapping_radius(spec, ETA_FLOOR, shifts):
        raise ConditionError(
            f"no trapping radius down to {ETA_FLOOR:g}; condition (3) margin too thin"
        )
    # below the first zero of alpha_mu the lower endpoints grow as eta shrinks,
    # so the property is monotone there; past it the image of (0, eta] straddles 0
    lo = ETA_FLOOR
    hi = min(invert_alpha_branch(spec, 0.0, 1, mu) for mu in shifts)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if is_trapping_radius(spec, mid, shifts):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15:
            break
    logger.debug(f"derived eta0={lo:.6g}")
    return lo


def derive_map_constants(spec: LorenzMapSpec, epsilon: float) -> MapConstants:
    """epsilon1 = min(3 mu0, eta0/8, epsilon/64), delta = epsilon1/100, mu_hat = epsilon1/3."""
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    eta0 = derive_eta0(spec)
    constants = MapConstants.from_eta0(spec.mu0, eta0, epsilon)
    logger.debug(f"map constants: {constants.to_dict()}")
    return constants
