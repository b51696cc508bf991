"""Exception hierarchy for lorenz-shadow."""

from typing import Optional


class LorenzShadowError(Exception):
    """Base class for all library errors."""
    pass


class SpecValidationError(LorenzShadowError):
    """Raised when a JSON document is malformed or violates its schema."""
    pass


class DomainError(LorenzShadowError):
    """Raised when a map or flow is evaluated where it is undefined."""
    pass


class ParameterError(LorenzShadowError):
    """Raised for a shift outside [0, mu0] or other out-of-range arguments."""
    pass


class NoPreimageError(LorenzShadowError):
    """Raised when a branch inversion target lies outside the branch image."""

    def __init__(self, target: float, branch: int):
        self.target = target
        self.branch = branch
        side = "+" if branch > 0 else "-"
        super().__init__(f"no preimage of {target!r} on branch {side}")


class ConditionError(LorenzShadowError):
    """Raised when a derived radius cannot be found (margins too thin)."""
    pass


class PseudoOrbitError(LorenzShadowError):
    """Raised when a sequence is not a delta-pseudo-orbit."""

    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(f"step {index}: {message}")


class ContainmentError(LorenzShadowError):
    """Raised when an interval chain fails the image containment check."""

    def __init__(self, step: int, message: str):
        self.step = step
        super().__init__(f"containment violated at step {step}: {message}")


class EmptyIntersectionError(LorenzShadowError):
    """Raised when a pullback intersection is empty (internal inconsistency)."""

    def __init__(self, m: int, n: int):
        self.m = m
        self.n = n
        super().__init__(f"pullback l_{m}^({n}) is empty")


class AccuracyError(LorenzShadowError):
    """Raised when a computed shadow orbit violates its accuracy bound."""

    def __init__(
        self,
        index: int,
        bound: float,
        observed: float,
        what: str = "error",
        message: Optional[str] = None,
    ):
        self.index = index
        self.bound = bound
        self.observed = observed
        super().__init__(
            message or f"{what} {observed:.6g} exceeds bound {bound:.6g} at index {index}"
        )


class SplitError(LorenzShadowError):
    """Raised when a chain step is shorter than the minimal duration."""

    def __init__(self, index: int, duration: float, tau: float):
        self.index = index
        super().__init__(f"step {index} has duration {duration:.6g} < tau {tau:.6g}")


class CrossingError(LorenzShadowError):
    """Raised when an interpolated chain never returns to the section."""
    pass


class ProjectionError(LorenzShadowError):
    """Raised when projected crossings violate their bounds."""

    def __init__(self, index: int, case: int, message: str):
        self.index = index
        self.case = case
        super().__init__(f"crossing {index} (case {case}): {message}")


class ReparametrizationError(LorenzShadowError):
    """Raised when reparametrization knots are not strictly increasing."""
    pass


class ConstantSearchError(LorenzShadowError):
    """Raised when a flow constant search or its falsification check fails."""

    def __init__(self, name: str, message: Optional[str] = None):
        self.name = name
        super().__init__(f"constant {name}: {message or 'search failed'}")
