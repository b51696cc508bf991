"""lorenz-shadow - parameter-shifted shadowing for geometric Lorenz maps and flows."""

__version__ = "1.0.0"
__author__ = "Your Name"
__email__ = "your.email@example.com"

from .errors import LorenzShadowError
from .flow_core import FlowSpec, FlowState
from .map_core import AlphaSpec, BetaSpec, LorenzMapSpec, PlanarPoint

__all__ = [
    "AlphaSpec",
    "BetaSpec",
    "FlowSpec",
    "FlowState",
    "LorenzMapSpec",
    "LorenzShadowError",
    "PlanarPoint",
    "__version__",
]
