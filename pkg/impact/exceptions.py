"""
Errors raised by the impact model and the simulator.
"""


class ImpactModelError(ValueError):
    """Invalid model parameters or arguments."""


class DomainError(ImpactModelError):
    """Density evaluated outside its domain (q < 0, or the singular point q = 0)."""


class TrajectoryError(ImpactModelError):
    """Malformed trajectory, or a trajectory of the wrong kind for the operation."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, achieved, requested):
        self.achieved = achieved
        self.requested = requested
        super().__init__(
            f"Quadrature did not converge: error estimate {achieved:.3e} "
            f"above requested tolerance {requested:.3e}"
        )
