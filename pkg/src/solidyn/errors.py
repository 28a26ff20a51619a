"""Exception hierarchy. Every error carries a machine-readable category
used by the CLI to map failures to exit codes."""


class SolidynError(Exception):
    category = "internal"


class GridMismatchError(SolidynError):
    """Operands live on different grids or have inconsistent shapes."""
    category = "data"


class ConfigError(SolidynError):
    category = "config"


class StabilityError(SolidynError):
    """Time step violates the configured CFL bound."""
    category = "stability"


class ConvergenceError(SolidynError):
    """Iterative solver failed to reach tolerance; carries last residual."""
    category = "convergence"

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateMinimizerError(SolidynError):
    """A ground-state component collapsed to (near) zero mass."""
    category = "convergence"


class StepSizeError(SolidynError):
    """Energy monotonicity of the gradient flow failed at the minimum step."""
    category = "convergence"


class BlowUpError(SolidynError):
    """Non-finite values appeared in an integrator state."""
    category = "stability"


class ConservationError(SolidynError):
    """Mass drift above threshold during PDE evolution."""
    category = "conservation"


class DomainError(SolidynError):
    category = "domain"


class DomainTooSmallError(DomainError):
    """Initial soliton support reaches the configured box margin."""


class DomainExitError(DomainError):
    """Soliton center came within L/8 of the box edge during a run."""


class CutoffError(SolidynError):
    """Too much soliton mass outside the chi cutoff plateau."""
    category = "domain"


class MinimalityViolationError(SolidynError):
    """A probe state had energy below the ground state beyond tolerance."""
    category = "data"


class InsufficientDataError(SolidynError):
    """Fewer than three usable points for a slope fit."""
    category = "data"
