"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument is outside the physically meaningful domain."""


class NotBracketedError(DomainError):
    """A root search bracket does not enclose a sign change."""


class DegenerateStateError(ValueError):
    """Projection annihilated the state (residual norm below threshold)."""


class DegenerateCombinationError(ValueError):
    """Two states are spectrally proportional near k = 0; no combination
    can cancel the leading small-k coefficient."""


class IncompleteBasisError(ValueError):
    """Continuum expansion misses too much norm (coarse k-grid or a
    retained bound-state component)."""

    def __init__(self, message: str, deficit: float):
        super().__init__(message)
        self.deficit = deficit


class QuadratureBudgetError(ValueError):
    """Requested time exceeds what the oscillatory quadrature budget
    supports; ``max_reliable_t`` is the largest safe time."""

    def __init__(self, message: str, max_reliable_t: float):
        super().__init__(message)
        self.max_reliable_t = max_reliable_t


class BoundaryContaminationError(ValueError):
    """Reflected flux from the hard wall would re-enter the observation
    region before the requested time; ``t_max_safe`` is the ballistic
    safety limit."""

    def __init__(self, message: str, t_max_safe: float):
        super().__init__(message)
        self.t_max_safe = t_max_safe


class ConfigError(ValueError):
    """A run configuration failed validation; message names the field."""
