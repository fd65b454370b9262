"""Numerical laboratory for quantum nonescape probabilities P(t) of s-wave
packets in finite-range radial potentials: exact spectral propagation to
long times, Jost-function scattering analysis, and decay-exponent fitting.
"""

from .errors import (
    BoundaryContaminationError,
    ConfigError,
    DegenerateCombinationError,
    DegenerateStateError,
    DomainError,
    IncompleteBasisError,
    NotBracketedError,
    QuadratureBudgetError,
)
from .model import (
    GaussianBump,
    InitialState,
    Potential,
    RadialGrid,
    SineBox,
    build_delta_shell,
    build_initial_state,
    free_potential,
    state_from_profile,
)
from .scattering import (
    BoundState,
    JostData,
    ResonancePole,
    find_bound_states,
    find_resonance_poles,
    find_zero_energy_coupling,
    jost_at_zero,
    jost_function,
    project_out_bound_states,
    regular_solution,
)
from .evolve import (
    Engine,
    KGridSpec,
    SpectralDecomposition,
    WaveFunction,
    decompose,
    grid_safe_time,
    propagate_grid,
    propagate_grid_series,
    propagate_spectral,
)
from .decay import (
    DecayCurve,
    ExponentFit,
    ScanPoint,
    TimeSpec,
    decay_curve,
    engineer_vanishing_moment,
    fit_exponent,
    nonescape,
    prepare_state,
    scan_coupling,
)

__version__ = "0.1.0"
