"""Growth exponents of two-patch populations under switched environments.

A population spread over two patches, each alternating between growth and
decay out of phase with the other, can grow exponentially under moderate
dispersal even though every isolated patch dies out.  This package computes
the long-run growth exponent of the pair by several mutually independent
routes (closed form, period-map spectrum, orbit quadrature, stationary
density quadrature, Monte Carlo) for periodic, Markov and renewal
switching, and applies the machinery to density-dependent persistence and
a two-patch epidemic model.
"""

from .analytic import (
    MStar,
    NoRootError,
    OrbitAmplitude,
    a_plus,
    critical_migration,
    delta_closed,
    delta_limit_m,
    delta_limit_T_inf,
    delta_limit_T_zero,
    orbit_amplitude,
    p_plus,
    threshold_m_star,
    threshold_T_star,
    v_star,
)
from .applications import (
    HoltParams,
    PersistenceVerdict,
    SirResult,
    Verdict,
    classify_persistence,
    cumulative_cases_sweep,
    persistence_sweep,
    predict_persistence,
    simulate_density_dependent,
    simulate_sir,
    sir_growth_crossing,
    sir_linearized_growth,
    sir_linearized_map,
)
from .core import (
    Dirac,
    EnvironmentSignal,
    Exponential,
    GrowthReport,
    MarkovSwitch,
    Method,
    ModelParams,
    PeriodicSquare,
    RenewalSwitch,
    Trajectory,
    Uniform,
    realize_environment,
    switch_times,
)
from .mat2 import (
    ComplexSpectrumError,
    Mat2,
    PeriodMap,
    compose_map,
    delta_spectral,
    expm2,
    general_rate_map,
    growth_rate,
    period_map,
    phase_shift_map,
    spectral_radius,
)
from .pdmp import (
    InvariantDensity,
    QuadratureError,
    delta_pdmp_quadrature,
    empirical_density,
    invariant_density,
    lyapunov_polar,
    simulate_pdmp,
    simulate_sape,
)
from .switched import (
    ConvergenceError,
    PeriodicOrbit,
    StepSizeCollapseError,
    delta_quadrature,
    flow_exact,
    integrate_asymmetric,
    integrate_switched,
    periodic_orbit,
    perfect_mixing_reference,
)

__version__ = "0.1.0"
