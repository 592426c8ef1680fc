"""zrplab: a laboratory for disordered zero-range and capped-exclusion systems.

Exact stochastic dynamics on finite rings, the closed-form equilibrium
calculus (single-site laws, quenched product measures, critical density, flux
function with its flat extension), entropy-solution PDE solvers, exact
finite-sector verification, and hydrodynamic-scaling experiments tying the
particle systems to the macroscopic conservation law.
"""

__version__ = "0.1.0"

from .environment import (
    DisorderLaw,
    FiniteSupport,
    JumpKernel,
    RateField,
    RateFunction,
    ShiftedBeta,
    TOTALLY_ASYMMETRIC,
    UniformInterval,
    capped_linear_rate,
    delta_law,
    drift,
    indicator_rate,
    sample_rate_field,
)
from .equilibria import (
    FluxTable,
    QuenchedProductLaw,
    SingleSiteLaw,
    build_flux_table,
    critical_density,
    density_rho,
    flux_f,
    mean_occupancy,
    mean_occupancy_inverse,
    partition_function,
    sample_product_measure,
)
from .dynamics import (
    Configuration,
    CurrentCounter,
    build_interaction_graph,
    configuration_at_density,
    measure_current,
    origin_component_samples,
    path_tail_bound,
    run_harris,
    run_kexclusion,
    run_zrp,
    subcritical_block_length,
    zero_configuration,
)
from .pde import (
    ConjugateTable,
    Profile,
    SolutionField,
    concave_conjugate,
    godunov_solve,
    l1_distance,
    lax_oleinik_solve,
    riemann_exact,
)
from .hydro import (
    EmpiricalFlux,
    MacroWindow,
    ScalingSpec,
    SmoothedIndicator,
    Triangular,
    TruncatedGaussian,
    empirical_measure,
    estimate_flux_empirical,
    gaps_to_zrp,
    platoon_diagnostics,
    positions_from_gaps,
    run_scaling_experiment,
    sample_initial_profile,
)
from .oracle import (
    build_generator,
    build_generator_pair,
    enumerate_sector,
    exact_stationary_current,
    run_verification_suite,
    sector_measure,
    uniform_sector_measure,
    verify_duality,
    verify_stationarity,
)
