"""SIR epidemics on stochastic block models.

Three routes to the same epidemic, cross-validated against each other:
exact stochastic simulation (full-graph Gillespie or the graph-free
exploration process), the limiting 3K-dimensional ODE system, and the
final-size / branching-process fixed-point equations.
"""

from .analytics import (
    FinalSizeReport,
    SpectralReport,
    SurvivalReport,
    bp_ensemble,
    herd_immunity_time,
    outbreak_probability,
    r0,
    reff_along,
    reff_values,
    simulate_bp_tree,
    solve_final_size,
    spectral_radius,
    survival_backward,
    survival_forward,
)
from .errors import SbmSirError
from .graphs import (
    LabeledGraph,
    sample_psbm,
    sample_sbm,
    sample_sbm_via_coupling,
)
from .model import (
    DerivedQuantities,
    ModelParams,
    community_transition,
    coupling_affinity,
    derive,
    mean_degrees,
    validate,
)
from .ode import (
    HeteroParams,
    OdeTrajectory,
    default_initial_state,
    force_of_infection,
    hetero_vector_field,
    integrate,
    integrate_hetero,
    integrate_pair_approx,
    pack,
    pair_approx_field,
    steady_state,
    unpack,
    vector_field,
)
from .simulate import (
    EnsembleStats,
    EpidemicState,
    InitialCondition,
    Trajectory,
    detect_major_outbreak,
    ensemble,
    run_exploration,
    run_graph_sir,
    single_seed,
)

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "DerivedQuantities", "validate", "derive",
    "mean_degrees", "community_transition", "coupling_affinity",
    "LabeledGraph", "sample_sbm", "sample_psbm", "sample_sbm_via_coupling",
    "EpidemicState", "InitialCondition", "Trajectory", "EnsembleStats",
    "run_graph_sir", "run_exploration", "detect_major_outbreak",
    "ensemble", "single_seed",
    "OdeTrajectory", "HeteroParams", "vector_field", "integrate",
    "steady_state", "force_of_infection", "pair_approx_field",
    "hetero_vector_field", "integrate_pair_approx", "integrate_hetero",
    "default_initial_state", "pack", "unpack",
    "SpectralReport", "FinalSizeReport", "SurvivalReport",
    "spectral_radius", "r0", "reff_along", "reff_values",
    "herd_immunity_time", "solve_final_size", "survival_backward",
    "survival_forward", "outbreak_probability", "simulate_bp_tree",
    "bp_ensemble",
    "SbmSirError",
]
