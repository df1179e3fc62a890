"""Gravitational state-reduction toy model: couplings, trigger races, probabilities."""

__version__ = "0.1.0"

from .constants import CONSTANTS, PhysicalConstants, resolve_constants
from .massdist import (
    ConvergenceError,
    Displaced,
    GridSampled,
    MassDistribution,
    NucleusLattice,
    QuadratureConfig,
    UniformRod,
    UniformSphere,
    energy_fuzziness_pair,
    mean_distribution,
    pair_eg,
    potential,
    sphere_pair_eg,
    time_dilation_factor,
)
from .reduction import (
    ConstantProfile,
    CouplingProfile,
    MixtureProfile,
    ProfileSet,
    RampProfile,
    ReductionOutcome,
    StableSuperpositionError,
    Superposition,
    TableProfile,
    apply_trigger,
    cascade_distribution,
    discontinuity_probe,
    outcome_distribution,
    reduction_rates,
    state_decay_rates,
    static_probabilities,
    timedep_probabilities,
    trigger_rate_matrix,
    two_state_lifetime,
)
from .montecarlo import McEstimate, TrialConfig, estimate, run_cascade_trial
from .scenarios import (
    Scenario,
    build_all_changing,
    build_biology_star,
    build_continuous_medium,
    build_one_changing,
    build_two_detector_overlap,
    delayed_detector_sweep,
    required_trials,
)
