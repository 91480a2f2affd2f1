"""Decentralized Moreau-envelope ADMM for weakly convex consensus problems,
with a projected-subgradient baseline, diagnostics, and an experiment
harness."""

from .diagnostics import (
    GateCondition,
    GateReport,
    IterationTrace,
    consensus_residual,
    convergence_gate,
    dual_change_monitor,
    eval_aug_lagrangian,
    eval_psi,
    mse,
    read_trace_csv,
    write_trace_csv,
)
from .dpsm import DpsmParams, DpsmRunResult, dpsm_run, dpsm_step
from .experiments import (
    ConfigError,
    ExperimentConfig,
    TrialResult,
    check_config,
    dimension_sweep,
    gamma_grid_search,
    load_config,
    run_experiment,
    run_trial,
    spectral_init,
    trial_seed,
)
from .graph import (
    CommGraph,
    default_edge_prob,
    erdos_renyi,
    is_connected,
    load_graph,
    metropolis_weights,
    save_graph,
)
from .madm import (
    MadmError,
    MadmParams,
    MadmRunResult,
    MadmState,
    StepRecord,
    beta_update,
    init_state,
    lambda_update,
    load_checkpoint,
    run,
    save_checkpoint,
    step,
    x_update,
    z_update,
)
from .problems import (
    LocalObjective,
    PhaseRetrievalInstance,
    QuadraticConsensusInstance,
    abs_square_prox,
    load_instance,
    moreau_envelope,
    pr_objective,
    pr_prox,
    pr_subgradient,
    pr_weak_convexity_bound,
    quadratic_prox,
    save_instance,
    zero_objective,
)

__version__ = "0.1.0"
