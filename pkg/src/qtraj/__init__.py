"""Monte-Carlo jump unraveling of time-dependent Lindblad dynamics.

The package simulates open-system pure-state trajectories as
piecewise-deterministic processes on a fixed measurement grid, constructs the
deterministic backward partner of every forward trajectory, decomposes the
per-trajectory entropy flux into thermal and nonthermal (quantum-fluctuation)
parts, and Monte-Carlo averages the trajectory-pair weight whose mean is
<exp(-sigma_f)> = 1 + zeta_f.

The stepping kernels run from a compiled extension when available and from a
value-identical pure-Python fallback otherwise; see ``qtraj.backend``.
"""

from .backend import BACKEND, HAVE_COMPILED
from .hilbert import EPS_ZERO, NearZeroNorm
from .model import (Channel, LindbladModel, Schedule, backward_step_propagator,
                    build_eigenstate_jump_model, build_two_level_direct,
                    build_two_level_homodyne, build_two_level_thermal,
                    effective_hamiltonian, lindblad_generator, step_propagator)
from .trajectory import (DriftSegment, JumpEvent, StepTables, StepTooLarge,
                         TrajectoryRecord, backward_construct, basis_state_sampler,
                         forward_simulate, philox_stream, random_two_level_sampler,
                         sample_initial_state, step_tables, validate_record)
from .entropy import (EntropyLedger, appendix_I1, appendix_I2,
                      appendix_var1_expansion, direct_rate, drift_flux_exact,
                      drift_kappa, eta, jump_flux, ledger_for_trajectory,
                      reversed_rate, sigma_with_boundary_densities, var1_state)
from .estimator import (IFTEstimate, SweepPoint, TrajOutcome, estimate, run_pairs,
                        summarize, sweep, trajectory_weight)
from .validate import (ensemble_average, integrate_master_equation, trace_distance,
                       trajectory_ensemble)
from .config import ConfigError, ExperimentConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "HAVE_COMPILED", "EPS_ZERO", "NearZeroNorm", "StepTooLarge",
    "Schedule", "Channel", "LindbladModel",
    "build_two_level_direct", "build_two_level_homodyne", "build_two_level_thermal",
    "build_eigenstate_jump_model",
    "effective_hamiltonian", "step_propagator", "backward_step_propagator",
    "lindblad_generator",
    "JumpEvent", "DriftSegment", "TrajectoryRecord", "StepTables", "step_tables",
    "sample_initial_state", "random_two_level_sampler", "basis_state_sampler",
    "philox_stream", "forward_simulate", "backward_construct", "validate_record",
    "EntropyLedger", "direct_rate", "reversed_rate", "eta", "var1_state",
    "jump_flux", "drift_flux_exact", "appendix_I1", "appendix_I2",
    "appendix_var1_expansion", "drift_kappa", "ledger_for_trajectory",
    "sigma_with_boundary_densities",
    "IFTEstimate", "TrajOutcome", "SweepPoint", "trajectory_weight", "estimate",
    "run_pairs", "summarize", "sweep",
    "integrate_master_equation", "ensemble_average", "trajectory_ensemble",
    "trace_distance",
    "ConfigError", "ExperimentConfig", "load_config",
]
