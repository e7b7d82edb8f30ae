"""Crash-tolerant distributed hypothesis testing: simulator and analysis."""

from .analysis import (CheckResult, DEFAULT_CHECKS, DriftCheckpoint,
                       DriftDecomposition, PiEstimate, StructureConstants,
                       UpdateMatrix, backward_product, build_update_matrix,
                       decompose_log_ratio_drift, ergodic_coefficients,
                       estimate_pi, expected_ratio_vectors,
                       geometric_tail_constant, geometric_tail_constant_float,
                       log_ratio_vectors, pseudo_belief_evolution, psi_series,
                       run_checks, structure_constants, theorem2_bound,
                       trace_matrices)
from .engine import (AdversarySchedule, AgentRecord, ConfigError, CrashEvent,
                     DeadlockError, ExecutionTrace, SimulationConfig,
                     TraceInvariantError, combine_log_beliefs, converged,
                     min_final_posterior, normalize_log_belief,
                     partial_update_belief, read_trace, run_execution,
                     update_belief, validate_trace, write_trace)
from .graphs import (BudgetExceededError, DetectabilityReport, DirectedGraph,
                     EquivalenceViolationError, ReducedGraph,
                     SourceDecomposition, check_condition1, check_condition2,
                     detectability_report, enumerate_reduced_graphs,
                     random_link_removal_subgraph,
                     strongly_connected_components)
from .harness import (BatchSummary, ExperimentBatch, IdentifiabilityGateError,
                      SeedOutcome, analyze_trace, identifiability_gate,
                      load_batch, load_simulation_config, report_metrics,
                      run_batch, write_trajectory_csv)
from .observation import (IdentifiabilityPreconditionError,
                          IdentifiabilityReport, LikelihoodModel,
                          bernoulli_agent, check_assumption1,
                          check_failure_free_identifiability,
                          compute_log_ratio_bound,
                          compute_source_divergence_floor, expected_log_ratios,
                          kl_divergence, sample_signal, signal_from_uniform)

__version__ = "0.1.0"

__all__ = [
    "AdversarySchedule", "AgentRecord", "BatchSummary", "BudgetExceededError",
    "CheckResult", "ConfigError", "CrashEvent", "DEFAULT_CHECKS",
    "DeadlockError", "DetectabilityReport", "DirectedGraph", "DriftCheckpoint",
    "DriftDecomposition", "EquivalenceViolationError", "ExecutionTrace",
    "ExperimentBatch", "IdentifiabilityGateError",
    "IdentifiabilityPreconditionError", "IdentifiabilityReport",
    "LikelihoodModel", "PiEstimate", "ReducedGraph", "SeedOutcome",
    "SimulationConfig", "SourceDecomposition", "StructureConstants",
    "TraceInvariantError", "UpdateMatrix", "analyze_trace",
    "backward_product", "bernoulli_agent", "build_update_matrix",
    "check_assumption1", "check_condition1", "check_condition2",
    "check_failure_free_identifiability", "combine_log_beliefs", "converged",
    "compute_log_ratio_bound", "compute_source_divergence_floor",
    "decompose_log_ratio_drift", "detectability_report",
    "enumerate_reduced_graphs", "ergodic_coefficients", "estimate_pi",
    "expected_log_ratios", "expected_ratio_vectors",
    "geometric_tail_constant", "geometric_tail_constant_float",
    "identifiability_gate", "kl_divergence", "load_batch",
    "load_simulation_config", "log_ratio_vectors", "min_final_posterior",
    "normalize_log_belief", "partial_update_belief", "pseudo_belief_evolution",
    "psi_series", "random_link_removal_subgraph", "read_trace",
    "report_metrics", "run_batch", "run_checks", "run_execution",
    "sample_signal", "signal_from_uniform", "strongly_connected_components",
    "structure_constants", "theorem2_bound", "trace_matrices",
    "update_belief", "validate_trace", "write_trace", "write_trajectory_csv",
]
