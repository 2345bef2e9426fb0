"""Deterministic cluster scheduling for reconfigurable training jobs.

The package models iteration time analytically from an execution plan and a
resource placement, fits the model's coefficients from observed timings,
ranks plans under memory limits, derives resource sensitivity curves and SLA
floors, and drives an event-triggered scheduler plus a discrete-event cluster
simulator on top of it all.
"""

from .types import (
    EnvSpec,
    ExecutionPlan,
    ModelSpec,
    NodeShare,
    PerfParams,
    Placement,
    PlanKind,
    ProfileBase,
    ResourceVector,
    build_placement,
)
from .perf import (
    CommTimes,
    CommVolumes,
    OffloadNeedsCpus,
    PerfModelError,
    PipelineLayerMismatch,
    Prediction,
    TensorGroupSpansNodes,
    overlap,
    predict,
)
from .plans import (
    MemoryEstimate,
    MemoryModel,
    NoFittedModel,
    PlanCandidate,
    PlanFilter,
    PlanScorer,
    best_plan,
    enumerate_plans,
    estimate_memory,
    rank_plans,
)
from .sensitivity import (
    Axis,
    InfeasibleRequest,
    SensitivityCurve,
    build_curve,
    marginal_gain,
    marginal_loss,
    min_res,
    slope,
)
from .fitting import (
    FitResult,
    FittingError,
    MissingOffloadPoints,
    Observation,
    TooFewPoints,
    fit,
    maybe_refit,
)
from .scheduler import (
    ClusterState,
    Decision,
    Job,
    JobAssignment,
    JobClass,
    JobState,
    SchedulerPolicy,
    Tenant,
    reconfig_gate,
    should_reconfigure,
)
from .simulator import (
    GroundTruthOracle,
    Policy,
    SimResult,
    Simulator,
    TraceJob,
    normalized_speedup,
    read_trace,
    synthesize_trace,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "Axis",
    "ClusterState",
    "CommTimes",
    "CommVolumes",
    "Decision",
    "EnvSpec",
    "ExecutionPlan",
    "FitResult",
    "FittingError",
    "GroundTruthOracle",
    "InfeasibleRequest",
    "Job",
    "JobAssignment",
    "JobClass",
    "JobState",
    "MemoryEstimate",
    "MemoryModel",
    "MissingOffloadPoints",
    "ModelSpec",
    "NoFittedModel",
    "NodeShare",
    "Observation",
    "OffloadNeedsCpus",
    "PerfModelError",
    "PerfParams",
    "PipelineLayerMismatch",
    "Placement",
    "PlanCandidate",
    "PlanFilter",
    "PlanKind",
    "PlanScorer",
    "Policy",
    "Prediction",
    "ProfileBase",
    "ResourceVector",
    "SchedulerPolicy",
    "SensitivityCurve",
    "SimResult",
    "Simulator",
    "Tenant",
    "TensorGroupSpansNodes",
    "TraceJob",
    "best_plan",
    "build_curve",
    "build_placement",
    "enumerate_plans",
    "estimate_memory",
    "fit",
    "marginal_gain",
    "marginal_loss",
    "maybe_refit",
    "min_res",
    "normalized_speedup",
    "overlap",
    "predict",
    "rank_plans",
    "read_trace",
    "reconfig_gate",
    "should_reconfigure",
    "slope",
    "synthesize_trace",
    "write_trace",
]
