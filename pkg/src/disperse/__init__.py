"""Synchronous dispersion processes on graphs.

Simulator, closed-form oracles, and an experiment harness for particles
that scatter from a common origin: every particle sharing a vertex with
another moves to a uniform random neighbour, all at once, until each
vertex holds at most one.
"""

from .engine import (
    DEFAULT_BUDGET,
    RECORD_EVENT_CAP,
    SCHEMA,
    STANDARD,
    ParticleSystem,
    RunResult,
    Status,
    StepReport,
    TrajectoryLog,
    Variant,
    WalkMode,
    lazy,
)
from .harness import (
    AggregateStats,
    ExperimentSpec,
    ScanAxis,
    ScanPoint,
    ScanSpec,
    ValidationReport,
    aggregate,
    grid_step_budget,
    nearest_rank_quantiles,
    pair_coupling_audit,
    run_replicas,
    scan,
    validate_suite,
    wilson_interval,
)
from .oracles import (
    MIXING_VERTEX_CAP,
    ORACLES,
    KnState,
    LazyOccupancyProfile,
    OracleValue,
    evaluate,
    grid2d_expected_returns,
    hypercube_return_probability,
    kn_expected_changes,
    kn_subcritical_time,
    lazy_expected_range_changes,
    lazy_subcritical_time,
    line_returns_pmf,
    line_returns_tail,
    mixing_step,
    path_distance_bounds,
    tree_constants,
    tree_depth_bounds,
    tree_ruin_probability,
)
from .rng import RandomStream, derive_seed, split_key, stream_key
from .topology import COORDINATE_LIMIT, Family, TopologySpec

__version__ = "0.1.0"

__all__ = [
    "AggregateStats",
    "COORDINATE_LIMIT",
    "DEFAULT_BUDGET",
    "ExperimentSpec",
    "Family",
    "KnState",
    "LazyOccupancyProfile",
    "MIXING_VERTEX_CAP",
    "ORACLES",
    "OracleValue",
    "ParticleSystem",
    "RECORD_EVENT_CAP",
    "RandomStream",
    "RunResult",
    "SCHEMA",
    "STANDARD",
    "ScanAxis",
    "ScanPoint",
    "ScanSpec",
    "Status",
    "StepReport",
    "TopologySpec",
    "TrajectoryLog",
    "ValidationReport",
    "Variant",
    "WalkMode",
    "aggregate",
    "derive_seed",
    "evaluate",
    "grid2d_expected_returns",
    "grid_step_budget",
    "hypercube_return_probability",
    "kn_expected_changes",
    "kn_subcritical_time",
    "lazy",
    "lazy_expected_range_changes",
    "lazy_subcritical_time",
    "line_returns_pmf",
    "line_returns_tail",
    "mixing_step",
    "nearest_rank_quantiles",
    "pair_coupling_audit",
    "path_distance_bounds",
    "run_replicas",
    "scan",
    "split_key",
    "stream_key",
    "tree_constants",
    "tree_depth_bounds",
    "tree_ruin_probability",
    "validate_suite",
    "wilson_interval",
    "__version__",
]
