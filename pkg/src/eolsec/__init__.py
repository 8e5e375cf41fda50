"""Blocking vs. eavesdropping-security analysis of an elastic optical link.

The link serves multi-class calls under random-fit contiguous slot
allocation.  Proactive spectrum randomization improves resistance to
window eavesdropping but fragments the spectrum; on-demand defragmentation
counteracts the fragmentation at the price of reconfiguration blocking.
This package quantifies that tradeoff with an exact CTMC solution at small
capacities and discrete-event Monte Carlo beyond enumeration reach.
"""

from .ctmc import (
    BlockingReport,
    ModelVariant,
    NoConvergence,
    NotIrreducible,
    RateMatrix,
    StationaryDistribution,
    VariantKind,
    assemble_generator,
    blocking_report,
    dense_stationary_oracle,
    solve_stationary,
)
from .link import (
    Arrangement,
    Classification,
    DemandProfile,
    classify,
    connection_spans,
    free_fragments,
    is_defragmented,
    pattern,
    placement_count,
    placements,
    removals,
)
from .security import (
    NonIntegerRpRatio,
    ObservationWindow,
    SecurityReport,
    WindowSecurity,
    attack_success_probability,
    count_matching_rearrangements,
    inside_pattern,
    observable_fraction,
    per_state_attack_success,
    security_report,
    total_rearrangements,
)
from .simulate import (
    DEFAULT_SEED,
    EventCounts,
    MetricEstimate,
    SimConfig,
    SimResult,
    run_simulation,
    sample_defragmented_arrangement,
    sample_random_arrangement,
)
from .statespace import (
    SpaceOptions,
    StateBudgetExceeded,
    StateSpace,
    build_state_space,
    count_states,
    dump_states,
    feasible_patterns,
    pattern_size,
)

__all__ = [
    "Arrangement",
    "BlockingReport",
    "Classification",
    "DemandProfile",
    "DEFAULT_SEED",
    "EventCounts",
    "MetricEstimate",
    "ModelVariant",
    "NoConvergence",
    "NonIntegerRpRatio",
    "NotIrreducible",
    "ObservationWindow",
    "RateMatrix",
    "SecurityReport",
    "SimConfig",
    "SimResult",
    "SpaceOptions",
    "StateBudgetExceeded",
    "StateSpace",
    "StationaryDistribution",
    "VariantKind",
    "WindowSecurity",
    "assemble_generator",
    "attack_success_probability",
    "blocking_report",
    "build_state_space",
    "classify",
    "connection_spans",
    "count_matching_rearrangements",
    "count_states",
    "dense_stationary_oracle",
    "dump_states",
    "feasible_patterns",
    "free_fragments",
    "inside_pattern",
    "is_defragmented",
    "observable_fraction",
    "pattern",
    "pattern_size",
    "per_state_attack_success",
    "placement_count",
    "placements",
    "removals",
    "run_simulation",
    "sample_defragmented_arrangement",
    "sample_random_arrangement",
    "security_report",
    "solve_stationary",
    "total_rearrangements",
]

__version__ = "0.1.0"
