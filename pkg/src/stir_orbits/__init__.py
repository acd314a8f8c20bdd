"""Random stirring processes, inverted orbits, and their quantitative bounds."""

from .graphs import (
    CubePartitionKernel,
    EdgelessKernel,
    FiniteGraph,
    FiniteKernel,
    Kernel,
    Lattice,
    LongRangeKernel,
    MatchingDecomposition,
    NearestNeighborKernel,
    cube_edge_partition,
    greedy_matching_decomposition,
    load_edge_list,
    long_range_kernel,
    nearest_neighbor_kernel,
    unit_conductance_kernel,
)
from .schedule import Schedule, Segment, single_segment
from .stirring import (
    OrbitSample,
    RingStore,
    SimultaneousRingsError,
    backward_trace,
    forward_stirring,
    forward_trace,
    sample_inverted_orbit_continuous,
    sample_inverted_orbit_discrete,
)
from .walks import (
    ClassificationReport,
    EscapeBracket,
    EscapeEstimate,
    TraceWalkConfig,
    classify_recurrence,
    effective_resistance,
    escape_bracket,
    escape_lower_bound,
    estimate_escape,
    resistance_profile,
    sample_forward_orbit,
    step_trace_walk,
    walk_min_return,
)
from .oracle import (
    OracleSizeError,
    PermutationDistribution,
    exact_orbit_pgf,
    exact_unit_distribution,
    single_particle_kernel,
    verify_liggett,
)
from .constructions import (
    CutoffSchedule,
    ReservoirConfig,
    build_graph_cutoff,
    build_zd_cutoff,
    sample_reservoir,
    verify_graph_cutoff,
    verify_sandwich,
    verify_zd_cutoff,
)
from .estimators import (
    BoundReport,
    Estimate,
    check_continuous_corollary,
    check_jensen_lower,
    check_mean_orbit_identity,
    check_sublinear_tail,
    check_theorem_bound,
    orbit_pgf_estimate,
    orbit_size_estimate,
)

__version__ = "0.1.0"
