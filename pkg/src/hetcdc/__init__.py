"""Heterogeneous coded distributed computing under nonuniform file popularity.

Modules: :mod:`.system` (configuration and demand model), :mod:`.placement`,
:mod:`.lp` (LP container and solvers), :mod:`.shuffle_opt` (per-demand
nested coded shuffling), :mod:`.joint` (placement search), :mod:`.sim`
(bit-exact shuffle simulator) and :mod:`.experiments` (scenarios and reports).
"""

from .joint import (
    JointSolveReport,
    exhaustive_optimum,
    relaxation_lower_bound,
    solve_joint,
    two_file_group_search,
)
from .placement import (
    InfeasibleSplit,
    Placement,
    PlacementError,
    placement_to_indicators,
    round_robin_placement,
    subset_file_counts,
    two_file_group_placement,
)
from .shuffle_opt import (
    CCDC,
    CDC,
    ShuffleLoadPlan,
    build_ccdc_flow_lp,
    build_cdc_flow_lp,
    count_lp_dimensions,
    exact_placement_expected_load,
    expected_load,
    placement_expected_load,
    shuffle_plan,
)
from .sim import DecodingError, build_schedule, execute_and_verify, map_phase, simulate
from .system import (
    ConfigError,
    SystemConfig,
    enumerate_worker_subsets,
    job_probability,
    zipf_popularity,
)

__version__ = "0.1.0"
