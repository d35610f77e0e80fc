"""Cooperative-game under-frequency load shedding.

Estimate the generation deficit from the initial post-disturbance ROCOF,
then split it across candidate load buses in proportion to their
equivalent Shapley values.  A deterministic COI frequency simulator
generates coalition characteristic functions and validates recovery.
"""

from .coalition_game import (
    Allocation,
    CoalitionGame,
    ShapleyResult,
    enumerate_coalitions,
    equivalent_shapley,
    in_core,
    read_charfun_file,
    shapley_permutation_oracle,
    shapley_values,
    write_charfun_file,
)
from .errors import (
    CapacityError,
    GridShedError,
    InfeasiblePlanError,
    ParseError,
    ValidationError,
)
from .fixtures import wecc9_charfun_path, wecc9_system_path
from .frequency_dynamics import (
    DisturbanceEstimate,
    EventSchedule,
    FrequencyTrace,
    LoadShed,
    LoadStep,
    MachineOutage,
    analytic_initial_rocof,
    characteristic_functions,
    coi_frequency,
    disturbance_power,
    estimate_disturbance,
    initial_rocof,
    simulate,
    write_trace_csv,
)
from .grid_model import (
    LoadPoint,
    Machine,
    PowerSystem,
    load_system,
    save_system,
    serialize_system,
    total_inertia,
)
from .ufls_planner import (
    PlanEntry,
    SheddingPlan,
    allocate,
    candidate_caps,
    default_trigger_threshold,
    distribution_factors,
    format_plan_table,
    plan_from_measurement,
    write_plan_csv,
)

__version__ = "0.1.0"
