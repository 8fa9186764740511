"""Microscopic simulator for a signalized intersection with a short shared
through/right lane, and a demand-scenario sweep harness for comparing
geometric fixes against the original layout."""

from .demand import (
    ArrivalEvent,
    ArrivalSchedule,
    EntranceFlows,
    LaneIntent,
    Reassignment,
    all_codes,
    decode_scenario,
    encode_scenario,
    flows_for_code,
    generate_schedule,
    nw_flows,
    retarget_schedule,
)
from .engine import (
    ActuatedController,
    RunResult,
    ScriptedController,
    SimConfig,
    Simulation,
    run_simulation,
)
from .experiment import (
    DESIGN_KEYS,
    CompareResult,
    ComparisonRow,
    SweepSpec,
    compare,
    emit_csv,
    load_sweep_config,
    run_one,
    run_sweep,
)
from .metrics import DelaySection, LaneMetrics, QueueCounter, record_traversal, summarize, update_queue
from .network import (
    DesignVariant,
    Entrance,
    GeometryParams,
    IntersectionDesign,
    LaneRole,
    LaneSegment,
    Movement,
    build_design,
    receiving_lane,
    storage_capacity,
)
from .signals import (
    ControllerConfig,
    ControllerState,
    Indication,
    PhaseConfig,
    controller_step,
    default_controller_config,
    indication_for,
    initial_state,
)
from .traffic import (
    CarFollowingParams,
    DivergeOutcome,
    GapAcceptanceParams,
    GapDecision,
    Vehicle,
    VehicleState,
    detector_scan,
    diverge_attempt,
    follow_update,
    gap_accept,
)

__version__ = "0.1.0"
