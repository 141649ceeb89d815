"""Shallow water channel solver and resolution sweeps."""
from .solver import (
    CorrectionMode,
    Reconstruction,
    SimConfig,
    SimState,
    Solver,
    TurbineDiagnostics,
    TurbineSetup,
    drag_correction,
    flather_outflow,
    rest_state,
    run_to_steady,
    step,
    turbine_diagnostics,
)
from .sweep import (
    DEFAULT_TURBINE,
    HISTORY_HEADER,
    SWEEP_HEADER,
    SWEEP_RESOLUTIONS,
    Calibration,
    SweepRow,
    calibrate,
    force_ratio_spread,
    resolution_sweep,
    turbine_run,
    write_history_csv,
    write_sweep_csv,
)
