"""Resolution sweeps: calibration, turbine runs and the figure tables."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from ..correction import TurbineSpec, VelocityModel
from ..errors import TidalDragError
from ..mesh import Variant, build_channel_mesh
from .solver import CorrectionMode, SimConfig, SimState, Solver, TurbineSetup, turbine_diagnostics

SWEEP_RESOLUTIONS = (320.0, 160.0, 80.0, 40.0, 20.0, 16.0)
SWEEP_HEADER = ("dx_m", "u_cell_ms", "f_applied_n", "f_theoretical_n", "force_ratio", "p_cell_w", "p_turbine_w")
HISTORY_HEADER = ("step", "time_s", "residual")

DEFAULT_TURBINE = TurbineSpec.from_diameter(16.0, 0.6)


@dataclass(frozen=True)
class Calibration:
    """No-turbine steady state and the reference values taken from it."""

    dx: float
    state: SimState
    u0_ref: float  # area-weighted speed over the would-be drag cells
    depth_ref: float  # area-weighted depth over the same cells


@dataclass(frozen=True)
class SweepRow:
    dx: float
    u_cell: float
    f_applied: float
    f_theoretical: float
    force_ratio: float
    p_cell: float
    p_turbine: float
    p_total: float = math.nan
    u0_ref: float = math.nan
    u_cell_predicted: float = math.nan
    steps: int = 0
    error: str | None = None

    def csv_fields(self):
        return [repr(float(v)) for v in (self.dx, self.u_cell, self.f_applied, self.f_theoretical,
                                         self.force_ratio, self.p_cell, self.p_turbine)]


@dataclass(frozen=True)
class ChannelSummary:
    """Cross-section averages of a steady channel state."""

    mid_speed: float  # streamwise speed in the column at half length
    downstream_speed: float  # same, in the last column before the outflow
    level_drop: float  # surface level of the first column minus that of the last


def channel_summary(state: SimState, mesh) -> ChannelSummary:
    x = mesh.centroids[:, 0]
    u = state.velocity[0]
    a = mesh.areas

    def column(mask, field):
        return float(np.dot(a[mask], field[mask]) / a[mask].sum())

    mid = np.abs(x - 0.5 * mesh.length) < 0.5 * mesh.dx
    first = x < mesh.dx
    last = x > mesh.length - mesh.dx
    return ChannelSummary(
        mid_speed=column(mid, u),
        downstream_speed=column(last, u),
        level_drop=column(first, state.h) - column(last, state.h),
    )


def _mesh(dx, variant, orientation, turbine, length, width):
    return build_channel_mesh(length, width, dx, variant=variant, orientation=orientation, turbine=turbine)


_CALIBRATIONS: dict = {}


def calibrate(
    config: SimConfig, dx, variant=Variant.EMBEDDED_SQUARE, orientation=0, length=10000.0, width=1000.0
) -> Calibration:
    """Run the channel without turbine to steady state (memoised per configuration).

    The mesh is the turbine run's mesh, so the reference values are taken
    over exactly the cells that will carry the drag.
    """
    base = replace(config, turbine=None, workers=1)
    variant = Variant(variant)
    orientation = orientation if variant is Variant.ARBITRARY_TRIANGLE else 0
    key = (base, float(dx), variant, orientation, float(length), float(width))
    if key in _CALIBRATIONS:
        return _CALIBRATIONS[key]
    mesh = _mesh(dx, variant, orientation, True, length, width)
    with Solver(base, mesh) as solver:
        state = solver.run_to_steady()
    cells = list(mesh.drag_cells)
    a = mesh.areas[cells]
    cal = Calibration(
        dx=float(dx),
        state=state,
        u0_ref=float(np.dot(a, state.speed[cells]) / a.sum()),
        depth_ref=float(np.dot(a, state.h[cells]) / a.sum()),
    )
    _CALIBRATIONS[key] = cal
    return cal


def turbine_run(
    config: SimConfig,
    dx,
    variant=Variant.EMBEDDED_SQUARE,
    mode=CorrectionMode.NONE,
    velocity_model=VelocityModel.CELL_CONSTANT,
    turbine: TurbineSpec = DEFAULT_TURBINE,
    orientation=0,
    length=10000.0,
    width=1000.0,
):
    """Steady turbine run warm-started from the calibration; returns (row, state)."""
    cal = calibrate(config, dx, variant, orientation, length, width)
    mesh = _mesh(dx, variant, orientation, True, length, width)
    setup = TurbineSetup(turbine, mode, velocity_model, depth=cal.depth_ref)
    cfg = config.with_turbine(setup)
    start = SimState(cal.state.h.copy(), cal.state.hu.copy(), cal.state.hv.copy())
    with Solver(cfg, mesh) as solver:
        state = solver.run_to_steady(start)
        d = turbine_diagnostics(state, mesh, cfg, cal.u0_ref, solver)
    row = SweepRow(
        dx=float(dx),
        u_cell=d.u_cell,
        f_applied=d.f_applied,
        f_theoretical=d.f_theoretical,
        force_ratio=d.force_ratio,
        p_cell=d.p_cell,
        p_turbine=d.p_turbine,
        p_total=d.p_total,
        u0_ref=cal.u0_ref,
        u_cell_predicted=solver.correction.u1_over_u0 * cal.u0_ref,
        steps=state.step,
    )
    return row, state


def resolution_sweep(
    config: SimConfig,
    dx_list=SWEEP_RESOLUTIONS,
    variant=Variant.EMBEDDED_SQUARE,
    correction_mode=CorrectionMode.NONE,
    velocity_model=VelocityModel.CELL_CONSTANT,
    turbine: TurbineSpec = DEFAULT_TURBINE,
    orientation=0,
    length=10000.0,
    width=1000.0,
):
    """One steady turbine run per resolution, in the order given.

    A failing row is reported with its error message and NaN values; the
    sweep continues with the next resolution.
    """
    rows = []
    for dx in dx_list:
        try:
            row, _ = turbine_run(
                config, dx, variant, correction_mode, velocity_model, turbine, orientation, length, width
            )
        except TidalDragError as exc:
            nan = math.nan
            row = SweepRow(float(dx), nan, nan, nan, nan, nan, nan, error=f"{type(exc).__name__}: {exc}")
        rows.append(row)
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow(r.csv_fields())


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for step, time, res in history:
            w.writerow([step, repr(float(time)), repr(float(res))])


def force_ratio_spread(rows):
    """max minus min of the force ratio over the successful rows."""
    vals = [r.force_ratio for r in rows if r.error is None]
    return max(vals) - min(vals) if vals else math.nan
