"""Acceptance criteria, one test each, at the stated tolerances.

Every test appends one ``CRITERION n: PASS|FAIL`` line (printed in the
terminal summary). The two finest sweep resolutions (dx = 20, 16 m) run only
with ``TIDALDRAG_EXTENDED=1``; without it criteria 6 and 7 are evaluated on
the dx = 320..40 subset and their lines say so.
"""
import math
import time

import numpy as np
import pytest
from scipy import integrate, optimize

from conftest import CRITERIA_LINES, EXTENDED
from tidaldrag import correction as corr
from tidaldrag import lmadt
from tidaldrag.correction import CellGeometry, TurbineSpec, VelocityModel
from tidaldrag.swe import SimConfig, Solver, sweep
from tidaldrag.swe.sweep import calibrate, channel_summary, resolution_sweep, turbine_run
from tidaldrag.mesh import build_channel_mesh

G, RHO = 9.81, 1000.0
CI_DX = (320.0, 160.0, 80.0, 40.0)
DX = CI_DX + ((20.0, 16.0) if EXTENDED else ())
SCOPE = "" if EXTENDED else " [CI subset dx=320..40; dx=20,16 need TIDALDRAG_EXTENDED=1]"
TURBINE = sweep.DEFAULT_TURBINE
ALL_RUNS = []  # every turbine row computed here, for criterion 9


def record(n, ok, detail):
    CRITERIA_LINES.append(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def check(n, failures, detail):
    ok = record(n, not failures, detail if not failures else "; ".join(failures))
    assert ok, "; ".join(failures)


# --- fixtures: the sweeps are shared by criteria 6, 7 and 9 ---------------------


@pytest.fixture(scope="session")
def sweeps():
    out, times = {}, {}
    for variant in ("square", "triangle"):
        for mode in ("none", "corrected"):
            start = time.perf_counter()
            rows = resolution_sweep(SimConfig(), DX, variant, mode, VelocityModel.CELL_CONSTANT)
            times[variant, mode] = time.perf_counter() - start
            out[variant, mode] = rows
            ALL_RUNS.extend(r for r in rows if r.error is None)
    return out, times


# --- 1-4: analytic --------------------------------------------------------------


def seven_equation_residuals(u0, Ct, eps, At, sol):
    """The disc equations evaluated from scratch with eta4 = 0 as datum."""
    F = 0.5 * RHO * At * Ct * u0 * u0
    u1, u3, u4, A3 = sol.u1, sol.u3, sol.u4, sol.A3
    eta4 = 0.0
    eta0 = sol.eta0_minus_eta4
    eta1 = eta0 + (u0 * u0 - u1 * u1) / (2 * G)
    eta2 = eta1 - sol.eta1_minus_eta2
    # channel-wide equations per unit channel area, so eps = 0 stays finite
    a3 = eps * A3 / At
    head = 0.5 * u0 * u0
    return [
        abs(At * u1 - A3 * u3) / (At * u0),
        abs(u0 - a3 * u3 - (1 - a3) * u4) / u0,
        abs(F * eps / At - (RHO * u0**2 - a3 * RHO * u3**2 - (1 - a3) * RHO * u4**2 + RHO * G * (eta0 - eta4)))
        / (RHO * u0 * u0 * (eps if eps > 0 else 1.0)),
        abs(F - RHO * G * At * (eta1 - eta2)) / (RHO * At * u0 * u0),
        abs(head + G * eta0 - 0.5 * u1 * u1 - G * eta1) / head,
        abs(0.5 * u1 * u1 + G * eta2 - 0.5 * u3 * u3 - G * eta4) / head,
        abs(head + G * eta0 - 0.5 * u4 * u4 - G * eta4) / head,
    ]


def test_criterion_1_lmadt_consistency():
    start = time.perf_counter()
    worst, failures = 0.0, []
    for Ct in np.round(np.arange(0.1, 0.95, 0.1), 2):
        for eps in np.round(np.arange(0.0, 0.31, 0.05), 2):
            p = lmadt.DiscProblem(3.055, float(Ct), float(eps), At=201.06)
            res = seven_equation_residuals(p.u0, p.Ct, p.epsilon, p.At, lmadt.solve(p))
            worst = max(worst, max(res))
    limit = max(
        abs(lmadt.solve(lmadt.DiscProblem(1.0, Ct, 1e-6)).u1 - 0.5 * (1 + math.sqrt(1 - Ct)))
        for Ct in np.linspace(0.0, 0.9, 91)
    )
    elapsed = time.perf_counter() - start
    if worst >= 1e-10:
        failures.append(f"max residual {worst:.2e} >= 1e-10")
    if limit >= 1e-4:
        failures.append(f"limit error {limit:.2e} >= 1e-4")
    if elapsed >= 5.0:
        failures.append(f"runtime {elapsed:.1f} s >= 5 s")
    check(1, failures, f"max residual {worst:.1e}, zero-blockage limit error {limit:.1e}, {elapsed:.2f} s")


def test_criterion_2_betz_limit():
    # independent maximisation of the closed-form power coefficient
    def cp(ct):
        return 0.5 * (1 + math.sqrt(1 - ct)) * ct

    best = optimize.minimize_scalar(lambda c: -cp(c), bounds=(0.0, 1.0), method="bounded",
                                    options={"xatol": 1e-12})
    ct_lib, cp_lib = lmadt.max_power_coefficient()
    failures = []
    for name, ct, val in (("library", ct_lib, cp_lib), ("oracle", best.x, cp(best.x))):
        if abs(ct - 8 / 9) > 1e-6 or abs(val - 16 / 27) > 1e-9:
            failures.append(f"{name}: Ct={ct:.9f} Cp={val:.12f}")
    _, cp_at = lmadt.power_zero_blockage(lmadt.DiscProblem(1.0, ct_lib))
    if abs(cp_at - cp_lib) > 1e-12:
        failures.append("power_zero_blockage disagrees with max_power_coefficient")
    check(2, failures, f"Ct={ct_lib:.9f} Cp={cp_lib:.12f}")


def test_criterion_3_turbine_speed():
    u1 = lmadt.u1_zero_blockage(3.055, 0.6)
    check(3, [] if abs(u1 - 2.49) <= 0.01 else [f"u1={u1:.4f}"], f"u1={u1:.4f} m/s")


def oracle_force(variant, ct, A, H, dy, u0):
    """Model force of the drag area, computed without the library's speed relations."""
    k = A * ct / (H * dy)
    if variant == "square":
        return RHO * A * ct * (u0 / (1 + 0.5 * k)) ** 2
    if variant == "constant":
        return RHO * A * ct * (u0 / (1 + 2 * k / 3)) ** 2
    u_end = u0 / (1 + k)

    def integrand(y):
        u = u0 + (u_end - u0) * y / dy
        return (2 * A * y / dy**2) * RHO * ct * u * u

    return integrate.quad(integrand, 0.0, dy, epsabs=0, epsrel=1e-13)[0]


def test_criterion_4_force_equality():
    rng = np.random.default_rng(20240917)
    start = time.perf_counter()
    worst, count = 0.0, 0
    while count < 1000:
        Ct = rng.uniform(0.0, 0.99)
        At = rng.uniform(1.0, 2000.0)
        H = rng.uniform(2.0, 100.0)
        dy = rng.uniform(1.0, 500.0)
        aspect = rng.uniform(0.2, 5.0)
        p = At * Ct / (H * dy)
        if p > 0.75:  # outside the triangle/constant solvable range; draw again
            continue
        count += 1
        target = 0.5 * RHO * At * Ct
        t = TurbineSpec(At, Ct)
        cells = {
            "square": CellGeometry.square(dy, H),
            "constant": CellGeometry.triangle(0.5 * aspect * dy * dy, dy, H, VelocityModel.CELL_CONSTANT),
            "linear": CellGeometry.triangle(0.5 * aspect * dy * dy, dy, H, VelocityModel.PIECEWISE_LINEAR),
        }
        for variant, cell in cells.items():
            ct = corr.correct(t, cell).ct
            F = oracle_force(variant, ct, cell.A, H, dy, 1.0)
            if target > 0:
                worst = max(worst, abs(F - target) / target)
            elif F != 0:
                worst = math.inf
    elapsed = time.perf_counter() - start
    failures = []
    if worst >= 1e-8:
        failures.append(f"max relative force error {worst:.2e}")
    if elapsed >= 10.0:
        failures.append(f"runtime {elapsed:.1f} s >= 10 s")
    check(4, failures, f"1000 configurations x 3 variants, max relative error {worst:.1e}, {elapsed:.2f} s")


# --- 5-10: channel simulations ------------------------------------------------------


def test_criterion_5_channel_calibration():
    mesh = build_channel_mesh(dx=80.0)
    start = time.perf_counter()
    with Solver(SimConfig(), mesh) as solver:
        state = solver.run_to_steady()
    elapsed = time.perf_counter() - start
    s = channel_summary(state, mesh)
    failures = []
    for name, value, target, tol in (("mid speed", s.mid_speed, 3.055, 0.02),
                                     ("level drop", s.level_drop, 0.9, 0.10),
                                     ("downstream speed", s.downstream_speed, 3.12, 0.02)):
        if abs(value / target - 1) > tol:
            failures.append(f"{name} {value:.4f} vs {target} +-{tol:.0%}")
    if elapsed >= 300:
        failures.append(f"runtime {elapsed:.0f} s")
    check(5, failures, f"mid {s.mid_speed:.4f} m/s, level drop {s.level_drop:.3f} m, "
                       f"downstream {s.downstream_speed:.4f} m/s, {elapsed:.0f} s")


def test_criterion_6_square_cell_speed(sweeps):
    rows = sweeps[0]["square", "none"]
    elapsed = sweeps[1]["square", "none"]
    failures = [f"dx={r.dx:g}: {r.error}" for r in rows if r.error]
    errors = []
    for r in rows:
        if r.error:
            continue
        # uncorrected square cell: u1 = u0 / (1 + ct dx / (2 H)) with ct = At Ct / (2 dx^2)
        ct = TURBINE.drag_product() / (2 * r.dx * r.dx)
        depth = calibrate(SimConfig(), r.dx).depth_ref
        predicted = r.u0_ref / (1 + ct * r.dx / (2 * depth))
        err = r.u_cell / predicted - 1
        errors.append(f"{r.dx:g}:{err:+.4f}")
        if abs(err) > 0.03:
            failures.append(f"dx={r.dx:g} speed {r.u_cell:.4f} vs predicted {predicted:.4f}")
    speeds = [r.u_cell for r in rows]
    if not all(b < a for a, b in zip(speeds, speeds[1:])):
        failures.append(f"cell speed not strictly decreasing: {speeds}")
    budget = 7200 if EXTENDED else 900
    if elapsed > budget:
        failures.append(f"sweep took {elapsed:.0f} s > {budget} s")
    check(6, failures, f"relative errors {' '.join(errors)}; sweep {elapsed:.0f} s{SCOPE}")


def test_criterion_7_force_ratio(sweeps):
    data = sweeps[0]
    failures, notes = [], []
    for variant in ("square", "triangle"):
        un, co = data[variant, "none"], data[variant, "corrected"]
        failures += [f"{variant} dx={r.dx:g}: {r.error}" for r in un + co if r.error]
        ratios = [r.force_ratio for r in un]
        if not all(b < a for a, b in zip(ratios, ratios[1:])):
            failures.append(f"{variant} uncorrected ratio not decreasing: {np.round(ratios, 4).tolist()}")
        if EXTENDED:
            finest = un[-1]
            if not finest.force_ratio < 0.85:
                failures.append(f"{variant} uncorrected ratio at dx={finest.dx:g} is {finest.force_ratio:.4f}, not < 0.85")
        bad = [f"{r.dx:g}:{r.force_ratio:.4f}" for r in co if not 0.95 <= r.force_ratio <= 1.05]
        if bad:
            failures.append(f"{variant} corrected outside [0.95, 1.05] at {bad}")
        s_un, s_co = sweep.force_ratio_spread(un), sweep.force_ratio_spread(co)
        if not s_co * 4 <= s_un:
            failures.append(f"{variant} spread ratio {s_un / s_co:.2f} < 4")
        notes.append(f"{variant}: uncorrected {ratios[0]:.4f}..{ratios[-1]:.4f}, corrected "
                     f"{min(r.force_ratio for r in co):.4f}..{max(r.force_ratio for r in co):.4f}, "
                     f"spread ratio {s_un / s_co:.1f}")
    scope = SCOPE.replace("]", "; 0.85 threshold at dx=16 not evaluated]") if SCOPE else ""
    check(7, failures, "; ".join(notes) + scope)


def test_criterion_8_triangle_orientation():
    forces = []
    for orientation in range(4):
        row, _ = turbine_run(SimConfig(), 80.0, "triangle", "corrected", VelocityModel.PIECEWISE_LINEAR,
                             orientation=orientation)
        ALL_RUNS.append(row)
        forces.append(row.f_applied)
    change = (max(forces) - min(forces)) / min(forces)
    failures = [] if change < 0.03 else [f"F_applied varies by {change:.2%}"]
    check(8, failures, f"F_applied {', '.join(f'{f:.5g}' for f in forces)} N, max change {change:.2%}")


def test_criterion_10_determinism(tmp_path):
    blobs = []
    for workers in (1, 2, 8):
        row, _ = turbine_run(SimConfig(workers=workers), 80.0, "square", "none")
        ALL_RUNS.append(row)
        path = tmp_path / f"w{workers}.csv"
        sweep.write_sweep_csv([row], path)
        blobs.append(path.read_bytes())
    same = blobs[0] == blobs[1] == blobs[2]
    check(10, [] if same else ["CSV rows differ between worker counts"],
          f"dx=80 rows identical for 1, 2, 8 workers ({len(blobs[0])} bytes)")


def test_criterion_9_power_ordering(sweeps):
    # runs last in this module so it sees the orientation and determinism runs too
    failures = []
    for r in ALL_RUNS:
        tol = 1e-6 * r.p_total
        if not (r.p_turbine <= r.p_cell + tol and r.p_cell <= r.p_total + tol):
            failures.append(f"dx={r.dx:g}: {r.p_turbine:.6g} / {r.p_cell:.6g} / {r.p_total:.6g}")
        if abs(r.p_total - r.f_applied * r.u0_ref) > tol:
            failures.append(f"dx={r.dx:g}: P_total != F u0_ref")
    check(9, failures, f"P_turbine <= P_cell <= P_total in all {len(ALL_RUNS)} turbine runs")
