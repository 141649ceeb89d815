"""Resolution-consistent turbine drag coefficients and idealised channel experiments.

Subcommands: ``correct``, ``lmadt``, ``retab``, ``simulate`` and ``sweep``.
Every number printed is the value returned by the library call; nothing is
recomputed here.

Exit codes: 0 success, 2 invalid input, 3 no physical solution, 4 solver
failure (including any failed sweep row).
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import correction as corr
from . import lmadt
from .errors import NoSolution, SolverError, TidalDragError, ValidationError
from .mesh import Variant, build_channel_mesh
from .swe import solver as swe
from .swe import sweep

EXIT_OK, EXIT_VALIDATION, EXIT_NO_SOLUTION, EXIT_SOLVER = 0, 2, 3, 4


# --- run configuration -------------------------------------------------------


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _words(text):
    return tuple(t for t in text.replace(",", " ").split())


def _optional_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


@dataclass(frozen=True)
class TurbineSection:
    diameter: float | None = 16.0
    at: float | None = None
    ct: float = 0.6
    as_: float = 0.0
    cs: float = 0.0

    def spec(self):
        support = corr.SupportStructure(self.as_, self.cs) if self.as_ or self.cs else None
        if self.at is not None:
            return corr.TurbineSpec(self.at, self.ct, support)
        if self.diameter is None:
            raise ValidationError("[turbine] needs either diameter or at")
        return corr.TurbineSpec.from_diameter(self.diameter, self.ct, support)


@dataclass(frozen=True)
class ChannelSection:
    length: float = 10000.0
    width: float = 1000.0
    depth_at_rest: float = 25.0
    cb: float = 0.0025
    inflow_speed: float = 3.0
    g: float = 9.81
    rho: float = 1000.0


@dataclass(frozen=True)
class SolverSection:
    cfl: float = 0.9
    steady_tol: float = 1e-8
    max_steps: int = 1_000_000
    reconstruction: str = "linear"
    reconstruction_radius: float | None = 10.0
    flux: str = "roe-lowfroude"
    flather_reference: str = "discharge"
    workers: int = 1
    check_every: int = 20


@dataclass(frozen=True)
class SweepSection:
    dx: tuple = sweep.SWEEP_RESOLUTIONS
    variants: tuple = ("square", "triangle")
    modes: tuple = ("none", "corrected")
    velocity_model: str = "constant"
    orientation: int = 0


@dataclass(frozen=True)
class OutputSection:
    directory: str = "."
    prefix: str = "sweep"


# parser for each key, by section; a key missing here is rejected
_PARSERS = {
    "turbine": {"diameter": _optional_float, "at": _optional_float, "ct": float, "as": float, "cs": float},
    "channel": {k: float for k in ("length", "width", "depth_at_rest", "cb", "inflow_speed", "g", "rho")},
    "solver": {
        "cfl": float,
        "steady_tol": float,
        "max_steps": int,
        "reconstruction": str,
        "reconstruction_radius": _optional_float,
        "flux": str,
        "flather_reference": str,
        "workers": int,
        "check_every": int,
    },
    "sweep": {"dx": _floats, "variants": _words, "modes": _words, "velocity_model": str, "orientation": int},
    "output": {"directory": str, "prefix": str},
}


@dataclass(frozen=True)
class RunConfig:
    """Declarative experiment description, loaded from an INI file."""

    turbine: TurbineSection = field(default_factory=TurbineSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    solver: SolverSection = field(default_factory=SolverSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    output: OutputSection = field(default_factory=OutputSection)

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_mapping(cls, sections):
        """Build from ``{section: {key: text}}``; unknown sections or keys are errors."""
        parts = {}
        for name, values in sections.items():
            if name not in _PARSERS:
                raise ValidationError(f"unknown config section [{name}]; expected one of {sorted(_PARSERS)}")
            parsed = {}
            for key, text in values.items():
                if key not in _PARSERS[name]:
                    raise ValidationError(f"unknown key '{key}' in [{name}]; expected one of {sorted(_PARSERS[name])}")
                try:
                    parsed["as_" if key == "as" else key] = _PARSERS[name][key](text)
                except ValueError:
                    raise ValidationError(f"[{name}] {key} = {text!r} is not a valid value") from None
            parts[name] = parsed
        defaults = cls.__dataclass_fields__
        return cls(**{n: type(defaults[n].default_factory())(**v) for n, v in parts.items()})

    @classmethod
    def load(cls, path):
        parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
        parser.optionxform = str  # keys are case sensitive
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ValidationError(f"{path}: {exc}") from None
        return cls.from_mapping({s: dict(parser[s]) for s in parser.sections()})

    def validate(self):
        """Raise ValidationError unless every value is admissible."""
        self.turbine.spec()
        self.sim_config()
        for v in self.sweep.variants:
            Variant(_choice(v, [x.value for x in Variant], "sweep variants"))
        for m in self.sweep.modes:
            _choice(m, [x.value for x in swe.CorrectionMode], "sweep modes")
        _choice(self.sweep.velocity_model, [x.value for x in corr.VelocityModel], "sweep velocity_model")
        if not self.sweep.dx or any(d <= 0 for d in self.sweep.dx):
            raise ValidationError("sweep dx list must be non-empty and positive")
        if self.sweep.orientation not in (0, 1, 2, 3):
            raise ValidationError("sweep orientation must be 0, 1, 2 or 3")
        if not (self.channel.length > 0 and self.channel.width > 0):
            raise ValidationError("channel length and width must be positive")
        if not self.output.prefix:
            raise ValidationError("output prefix must not be empty")

    def sim_config(self, turbine=None):
        c, s = self.channel, self.solver
        _choice(s.reconstruction, [x.value for x in swe.Reconstruction], "solver reconstruction")
        return swe.SimConfig(
            depth_at_rest=c.depth_at_rest,
            cb=c.cb,
            inflow_speed=c.inflow_speed,
            g=c.g,
            rho=c.rho,
            cfl=s.cfl,
            steady_tol=s.steady_tol,
            max_steps=s.max_steps,
            turbine=turbine,
            reconstruction=swe.Reconstruction(s.reconstruction),
            reconstruction_radius=s.reconstruction_radius,
            flux=s.flux,
            flather_reference=s.flather_reference,
            workers=s.workers,
            check_every=s.check_every,
        )


def _choice(value, allowed, what):
    if value not in allowed:
        raise ValidationError(f"{what}: {value!r} is not one of {allowed}")
    return value


def _section_replace(section, **changes):
    changes = {k: v for k, v in changes.items() if v is not None}
    return type(section)(**{**asdict(section), **changes}) if changes else section


# --- output helpers ---------------------------------------------------------


def _clean(value):
    """JSON-safe copy: NaN and infinities become null."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def _emit(args, payload, lines):
    if args.json:
        print(json.dumps(_clean(payload), indent=2, allow_nan=False))
    else:
        for line in lines:
            print(line)


_NUM = {"type": ["number", "null"]}
_ROW = {
    "type": "object",
    "required": ["dx_m", "u_cell_ms", "f_applied_n", "f_theoretical_n", "force_ratio", "p_cell_w", "p_turbine_w", "error"],
    "properties": {
        **{k: _NUM for k in sweep.SWEEP_HEADER},
        "p_total_w": _NUM,
        "u0_ref_ms": _NUM,
        "u_cell_predicted_ms": _NUM,
        "steps": {"type": "integer"},
        "error": {"type": ["string", "null"]},
    },
}

# JSON Schema (draft 2020-12) of each subcommand's --json output
OUTPUT_SCHEMAS = {
    "correct": {
        "type": "object",
        "required": ["ct", "ct_standard", "Ct_modified", "u1_over_u0", "u0", "force_n"],
        "properties": {k: {"type": "number"} for k in ("ct", "ct_standard", "Ct_modified", "u1_over_u0", "u0", "force_n")},
        "additionalProperties": False,
    },
    "lmadt": {
        "type": "object",
        "required": ["u1", "u3", "u4", "A3", "force_n", "power_turbine_w", "power_total_w", "residuals"],
        "properties": {
            **{k: {"type": "number"} for k in ("u1", "u3", "u4", "A3", "eta0_minus_eta4", "eta1_minus_eta2")},
            **{k: {"type": "number"} for k in ("force_n", "power_turbine_w", "power_total_w", "max_residual")},
            "residuals": {"type": "object", "additionalProperties": {"type": "number"}},
        },
        "additionalProperties": False,
    },
    "retab": {
        "type": "object",
        "required": ["output", "rows"],
        "properties": {
            "output": {"type": ["string", "null"]},
            "rows": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["speed_upstream_ms", "ct", "speed_cell_ms"],
                    "properties": {k: {"type": "number"} for k in ("speed_upstream_ms", "ct", "speed_cell_ms")},
                    "additionalProperties": False,
                },
            },
        },
        "additionalProperties": False,
    },
    "simulate": {
        "type": "object",
        "required": ["dx_m", "variant", "mode", "calibration"],
        "properties": {
            "dx_m": {"type": "number"},
            "variant": {"type": "string"},
            "mode": {"type": "string"},
            "calibration": {
                "type": "object",
                "required": ["u0_ref_ms", "depth_ref_m", "mid_speed_ms", "downstream_speed_ms", "level_drop_m", "steps"],
            },
            "turbine": {"anyOf": [_ROW, {"type": "null"}]},
            "history": {"type": ["string", "null"]},
        },
        "additionalProperties": False,
    },
    "sweep": {
        "type": "object",
        "required": ["runs", "summary"],
        "properties": {
            "runs": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["variant", "mode", "csv", "rows", "spread"],
                    "properties": {
                        "variant": {"type": "string"},
                        "mode": {"type": "string"},
                        "csv": {"type": "string"},
                        "rows": {"type": "array", "items": _ROW},
                        "spread": _NUM,
                    },
                },
            },
            "summary": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["variant", "spread_uncorrected", "spread_corrected", "spread_ratio"],
                    "properties": {
                        "variant": {"type": "string"},
                        "spread_uncorrected": _NUM,
                        "spread_corrected": _NUM,
                        "spread_ratio": _NUM,
                    },
                },
            },
        },
        "additionalProperties": False,
    },
}


def _row_dict(row: sweep.SweepRow):
    values = dict(zip(sweep.SWEEP_HEADER, (row.dx, row.u_cell, row.f_applied, row.f_theoretical,
                                          row.force_ratio, row.p_cell, row.p_turbine)))
    values.update(
        p_total_w=row.p_total,
        u0_ref_ms=row.u0_ref,
        u_cell_predicted_ms=row.u_cell_predicted,
        steps=row.steps,
        error=row.error,
    )
    return values


# --- geometry flags ---------------------------------------------------------


def _add_turbine_flags(p):
    size = p.add_mutually_exclusive_group(required=True)
    size.add_argument("--diameter", type=float, help="rotor diameter [m]; At = pi D^2 / 4")
    size.add_argument("--at", type=float, help="turbine cross-section At [m^2]")
    p.add_argument("--as", dest="as_", type=float, default=0.0, help="support structure frontal area [m^2]")
    p.add_argument("--cs", type=float, default=0.0, help="support structure drag coefficient")


def _add_cell_flags(p):
    p.add_argument("--shape", choices=[s.value for s in corr.CellShape], default="square")
    p.add_argument("--velocity-model", choices=[v.value for v in corr.VelocityModel], default="constant")
    p.add_argument("--dy", type=float, required=True, help="cross-stream width of the drag area [m]")
    p.add_argument("--dxmax", type=float, help="largest streamwise chord [m] (derived when omitted)")
    p.add_argument("--area", type=float, help="drag area [m^2] (derived when omitted)")
    p.add_argument("--depth", type=float, required=True, help="water depth H [m]")


def _turbine(args, thrust):
    support = corr.SupportStructure(args.as_, args.cs) if args.as_ or args.cs else None
    if args.at is not None:
        return corr.TurbineSpec(args.at, thrust, support)
    return corr.TurbineSpec.from_diameter(args.diameter, thrust, support)


def _cell(args):
    dy = args.dy
    if args.shape == corr.CellShape.SQUARE_ALIGNED.value:
        area = dy * dy if args.area is None else args.area
        dxmax = dy if args.dxmax is None else args.dxmax
    else:
        if args.area is None and args.dxmax is None:
            raise ValidationError("triangle cells need --area or --dxmax")
        area = 0.5 * dy * args.dxmax if args.area is None else args.area
        dxmax = 2.0 * area / dy if args.dxmax is None else args.dxmax
    return corr.CellGeometry(area, dy, dxmax, args.depth, args.shape, args.velocity_model)


# --- subcommands ------------------------------------------------------------


def cmd_correct(args):
    turbine = _turbine(args, args.ct)
    cell = _cell(args)
    result = (corr.uncorrected if args.uncorrected else corr.correct)(turbine, cell, rho=args.rho)
    payload = {
        "ct": result.ct,
        "ct_standard": corr.standard_ct(turbine, cell),
        "Ct_modified": result.Ct_modified,
        "u1_over_u0": result.u1_over_u0,
        "u0": args.u0,
        "force_n": result.force_at(args.u0),
    }
    _emit(args, payload, [f"{k:12s} {v!r}" for k, v in payload.items()])
    return EXIT_OK


def cmd_lmadt(args):
    problem = lmadt.DiscProblem(args.u0, args.ct, args.epsilon, args.at, args.rho)
    constants = lmadt.PhysicalConstants(rho=args.rho, g=args.g)
    sol = lmadt.solve(problem, constants)
    res = lmadt.residuals(problem, sol, constants)
    payload = {
        "u1": sol.u1,
        "u3": sol.u3,
        "u4": sol.u4,
        "A3": sol.A3,
        "eta0_minus_eta4": sol.eta0_minus_eta4,
        "eta1_minus_eta2": sol.eta1_minus_eta2,
        "force_n": sol.force,
        "power_turbine_w": sol.power_turbine,
        "power_total_w": sol.power_total,
        "residuals": res,
        "max_residual": max(res.values()),
    }
    lines = [f"{k:16s} {v!r}" for k, v in payload.items() if k != "residuals"]
    lines += ["residuals (relative):"] + [f"  {k:20s} {v:.3e}" for k, v in res.items()]
    _emit(args, payload, lines)
    return EXIT_OK


def cmd_retab(args):
    curve = corr.ThrustCurve.read_csv(args.curve)
    cell = _cell(args)
    turbine = _turbine(args, curve.cts[0])
    out = corr.retabulate_thrust_curve(curve, turbine, cell)
    if args.output:
        out.write_csv(args.output)
    rows = [
        {"speed_upstream_ms": u0, "ct": ct, "speed_cell_ms": u1}
        for u0, ct, u1 in zip(curve.speeds, curve.cts, out.speeds)
    ]
    lines = [f"{'u0_ms':>12s} {'ct':>10s} {'u_cell_ms':>12s}"]
    lines += [f"{r['speed_upstream_ms']:12.6g} {r['ct']:10.6g} {r['speed_cell_ms']:12.6g}" for r in rows]
    if args.output:
        lines.append(f"wrote {args.output}")
    _emit(args, {"output": args.output, "rows": rows}, lines)
    return EXIT_OK


def _load_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    solver = _section_replace(cfg.solver, workers=args.workers, steady_tol=args.steady_tol, max_steps=args.max_steps)
    out = _section_replace(cfg.output, directory=getattr(args, "output_dir", None), prefix=getattr(args, "prefix", None))
    return RunConfig(cfg.turbine, cfg.channel, solver, cfg.sweep, out)


def cmd_simulate(args):
    cfg = _load_config(args)
    variant = args.variant or cfg.sweep.variants[0]
    dx = args.dx if args.dx is not None else cfg.sweep.dx[0]
    vm = args.velocity_model or cfg.sweep.velocity_model
    orientation = cfg.sweep.orientation if args.orientation is None else args.orientation
    length, width = cfg.channel.length, cfg.channel.width
    sim = cfg.sim_config()
    cal = sweep.calibrate(sim, dx, variant, orientation, length, width)
    mesh = build_channel_mesh(length, width, dx, variant=variant, orientation=orientation)
    summary = sweep.channel_summary(cal.state, mesh)
    calibration = {
        "u0_ref_ms": cal.u0_ref,
        "depth_ref_m": cal.depth_ref,
        "mid_speed_ms": summary.mid_speed,
        "downstream_speed_ms": summary.downstream_speed,
        "level_drop_m": summary.level_drop,
        "steps": cal.state.step,
    }
    lines = [f"calibration dx={dx:g} m, {variant}: " + ", ".join(f"{k}={v:.6g}" for k, v in calibration.items())]
    state, row = cal.state, None
    if args.mode != "off":
        row, state = sweep.turbine_run(sim, dx, variant, args.mode, vm, cfg.turbine.spec(), orientation, length, width)
        lines.append(f"turbine ({args.mode}, {vm}):")
        lines += [f"  {k:22s} {v!r}" for k, v in _row_dict(row).items()]
    if args.history:
        sweep.write_history_csv(state.history, args.history)
        lines.append(f"wrote {args.history}")
    payload = {
        "dx_m": float(dx),
        "variant": variant,
        "mode": args.mode,
        "calibration": calibration,
        "turbine": None if row is None else _row_dict(row),
        "history": args.history,
    }
    _emit(args, payload, lines)
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load_config(args)
    if args.dx:
        cfg = RunConfig(cfg.turbine, cfg.channel, cfg.solver, _section_replace(cfg.sweep, dx=tuple(args.dx)), cfg.output)
    sim = cfg.sim_config()
    outdir = Path(cfg.output.directory)
    outdir.mkdir(parents=True, exist_ok=True)
    runs, lines, failed = [], [], False
    spreads = {}
    for variant in cfg.sweep.variants:
        vm = cfg.sweep.velocity_model if variant == Variant.ARBITRARY_TRIANGLE.value else "constant"
        for mode in cfg.sweep.modes:
            rows = sweep.resolution_sweep(
                sim, sorted(cfg.sweep.dx, reverse=True), variant, mode, vm,
                cfg.turbine.spec(), cfg.sweep.orientation, cfg.channel.length, cfg.channel.width,
            )
            path = outdir / f"{cfg.output.prefix}_{variant}_{mode}.csv"
            sweep.write_sweep_csv(rows, path)
            spread = sweep.force_ratio_spread(rows)
            spreads[variant, mode] = spread
            failed |= any(r.error for r in rows)
            runs.append({"variant": variant, "mode": mode, "csv": str(path),
                         "rows": [_row_dict(r) for r in rows], "spread": spread})
            lines.append(f"{variant}/{mode}: wrote {path}")
            for r in rows:
                status = r.error or f"ratio={r.force_ratio:.4f} u_cell={r.u_cell:.4f}"
                lines.append(f"  dx={r.dx:g} {status}")
    summary = []
    for variant in cfg.sweep.variants:
        un = spreads.get((variant, "none"), math.nan)
        co = spreads.get((variant, "corrected"), math.nan)
        ratio = un / co if co > 0 else (math.inf if un > 0 else math.nan)
        summary.append({"variant": variant, "spread_uncorrected": un, "spread_corrected": co, "spread_ratio": ratio})
        lines.append(f"{variant}: force-ratio spread uncorrected={un:.4g} corrected={co:.4g} ratio={ratio:.3g}")
    _emit(args, {"runs": runs, "summary": summary}, lines)
    return EXIT_SOLVER if failed else EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="tidaldrag", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("correct", help="standard and corrected enhanced drag coefficient for one drag area")
    p.add_argument("--ct", type=float, required=True, help="upstream-referenced thrust coefficient")
    _add_turbine_flags(p)
    _add_cell_flags(p)
    p.add_argument("--u0", type=float, default=3.0, help="upstream speed for the force report [m/s]")
    p.add_argument("--rho", type=float, default=lmadt.DEFAULT_CONSTANTS.rho)
    p.add_argument("--uncorrected", action="store_true", help="report the standard coefficient instead")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("lmadt", help="actuator-disc solution at finite blockage")
    p.add_argument("--u0", type=float, required=True)
    p.add_argument("--ct", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=0.0, help="blockage ratio At/Ac")
    p.add_argument("--at", type=float, default=1.0, help="turbine cross-section [m^2]")
    p.add_argument("--rho", type=float, default=lmadt.DEFAULT_CONSTANTS.rho)
    p.add_argument("--g", type=float, default=lmadt.DEFAULT_CONSTANTS.g)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_lmadt)

    p = sub.add_parser(
        "retab",
        help="re-express an upstream-referenced thrust curve in cell speeds",
        description="Input CSV header 'speed_ms,ct'. Lookups outside the tabulated speeds clamp to the end values.",
    )
    p.add_argument("curve", help="thrust curve CSV referenced to the upstream speed")
    p.add_argument("-o", "--output", help="where to write the cell-referenced curve")
    _add_turbine_flags(p)
    _add_cell_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_retab)

    def run_flags(q):
        q.add_argument("--config", help="INI run configuration")
        q.add_argument("--workers", type=int, help="threads for the edge-flux loop")
        q.add_argument("--steady-tol", type=float)
        q.add_argument("--max-steps", type=int)
        q.add_argument("--json", action="store_true")

    p = sub.add_parser("simulate", help="calibration and one steady turbine run in the idealised channel")
    run_flags(p)
    p.add_argument("--dx", type=float, help="mesh size [m] (default: first entry of the config's sweep list)")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--mode", choices=["off"] + [m.value for m in swe.CorrectionMode], default="corrected",
                   help="'off' runs the calibration only")
    p.add_argument("--velocity-model", choices=[v.value for v in corr.VelocityModel])
    p.add_argument("--orientation", type=int, choices=range(4))
    p.add_argument("--history", help="write the convergence history CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="resolution sweep for each variant, uncorrected and corrected")
    run_flags(p)
    p.add_argument("--dx", type=float, nargs="+", help="override the config's resolution list")
    p.add_argument("--output-dir")
    p.add_argument("--prefix")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NoSolution as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except TidalDragError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
