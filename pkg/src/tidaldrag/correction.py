"""Enhanced bottom drag coefficients for turbines in drag cells.

A turbine of cross-section ``At`` and thrust coefficient ``Ct`` (defined with
the undisturbed upstream speed ``u0``) is represented by an extra quadratic
bed friction ``ct`` over a drag area ``A``.  The model only sees the local
cell speed ``u1``, which falls below ``u0`` once the cell becomes narrow
compared with the turbine's effective numerical cross-section ``dy * H``.
The corrected coefficients here restore the force ``rho At Ct u0^2 / 2``.

Dimensionless groups used throughout:

``p = At Ct / (H dy)``
    thrust-area product over the numerical cross-section (for square cells
    this is the modified thrust coefficient).
``k = A ct / (H dy)``
    drag-coefficient group of a triangular cell.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BlockedCell, InvalidCt, NonMonotoneResult, NoRealRoot, ValidationError
from .lmadt import DEFAULT_CONSTANTS

GAUSS_ORDER = 7


class CellShape(str, enum.Enum):
    SQUARE_ALIGNED = "square"
    TRIANGLE = "triangle"


class VelocityModel(str, enum.Enum):
    CELL_CONSTANT = "constant"
    PIECEWISE_LINEAR = "linear"


class ReferenceVelocity(str, enum.Enum):
    UPSTREAM = "upstream"
    CELL = "cell"


@dataclass(frozen=True)
class ThrustCurve:
    """Piecewise-linear thrust coefficient as a function of speed.

    Queries outside the tabulated range clamp to the end values.
    """

    speeds: tuple
    cts: tuple
    reference_velocity: ReferenceVelocity = ReferenceVelocity.UPSTREAM

    def __post_init__(self):
        speeds = tuple(float(s) for s in self.speeds)
        cts = tuple(float(c) for c in self.cts)
        object.__setattr__(self, "speeds", speeds)
        object.__setattr__(self, "cts", cts)
        object.__setattr__(self, "reference_velocity", ReferenceVelocity(self.reference_velocity))
        if not speeds or len(speeds) != len(cts):
            raise ValidationError("thrust curve needs matching, non-empty speed and Ct columns")
        if any(b <= a for a, b in zip(speeds, speeds[1:])):
            raise ValidationError("thrust curve speeds must be strictly increasing")
        for c in cts:
            _check_ct(c)

    @property
    def samples(self):
        return list(zip(self.speeds, self.cts))

    def __call__(self, speed):
        return float(np.interp(speed, self.speeds, self.cts))

    @classmethod
    def read_csv(cls, path, reference_velocity=ReferenceVelocity.UPSTREAM):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["speed_ms", "ct"]:
                raise ValidationError(f"{path}: expected header 'speed_ms,ct', got {header}")
            rows = [r for r in reader if r]
        try:
            speeds = [float(r[0]) for r in rows]
            cts = [float(r[1]) for r in rows]
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"{path}: malformed row ({exc})") from None
        return cls(speeds, cts, reference_velocity)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("speed_ms,ct\n")
            for s, c in self.samples:
                fh.write(f"{s!r},{c!r}\n")


@dataclass(frozen=True)
class SupportStructure:
    As: float
    Cs: float

    def __post_init__(self):
        if self.As < 0 or self.Cs < 0:
            raise ValidationError("support area and drag coefficient must be non-negative")


@dataclass(frozen=True)
class TurbineSpec:
    """Physical turbine: cross-section, thrust and optional support drag.

    ``thrust`` is either a constant ``Ct`` or an upstream-referenced
    :class:`ThrustCurve`.
    """

    At: float
    thrust: float | ThrustCurve
    support: SupportStructure | None = None

    def __post_init__(self):
        if not self.At > 0:
            raise ValidationError("turbine cross-section must be positive")
        if not isinstance(self.thrust, ThrustCurve):
            _check_ct(float(self.thrust))

    @classmethod
    def from_diameter(cls, D, thrust, support=None):
        return cls(math.pi * (0.5 * D) ** 2, thrust, support)

    def Ct(self, u0=None):
        if isinstance(self.thrust, ThrustCurve):
            if u0 is None:
                raise ValidationError("thrust curve turbines need an upstream speed to evaluate Ct")
            return self.thrust(u0)
        return float(self.thrust)

    def drag_product(self, u0=None):
        """``At Ct + As Cs``: the total drag area times coefficient."""
        extra = 0.0 if self.support is None else self.support.As * self.support.Cs
        return self.At * self.Ct(u0) + extra


@dataclass(frozen=True)
class CellGeometry:
    """Numerical drag footprint.

    ``A`` plan area, ``dy`` cross-stream width, ``dx_max`` largest streamwise
    chord, ``H`` local depth.
    """

    A: float
    dy: float
    dx_max: float
    H: float
    shape: CellShape = CellShape.SQUARE_ALIGNED
    velocity_model: VelocityModel = VelocityModel.CELL_CONSTANT

    def __post_init__(self):
        object.__setattr__(self, "shape", CellShape(self.shape))
        object.__setattr__(self, "velocity_model", VelocityModel(self.velocity_model))
        if not (self.A > 0 and self.H > 0):
            raise ValidationError("cell area and depth must be positive")
        if not self.dy > 1e-9 * math.sqrt(self.A):
            raise ValidationError("degenerate drag cell: cross-stream width is (near) zero")
        if self.shape is CellShape.TRIANGLE:
            if not math.isclose(self.A / self.dy, 0.5 * self.dx_max, rel_tol=1e-9):
                raise ValidationError("triangle cell needs A/dy = dx_max/2")
        elif not math.isclose(self.A, self.dy * self.dy, rel_tol=1e-9):
            raise ValidationError("square cell needs A = dy^2")

    @classmethod
    def square(cls, side, H, velocity_model=VelocityModel.CELL_CONSTANT):
        return cls(side * side, side, side, H, CellShape.SQUARE_ALIGNED, velocity_model)

    @classmethod
    def triangle(cls, A, dy, H, velocity_model=VelocityModel.CELL_CONSTANT):
        return cls(A, dy, 2.0 * A / dy, H, CellShape.TRIANGLE, velocity_model)

    @property
    def cross_section(self):
        return self.dy * self.H


def _check_ct(Ct):
    if not 0 <= Ct < 1:
        raise InvalidCt(f"thrust coefficient must lie in [0, 1), got {Ct}")


# --- standard formulation -------------------------------------------------


def standard_ct(turbine: TurbineSpec, cell: CellGeometry, u0=None):
    """Uncorrected enhanced drag coefficient ``Ct At / (2 A)``."""
    return turbine.drag_product(u0) / (2.0 * cell.A)


def predict_u1_square(turbine: TurbineSpec, cell: CellGeometry, u0=None):
    """Cell-to-upstream speed ratio under the *uncorrected* coefficient."""
    p = turbine.drag_product(u0) / cell.cross_section
    return 1.0 / (1.0 + 0.25 * p)


# --- triangle velocity relations -------------------------------------------


def u1_profile_triangle(ct, cell: CellGeometry) -> Callable:
    """Streamtube speed ratio ``u1(y)/u0`` across an aligned triangle."""
    c = cell.A * ct / (cell.H * cell.dy**2)

    def profile(y):
        return 1.0 / (1.0 + c * np.asarray(y, dtype=float))

    return profile


def predict_u1_triangle_cellconstant(ct, cell: CellGeometry):
    """Streamtube relation evaluated at the centroid, ``y = 2 dy / 3``."""
    return 1.0 / (1.0 + (2.0 / 3.0) * cell.A * ct / cell.cross_section)


def _linear_drop(ct, cell):
    # fractional speed drop at the wide end of the triangle, 1/(1 + H dy/(A ct))
    k = cell.A * ct / cell.cross_section
    return k / (1.0 + k)


def u1_linear_triangle(ct, cell: CellGeometry) -> Callable:
    """Linear speed ratio through the end values of the streamtube relation."""
    b = _linear_drop(ct, cell)

    def profile(y):
        return 1.0 - b * np.asarray(y, dtype=float) / cell.dy

    return profile


def predict_u1_triangle_linear(ct, cell: CellGeometry):
    """Cell average of :func:`u1_linear_triangle` (the area-weighted mean of y is 2 dy/3)."""
    return 1.0 - (2.0 / 3.0) * _linear_drop(ct, cell)


# --- corrected coefficients ------------------------------------------------


@dataclass(frozen=True)
class CorrectionResult:
    ct: float
    Ct_modified: float
    u1_over_u0: float
    turbine: TurbineSpec
    cell: CellGeometry
    Ct: float
    rho: float = DEFAULT_CONSTANTS.rho

    def force_at(self, u0):
        """Target drag force (turbine plus support) at upstream speed ``u0``."""
        extra = 0.0 if self.turbine.support is None else self.turbine.support.As * self.turbine.support.Cs
        return 0.5 * self.rho * (self.turbine.At * self.Ct + extra) * u0 * u0

    def power_turbine_at(self, u1_model):
        """Usefully extractable power given the model's cell speed.

        For piecewise-linear triangles ``u1_model`` may be a callable giving
        the streamwise-averaged speed as a function of ``y``.
        """
        cell = self.cell
        if cell.shape is CellShape.SQUARE_ALIGNED:
            return power_turbine_square(u1_model, self.turbine, cell, rho=self.rho, Ct=self.Ct)
        if cell.velocity_model is VelocityModel.CELL_CONSTANT:
            return power_turbine_triangle_cellconstant(u1_model, self.ct, self.turbine, cell, rho=self.rho, Ct=self.Ct)
        profile = u1_model if callable(u1_model) else (lambda y: np.full_like(np.asarray(y, float), u1_model))
        return power_turbine_triangle_linear(profile, self.ct, self.turbine, cell, rho=self.rho, Ct=self.Ct)


def _result(ct, ratio, turbine, cell, u0, rho):
    return CorrectionResult(
        ct=ct,
        Ct_modified=2.0 * cell.A * ct / turbine.At,
        u1_over_u0=ratio,
        turbine=turbine,
        cell=cell,
        Ct=turbine.Ct(u0),
        rho=rho,
    )


def corrected_ct_square(turbine: TurbineSpec, cell: CellGeometry, u0=None, rho=DEFAULT_CONSTANTS.rho):
    """Corrected coefficient for a flow-aligned square drag area.

    The standard coefficient is multiplied by ``4 / (1 + sqrt(1 - p))**2``
    with ``p = (At Ct + As Cs) / (H dy)``, so that ``rho A ct u1^2`` equals
    the upstream-referenced force when ``u1 = (1 + sqrt(1 - p)) u0 / 2``.
    """
    if cell.shape is not CellShape.SQUARE_ALIGNED:
        raise ValidationError("corrected_ct_square needs a square-aligned cell")
    drag = turbine.drag_product(u0)
    p = drag / cell.cross_section
    if p >= 1.0:
        raise BlockedCell(
            f"effective thrust coefficient {p:.4g} >= 1: drag cross-section dy*H={cell.cross_section:g} m^2 "
            f"too small for At*Ct+As*Cs={drag:g} m^2"
        )
    root = 1.0 + math.sqrt(1.0 - p)
    ct = drag / (2.0 * cell.A) * 4.0 / (root * root)
    return _result(ct, 0.5 * root, turbine, cell, u0, rho)


def _safeguarded_newton(f, df, lo, hi, x0, tol=1e-15, maxiter=200):
    """Newton from ``x0`` kept inside a sign-change bracket ``[lo, hi]``."""
    f_lo = f(lo)
    x = x0 if lo < x0 < hi else 0.5 * (lo + hi)
    for _ in range(maxiter):
        fx = f(x)
        if fx == 0.0:
            return x
        if (fx > 0) == (f_lo > 0):
            lo, f_lo = x, fx
        else:
            hi = x
        d = df(x)
        step = fx / d if d != 0.0 else 0.0
        x_new = x - step
        if d == 0.0 or not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= tol * max(abs(x_new), 1e-300) or hi - lo <= tol * hi:
            return x_new
        x = x_new
    return x


def quadratic_coefficients(turbine: TurbineSpec, cell: CellGeometry, u0=None):
    """Coefficients (highest power first) of the cell-constant quadratic in ``ct``."""
    A, H, dy = cell.A, cell.H, cell.dy
    d = turbine.drag_product(u0)
    return (-2.0 * A * A * d, A * (9.0 * H * H * dy * dy - 6.0 * d * H * dy), -4.5 * d * H * H * dy * dy)


def cubic_coefficients(turbine: TurbineSpec, cell: CellGeometry, u0=None):
    """Coefficients (highest power first) of the linear-velocity cubic in ``ct``."""
    A, H, dy = cell.A, cell.H, cell.dy
    d = turbine.drag_product(u0)
    return (A**3, A * A * (4.0 * H * dy - 3.0 * d), 6.0 * A * (H * H * dy * dy - d * H * dy), -3.0 * d * H * H * dy * dy)


def polynomial_residual(coeffs: Sequence[float], x):
    """Residual of a polynomial at ``x`` relative to the size of its terms."""
    n = len(coeffs) - 1
    terms = [c * x ** (n - i) for i, c in enumerate(coeffs)]
    scale = sum(abs(t) for t in terms)
    return abs(sum(terms)) / scale if scale else 0.0


def corrected_ct_triangle_cellconstant(turbine: TurbineSpec, cell: CellGeometry, u0=None, rho=DEFAULT_CONSTANTS.rho):
    """Corrected coefficient for a triangle with a cell-constant velocity.

    In ``k = A ct / (H dy)`` the force balance reads ``2k = p (1 + 2k/3)^2``.
    The physical root is the smaller one: it lies between the standard value
    ``p/2`` and the vertex of the parabola, and exists while ``p <= 3/4``.
    """
    if cell.shape is not CellShape.TRIANGLE:
        raise ValidationError("triangle correction needs a triangular cell")
    p = turbine.drag_product(u0) / cell.cross_section
    if p == 0.0:
        return _result(0.0, 1.0, turbine, cell, u0, rho)
    if p > 0.75:
        raise NoRealRoot(f"no real drag coefficient: p = At*Ct/(H*dy) = {p:.4g} exceeds 3/4")

    def f(k):
        return p * (1.0 + 2.0 * k / 3.0) ** 2 - 2.0 * k

    def df(k):
        return (4.0 * p / 3.0) * (1.0 + 2.0 * k / 3.0) - 2.0

    vertex = 2.25 / p - 1.5
    k = _safeguarded_newton(lambda x: -f(x), lambda x: -df(x), 0.5 * p, vertex, 0.5 * p)
    ct = k * cell.cross_section / cell.A
    return _result(ct, predict_u1_triangle_cellconstant(ct, cell), turbine, cell, u0, rho)


def corrected_ct_triangle_linear(turbine: TurbineSpec, cell: CellGeometry, u0=None, rho=DEFAULT_CONSTANTS.rho):
    """Corrected coefficient for a triangle with a linear velocity field.

    In ``k`` the cubic is ``k^3 + (4 - 3p) k^2 + 6 (1 - p) k - 3p = 0``; by
    Descartes' rule it has exactly one positive root for any ``p > 0``.
    """
    if cell.shape is not CellShape.TRIANGLE:
        raise ValidationError("triangle correction needs a triangular cell")
    p = turbine.drag_product(u0) / cell.cross_section
    if p == 0.0:
        return _result(0.0, 1.0, turbine, cell, u0, rho)

    def g(k):
        return ((k + (4.0 - 3.0 * p)) * k + 6.0 * (1.0 - p)) * k - 3.0 * p

    def dg(k):
        return (3.0 * k + 2.0 * (4.0 - 3.0 * p)) * k + 6.0 * (1.0 - p)

    hi = max(0.5 * p, 1e-300)
    while g(hi) <= 0.0:
        hi *= 2.0
        if not math.isfinite(hi):
            raise NoRealRoot(f"no positive root of the drag cubic for p = {p:g}")
    k = _safeguarded_newton(g, dg, 0.0, hi, 0.5 * p)
    ct = k * cell.cross_section / cell.A
    return _result(ct, predict_u1_triangle_linear(ct, cell), turbine, cell, u0, rho)


def correct(turbine: TurbineSpec, cell: CellGeometry, u0=None, rho=DEFAULT_CONSTANTS.rho) -> CorrectionResult:
    """Dispatch to the correction matching the cell's shape and velocity model."""
    if cell.shape is CellShape.SQUARE_ALIGNED:
        return corrected_ct_square(turbine, cell, u0, rho)
    if cell.velocity_model is VelocityModel.CELL_CONSTANT:
        return corrected_ct_triangle_cellconstant(turbine, cell, u0, rho)
    return corrected_ct_triangle_linear(turbine, cell, u0, rho)


def uncorrected(turbine: TurbineSpec, cell: CellGeometry, u0=None, rho=DEFAULT_CONSTANTS.rho) -> CorrectionResult:
    """Standard coefficient with the speed ratio it is predicted to produce."""
    ct = standard_ct(turbine, cell, u0)
    if cell.shape is CellShape.SQUARE_ALIGNED:
        ratio = predict_u1_square(turbine, cell, u0)
    elif cell.velocity_model is VelocityModel.CELL_CONSTANT:
        ratio = predict_u1_triangle_cellconstant(ct, cell)
    else:
        ratio = predict_u1_triangle_linear(ct, cell)
    return _result(ct, ratio, turbine, cell, u0, rho)


def combine_support(turbine: TurbineSpec, cell: CellGeometry, u0=None, rho=DEFAULT_CONSTANTS.rho) -> CorrectionResult:
    """Single drag coefficient carrying both turbine and support drag."""
    if turbine.support is None:
        raise ValidationError("combine_support needs a turbine with a support structure")
    return correct(turbine, cell, u0, rho)


# --- model force, used to check the corrections ----------------------------


def model_force(ct, cell: CellGeometry, u0, rho=DEFAULT_CONSTANTS.rho, drag_product=None):
    """Force the model applies when its cell speed follows the predicted relation.

    For square cells the prediction is the corrected-model one and needs the
    drag product ``At Ct + As Cs``.
    """
    if cell.shape is CellShape.SQUARE_ALIGNED:
        if drag_product is None:
            raise ValidationError("square model force needs the drag product")
        u1 = 0.5 * (1.0 + math.sqrt(1.0 - drag_product / cell.cross_section)) * u0
        return rho * cell.A * ct * u1 * u1
    if cell.velocity_model is VelocityModel.CELL_CONSTANT:
        u1 = predict_u1_triangle_cellconstant(ct, cell) * u0
        return rho * cell.A * ct * u1 * u1
    b = _linear_drop(ct, cell)
    return rho * cell.A * ct * (1.0 - 4.0 / 3.0 * b + 0.5 * b * b) * u0 * u0


# --- thrust curves ---------------------------------------------------------


def cell_speed_ratio(turbine: TurbineSpec, cell: CellGeometry, u0):
    """Cell-to-upstream speed ratio of the corrected model at upstream speed ``u0``."""
    return correct(turbine, cell, u0).u1_over_u0


def retabulate_thrust_curve(curve: ThrustCurve, turbine: TurbineSpec, cell: CellGeometry) -> ThrustCurve:
    """Re-express an upstream-referenced thrust curve in cell speeds.

    ``turbine.thrust`` is ignored; each sample's own ``Ct`` is used.
    """
    if curve.reference_velocity is not ReferenceVelocity.UPSTREAM:
        raise ValidationError("retabulation needs an upstream-referenced thrust curve")
    speeds = []
    for u0, ct in curve.samples:
        sample = TurbineSpec(turbine.At, ct, turbine.support)
        speeds.append(u0 * cell_speed_ratio(sample, cell, u0))
    bad = [(i, curve.speeds[i], curve.speeds[i + 1]) for i in range(len(speeds) - 1) if speeds[i + 1] <= speeds[i]]
    if bad:
        detail = ", ".join(f"samples {i},{i + 1} (u0={a:g},{b:g})" for i, a, b in bad)
        raise NonMonotoneResult(f"cell speeds not strictly increasing at {detail}", bad)
    return ThrustCurve(speeds, curve.cts, ReferenceVelocity.CELL)


def upstream_from_cell_square(u1, turbine: TurbineSpec, cell: CellGeometry, u0=None):
    """Invert the square-cell relation: upstream speed for a cell speed ``u1``."""
    p = turbine.drag_product(u0) / cell.cross_section
    return 2.0 * u1 / (1.0 + math.sqrt(1.0 - p))


# --- power -----------------------------------------------------------------


def power_cell(F, u1_model):
    """Power removed from the flow inside the drag cell."""
    if F < 0:
        raise ValidationError("force must be non-negative")
    return F * u1_model


def power_total(F, u0):
    """Total power removed from the flow, turbine plus mixing losses."""
    if F < 0:
        raise ValidationError("force must be non-negative")
    return F * u0


def _power_prefactor(Ct, At, rho):
    _check_ct(Ct)
    return 0.25 * (1.0 + math.sqrt(1.0 - Ct)) * Ct * rho * At


def power_turbine_square(u1_model, turbine: TurbineSpec, cell: CellGeometry, rho=DEFAULT_CONSTANTS.rho, Ct=None):
    """Extractable power from the cell speed of a corrected square drag area.

    Only the turbine's own ``Ct``, ``At`` enter the power; the support drag
    only affects the speed relation through ``p``.
    """
    if Ct is None:
        Ct = turbine.Ct()
    _check_ct(Ct)
    p = (turbine.At * Ct + (0 if turbine.support is None else turbine.support.As * turbine.support.Cs)) / cell.cross_section
    if p >= 1.0:
        raise BlockedCell(f"effective thrust coefficient {p:.4g} >= 1")
    s = 1.0 + math.sqrt(1.0 - Ct)
    q = 1.0 + math.sqrt(1.0 - p)
    return 2.0 * s / q**3 * Ct * rho * turbine.At * u1_model**3


def power_turbine_triangle_cellconstant(
    u1_model, ct, turbine: TurbineSpec, cell: CellGeometry, rho=DEFAULT_CONSTANTS.rho, Ct=None
):
    """Extractable power from the cell-average speed of a corrected triangle."""
    if Ct is None:
        Ct = turbine.Ct()
    factor = 1.0 + (2.0 / 3.0) * cell.A * ct / cell.cross_section
    return _power_prefactor(Ct, turbine.At, rho) * (factor * u1_model) ** 3


def power_turbine_triangle_linear(
    profile: Callable, ct, turbine: TurbineSpec, cell: CellGeometry, rho=DEFAULT_CONSTANTS.rho, Ct=None
):
    """Extractable power from a linear-velocity triangle.

    ``profile(y)`` is the streamwise-averaged model speed at cross-stream
    position ``y`` in ``[0, dy]`` (apex at ``y = 0``).  Each streamtube's
    upstream speed is recovered through the linear relation and the cube is
    averaged with weight ``dx(y) = 2 A y / dy^2`` by Gauss-Legendre
    quadrature.
    """
    if Ct is None:
        Ct = turbine.Ct()
    pre = _power_prefactor(Ct, turbine.At, rho)
    x, w = np.polynomial.legendre.leggauss(GAUSS_ORDER)
    y = 0.5 * cell.dy * (x + 1.0)
    ratio = u1_linear_triangle(ct, cell)(y)
    dxy = 2.0 * cell.A * y / cell.dy**2
    u0 = np.asarray(profile(y), dtype=float) / ratio
    integral = 0.5 * cell.dy * np.sum(w * dxy * u0**3)
    return pre * integral / cell.A
