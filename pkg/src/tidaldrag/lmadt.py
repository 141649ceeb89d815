"""Linear momentum actuator disc theory for a turbine in a channel.

Velocities: ``u0`` upstream, ``u1`` through the disc, ``u3`` in the wake and
``u4`` in the bypass flow, the last two taken far enough downstream for the
water level to be uniform again.  Level differences are kept as differences
only; absolute levels never enter the equations.

The general finite-blockage solve reduces to a quartic in ``u4/u0``; the
zero-blockage closed forms used by :mod:`tidaldrag.correction` are provided
separately since they are evaluated far more often.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateWake, InvalidCt, NoPhysicalRoot, ValidationError


@dataclass(frozen=True)
class PhysicalConstants:
    rho: float = 1000.0  # water density [kg/m^3]
    g: float = 9.81  # gravitational acceleration [m/s^2]


DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class DiscProblem:
    """Inputs of the disc problem.

    ``Ct`` is the thrust normalised by the *upstream* dynamic pressure over
    the disc area, ``epsilon`` the blockage ratio ``At / Ac``.
    """

    u0: float
    Ct: float
    epsilon: float = 0.0
    At: float = 1.0
    rho: float = DEFAULT_CONSTANTS.rho

    def __post_init__(self):
        if not self.u0 > 0:
            raise ValidationError(f"upstream speed must be positive, got {self.u0}")
        if not 0 <= self.Ct <= 1:
            raise InvalidCt(f"thrust coefficient must lie in [0, 1], got {self.Ct}")
        if not 0 <= self.epsilon < 1:
            raise ValidationError(f"blockage ratio must lie in [0, 1), got {self.epsilon}")
        if not self.At > 0:
            raise ValidationError("turbine cross-section must be positive")
        if not self.rho > 0:
            raise ValidationError("density must be positive")

    @property
    def force(self):
        return 0.5 * self.rho * self.At * self.Ct * self.u0**2


@dataclass(frozen=True)
class DiscSolution:
    u1: float
    u3: float
    u4: float
    A3: float
    eta0_minus_eta4: float
    eta1_minus_eta2: float
    force: float
    power_turbine: float
    power_total: float

    @property
    def power_mixing(self):
        return self.power_total - self.power_turbine


def _check_ct(Ct):
    if not 0 <= Ct <= 1:
        raise InvalidCt(f"thrust coefficient must lie in [0, 1], got {Ct}")


def quartic_u4(r, Ct, epsilon):
    """Left-hand side of the quartic in ``r = u4/u0`` (zero at the solution)."""
    s2 = (r - 1.0) ** 2
    return 0.25 * (Ct * epsilon - s2) ** 2 - s2 * (r * r - Ct)


def _scaled_quartic(t, Ct, q, sq):
    # quartic / q with r = 1 + sqrt(q) t, q = Ct epsilon; regular as q -> 0
    w = 1.0 + sq * t
    return 0.25 * q * (1.0 - t * t) ** 2 - t * t * (w * w - Ct)


def _dscaled_quartic(Ct, q, sq):
    def d(t):
        w = 1.0 + sq * t
        return -q * t * (1.0 - t * t) - 2.0 * t * (w * w - Ct) - 2.0 * sq * t * t * w

    return d


def solve_u4(problem: DiscProblem, scan=64):
    """Bypass-to-upstream velocity ratio ``u4/u0`` on the physical branch.

    Squaring during the derivation of the quartic admits spurious roots; the
    physical one satisfies ``(u4/u0 - 1)**2 <= Ct*epsilon``.  Writing
    ``u4/u0 = 1 + sqrt(Ct*epsilon) t`` maps that interval onto ``t`` in
    ``[0, 1]``, where the quartic (divided by ``Ct*epsilon``) is positive at
    ``t = 0`` and negative at ``t = 1``.  The first sign change on a scan of
    ``t`` is the root that joins continuously onto ``u4 = u0`` as
    ``epsilon -> 0``; the scaling keeps it resolvable for tiny blockage.
    """
    Ct, eps = problem.Ct, problem.epsilon
    q = Ct * eps
    if q == 0.0:
        return 1.0
    sq = math.sqrt(q)

    def f(t):
        return _scaled_quartic(t, Ct, q, sq)

    lo, hi = 0.0, 1.0
    for k in range(1, scan + 1):
        t = k / scan
        if f(t) <= 0.0:
            hi = t
            break
        lo = t
    else:
        raise NoPhysicalRoot(f"no admissible bypass velocity for Ct={Ct}, epsilon={eps}")
    t = _bisect_newton(f, _dscaled_quartic(Ct, q, sq), lo, hi)
    r = 1.0 + sq * t
    if r * r < Ct:
        raise NoPhysicalRoot(f"bypass velocity root violates u4^2 >= Ct u0^2 (Ct={Ct}, epsilon={eps})")
    return r


def _bisect_newton(f, df, lo, hi, maxiter=200):
    """Safeguarded Newton iteration on a bracket ``[lo, hi]`` with f(lo) > 0 >= f(hi)."""
    f_lo = f(lo)
    if f_lo == 0.0:
        return lo
    sign_lo = math.copysign(1.0, f_lo)
    x = 0.5 * (lo + hi)
    for _ in range(maxiter):
        fx = f(x)
        if fx == 0.0:
            return x
        if math.copysign(1.0, fx) == sign_lo:
            lo = x
        else:
            hi = x
        d = df(x)
        x_new = x - fx / d if d != 0.0 else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if x_new == x or hi - lo <= 4 * math.ulp(hi):
            return x_new
        x = x_new
    return x


def recover_wake(problem: DiscProblem, u4):
    """Wake velocity, wake area and disc velocity from a known bypass velocity.

    Returns ``(u3, A3, u1)``.
    """
    u0, Ct, At = problem.u0, problem.Ct, problem.At
    disc = u4 * u4 - Ct * u0 * u0
    if disc < 0:
        raise ValidationError("u4^2 must be at least Ct*u0^2")
    u3 = math.sqrt(disc)
    denom = u3 + 0.5 * u4 - 0.5 * u0
    if denom <= 0:
        raise DegenerateWake(f"wake area undefined (u3 + u4/2 - u0/2 = {denom:g})")
    A3 = (0.5 * u4 + 0.5 * u3) / denom * At
    u1 = A3 * u3 / At
    return u3, A3, u1


def solve(problem: DiscProblem, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> DiscSolution:
    """Full disc solution at finite blockage."""
    u0 = problem.u0
    u4 = solve_u4(problem) * u0
    u3, A3, u1 = recover_wake(problem, u4)
    if not (0 < u3 <= u1 * (1 + 1e-12) and u1 <= u0 * (1 + 1e-12) and u0 <= u4 * (1 + 1e-12)):
        raise NoPhysicalRoot(f"velocity ordering u3 <= u1 <= u0 <= u4 violated: {u3}, {u1}, {u0}, {u4}")
    g = constants.g
    F = problem.force
    return DiscSolution(
        u1=u1,
        u3=u3,
        u4=u4,
        A3=A3,
        eta0_minus_eta4=(u4 * u4 - u0 * u0) / (2.0 * g),
        eta1_minus_eta2=(u4 * u4 - u3 * u3) / (2.0 * g),
        force=F,
        power_turbine=F * u1,
        power_total=F * u0,
    )


def residuals(problem: DiscProblem, sol: DiscSolution, constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Relative residuals of the seven disc equations.

    The channel-wide equations are divided through by the channel area so
    that the zero-blockage case stays finite.  The level just upstream of the
    disc is fixed from the first Bernoulli relation, with the downstream level
    as datum, so that equation serves as the definition of the free unknown.
    """
    g, rho = constants.g, problem.rho
    u0, u1, u3, u4, A3 = problem.u0, sol.u1, sol.u3, sol.u4, sol.A3
    At, eps = problem.At, problem.epsilon
    F = sol.force
    a3 = eps * A3 / At  # A3 / Ac
    fscale = rho * At * u0 * u0

    eta4 = 0.0
    eta0 = eta4 + sol.eta0_minus_eta4
    eta1 = eta0 + (u0 * u0 - u1 * u1) / (2.0 * g)
    eta2 = eta1 - sol.eta1_minus_eta2
    escale = 0.5 * u0 * u0

    def rel(lhs, rhs, scale):
        return abs(lhs - rhs) / scale

    return {
        "continuity_disc": rel(At * u1, A3 * u3, At * u0),
        "continuity_channel": rel(u0, a3 * u3 + (1 - a3) * u4, u0),
        "force_momentum": rel(
            F * eps / At,
            rho * u0 * u0 - a3 * rho * u3 * u3 - (1 - a3) * rho * u4 * u4 + rho * g * (eta0 - eta4),
            rho * u0 * u0 * (eps if eps > 0 else 1.0),
        ),
        "force_pressure": rel(F, rho * g * At * (eta1 - eta2), fscale),
        "bernoulli_upstream": rel(0.5 * u0 * u0 + g * eta0, 0.5 * u1 * u1 + g * eta1, escale),
        "bernoulli_wake": rel(0.5 * u1 * u1 + g * eta2, 0.5 * u3 * u3 + g * eta4, escale),
        "bernoulli_bypass": rel(0.5 * u0 * u0 + g * eta0, 0.5 * u4 * u4 + g * eta4, escale),
    }


def u1_zero_blockage(u0, Ct):
    """Disc velocity for an unblocked disc: ``(1 + sqrt(1 - Ct)) u0 / 2``."""
    _check_ct(Ct)
    return 0.5 * (1.0 + math.sqrt(1.0 - Ct)) * u0


def power_zero_blockage(problem: DiscProblem):
    """Turbine power and power coefficient of an unblocked disc.

    Returns ``(P, Cp)`` with ``Cp = P / (rho At u0^3 / 2)``.
    """
    _check_ct(problem.Ct)
    Ct = problem.Ct
    Cp = 0.5 * (1.0 + math.sqrt(1.0 - Ct)) * Ct
    return Cp * 0.5 * problem.rho * problem.At * problem.u0**3, Cp


def max_power_coefficient(tol=1e-12):
    """Maximise the unblocked power coefficient over ``Ct``.

    Golden-section search on ``[0, 1]``; returns ``(Ct_opt, Cp_max)``.
    """

    def cp(ct):
        return 0.5 * (1.0 + math.sqrt(1.0 - ct)) * ct

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, 1.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = cp(c), cp(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = cp(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = cp(d)
    x = 0.5 * (a + b)
    return x, cp(x)
