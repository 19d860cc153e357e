"""Radial Green's functions, gradient bounds and the finite-length test.

The Green's function of a radially symmetric comparison surface is the tail
integral ``G*(r) = int_r^inf ds / J*(s)`` ("raw" normalization); dividing by
``2 pi`` gives the occupation density of Brownian motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .criteria import (
    EXPONENT_RESOLUTION,
    FINITE,
    INCONCLUSIVE,
    INFINITE,
    ConvergenceVerdict,
    analyze_ray,
    classify_tail,
)
from .errors import InvalidParameters, NotTransient, RadiusTooSmall
from .jacobi import DEFAULT_TOL
from .surface import radial_model

NORMALIZATIONS = ("raw", "occupation")
HOMEOMORPHISM_INCONCLUSIVE = "criterion inconclusive for homeomorphism"


@dataclass
class GreenFunction:
    """``G*(r)`` of a transient radial surface, evaluable at any ``r > 0``.

    Below the solver seed radius the series ``log(r_min / r) + K(0) (r_min^2 - r^2) / 12``
    continues the solution toward the pole.
    """

    sol: object
    tail: object
    normalization: str = "raw"

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise InvalidParameters(f"normalization must be one of {NORMALIZATIONS}")
        status, tail, _ = classify_tail(self.tail)
        if status != FINITE:
            raise NotTransient(f"comparison surface is not known to be transient ({status})")
        self.tail = tail
        self._lr_max = math.log(self.sol.r_max)
        self._tail_at_end = tail.inverse_tail(self._lr_max)

    @property
    def scale(self):
        return 1.0 if self.normalization == "raw" else 1.0 / (2.0 * math.pi)

    def raw(self, r):
        r = float(r)
        if not r > 0:
            raise InvalidParameters("the Green's function needs r > 0")
        sol = self.sol
        if r >= sol.r_max:
            return self.tail.inverse_tail(math.log(r))
        if r < sol.r_min:
            rm = sol.r_min
            inner = math.log(rm / r) + sol.k0 * (rm * rm - r * r) / 12.0
            return inner + sol.inv_J_integral(rm) + self._tail_at_end
        return sol.inv_J_integral(r) + self._tail_at_end

    def __call__(self, r):
        if np.ndim(r):
            return np.array([self.raw(x) for x in np.ravel(r)]).reshape(np.shape(r)) * self.scale
        return self.raw(r) * self.scale

    def log_asymptotics(self):
        """``(exp_rate, power, log_power)`` with ``G ~ e^{exp_rate r} r^power (log r)^log_power``."""
        t = self.tail
        if t.form == "super_exponential":
            return -math.inf, 0.0, 0.0
        mu, a, b = t.exponents()
        if t.form == "exponential":
            return -mu, 0.0, 0.0
        if a == 1.0:
            return 0.0, 0.0, 1.0 - b
        return 0.0, 1.0 - a, -b


def green_radial(sol, r, normalization="raw"):
    """``G*(r)`` from a solved radial ray with fitted tail (``sol.tail``)."""
    return GreenFunction(sol, sol.tail, normalization)(r)


def green_for_profile(profile, tol=DEFAULT_TOL, normalization="raw"):
    """Solve the comparison surface of ``profile`` and wrap its Green's function."""
    ray = analyze_ray(radial_model(profile), 0.0, tol)
    if ray.sol is None or ray.status != FINITE:
        raise NotTransient(f"comparison surface for {profile} is not known to be transient")
    return GreenFunction(ray.sol, ray.tail, normalization)


@dataclass
class GradientBound:
    """``c_cy (k(r) + 1) C G(r)`` with ``k(r)`` the sup of ``sqrt(-K_lower)`` on ``(r-1, r+1)``.

    ``comparison_const`` is the constant ``C`` in ``G^p <= C G*``; it cannot be
    computed without a two-dimensional solve and defaults to 1.
    """

    lower: object
    green: GreenFunction
    c_cy: float = 1.0
    comparison_const: float = 1.0

    def k(self, r):
        return math.sqrt(self.lower.sup_abs(r - 1.0, r + 1.0))

    def bound(self, r):
        if not r > 3:
            raise RadiusTooSmall(f"gradient bound needs r > 3, got {r}")
        return self.c_cy * (self.k(r) + 1.0) * self.comparison_const * self.green(r)


def cheng_yau_bound(lower_profile, green, r, c_cy=1.0, comparison_const=1.0):
    """Gradient bound ``c_cy (k(r) + 1) C G(r)`` for positive harmonic functions."""
    return GradientBound(lower_profile, green, c_cy, comparison_const).bound(r)


def _k_growth(lower):
    """``(exp_rate, power)`` of ``k(r) + 1`` as ``r -> inf``."""
    coef, rate, power = lower.k_asymptotics()
    if coef == 0.0:
        return 0.0, 0.0
    if rate > 0:
        return rate, power
    return 0.0, max(power, 0.0)


def martin_finite_length(upper, lower, tol=DEFAULT_TOL, r0=4.0, resolution=EXPONENT_RESOLUTION,
                         c_cy=1.0, comparison_const=1.0):
    """Is ``int^inf (k(r) + 1) G*(r) dr`` finite?

    ``G*`` comes from the surface with curvature ``upper``; ``k`` from
    ``lower``.  The numeric part runs to the solved radius; the tail is
    classified from the asymptotic rates of both factors.  A finite integral
    gives finite Euclidean length of ray images in the uniformized disk; an
    infinite one is reported as inconclusive for the homeomorphism question.
    """
    green = green_for_profile(upper, tol)
    gb = GradientBound(lower, green, c_cy, comparison_const)
    g_rate, g_pow, g_logpow = green.log_asymptotics()
    k_rate, k_pow = _k_growth(lower)
    u = green.tail.uncertainty
    u_rate = u.get("mu", 0.0) if green.tail.form == "exponential" else 0.0
    u_pow = u.get("a", 0.0) if green.tail.form == "power_log" else 0.0
    u_log = u.get("b", 0.0) if green.tail.form == "power_log" else 0.0

    net_rate = k_rate + g_rate
    net_pow = k_pow + g_pow
    details = {"green_asymptotics": {"exp_rate": g_rate, "power": g_pow, "log_power": g_logpow},
               "k_asymptotics": {"exp_rate": k_rate, "power": k_pow},
               "net": {"exp_rate": net_rate, "power": net_pow, "log_power": g_logpow}}

    if net_rate < -u_rate - resolution:
        status, note = FINITE, f"integrand decays like e^({net_rate:.4g} r)"
    elif net_rate > u_rate + resolution:
        status, note = INFINITE, f"integrand grows like e^({net_rate:.4g} r)"
    elif net_pow < -1.0 - u_pow - resolution:
        status, note = FINITE, f"integrand decays like r^({net_pow:.4g})"
    elif net_pow > -1.0 + u_pow + resolution:
        status, note = INFINITE, f"integrand decays no faster than r^({net_pow:.4g})"
    elif g_logpow < -1.0 - u_log - resolution:
        status, note = FINITE, f"integrand ~ 1/(r (log r)^{-g_logpow:.4g})"
    elif g_logpow >= -1.0 - resolution + u_log:
        status, note = INFINITE, f"integrand ~ 1/(r (log r)^{-g_logpow:.4g})"
    else:
        status, note = INCONCLUSIVE, "integrand exponents unresolved"

    # exponential integrands are negligible well before the solved radius
    r_end = min(green.sol.r_max, 200.0) if net_rate != 0 else green.sol.r_max
    if status == INFINITE:
        return ConvergenceVerdict(INFINITE, "fitted_tail", divergence_rate=note,
                                  reason=HOMEOMORPHISM_INCONCLUSIVE, details=details)
    if status == INCONCLUSIVE:
        return ConvergenceVerdict(INCONCLUSIVE, "fitted_tail", reason=note, details=details)
    val, qerr = _integrate_log(gb.bound, r0, r_end)
    f_end = gb.bound(r_end)
    if net_rate < 0:
        tail = f_end / -net_rate
    else:
        # power-type decay: r f(r) / (|p| - 1), or the log form when p = -1
        tail = f_end * r_end / max(-net_pow - 1.0, 1e-300) if net_pow < -1 - resolution else (
            f_end * r_end * math.log(r_end) / max(-g_logpow - 1.0, 1e-300))
    details.update({"note": note, "numeric_part": val, "r0": r0, "r_end": r_end})
    return ConvergenceVerdict(FINITE, "fitted_tail", value=val + tail,
                              error_bound=2.0 * tail + qerr, details=details)


def _integrate_log(f, a, b):
    """``int_a^b f dr`` evaluated in ``log r`` on sub-intervals for wide ranges."""
    edges = np.unique(np.concatenate([np.arange(a, min(b, 64.0), 4.0),
                                      np.geomspace(max(a, 64.0), b, 8) if b > 64 else [],
                                      [b]]))
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(f, lo, hi, epsrel=1e-8, limit=100)
        total += v
        err += e
    return total, err


def martin_integrand_samples(upper, lower, r_grid, tol=DEFAULT_TOL, c_cy=1.0):
    """Rows ``(r, k(r), G*(r), bound(r))`` for plotting the finite-length integrand."""
    green = green_for_profile(upper, tol)
    gb = GradientBound(lower, green, c_cy)
    return [(float(r), gb.k(r), green(r), gb.bound(r)) for r in r_grid]
