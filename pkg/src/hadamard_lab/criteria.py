"""Transience and Dirichlet-problem-at-infinity criteria.

Every improper integral of ``1/J`` is split into a numeric part up to the
solved radius and an analytic tail from the fitted :class:`TailModel`.
Divergence is only ever declared from the fitted tail, never from a truncated
sum, because no finite truncation separates ``int dr/(r log r)`` from a
convergent integral.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import (
    HadamardLabError,
    InnerDivergent,
    InvalidParameters,
    QuadratureFailure,
    StiffnessFailure,
)
from .jacobi import DEFAULT_TOL, fit_tail, solve_log_jacobi
from .surface import radial_model

FINITE, INFINITE, INCONCLUSIVE = "finite", "infinite", "inconclusive"

# exponents closer than this to the convergence boundary count as on it
EXPONENT_RESOLUTION = 1e-4
RAY_SCHEDULE = (64.0, 1e4, 1e8, 1e12)
POWER_LAW_MIN_RMAX = 1e8
_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)


@dataclass
class ConvergenceVerdict:
    """Outcome of an improper-integral criterion.

    ``status`` is ``finite`` (with ``value`` and ``error_bound``), ``infinite``
    (with a textual ``divergence_rate``) or ``inconclusive`` (with ``reason``).
    """

    status: str
    method: str = "fitted_tail"
    value: float | None = None
    error_bound: float | None = None
    divergence_rate: str | None = None
    reason: str | None = None
    details: dict = field(default_factory=dict)

    @property
    def is_finite(self):
        return self.status == FINITE

    @property
    def is_infinite(self):
        return self.status == INFINITE

    def to_dict(self):
        d = {"status": self.status, "method": self.method}
        for k in ("value", "error_bound", "divergence_rate", "reason"):
            val = getattr(self, k)
            if val is not None:
                d[k] = val
        if self.details:
            d["details"] = self.details
        return d


@dataclass
class DpiCertificate:
    """Search result for the truncated-sector criterion at one ``(theta0, beta, epsilon)``.

    ``rho`` is ``None`` when not found or when it overflows a float; ``log_rho``
    is always reported when found.
    """

    theta0: float
    beta: float
    epsilon: float
    rho: float | None
    log_rho: float | None
    sector_integral_at_rho: float | None
    found: bool
    reason: str | None = None
    tested: list = field(default_factory=list)
    grid_ratio: float = 2.0 ** 0.125
    label: str = "grid-verified"

    def to_dict(self):
        return {
            "theta0": self.theta0, "beta": self.beta, "epsilon": self.epsilon,
            "rho": self.rho if self.found else "NotFound", "log_rho": self.log_rho,
            "sector_integral_at_rho": self.sector_integral_at_rho, "found": self.found,
            "reason": self.reason, "tested": self.tested, "grid_ratio": self.grid_ratio,
            "label": self.label,
        }


# ---------------------------------------------------------------------------
# tail classification


def classify_tail(tail, resolution=EXPONENT_RESOLUTION):
    """Classify ``int^inf dr / J`` from a fitted tail.

    Returns ``(status, tail_used, note)``.  ``tail_used`` equals ``tail`` except
    that a power exponent resolved to ``a = 1`` is snapped to exactly 1, so
    tail integrals agree with the verdict.
    """
    if tail is None or tail.poor_fit:
        return INCONCLUSIVE, tail, "poor tail fit"
    if tail.form == "super_exponential":
        return FINITE, tail, "log-derivative grows: 1/J decays faster than any exponential"
    if tail.form == "exponential":
        mu, umu = tail.params["mu"], tail.uncertainty.get("mu", 0.0)
        if mu - umu > resolution:
            return FINITE, tail, f"exponential decay e^(-{mu:.6g} r)"
        return INCONCLUSIVE, tail, f"exponential fit with rate {mu:.3g} +- {umu:.2g}"
    a, b = tail.params["a"], tail.params["b"]
    ua, ub = tail.uncertainty.get("a", 0.0), tail.uncertainty.get("b", 0.0)
    if a - ua > 1.0 + resolution:
        return FINITE, tail, f"power decay r^-{a:.6g}"
    if a + ua < 1.0 - resolution:
        return INFINITE, tail, f"r^-{a:.6g} with a < 1"
    if abs(a - 1.0) > ua + resolution or ua > 10.0 * resolution:
        return INCONCLUSIVE, tail, f"power exponent a={a:.6g} +- {ua:.2g} unresolved near 1"
    snapped = dataclasses.replace(tail, params={**tail.params, "a": 1.0})
    if b - ub > 1.0 + resolution:
        return FINITE, snapped, f"1/(r (log r)^{b:.6g})"
    if b + ub <= 1.0 + resolution:
        return INFINITE, snapped, f"1/(r (log r)^{b:.6g}) with log exponent <= 1"
    return INCONCLUSIVE, snapped, f"log exponent b={b:.6g} +- {ub:.2g} too close to 1"


def _tail_integral(tail, log_x, pessimistic=False):
    return tail.inverse_tail(log_x, pessimistic=pessimistic)


# ---------------------------------------------------------------------------
# per-ray analysis (cached; models hash by identity)


@dataclass
class RayAnalysis:
    theta: float
    sol: object
    tail: object
    status: str
    note: str


def _ray_schedule(model, theta):
    sched = list(RAY_SCHEDULE)
    strip = model.flat_strip
    if strip is not None:
        rx = float(strip.exit_radius(theta))
        if math.isfinite(rx):
            base = 2.0 * (rx + strip.radial_blend) + 64.0
            sched = [base] + [r for r in sched if r > base]
    return sched


@functools.lru_cache(maxsize=8192)
def _analyze_ray_cached(model, theta, tol, resolution):
    last = None
    for r_max in _ray_schedule(model, theta):
        try:
            sol = solve_log_jacobi(model, theta, r_max, tol=tol)
        except StiffnessFailure as exc:
            if last is not None:
                return last
            return RayAnalysis(theta, None, None, INCONCLUSIVE, str(exc))
        tail = fit_tail(sol)
        status, tail_used, note = classify_tail(tail, resolution)
        sol.tail = tail_used
        last = RayAnalysis(theta, sol, tail_used, status, note)
        # power-law exponents are only trusted over many decades in r
        decided = status != INCONCLUSIVE and (tail.form != "power_log" or r_max >= POWER_LAW_MIN_RMAX
                                              or model.ray(theta).is_flat)
        if decided:
            return last
    return last


def analyze_ray(model, theta, tol=DEFAULT_TOL, resolution=EXPONENT_RESOLUTION):
    """Solve along ``theta`` with growing ``r_max`` until the tail classifies."""
    key_theta = 0.0 if model.is_radial else float(theta)
    return _analyze_ray_cached(model, key_theta, tol, resolution)


def ray_tail_integral(ray, alpha=None, log_alpha=None, pessimistic=False):
    """``int_alpha^inf dr/J`` along an analysed ray (``inf`` when divergent)."""
    if ray.status == INFINITE:
        return math.inf
    if ray.tail is None:
        raise QuadratureFailure(f"no tail model along theta={ray.theta}: {ray.note}")
    if log_alpha is None:
        log_alpha = math.log(alpha)
    sol = ray.sol
    if log_alpha >= math.log(sol.r_max):
        return _tail_integral(ray.tail, log_alpha, pessimistic)
    a = math.exp(log_alpha)
    return sol.inv_J_integral(a) + _tail_integral(ray.tail, math.log(sol.r_max), pessimistic)


# ---------------------------------------------------------------------------
# transience


def milnor_transience(tail, sol, r0=1.0, resolution=EXPONENT_RESOLUTION):
    """Radial transience test: is ``int_{r0}^inf dr / J*`` finite?"""
    status, tail_used, note = classify_tail(tail, resolution)
    details = {"tail": tail.to_dict() if tail is not None else None, "r0": r0,
               "r_max": sol.r_max, "note": note}
    numeric = sol.inv_J_integral(r0)
    details["numeric_part"] = numeric
    model = sol.model
    if model is not None and model.is_flat:
        method = "closed_tail"
    else:
        method = "fitted_tail"
    if status == INCONCLUSIVE:
        return ConvergenceVerdict(INCONCLUSIVE, "truncated", value=numeric, reason=note,
                                  details=details)
    if status == INFINITE:
        return ConvergenceVerdict(INFINITE, method, divergence_rate=note, details=details)
    lr = math.log(sol.r_max)
    t_nom = _tail_integral(tail_used, lr)
    t_pess = _tail_integral(tail_used, lr, pessimistic=True)
    if not math.isfinite(t_pess):
        t_pess = t_nom
    err = max(t_pess, t_nom) + 10.0 * sol.tol * numeric
    return ConvergenceVerdict(FINITE, method, value=numeric + t_nom, error_bound=err,
                              details={**details, "tail_part": t_nom})


def radial_transience(profile, tol=DEFAULT_TOL, r0=1.0, resolution=EXPONENT_RESOLUTION):
    """Milnor verdict for the radially symmetric surface with curvature ``profile``."""
    model = radial_model(profile)
    ray = analyze_ray(model, 0.0, tol, resolution)
    if ray.sol is None:
        return ConvergenceVerdict(INCONCLUSIVE, "truncated", reason=ray.note), ray
    return milnor_transience(ray.tail, ray.sol, r0, resolution), ray


def doyle_transience(model, theta_grid=None, r_max=None, tol=DEFAULT_TOL, threshold=0.0,
                     resolution=EXPONENT_RESOLUTION):
    """Angular-measure transience test.

    Each ray in ``theta_grid`` is classified; the surface is reported
    transient when the fraction of finite rays exceeds ``threshold`` (default:
    any finite ray).  ``r_max`` caps the radius schedule if given.
    """
    if theta_grid is None:
        theta_grid = np.linspace(0.0, 2 * math.pi, 64, endpoint=False)
    theta_grid = np.asarray(theta_grid, dtype=float)
    if theta_grid.size < 8:
        raise InvalidParameters("doyle_transience needs at least 8 rays")
    per_ray = []
    for th in theta_grid:
        try:
            ray = analyze_ray(model, float(th), tol, resolution)
            status, note = ray.status, ray.note
        except HadamardLabError as exc:
            status, note = INCONCLUSIVE, str(exc)
        per_ray.append({"theta": float(th), "status": status, "note": note})
    n = len(per_ray)
    frac = {s: sum(p["status"] == s for p in per_ray) / n for s in (FINITE, INFINITE, INCONCLUSIVE)}
    details = {"finite_fraction": frac[FINITE], "infinite_fraction": frac[INFINITE],
               "inconclusive_fraction": frac[INCONCLUSIVE], "rays": per_ray}
    if frac[FINITE] > threshold:
        return ConvergenceVerdict(FINITE, "fitted_tail", value=frac[FINITE], details=details)
    if frac[INFINITE] == 1.0:
        reason = "recurrent" if model.is_flat else "transience not established"
        return ConvergenceVerdict(INCONCLUSIVE, "fitted_tail", reason=reason, details=details)
    return ConvergenceVerdict(INCONCLUSIVE, "fitted_tail",
                              reason="no ray classified finite", details=details)


# ---------------------------------------------------------------------------
# truncated-sector integral


def _inner(model, theta, log_alpha, tol, resolution):
    ray = analyze_ray(model, theta, tol, resolution)
    if ray.status == INFINITE:
        return math.inf
    if ray.status == INCONCLUSIVE and ray.tail is None:
        raise QuadratureFailure(f"ray at theta={theta:.6g} unclassified: {ray.note}")
    return ray_tail_integral(ray, log_alpha=log_alpha)


def sector_integral(model, theta0, beta, alpha=None, quad_tol=1e-6, log_alpha=None,
                    tol=DEFAULT_TOL, resolution=EXPONENT_RESOLUTION, with_error=False):
    """``int_{|theta - theta0| < beta} int_{r > alpha} dr dtheta / J(r, theta)``.

    The inner improper integral uses the per-ray tail model; the outer one is
    adaptive Gauss-Kronrod with breakpoints at sector boundaries.  An isolated
    divergent ray whose angular singularity is integrable (a flat strip axis)
    is handled by a graded mesh; otherwise :class:`InnerDivergent` is raised.
    """
    if not 0 < beta < math.pi:
        raise InvalidParameters("beta must lie in (0, pi)")
    if log_alpha is None:
        if not alpha > 0:
            raise InvalidParameters("alpha must be positive")
        log_alpha = math.log(alpha)

    if model.is_radial:
        g = _inner(model, 0.0, log_alpha, tol, resolution)
        if not math.isfinite(g):
            raise InnerDivergent(theta0)
        val = 2.0 * beta * g
        return (val, val * 10 * tol) if with_error else val

    lo, hi = theta0 - beta, theta0 + beta
    probes = np.linspace(lo, hi, 17)
    bad = [t for t in probes if not math.isfinite(_inner(model, t, log_alpha, tol, resolution))]
    singular = []
    if bad:
        for t in bad:
            if not _isolated_integrable(model, t, log_alpha, beta, tol, resolution):
                raise InnerDivergent(float(t))
            singular.append(float(t))
    pts = sorted(set([lo, hi] + singular + _breakpoints(model, lo, hi)))
    total, err = 0.0, 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a <= 0:
            continue
        left_sing = a in singular
        right_sing = b in singular
        if left_sing or right_sing:
            v, e = _graded_piece(model, a, b, left_sing, right_sing, log_alpha, quad_tol,
                                 tol, resolution)
        else:
            v, e = _quad(lambda t: _inner(model, t, log_alpha, tol, resolution), a, b, quad_tol)
        total += v
        err += e
    return (total, err) if with_error else total


def _quad(f, a, b, quad_tol):
    def safe(t):
        val = f(t)
        if not math.isfinite(val):
            raise InnerDivergent(float(t))
        return val

    val, err = integrate.quad(safe, a, b, epsabs=quad_tol * 1e-3, epsrel=quad_tol, limit=50)
    return val, err


def _breakpoints(model, lo, hi):
    pts = []
    half = 0.5 * model.blend_width
    for th in model.sector_boundaries():
        for k in (-1, 0, 1):
            for t in (th - half, th, th + half):
                t = t + 2 * math.pi * k
                if lo < t < hi:
                    pts.append(t)
    return pts


def _isolated_integrable(model, theta_s, log_alpha, beta, tol, resolution):
    """Is ``theta_s`` an isolated divergent ray with an integrable singularity?"""
    width = min(beta, 0.25)
    for side in (-1.0, 1.0):
        v = _graded_side(model, theta_s, side, width, log_alpha, 1e-3, tol, resolution)
        if v.status != FINITE:
            return False
    return True


def _graded_piece(model, a, b, left_sing, right_sing, log_alpha, quad_tol, tol, resolution):
    if left_sing and right_sing:
        m = 0.5 * (a + b)
        v1, e1 = _graded_piece(model, a, m, True, False, log_alpha, quad_tol, tol, resolution)
        v2, e2 = _graded_piece(model, m, b, False, True, log_alpha, quad_tol, tol, resolution)
        return v1 + v2, e1 + e2
    theta_s, side = (a, 1.0) if left_sing else (b, -1.0)
    res = _graded_side(model, theta_s, side, b - a, log_alpha, quad_tol, tol, resolution)
    if res.status != FINITE:
        raise InnerDivergent(theta_s)
    return res.value, res.error_bound


def _graded_side(model, theta_s, side, width, log_alpha, quad_tol, tol, resolution,
                 max_exit=2e3, ratio=0.5):
    """Integrate ``g(theta)`` over ``(theta_s, theta_s + side*width)`` on dyadic shells.

    Shells accumulate geometrically toward ``theta_s``.  The remainder next to
    ``theta_s`` is bounded with the flat-ray estimate ``1/J <= 1/r`` up to the
    exit radius plus the exterior tail of the innermost evaluated ray.
    """
    alpha = math.exp(log_alpha)
    strip = model.flat_strip
    shells = []
    total = 0.0
    outer = width
    ext_tail = 0.0
    k = 0
    while True:
        inner = outer * ratio
        vals = []
        for x, w in zip(_GL3_X, _GL3_W):
            phi = 0.5 * (outer + inner) + 0.5 * (outer - inner) * x
            g = _inner(model, theta_s + side * phi, log_alpha, tol, resolution)
            if not math.isfinite(g):
                return ConvergenceVerdict(INFINITE, "fitted_tail",
                                          divergence_rate=f"ray at offset {phi:.3g} diverges",
                                          details={"shells": shells})
            vals.append(g)
            if strip is not None:
                rx = float(strip.exit_radius(theta_s + side * phi))
                ext_tail = max(ext_tail, g - math.log(max(rx, alpha) / alpha))
        term = 0.5 * (outer - inner) * float(np.dot(_GL3_W, vals))
        shells.append({"phi_outer": outer, "phi_inner": inner, "contribution": term})
        total += term
        outer = inner
        k += 1
        rx_next = (strip.half_width / math.sin(outer)) if strip is not None else math.inf
        if strip is None:
            if k >= 40:
                break
            if k >= 6 and term < quad_tol * total:
                break
            continue
        # flat-ray remainder bound over (0, outer)
        a = strip.half_width
        rem = outer * (max(math.log(a / (alpha * outer)), 0.0) + 1.0 + ext_tail)
        if rem < quad_tol * total or rx_next > max_exit:
            break
    if strip is None:
        last = [s["contribution"] for s in shells[-5:]]
        ratios = [b / a for a, b in zip(last[:-1], last[1:]) if a > 0]
        if ratios and min(ratios) > 0.9:
            return ConvergenceVerdict(INFINITE, "truncated",
                                      divergence_rate="shell contributions do not decay",
                                      details={"shells": shells})
        rem = shells[-1]["contribution"] * ratio / (1 - ratio)
    return ConvergenceVerdict(FINITE, "fitted_tail", value=total + rem, error_bound=rem,
                              details={"shells": shells, "n_shells": len(shells)})


def flat_singularity_test(model, theta_f, beta, alpha, quad_tol=1e-3, tol=DEFAULT_TOL,
                          resolution=EXPONENT_RESOLUTION):
    """Integrability of ``g(theta) = int_alpha^inf dr/J`` around a flat ray ``theta_f``.

    Uses dyadic shells (ratio 0.5) on both sides of ``theta_f``.  Returns a
    finite verdict with the two-sided integral when the singularity is
    integrable, ``infinite`` when rays near ``theta_f`` diverge.
    """
    if not 0 < beta < math.pi:
        raise InvalidParameters("beta must lie in (0, pi)")
    log_alpha = math.log(alpha)
    sides = [_graded_side(model, theta_f, s, beta, log_alpha, quad_tol, tol, resolution)
             for s in (-1.0, 1.0)]
    details = {"sides": [s.to_dict() for s in sides], "theta_f": theta_f, "beta": beta,
               "alpha": alpha}
    if any(s.is_infinite for s in sides):
        return ConvergenceVerdict(INFINITE, "fitted_tail",
                                  divergence_rate="rays next to the flat axis diverge",
                                  details=details)
    if any(s.status != FINITE for s in sides):
        return ConvergenceVerdict(INCONCLUSIVE, "fitted_tail", reason="graded mesh unresolved",
                                  details=details)
    return ConvergenceVerdict(FINITE, "fitted_tail", value=sides[0].value + sides[1].value,
                              error_bound=sides[0].error_bound + sides[1].error_bound,
                              details=details)


# ---------------------------------------------------------------------------
# DPI certificates


def dpi_certificate(model, theta0, beta, epsilon, search_range=(1.0, math.inf),
                    grid_ratio=2.0 ** 0.125, max_log_rho=1e9, tol=DEFAULT_TOL,
                    resolution=EXPONENT_RESOLUTION):
    """Smallest grid radius ``rho`` with ``sector_integral < epsilon`` at ``rho, 2rho, 4rho``.

    The grid is geometric (``rho_k = rho_min * grid_ratio^k``) and searched by
    doubling then bisection in ``k``; the search runs in ``log rho`` so radii
    beyond floating-point range are representable.
    """
    if not epsilon > 0:
        raise InvalidParameters("epsilon must be positive")
    lo_rho, hi_rho = search_range
    L0 = math.log(lo_rho)
    L_hi = min(math.log(hi_rho), max_log_rho) if math.isfinite(hi_rho) else max_log_rho
    step = math.log(grid_ratio)
    k_max = int(math.floor((L_hi - L0) / step))
    tested = []

    def values(k):
        L = L0 + k * step
        out = []
        for mult in (1.0, 2.0, 4.0):
            out.append(sector_integral(model, theta0, beta, log_alpha=L + math.log(mult),
                                       tol=tol, resolution=resolution))
        tested.append({"log_rho": L, "values": out})
        return out

    def ok(k):
        vals = values(k)
        if not (vals[0] >= vals[1] >= vals[2]):
            raise QuadratureFailure("sector integral not monotone in alpha")
        return max(vals) < epsilon

    base = dict(theta0=theta0, beta=beta, epsilon=epsilon, grid_ratio=grid_ratio)
    try:
        if ok(0):
            k_good = 0
        else:
            k_bad, k = 0, 1
            while k <= k_max and not ok(k):
                k_bad, k = k, 2 * k
            if k > k_max:
                if k_bad >= k_max or not ok(k_max):
                    return DpiCertificate(rho=None, log_rho=None, sector_integral_at_rho=None,
                                          found=False, reason="search range exhausted",
                                          tested=tested, **base)
                k = k_max
            k_good = k
            while k_good - k_bad > 1:
                mid = (k_good + k_bad) // 2
                if ok(mid):
                    k_good = mid
                else:
                    k_bad = mid
    except InnerDivergent as exc:
        return DpiCertificate(rho=None, log_rho=None, sector_integral_at_rho=None, found=False,
                              reason=f"InnerDivergent: {exc}", tested=tested, **base)
    L = L0 + k_good * step
    val = sector_integral(model, theta0, beta, log_alpha=L, tol=tol, resolution=resolution)
    rho = math.exp(L) if L < 700 else None
    return DpiCertificate(rho=rho, log_rho=L, sector_integral_at_rho=val, found=True,
                          tested=tested, **base)


@dataclass
class RadialDpiResult:
    solvable: bool | None
    transience: ConvergenceVerdict
    certificate: dict

    @property
    def verdict(self):
        if self.solvable:
            return "DPI solvable"
        return "not established"

    def to_dict(self):
        return {"verdict": self.verdict, "transience": self.transience.to_dict(),
                "certificate": self.certificate}


def radial_dpi_check(upper_bound, beta=0.5, alphas=(2.0, 4.0, 8.0, 16.0, 32.0), tol=DEFAULT_TOL):
    """Transience of the radial comparison surface implies DPI solvability.

    The certificate lists the comparison bound ``2 beta int_alpha^inf dr/J*``,
    which dominates the sector integral of any surface under this upper bound.
    """
    verdict, ray = radial_transience(upper_bound, tol)
    cert = {"beta": beta, "comparison_bound": {}}
    if verdict.is_finite:
        for a in alphas:
            cert["comparison_bound"][repr(float(a))] = 2.0 * beta * ray_tail_integral(ray, a)
        return RadialDpiResult(True, verdict, cert)
    return RadialDpiResult(None, verdict, cert)
