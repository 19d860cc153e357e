"""Jacobi fields along rays, in logarithmic (Riccati) form.

Along the ray of direction ``theta`` the Jacobi field ``J`` solves
``J'' + K J = 0`` with ``J(0) = 0, J'(0) = 1``.  We integrate the log-derivative
``v = J'/J`` instead, which obeys ``v' = -K - v^2``, together with
``(log J)' = v``.  Neither quantity overflows when ``J`` grows
super-exponentially.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import (
    InvalidModel,
    OrderingUnverified,
    StiffnessFailure,
    UnsupportedFamily,
    WindowTooSmall,
)
from .surface import ConstantNegative, Flat, LogLaw, PowerLaw

R_MIN = 1e-3
DEFAULT_TOL = 1e-9
POOR_FIT_CEILING = 0.05
MAX_EXPLICIT_EVALS = 400_000
# beyond log J = 5000 the integrand 1/J is zero in double precision
LOG_J_CAP = 5000.0

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


@dataclass
class TailModel:
    """Asymptotic form of ``J`` on a fit window.

    ``form`` is ``"power_log"`` (``J ~ c r^a (log r)^b``), ``"exponential"``
    (``J ~ c e^{mu r}``) or ``"super_exponential"`` (``v`` itself grows; only
    sampled log-rates are kept).  ``uncertainty`` holds half-widths for the
    fitted exponents, estimated from the drift between the full window and its
    upper half.
    """

    form: str
    params: dict
    fit_window: tuple
    fit_residual: float
    uncertainty: dict = field(default_factory=dict)
    poor_fit: bool = False
    log_rate_samples: tuple = ()
    end_state: tuple = (math.nan, math.nan, math.nan)  # (r, v, logJ) at window end

    @property
    def c(self):
        log_c = self.params.get("log_c", math.nan)
        return math.exp(log_c) if log_c < 700 else math.inf

    def log_model(self, r):
        r = np.asarray(r, dtype=float)
        p = self.params
        if self.form == "power_log":
            return p["log_c"] + p["a"] * np.log(r) + p["b"] * np.log(np.log(r))
        if self.form == "exponential":
            return p["log_c"] + p["mu"] * r
        raise ValueError("super_exponential tails have no closed log model")

    def exponents(self, pessimistic=False):
        """``(mu, a, b)`` with ``1/J ~ e^{-mu r} r^{-a} (log r)^{-b} / c``.

        ``pessimistic`` shifts each exponent by its uncertainty toward slower
        decay of ``1/J``.
        """
        p, u = self.params, self.uncertainty
        s = -1.0 if pessimistic else 0.0
        if self.form == "power_log":
            return 0.0, p["a"] + s * u.get("a", 0.0), p["b"] + s * u.get("b", 0.0)
        if self.form == "exponential":
            return p["mu"] + s * u.get("mu", 0.0), 0.0, 0.0
        return math.inf, 0.0, 0.0

    def inverse_tail(self, log_x, pessimistic=False, boundary_tol=0.0):
        """``int_x^inf dr / J_model(r)`` with ``x = exp(log_x)``; ``inf`` if divergent.

        ``boundary_tol`` treats ``|a - 1| <= boundary_tol`` as ``a = 1``.
        """
        if self.form == "super_exponential":
            r_end, v_end, logj_end = self.end_state
            x = math.exp(min(log_x, 700.0))
            if x < r_end * (1 - 1e-9):
                raise ValueError("super-exponential tail only covers r >= window end")
            return math.exp(-logj_end - v_end * (x - r_end)) / v_end
        mu, a, b = self.exponents(pessimistic)
        log_c = self.params["log_c"]
        if self.form == "exponential":
            if mu <= 0:
                return math.inf
            if log_x > 700.0:
                return 0.0
            x = math.exp(log_x)
            e = -mu * x - log_c
            return math.exp(e) / mu if e > -745.0 else 0.0
        return power_log_tail(log_x, a, b, log_c, boundary_tol)

    def to_dict(self):
        d = {"form": self.form, "params": self.params, "fit_window": list(self.fit_window),
             "fit_residual": self.fit_residual, "uncertainty": self.uncertainty,
             "poor_fit": self.poor_fit}
        if self.log_rate_samples:
            d["log_rate_samples"] = [list(x) for x in self.log_rate_samples]
        return d


def power_log_tail(log_x, a, b, log_c=0.0, boundary_tol=0.0):
    """``int_x^inf dr / (c r^a (log r)^b)`` for ``x = e^{log_x} > 1``, ``c = e^{log_c}``."""
    T = log_x
    if T <= 0:
        raise ValueError("power-log tail needs x > 1")
    if abs(a - 1.0) <= boundary_tol:
        if b <= 1.0:
            return math.inf
        return math.exp((1.0 - b) * math.log(T) - log_c) / (b - 1.0)
    if a < 1.0:
        return math.inf
    k = a - 1.0
    # substitute t = T + u; factor out the value at T
    log_pref = -k * T - b * math.log(T)
    inner, _ = integrate.quad(lambda u: math.exp(-k * u - b * math.log1p(u / T)), 0.0, math.inf,
                              epsabs=0.0, epsrel=1e-10, limit=200)
    if log_pref - log_c > 700:
        return math.inf
    return math.exp(log_pref - log_c) * inner


@dataclass
class JacobiSolution:
    """Log-derivative and log-length of the Jacobi field along one ray.

    Arrays ``grid``, ``v`` and ``logJ`` are the accepted integrator steps.
    Values between steps come from the integrator's dense output.
    """

    theta: float
    grid: np.ndarray
    v: np.ndarray
    logJ: np.ndarray
    tail: TailModel | None = None
    tol: float = DEFAULT_TOL
    k0: float = 0.0
    dense: object = field(default=None, repr=False)
    model: object = field(default=None, repr=False)
    _segments: np.ndarray = field(default=None, repr=False)

    @property
    def r_min(self):
        return float(self.grid[0])

    @property
    def r_max(self):
        return float(self.grid[-1])

    def _eval(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r > self.r_max * (1 + 1e-12)):
            raise ValueError(f"r beyond solved range (r_max={self.r_max})")
        flat = np.ravel(r)
        v = np.empty_like(flat)
        lj = np.empty_like(flat)
        small = flat < self.r_min
        if np.any(small):
            rs = flat[small]
            v[small] = 1.0 / rs - self.k0 * rs / 3.0
            lj[small] = np.log(rs) - self.k0 * rs * rs / 6.0
        big = ~small
        if np.any(big):
            y = self.dense(np.minimum(flat[big], self.r_max))
            v[big] = y[0]
            lj[big] = y[1]
        return v.reshape(r.shape), lj.reshape(r.shape)

    def v_at(self, r):
        return self._eval(r)[0]

    def logJ_at(self, r):
        return self._eval(r)[1]

    # 1/J is integrated as e^{s - log J} ds in s = log r: smooth on the wide
    # steps the solver takes along power-law tails

    def _segment_integrals(self):
        if self._segments is None:
            sa, sb = np.log(self.grid[:-1]), np.log(self.grid[1:])
            half = 0.5 * (sb - sa)
            nodes = 0.5 * (sb + sa)[:, None] + half[:, None] * _GL_X[None, :]
            r = np.minimum(np.exp(nodes), self.r_max)
            lj = self.dense(r.ravel())[1].reshape(nodes.shape)
            self._segments = half * (np.exp(nodes - lj) @ _GL_W)
        return self._segments

    def _partial(self, a, b):
        """Gauss-Legendre integral of 1/J over a sub-interval of one step."""
        if b <= a:
            return 0.0
        sa, sb = math.log(a), math.log(b)
        half = 0.5 * (sb - sa)
        nodes = 0.5 * (sb + sa) + half * _GL_X
        lj = self.logJ_at(np.minimum(np.exp(nodes), self.r_max))
        return float(half * np.dot(np.exp(nodes - lj), _GL_W))

    def inv_J_integral(self, a, b=None):
        """``int_a^b dr / J`` over the solved range (``b`` defaults to ``r_max``)."""
        if b is None:
            b = self.r_max
        if a < self.r_min:
            raise ValueError("lower limit below the seeded radius")
        if b > self.r_max * (1 + 1e-12) or b < a:
            raise ValueError("bad integration limits")
        seg = self._segment_integrals()
        g = self.grid
        ia = int(np.searchsorted(g, a, side="right")) - 1
        ib = int(np.searchsorted(g, b, side="right")) - 1
        ia = min(ia, len(g) - 2)
        ib = min(ib, len(g) - 2)
        if ia == ib:
            return self._partial(a, b)
        total = self._partial(a, g[ia + 1]) + float(np.sum(seg[ia + 1:ib]))
        return total + self._partial(g[ib], b)

    def inv_J_integral_to_infinity(self, a, boundary_tol=0.0):
        """Numeric part to ``r_max`` plus the tail model beyond it."""
        if self.tail is None:
            raise ValueError("solution has no tail model")
        return self.inv_J_integral(a) + self.tail.inverse_tail(math.log(self.r_max),
                                                               boundary_tol=boundary_tol)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "v", "logJ"])
            for row in zip(self.grid, self.v, self.logJ):
                w.writerow([repr(float(x)) for x in row])


class _EvalBudget(Exception):
    pass


def solve_log_jacobi(model, theta, r_max, tol=DEFAULT_TOL, r_min=R_MIN, method="auto"):
    """Integrate the Riccati form of the Jacobi equation along one ray.

    Parameters
    ----------
    model : CurvatureModel
    theta : float
        Ray direction.
    r_max : float
        Outer radius, must exceed 1.  Integration stops early once
        ``log J`` reaches ``LOG_J_CAP``; ``solution.r_max`` is then smaller.
    tol : float
        Relative tolerance of the adaptive step control, in ``(0, 1e-2]``.
    r_min : float
        Seed radius; the series ``v = 1/r - K(0) r/3`` is used below it.
    method : {"auto", "DOP853", "Radau"}
        ``auto`` starts with the explicit pair and switches to Radau when the
        explicit method stalls on stiffness.

    Raises
    ------
    StiffnessFailure
        The step size underflowed before reaching ``r_max``.
    """
    if not r_max > 1:
        raise InvalidModel(f"r_max must exceed 1, got {r_max}")
    if not 0 < tol <= 1e-2:
        raise InvalidModel(f"tol must lie in (0, 1e-2], got {tol}")
    kfun = model.ray(theta)
    k0 = float(kfun(0.0))
    if kfun.is_flat:
        return _flat_solution(model, theta, r_min, r_max, tol)

    # integrate in s = log r with w = r v; w stays O(1) on power and log tails
    s0, s1 = math.log(r_min), math.log(r_max)
    y0 = [1.0 - k0 * r_min * r_min / 3.0, s0 - k0 * r_min * r_min / 6.0]
    reached = [r_min]
    budget = [MAX_EXPLICIT_EVALS]

    def rhs(s, y):
        budget[0] -= 1
        if budget[0] < 0:
            raise _EvalBudget
        r = math.exp(s)
        reached[0] = r
        w = y[0]
        return [w - w * w - r * r * kfun(r), w]

    def jac(s, y):
        return [[1.0 - 2.0 * y[0], 0.0], [1.0, 0.0]]

    def saturated(s, y):
        return y[1] - LOG_J_CAP

    saturated.terminal = True

    atol = [1e-3 * tol, 1e-2 * tol]
    methods = ["DOP853", "Radau"] if method == "auto" else [method]
    res = None
    for m in methods:
        budget[0] = MAX_EXPLICIT_EVALS if m == "DOP853" else 10 * MAX_EXPLICIT_EVALS
        kw = {"jac": jac} if m in ("Radau", "BDF", "LSODA") else {}
        try:
            with np.errstate(over="raise", invalid="raise"):
                res = integrate.solve_ivp(rhs, (s0, s1), y0, method=m, rtol=tol, atol=atol,
                                          dense_output=True, events=saturated, **kw)
        except (_EvalBudget, FloatingPointError):
            res = None
            continue
        if res.status in (0, 1):
            break
        res = None
    if res is None:
        raise StiffnessFailure("Riccati integration stalled", reached[0])

    grid = np.exp(res.t)
    grid[0] = r_min
    if res.status == 0:
        grid[-1] = r_max
    return JacobiSolution(theta=float(theta), grid=grid, v=res.y[0] / grid, logJ=res.y[1],
                          tol=tol, k0=k0, dense=_LogDense(res.sol), model=model)


class _LogDense:
    """Dense output in ``r`` returning ``(v, log J)`` from the ``(w, log J)`` solution in ``log r``."""

    def __init__(self, sol):
        self.sol = sol

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        y = self.sol(np.log(r))
        return np.stack([y[0] / r, y[1]])


class _FlatDense:
    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.stack([1.0 / r, np.log(r)])


def _flat_solution(model, theta, r_min, r_max, tol):
    grid = np.geomspace(r_min, r_max, max(16, int(8 * math.log10(r_max / r_min))))
    return JacobiSolution(theta=float(theta), grid=grid, v=1.0 / grid, logJ=np.log(grid),
                          tol=tol, k0=0.0, dense=_FlatDense(), model=model)


# ---------------------------------------------------------------------------
# closed-form bases


def closed_form_basis(profile):
    """Two independent Jacobi solutions on ``(R, inf)`` for the family's exact ``K*``.

    Returns ``(J1, J2)`` as vectorised callables.  For the power and log
    families ``J2 = J1 * int_{r_ref}^r ds / J1(s)^2`` (reduction of order),
    evaluated by adaptive quadrature.
    """
    if isinstance(profile, Flat):
        return (lambda r: np.asarray(r, dtype=float),
                lambda r: np.ones_like(np.asarray(r, dtype=float)))
    if isinstance(profile, ConstantNegative):
        a = profile.a
        return (lambda r: np.sinh(a * np.asarray(r, dtype=float)) / a,
                lambda r: np.cosh(a * np.asarray(r, dtype=float)))
    if isinstance(profile, PowerLaw):
        p = profile.alpha
        j1 = lambda r: np.asarray(r, dtype=float) ** p  # noqa: E731
        return j1, _reduction_of_order(j1, profile.R)
    if isinstance(profile, LogLaw):
        if not profile.modified and profile.c != 1.0:
            raise UnsupportedFamily("only the modified log family has a closed-form basis")
        b = profile.c
        j1 = lambda r: np.asarray(r, dtype=float) * np.log(r) ** b  # noqa: E731
        return j1, _reduction_of_order(j1, profile.R)
    raise UnsupportedFamily(f"no closed-form basis for {profile.family}")


def _reduction_of_order(j1, r_ref):
    def j2(r):
        r = np.asarray(r, dtype=float)
        flat = np.ravel(r)
        out = np.empty_like(flat)
        for i, x in enumerate(flat):
            q, _ = integrate.quad(lambda s: 1.0 / float(j1(s)) ** 2, r_ref, x,
                                  epsabs=0.0, epsrel=1e-12, limit=200)
            out[i] = float(j1(x)) * q
        return out.reshape(r.shape)

    return j2


# ---------------------------------------------------------------------------
# tail fitting


def default_window(sol):
    r_hi = sol.r_max
    r_lo = max(math.sqrt(r_hi), r_hi / 1e6, 4.0 * sol.r_min)
    return (r_lo, r_hi)


def _lstsq(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef, X @ coef


def _fit_forms(r, L):
    lr = np.log(r)
    fits = {}
    if r[0] > 1.0:
        X = np.column_stack([np.ones_like(r), lr, np.log(lr)])
        coef, pred = _lstsq(X, L)
        fits["power_log"] = ({"log_c": coef[0], "a": coef[1], "b": coef[2]}, pred)
    X = np.column_stack([np.ones_like(r), r])
    coef, pred = _lstsq(X, L)
    fits["exponential"] = ({"log_c": coef[0], "mu": coef[1]}, pred)
    return fits


def _residual(L, pred):
    return float(np.max(np.abs(L - pred) / np.maximum(np.abs(L), 1e-300)))


def fit_tail(sol, window=None, ceiling=POOR_FIT_CEILING, n_samples=256):
    """Least-squares fit of ``log J`` against the dictionary ``{log r, log log r, r}``.

    The form with the lowest relative residual wins.  Power-law exponents are
    then refined from ``r v`` expanded in ``1 / log r``; their uncertainty is
    the larger of the drift to the upper half-window and the drift when one
    more expansion term is added.  A residual above
    ``ceiling`` marks the model ``poor_fit``.  When ``v`` itself grows
    exponentially across the window the tail is reported as
    ``super_exponential``.
    """
    if window is None:
        window = default_window(sol)
    r_lo, r_hi = float(window[0]), float(window[1])
    if r_lo < sol.r_min or r_hi > sol.r_max * (1 + 1e-12):
        raise WindowTooSmall("fit window must lie inside the solved range")
    if r_hi / r_lo < 2.0:
        raise WindowTooSmall(f"fit window ratio {r_hi / r_lo:.3g} < 2")

    r = np.geomspace(r_lo, r_hi, n_samples)
    v, L = sol._eval(r)
    end_state = (r_hi, float(v[-1]), float(L[-1]))

    slope = np.polyfit(r, np.log(v), 1)[0]
    if slope * (r_hi - r_lo) > math.log(2.0) and v[-1] > 2.0 * v[0]:
        idx = np.linspace(0, n_samples - 1, 16).astype(int)
        return TailModel("super_exponential", {"log_rate_slope": float(slope)}, (r_lo, r_hi),
                         0.0, {}, False, tuple((float(r[i]), float(math.log(v[i]))) for i in idx),
                         end_state)

    fits = _fit_forms(r, L)
    resid = {k: _residual(L, pred) for k, (_, pred) in fits.items()}
    form = min(resid, key=resid.get)
    half = r >= math.sqrt(r_lo * r_hi)

    if form == "power_log":
        # r v = a + b / log r + O(1 / log^2 r): fitting the log-derivative
        # separates a from b far better than fitting log J directly
        w = r * v
        full = _fit_log_derivative(r, w, L, 2)
        variants = [_fit_log_derivative(r, w, L, 3), _fit_log_derivative(r[half], w[half], L[half], 2)]
        params = full
        pred = params["log_c"] + params["a"] * np.log(r) + params["b"] * np.log(np.log(r))
        resid[form] = _residual(L, pred)
        unc = {k: float(max(abs(var[k] - params[k]) for var in variants)) for k in ("a", "b")}
    else:
        params = {k: float(x) for k, x in fits[form][0].items()}
        # exponent drift between the full window and its upper half (in log r)
        sub = _fit_forms(r[half], L[half])[form]
        unc = {k: float(abs(sub[0][k] - params[k])) for k in params if k != "log_c"}
    return TailModel(form, params, (r_lo, r_hi), resid[form], unc, resid[form] > ceiling, (),
                     end_state)


def _fit_log_derivative(r, w, L, degree):
    """Fit ``w = a + sum_k d_k / t^k`` (``t = log r``); ``c`` from the log-J offset."""
    t = np.log(r)
    X = np.column_stack([t ** -k for k in range(degree + 1)])
    coef, _ = _lstsq(X, w)
    a, b = float(coef[0]), float(coef[1])
    log_c = float(np.mean(L - a * t - b * np.log(t)))
    return {"log_c": log_c, "a": a, "b": b}


# ---------------------------------------------------------------------------
# comparison


def check_comparison(sol_weaker, sol_stronger, rtol=None, n_grid=400, check_ordering=True):
    """Check ``J_weaker <= J_stronger`` and ``v_weaker <= v_stronger``.

    ``sol_weaker`` must come from the less negative curvature
    (``0 >= K_weaker >= K_stronger``).  Returns a dict with the largest
    violations of both inequalities; ``passed`` is True when both are within
    ``rtol`` (default ten times the looser solver tolerance).
    """
    if rtol is None:
        rtol = 10.0 * max(sol_weaker.tol, sol_stronger.tol)
    lo = max(sol_weaker.r_min, sol_stronger.r_min)
    hi = min(sol_weaker.r_max, sol_stronger.r_max)
    if not hi > lo:
        raise OrderingUnverified("solutions do not overlap")
    r = np.geomspace(lo, hi, n_grid)
    if check_ordering:
        kw = np.asarray(sol_weaker.model.ray(sol_weaker.theta)(r))
        ks = np.asarray(sol_stronger.model.ray(sol_stronger.theta)(r))
        if np.any(ks > kw + 1e-12 * (1 + np.abs(kw))) or np.any(kw > 1e-15):
            raise OrderingUnverified("curvature ordering 0 >= K_weaker >= K_stronger fails")
    vw, lw = sol_weaker._eval(r)
    vs, ls = sol_stronger._eval(r)
    # logJ difference is the relative error of J
    log_violation = float(np.max(lw - ls))
    v_violation = float(np.max((vw - vs) / np.abs(vs)))
    return {
        "max_logJ_violation": log_violation,
        "max_v_violation": v_violation,
        "rtol": rtol,
        "passed": log_violation <= rtol and v_violation <= rtol,
        "n_points": n_grid,
    }
