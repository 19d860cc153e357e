"""Monte Carlo Brownian motion on a polar-coordinate surface.

The generator is ``(1/2) Laplace-Beltrami`` of ``dr^2 + J^2 dtheta^2``, i.e.

    dr     = dW1 + (1/2) v dt
    dtheta = dW2 / J - (1/2) (d_theta J) / J^3 dt

Steps are taken in the Cartesian chart ``(x, y) = r (cos theta, sin theta)``
obtained from these equations by Ito's formula.  Its coefficients stay bounded
at the pole, where the polar drift ``v / 2 ~ 1 / (2 r)`` does not, so paths
may start arbitrarily close to the pole.  The step size follows
``dt = dt_base * min(1, J^2, r^2)`` with ``J`` and ``r`` floored at
``pole_radius`` (inside that disk the Cartesian step needs no further
refinement).

Every path draws from its own counter-based stream
``Philox(key = seed * 2**64 + path_index)``, so results are bit-identical for
a fixed ``(seed, n_paths)`` however paths are batched.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from .errors import (
    ExcessiveBudgetLoss,
    InsufficientSamples,
    InvalidParameters,
    NonFiniteState,
    NotTransient,
)
from .jacobi import solve_log_jacobi
from .potential import green_for_profile

TWO_PI = 2.0 * math.pi
ESCAPED, HIT_INNER, BUDGET, NONFINITE = 0, 1, 2, 3
STATUS_NAMES = {ESCAPED: "escaped", HIT_INNER: "hit_inner", BUDGET: "budget_exceeded"}
FALLBACK_ESCAPE_RADIUS = 20.0
GREEN_RATIO = 1e-3


@dataclass
class SimConfig:
    """Simulation parameters.

    ``r_escape=None`` selects the radius where the upper comparison Green's
    function has dropped by ``GREEN_RATIO`` from the start radius.
    ``r_inner=None`` disables the inner absorbing circle.
    """

    dt_base: float = 0.01
    r_escape: float | None = None
    r_inner: float | None = None
    t_budget: float = 1000.0
    seed: int = 0
    n_paths: int = 1000
    pole_radius: float = 0.25
    batch_size: int = 2048
    chunk: int = 1024
    table_points: int = 1200
    theta_spacing: float = 0.02

    def validate(self, r0=None):
        if not self.dt_base > 0:
            raise InvalidParameters("dt_base must be positive")
        if self.n_paths < 1:
            raise InvalidParameters("n_paths must be >= 1")
        if self.seed < 0:
            raise InvalidParameters("seed must be non-negative")
        if r0 is not None:
            if self.r_inner is not None and not 0 < self.r_inner < r0:
                raise InvalidParameters("need 0 < r_inner < r0")
            if self.r_escape is not None and not r0 < self.r_escape:
                raise InvalidParameters("need r0 < r_escape")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        bad = set(d) - known
        if bad:
            raise InvalidParameters(f"unknown SimConfig keys {sorted(bad)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def default_escape_radius(model, r0, ratio=GREEN_RATIO, fallback=FALLBACK_ESCAPE_RADIUS):
    """Radius where ``G*(r) / G*(r0) < ratio`` on the upper comparison surface.

    Falls back to ``max(fallback, 2 r0)`` when that surface is not transient.
    """
    try:
        green = green_for_profile(model.upper_bound)
    except NotTransient:
        return max(fallback, 2.0 * r0)
    g0 = green(r0)
    lo, hi = r0, 2.0 * r0 + 1.0
    while green(hi) >= ratio * g0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            return max(fallback, 2.0 * r0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if green(mid) < ratio * g0:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# drift tables


class DriftTable:
    """Tabulated ``w = r v`` and ``l = log J - log r`` on a (theta, log r) grid.

    Radially symmetric models use one ray.  Otherwise rays sit on a theta grid
    that is fine inside hard blend zones (spacing ``blend_width / 4``), coarser
    elsewhere, and collapses to the two end rays on each pure-sector interval,
    where ``d_theta l`` is exactly 0.
    """

    def __init__(self, model, r_max, n_r=1200, theta_spacing=0.02, tol=1e-8):
        self.model = model
        self.log_r = np.linspace(math.log(1e-3), math.log(r_max * 1.05), n_r)
        self.dlog = self.log_r[1] - self.log_r[0]
        r = np.exp(self.log_r)
        if model.is_radial:
            nodes = np.array([0.0])
        else:
            nodes = self._theta_nodes(model, theta_spacing)
        w_rows, l_rows = [], []
        for th in nodes:
            sol = solve_log_jacobi(model, float(th), r_max * 1.05, tol=tol)
            rr = np.minimum(r, sol.r_max)
            v, logj = sol._eval(rr)
            l_row = logj - np.log(rr)
            beyond = r > sol.r_max
            if np.any(beyond):
                # saturated solution: 1/J is already negligible there
                l_row[beyond] = l_row[~beyond][-1] + (r[beyond] - sol.r_max) * v[-1]
            w_rows.append(r * v)
            l_rows.append(l_row)
        self.nodes = np.asarray(nodes, dtype=float)
        self.w = np.array(w_rows)
        self.l = np.array(l_rows)
        if len(nodes) > 1:
            self.nodes = np.append(self.nodes, self.nodes[0] + TWO_PI)
            self.w = np.vstack([self.w, self.w[:1]])
            self.l = np.vstack([self.l, self.l[:1]])
            gaps = np.diff(self.nodes)[:, None]
            self.dl = np.diff(self.l, axis=0) / gaps
            pure = model.is_pure(self.nodes)
            same = np.array([model.ray(a)(5.0) == model.ray(b)(5.0)
                             for a, b in zip(self.nodes[:-1], self.nodes[1:])])
            self.dl[pure[:-1] & pure[1:] & same] = 0.0
        else:
            self.dl = np.zeros((1, n_r))
        dl_rows = np.vstack([self.dl, self.dl[-1:]]) if len(self.nodes) > 1 else self.dl
        self.packed = np.ascontiguousarray(np.stack([self.w, self.l, dl_rows], axis=-1))
        self.inv_gap = 1.0 / np.diff(self.nodes) if len(self.nodes) > 1 else np.ones(1)

    @staticmethod
    def _theta_nodes(model, spacing):
        t0 = model.sectors[0].theta_min
        pts = list(np.arange(t0, t0 + TWO_PI, spacing))
        half = 0.5 * model.blend_width
        fine = max(model.blend_width / 4.0, 1e-4)
        for s in model.sectors:
            for b in (s.theta_min, s.theta_max):
                pts.extend(np.arange(b - half - fine, b + half + 1.5 * fine, fine))
        pts = np.unique(np.round(t0 + np.mod(np.array(pts) - t0, TWO_PI), 12))
        pure = model.is_pure(pts)
        keep = np.ones(len(pts), dtype=bool)
        # interior points of a pure run duplicate the run's end rays
        keep[1:-1] = ~(pure[1:-1] & pure[:-2] & pure[2:])
        return pts[keep]

    def lookup(self, r, theta):
        """Return ``(w, l, d_theta l)`` at the given points (``r > 0``)."""
        x = (np.log(r) - self.log_r[0]) * (1.0 / self.dlog)
        np.clip(x, 0.0, len(self.log_r) - 1.000001, out=x)
        i = x.astype(np.int64)
        fr = (x - i)[:, None]
        pk = self.packed
        if len(self.nodes) == 1:
            a = pk[0, i] * (1 - fr) + pk[0, i + 1] * fr
            return a[:, 0], a[:, 1], a[:, 2]
        t0 = self.nodes[0]
        th = t0 + np.mod(theta - t0, TWO_PI)
        j = np.clip(np.searchsorted(self.nodes, th, side="right") - 1, 0, len(self.nodes) - 2)
        ft = ((th - self.nodes[j]) * self.inv_gap[j])[:, None]
        ab = pk[j, i] * (1 - fr) + pk[j, i + 1] * fr
        cd = pk[j + 1, i] * (1 - fr) + pk[j + 1, i + 1] * fr
        out = ab * (1 - ft) + cd * ft
        # d_theta l is piecewise constant in theta by construction
        return out[:, 0], out[:, 1], ab[:, 2]


# ---------------------------------------------------------------------------
# simulation core


@dataclass
class PathBatch:
    """Per-path outcomes of a simulation run, indexed by path number."""

    status: np.ndarray
    theta_final: np.ndarray      # unwrapped
    theta_max_dev: np.ndarray    # max |theta_t - theta0|
    theta_range: np.ndarray      # max theta - min theta
    r_final: np.ndarray
    t_final: np.ndarray
    steps: np.ndarray
    theta0: float
    r0: float
    config: SimConfig
    traces: list = field(default_factory=list)

    @property
    def n_paths(self):
        return len(self.status)

    def counts(self):
        return {name: int(np.sum(self.status == code)) for code, name in STATUS_NAMES.items()}


@dataclass
class PathOutcome:
    """One simulated path.

    For escaped paths ``theta_final`` is in ``[0, 2 pi)`` and ``winding`` counts
    signed turns about the pole; ``theta_osc`` is the angular range visited.
    """

    status: str
    theta_final: float | None
    theta_osc: float
    winding: float | None
    max_deviation: float
    r_final: float
    t_final: float

    def confined(self, delta):
        return self.status == "escaped" and self.max_deviation < delta


def _streams(seed, indices):
    """Per-path ``(normal, uniform)`` generators.

    Both derive from ``Philox(key = seed * 2**64 + index)``; the uniform
    stream is the jumped copy, so chunked draws concatenate to the same
    sequence whatever the chunk size.
    """
    out = []
    for i in indices:
        bg = np.random.Philox(key=(int(seed) << 64) | int(i))
        out.append((np.random.Generator(bg), np.random.Generator(bg.jumped())))
    return out


def simulate(model, r0, theta0, cfg, table=None, path_indices=None, trace_paths=0,
             trace_every=10, threads=1):
    """Simulate ``cfg.n_paths`` paths from ``(r0, theta0)``; returns a :class:`PathBatch`.

    The first ``trace_paths`` paths keep a decimated ``(t, r, theta)`` trace.
    Batches run on ``threads`` worker threads; output does not depend on it.
    """
    cfg.validate()
    if cfg.r_escape is None:
        cfg = SimConfig(**{**cfg.to_dict(), "r_escape": default_escape_radius(model, r0)})
    cfg.validate(r0)
    if table is None:
        table = DriftTable(model, cfg.r_escape, cfg.table_points, cfg.theta_spacing)
    idx = np.arange(cfg.n_paths) if path_indices is None else np.asarray(path_indices)
    n = len(idx)
    out = PathBatch(status=np.full(n, BUDGET, dtype=np.int8), theta_final=np.zeros(n),
                    theta_max_dev=np.zeros(n), theta_range=np.zeros(n), r_final=np.zeros(n),
                    t_final=np.zeros(n), steps=np.zeros(n, dtype=np.int64), theta0=float(theta0),
                    r0=float(r0), config=cfg)
    jobs = []
    for start in range(0, n, cfg.batch_size):
        stop = min(start + cfg.batch_size, n)
        jobs.append((r0, theta0, cfg, table, idx[start:stop], out, start,
                     max(0, min(trace_paths - start, stop - start)), trace_every))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda job: _run_batch(*job), jobs))
    else:
        for job in jobs:
            _run_batch(*job)
    out.traces.sort()
    return out


def _run_batch(r0, theta0, cfg, table, path_ids, out, offset, n_traced, trace_every):
    m = len(path_ids)
    gens = _streams(cfg.seed, path_ids)
    state = np.zeros((m, 8))
    state[:, 0] = r0 * math.cos(theta0)
    state[:, 1] = r0 * math.sin(theta0)
    state[:, 2] = theta0                     # unwrapped angle
    state[:, 3] = theta0                     # running min
    state[:, 4] = theta0                     # running max
    steps = np.zeros(m, dtype=np.int64)
    status = np.full(m, -1, dtype=np.int8)
    chunk = cfg.chunk
    z = np.empty((m, chunk, 2))
    u = np.empty((m, chunk, 2))
    rec = np.zeros((n_traced, chunk, 3))
    r_in = -1.0 if cfg.r_inner is None else float(cfg.r_inner)
    traces = {int(path_ids[a]): [] for a in range(n_traced)}
    active = np.arange(m)
    while len(active):
        for a in active:
            # each active path has consumed its whole buffer
            z[a] = gens[a][0].standard_normal((chunk, 2))
            u[a] = gens[a][1].random((chunk, 2))
        n_rec = _advance(active, state, steps, status, z, u, rec, table.packed, table.nodes,
                         table.inv_gap, table.log_r[0], 1.0 / table.dlog, len(table.log_r),
                         cfg.dt_base, cfg.pole_radius ** 2, cfg.t_budget, cfg.r_escape, r_in)
        bad = active[status[active] == NONFINITE]
        if len(bad):
            a = int(bad[0])
            raise NonFiniteState("non-finite Brownian state",
                                 {"path": int(path_ids[a]), "x": float(state[a, 0]),
                                  "y": float(state[a, 1]), "t": float(state[a, 5])})
        for a in range(n_traced):
            rows = rec[a, :n_rec[a]]
            traces[int(path_ids[a])].extend(tuple(map(float, row)) for row in rows)
        active = active[status[active] < 0]
    x, y = state[:, 0], state[:, 1]
    sl = slice(offset, offset + m)
    out.status[sl] = status
    out.theta_final[sl] = state[:, 2]
    out.theta_max_dev[sl] = np.maximum(state[:, 4] - theta0, theta0 - state[:, 3])
    out.theta_range[sl] = state[:, 4] - state[:, 3]
    out.r_final[sl] = np.hypot(x, y)
    out.t_final[sl] = state[:, 5]
    out.steps[sl] = steps
    for p, rows in traces.items():
        out.traces.extend((p, *row) for k, row in enumerate(rows)
                          if k % trace_every == 0 or k == len(rows) - 1)


@njit(cache=True, nogil=True)
def _lookup(r, th, packed, nodes, inv_gap, lr0, inv_dlog, n_r):
    x = (math.log(r) - lr0) * inv_dlog
    if x < 0.0:
        x = 0.0
    elif x > n_r - 1.000001:
        x = n_r - 1.000001
    i = int(x)
    fr = x - i
    if nodes.shape[0] == 1:
        w = packed[0, i, 0] * (1 - fr) + packed[0, i + 1, 0] * fr
        ell = packed[0, i, 1] * (1 - fr) + packed[0, i + 1, 1] * fr
        return w, ell, 0.0
    t0 = nodes[0]
    tt = t0 + ((th - t0) % TWO_PI)
    j = np.searchsorted(nodes, tt, side="right") - 1
    if j < 0:
        j = 0
    elif j > nodes.shape[0] - 2:
        j = nodes.shape[0] - 2
    ft = (tt - nodes[j]) * inv_gap[j]
    w_a = packed[j, i, 0] * (1 - fr) + packed[j, i + 1, 0] * fr
    w_b = packed[j + 1, i, 0] * (1 - fr) + packed[j + 1, i + 1, 0] * fr
    l_a = packed[j, i, 1] * (1 - fr) + packed[j, i + 1, 1] * fr
    l_b = packed[j + 1, i, 1] * (1 - fr) + packed[j + 1, i + 1, 1] * fr
    # d_theta l is piecewise constant in theta by construction
    dl = packed[j, i, 2] * (1 - fr) + packed[j, i + 1, 2] * fr
    return w_a * (1 - ft) + w_b * ft, l_a * (1 - ft) + l_b * ft, dl


@njit(cache=True, nogil=True)
def _advance(active, state, steps, status, z, u, rec, packed, nodes, inv_gap, lr0, inv_dlog,
             n_r, dt_base, p2, t_budget, r_out, r_in):
    """Advance each active path through its buffer of draws or until it stops.

    ``state`` columns: x, y, unwrapped theta, min theta, max theta, time.
    """
    chunk = z.shape[1]
    n_rec = np.zeros(rec.shape[0], dtype=np.int64)
    for a in active:
        x, y = state[a, 0], state[a, 1]
        th, th_lo, th_hi, t = state[a, 2], state[a, 3], state[a, 4], state[a, 5]
        r = math.hypot(x, y)
        phi = math.atan2(y, x)
        for k in range(chunk):
            rs = max(r, 1e-300)
            c, s = x / rs, y / rs
            w, ell, dl = _lookup(rs, th, packed, nodes, inv_gap, lr0, inv_dlog, n_r)
            q2 = math.exp(-2.0 * ell)        # (r / J)^2
            r2 = rs * rs
            dt = dt_base * min(1.0, max(min(r2 / q2, r2), p2))
            dt = min(dt, max(t_budget - t, 0.0) + 1e-300)
            sq = math.sqrt(dt)
            radial = 0.5 * (w - q2) / rs * dt
            tang = 0.5 * dl * q2 / rs * dt
            z0 = z[a, k, 0] * sq
            z1 = z[a, k, 1] * sq * math.sqrt(q2)
            x_new = x + c * (radial + z0) + s * (tang - z1)
            y_new = y + s * (radial + z0) - c * (tang - z1)
            r_new = math.hypot(x_new, y_new)
            if not math.isfinite(r_new):
                status[a] = NONFINITE
                break
            phi_new = math.atan2(y_new, x_new)
            th += ((phi_new - phi + math.pi) % TWO_PI) - math.pi
            th_lo = min(th_lo, th)
            th_hi = max(th_hi, th)
            t += dt
            steps[a] += 1
            # Brownian-bridge correction for crossings between grid times
            # (crossing probabilities below e^-40 are skipped)
            e = 2.0 * (r_out - r) * (r_out - r_new) / dt
            esc = r_new >= r_out or (e < 40.0 and u[a, k, 0] < math.exp(-e))
            hit = False
            if r_in > 0.0 and not esc:
                e = 2.0 * (r - r_in) * (r_new - r_in) / dt
                hit = r_new <= r_in or (e < 40.0 and u[a, k, 1] < math.exp(-e))
            x, y, r, phi = x_new, y_new, r_new, phi_new
            if a < rec.shape[0]:
                rec[a, n_rec[a], 0] = t
                rec[a, n_rec[a], 1] = r
                rec[a, n_rec[a], 2] = th
                n_rec[a] += 1
            if esc:
                status[a] = ESCAPED
                break
            if hit:
                status[a] = HIT_INNER
                break
            if t >= t_budget:
                status[a] = BUDGET
                break
        state[a, 0], state[a, 1], state[a, 2] = x, y, th
        state[a, 3], state[a, 4], state[a, 5] = th_lo, th_hi, t
    return n_rec


def simulate_path(model, start, cfg, rng_stream=0):
    """Simulate the single path with stream index ``rng_stream``."""
    r0, theta0 = start
    if cfg.r_escape is not None and r0 >= cfg.r_escape:
        raise InvalidParameters("start radius must be below r_escape")
    batch = simulate(model, r0, theta0, SimConfig(**{**cfg.to_dict(), "n_paths": 1}),
                     path_indices=[rng_stream])
    code = int(batch.status[0])
    escaped = code == ESCAPED
    thf = float(batch.theta_final[0])
    return PathOutcome(
        status=STATUS_NAMES[code],
        theta_final=float(np.mod(thf, TWO_PI)) if escaped else None,
        theta_osc=float(batch.theta_range[0]),
        winding=(thf - theta0) / TWO_PI if escaped else None,
        max_deviation=float(batch.theta_max_dev[0]),
        r_final=float(batch.r_final[0]),
        t_final=float(batch.t_final[0]),
    )


# ---------------------------------------------------------------------------
# estimators


@dataclass
class ConfinementEstimate:
    delta: float
    estimate: float
    ci_low: float
    ci_high: float
    n_paths: int
    n_confined: int
    n_escaped: int
    n_inner: int
    n_budget: int
    r0: float

    def to_dict(self):
        return asdict(self)


def wilson_interval(k, n, confidence=0.95):
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def confinement_from_batch(batch, delta):
    """Fraction of paths that escape with ``|theta_t - theta0| < delta`` throughout.

    Paths absorbed at the inner circle or out of budget count as failures.
    """
    if not 0 < delta < math.pi:
        raise InvalidParameters("delta must lie in (0, pi)")
    ok = (batch.status == ESCAPED) & (batch.theta_max_dev < delta)
    k, n = int(ok.sum()), batch.n_paths
    lo, hi = wilson_interval(k, n)
    c = batch.counts()
    return ConfinementEstimate(delta, k / n, lo, hi, n, k, c["escaped"], c["hit_inner"],
                               c["budget_exceeded"], batch.r0)


def confinement_probability(model, r0, theta0, delta, cfg):
    """Monte Carlo probability of angular confinement within ``delta`` up to escape."""
    if not 0 < delta < math.pi:
        raise InvalidParameters("delta must lie in (0, pi)")
    return confinement_from_batch(simulate(model, r0, theta0, cfg), delta)


@dataclass
class EmpiricalHittingMeasure:
    samples: np.ndarray          # escape angles in [0, 2 pi)
    n_escaped: int
    n_inner: int
    n_budget: int
    n_paths: int
    flags: list = field(default_factory=list)

    @property
    def reliable(self):
        return not self.flags

    def summary(self):
        return {"n_paths": self.n_paths, "n_escaped": self.n_escaped, "n_inner": self.n_inner,
                "n_budget": self.n_budget, "flags": list(self.flags)}

    def mass(self, lo, hi):
        """Fraction of escaped paths with angle in the arc ``[lo, hi)``."""
        if self.n_escaped == 0:
            return 0.0
        d = np.mod(self.samples - lo, TWO_PI)
        return float(np.mean(d < (hi - lo)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta"])
            for a in self.samples:
                w.writerow([repr(float(a))])


def hitting_measure_from_batch(batch, strict=True, budget_limit=0.10):
    c = batch.counts()
    ang = np.sort(np.mod(batch.theta_final[batch.status == ESCAPED], TWO_PI))
    m = EmpiricalHittingMeasure(ang, c["escaped"], c["hit_inner"], c["budget_exceeded"],
                                batch.n_paths)
    if c["budget_exceeded"] > budget_limit * batch.n_paths:
        m.flags.append("excessive_budget_loss")
    if c["escaped"] == 0:
        m.flags.append("empty_sample")
    if strict and "excessive_budget_loss" in m.flags:
        raise ExcessiveBudgetLoss(f"{c['budget_exceeded']} of {batch.n_paths} paths ran out of time")
    return m


def estimate_hitting_measure(model, start, cfg, strict=True):
    """Escape angles of ``cfg.n_paths`` paths from ``start = (r0, theta0)``.

    With ``strict`` a budget-exceeded fraction above 10% raises
    :class:`ExcessiveBudgetLoss`; otherwise it is recorded in ``flags``.
    """
    r0, theta0 = start
    return hitting_measure_from_batch(simulate(model, r0, theta0, cfg), strict)


def detect_atoms(measure, window=0.1, level=0.01, persist=0.75):
    """Windows whose escape mass is too large for a measure without atoms.

    Windows of width ``window`` are scanned at spacing ``window / 4``; each
    count is tested against the uniform null with a binomial tail at the
    Bonferroni-corrected level.  A hit must persist at half the width: the
    excess over uniform in the half window must keep at least ``persist`` of
    the full-window excess, as a point mass would.  The mass estimate
    ``2 f_half - f_full`` removes the uniform background exactly.
    """
    n = measure.n_escaped
    if n < 1000:
        raise InsufficientSamples(f"need >= 1000 escaped paths, have {n}")
    if not 0 < window < math.pi:
        raise InvalidParameters("window must lie in (0, pi)")
    ang = np.sort(np.mod(np.asarray(measure.samples, dtype=float), TWO_PI))
    centers = np.arange(0.0, TWO_PI, window / 4.0)
    thresh = level / len(centers)

    def frac(width):
        lo = np.mod(centers - width / 2, TWO_PI)
        a = np.searchsorted(ang, lo)
        b = np.searchsorted(ang, lo + width)
        wrap = np.searchsorted(ang, lo + width - TWO_PI)
        counts = np.where(lo + width > TWO_PI, (n - a) + wrap, b - a)
        return counts

    big, small = frac(window), frac(window / 2)
    p0_big, p0_small = window / TWO_PI, window / 2 / TWO_PI
    pv_big = stats.binom.sf(big - 1, n, p0_big)
    pv_small = stats.binom.sf(small - 1, n, p0_small)
    ex_big = big / n - p0_big
    ex_small = small / n - p0_small
    cand = np.flatnonzero((pv_big < thresh) & (pv_small < thresh) & (ex_small >= persist * ex_big))
    order = sorted(cand, key=lambda i: (pv_small[i], -small[i], i))
    atoms = []
    for i in order:
        c = centers[i]
        d = np.abs(np.mod(ang - c + math.pi, TWO_PI) - math.pi)
        inwin = ang[d < window / 4]
        loc = float(np.mod(c + np.median(np.mod(inwin - c + math.pi, TWO_PI) - math.pi), TWO_PI))
        if any(abs(np.mod(loc - a["angle"] + math.pi, TWO_PI) - math.pi) < window for a in atoms):
            continue
        atoms.append({"angle": loc, "mass": float(2 * small[i] / n - big[i] / n),
                      "p_value": float(pv_small[i] * len(centers))})
    return atoms


def traces_to_csv(batch, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "t", "r", "theta"])
        for row in batch.traces:
            w.writerow([row[0]] + [repr(v) for v in row[1:]])
