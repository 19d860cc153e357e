"""Curvature models on Cartan-Hadamard surfaces in polar coordinates.

A model is a field ``K(r, theta) <= 0`` assembled from radial profiles placed
on angular sectors.  Profiles that are only prescribed outside a compact set
(``r > R``) are extended inward by the constant ``K(R)`` and joined to the
exterior formula by a C^1 smoothstep over ``[R, R + inner_blend]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .errors import CoverageGap, InvalidParameters, PositiveCurvature

TWO_PI = 2.0 * math.pi

DEFAULT_INNER_BLEND = 0.5
DEFAULT_BLEND_WIDTH = 0.05


def smoothstep(x):
    """C^1 Hermite step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def wrap_angle(theta):
    return np.mod(theta, TWO_PI)


class RadialProfile:
    """Base class for radial curvature profiles ``K*(r)``.

    Subclasses implement ``_exterior`` (the family formula) and may set
    ``R`` / ``inner_blend`` to request the inner fill.
    """

    family: ClassVar[str] = ""
    R: float = 0.0
    inner_blend: float = 0.0

    def _exterior(self, r):
        raise NotImplementedError

    def _needs_fill(self):
        return self.R > 0.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if not self._needs_fill():
            return self._exterior(np.maximum(r, 0.0))
        R, w = self.R, self.inner_blend
        k_in = float(self._exterior(np.float64(R)))
        rr = np.maximum(r, R)
        k_out = self._exterior(rr)
        if w <= 0.0:
            return np.where(r <= R, k_in, k_out)
        s = smoothstep((r - R) / w)
        return (1.0 - s) * k_in + s * k_out

    def sup_abs(self, lo, hi):
        """Supremum of ``|K*|`` on ``[lo, hi]``.

        Every parametric family is monotone in ``r`` (inner fill included), so
        the supremum sits at an endpoint.
        """
        lo = max(lo, 0.0)
        return float(max(abs(self(lo)), abs(self(hi))))

    def k_asymptotics(self):
        """Return ``(coef, exp_rate, power)`` with ``sqrt(-K) ~ coef e^{exp_rate r} r^power``."""
        raise NotImplementedError

    def validate(self):
        pass

    @property
    def is_flat(self):
        return False

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Flat(RadialProfile):
    family: ClassVar[str] = "flat"

    def _exterior(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def _needs_fill(self):
        return False

    def k_asymptotics(self):
        return 0.0, 0.0, 0.0

    @property
    def is_flat(self):
        return True

    def to_dict(self):
        return {"family": self.family}


@dataclass(frozen=True)
class ConstantNegative(RadialProfile):
    """``K = -a^2``."""

    a: float = 1.0
    family: ClassVar[str] = "constant_negative"

    def _exterior(self, r):
        return np.full_like(np.asarray(r, dtype=float), -self.a * self.a)

    def _needs_fill(self):
        return False

    def validate(self):
        if not self.a > 0:
            raise InvalidParameters(f"constant_negative needs a > 0, got {self.a}")

    def k_asymptotics(self):
        return self.a, 0.0, 0.0

    def to_dict(self):
        return {"family": self.family, "a": self.a}


@dataclass(frozen=True)
class PowerLaw(RadialProfile):
    """``K = -alpha (alpha - 1) / r^2`` for ``r > R``."""

    alpha: float = 2.0
    R: float = 1.0
    inner_blend: float = DEFAULT_INNER_BLEND
    family: ClassVar[str] = "power_law"

    def _exterior(self, r):
        return -self.alpha * (self.alpha - 1.0) / (r * r)

    @classmethod
    def from_coefficient(cls, k, R=1.0, **kw):
        """Profile with ``K = -k / r^2``: ``alpha`` is the root of ``alpha (alpha - 1) = k``."""
        if not k > 0:
            raise InvalidParameters(f"coefficient must be positive, got {k}")
        return cls(alpha=0.5 * (1.0 + math.sqrt(1.0 + 4.0 * k)), R=R, **kw)

    def validate(self):
        if not self.alpha > 1:
            raise InvalidParameters(f"power_law needs alpha > 1, got {self.alpha}")
        if not self.R > 0:
            raise InvalidParameters(f"power_law needs R > 0, got {self.R}")
        if self.inner_blend < 0:
            raise InvalidParameters("inner_blend must be >= 0")

    def k_asymptotics(self):
        return math.sqrt(self.alpha * (self.alpha - 1.0)), 0.0, -1.0

    def to_dict(self):
        return {"family": self.family, "alpha": self.alpha, "R": self.R,
                "inner_blend": self.inner_blend}


@dataclass(frozen=True)
class LogLaw(RadialProfile):
    """``K = -c / (r^2 log r)`` for ``r > R``.

    With ``modified=True`` the profile is multiplied by ``1 + (c - 1)/log r``,
    for which ``J_1 = r (log r)^c`` solves the Jacobi equation exactly.
    """

    c: float = 1.5
    R: float = 2.0
    modified: bool = False
    inner_blend: float = DEFAULT_INNER_BLEND
    family: ClassVar[str] = "log_law"

    @classmethod
    def from_epsilon(cls, epsilon, R=2.0, inner_blend=DEFAULT_INNER_BLEND):
        """Modified profile with ``c = 1 + epsilon/2``."""
        return cls(c=1.0 + epsilon / 2.0, R=R, modified=True, inner_blend=inner_blend)

    def _exterior(self, r):
        lr = np.log(r)
        k = -self.c / (r * r * lr)
        if self.modified:
            k = k * (1.0 + (self.c - 1.0) / lr)
        return k

    def validate(self):
        if not self.c > 0:
            raise InvalidParameters(f"log_law needs c > 0, got {self.c}")
        if not self.R > 1:
            raise InvalidParameters(f"log_law needs R > 1, got {self.R}")
        if self.inner_blend < 0:
            raise InvalidParameters("inner_blend must be >= 0")
        if self.modified and 1.0 + (self.c - 1.0) / math.log(self.R) < 0:
            raise PositiveCurvature("modified log_law is positive near R; increase R")

    def k_asymptotics(self):
        return math.sqrt(self.c), 0.0, -1.0

    def to_dict(self):
        return {"family": self.family, "c": self.c, "R": self.R,
                "modified": self.modified, "inner_blend": self.inner_blend}


@dataclass(frozen=True)
class Exponential(RadialProfile):
    """``K = -C e^{lambda r}`` for ``r > R`` (typically a lower bound)."""

    C: float = 1.0
    lam: float = 1.0
    R: float = 0.0
    inner_blend: float = DEFAULT_INNER_BLEND
    family: ClassVar[str] = "exponential"

    def _exterior(self, r):
        with np.errstate(over="ignore"):
            return -self.C * np.exp(self.lam * r)

    def validate(self):
        if not self.C > 0:
            raise InvalidParameters(f"exponential needs C > 0, got {self.C}")
        if not self.lam > 0:
            raise InvalidParameters(f"exponential needs lambda > 0, got {self.lam}")
        if self.R < 0:
            raise InvalidParameters(f"exponential needs R >= 0, got {self.R}")

    def k_asymptotics(self):
        return math.sqrt(self.C), self.lam / 2.0, 0.0

    def to_dict(self):
        return {"family": self.family, "C": self.C, "lambda": self.lam, "R": self.R,
                "inner_blend": self.inner_blend}


@dataclass(frozen=True)
class Tabulated(RadialProfile):
    """Piecewise-linear ``K`` through ``(r, K)`` samples, constant outside."""

    r: tuple = (0.0, 1.0)
    k: tuple = (0.0, 0.0)
    family: ClassVar[str] = "tabulated"

    def _exterior(self, r):
        return np.interp(r, self.r, self.k)

    def _needs_fill(self):
        return False

    def validate(self):
        if len(self.r) != len(self.k) or len(self.r) < 1:
            raise InvalidParameters("tabulated needs matching, non-empty r and K samples")
        if any(b <= a for a, b in zip(self.r, self.r[1:])):
            raise InvalidParameters("tabulated radii must be strictly increasing")
        if max(self.k) > 0:
            raise PositiveCurvature("tabulated profile has a positive sample")

    def sup_abs(self, lo, hi):
        inside = [abs(k) for rr, k in zip(self.r, self.k) if lo <= rr <= hi]
        return float(max([abs(self(lo)), abs(self(hi))] + inside))

    def k_asymptotics(self):
        return math.sqrt(-self.k[-1]), 0.0, 0.0

    @property
    def is_flat(self):
        return all(k == 0 for k in self.k)

    def to_dict(self):
        return {"family": self.family, "samples": [[a, b] for a, b in zip(self.r, self.k)]}


_FAMILIES = {cls.family: cls for cls in (Flat, ConstantNegative, PowerLaw, LogLaw,
                                          Exponential, Tabulated)}


def profile_from_dict(d):
    """Build and validate a profile from its JSON form."""
    d = dict(d)
    fam = d.pop("family", None)
    if fam not in _FAMILIES:
        raise InvalidParameters(f"unknown profile family {fam!r}")
    try:
        if fam == "tabulated":
            samples = d.pop("samples")
            prof = Tabulated(r=tuple(float(s[0]) for s in samples),
                             k=tuple(float(s[1]) for s in samples))
        elif fam == "exponential":
            if "lambda" in d:
                d["lam"] = d.pop("lambda")
            prof = Exponential(**{k: float(v) for k, v in d.items()})
        elif fam == "log_law":
            modified = bool(d.pop("modified", False))
            if "epsilon" in d:
                eps = float(d.pop("epsilon"))
                prof = LogLaw.from_epsilon(eps, **{k: float(v) for k, v in d.items()})
            else:
                prof = LogLaw(modified=modified, **{k: float(v) for k, v in d.items()})
        elif fam == "power_law" and "coefficient" in d:
            k = float(d.pop("coefficient"))
            prof = PowerLaw.from_coefficient(k, **{k2: float(v) for k2, v in d.items()})
        else:
            prof = _FAMILIES[fam](**{k: float(v) for k, v in d.items()})
    except (TypeError, KeyError) as exc:
        raise InvalidParameters(f"bad parameters for {fam}: {exc}") from exc
    prof.validate()
    return prof


@dataclass(frozen=True)
class Sector:
    """Angular interval ``[theta_min, theta_max)`` carrying a profile.

    ``profile=None`` marks a fill sector that interpolates between its
    neighbours across its full width.
    """

    theta_min: float
    theta_max: float
    profile: RadialProfile | None

    @property
    def width(self):
        return self.theta_max - self.theta_min


@dataclass(frozen=True)
class FlatStrip:
    """Flat strip ``{dist(x, axis) <= half_width}`` around the geodesic through the pole
    in direction ``theta_axis``; curvature is switched on over ``radial_blend``."""

    theta_axis: float
    half_width: float
    radial_blend: float = DEFAULT_INNER_BLEND

    def exit_radius(self, theta):
        s = np.abs(np.sin(np.asarray(theta, dtype=float) - self.theta_axis))
        with np.errstate(divide="ignore"):
            return np.where(s > 0, self.half_width / s, np.inf)

    def mask(self, r, theta):
        d = np.asarray(r) * np.abs(np.sin(np.asarray(theta) - self.theta_axis))
        if self.radial_blend <= 0:
            return (d > self.half_width).astype(float)
        return smoothstep((d - self.half_width) / self.radial_blend)

    def to_dict(self):
        return {"theta_axis": self.theta_axis, "half_width": self.half_width,
                "radial_blend": self.radial_blend}


@dataclass(frozen=True, eq=False)
class CurvatureModel:
    """Immutable curvature field ``K(r, theta)``.

    Instances are compared and hashed by identity, so they can key caches.
    """

    sectors: tuple
    upper_bound: RadialProfile
    lower_bound: RadialProfile | None = None
    blend_width: float = DEFAULT_BLEND_WIDTH
    flat_strip: FlatStrip | None = None
    spec: dict = field(default_factory=dict, repr=False)

    # -- evaluation -------------------------------------------------------
    def _locate(self, theta):
        starts = self._starts
        return (np.searchsorted(starts, theta, side="right") - 1) % len(self.sectors)

    @property
    def _starts(self):
        return np.array([s.theta_min for s in self.sectors])

    def _neighbour(self, i, step):
        n = len(self.sectors)
        j = (i + step) % n
        while self.sectors[j].profile is None:
            j = (j + step) % n
        return self.sectors[j].profile

    def _sector_value(self, i, r, theta):
        sec = self.sectors[i]
        if sec.profile is not None:
            return sec.profile(r)
        left, right = self._neighbour(i, -1), self._neighbour(i, +1)
        x = (theta - sec.theta_min) / sec.width
        s = smoothstep(x)
        return (1.0 - s) * left(r) + s * right(r)

    def __call__(self, r, theta):
        return self.curvature(r, theta)

    def curvature(self, r, theta):
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        r, theta = np.broadcast_arrays(r, theta)
        th = self._reduce(theta)
        idx = self._locate(th)
        out = np.empty(r.shape)
        for i in np.unique(idx):
            m = idx == i
            out[m] = self._sector_value(i, r[m], th[m])
        half = 0.5 * self.blend_width
        if half > 0 and len(self.sectors) > 1:
            for b in self._hard_boundaries():
                d = _circ_diff(th, b["theta"])
                m = np.abs(d) < half
                if np.any(m):
                    s = smoothstep((d[m] + half) / self.blend_width)
                    out[m] = (1.0 - s) * b["left"](r[m]) + s * b["right"](r[m])
        if self.flat_strip is not None:
            out = out * self.flat_strip.mask(r, th)
        if out.ndim == 0:
            return float(out)
        return out

    def ray(self, theta):
        """Return ``r -> K(r, theta)`` specialised to a fixed direction.

        Much cheaper than :meth:`curvature` inside ODE right-hand sides.
        """
        th = float(self._reduce(np.float64(theta)))
        i = int(self._locate(np.array([th]))[0])
        sec = self.sectors[i]
        terms = []
        if sec.profile is not None:
            terms = [(1.0, sec.profile)]
        else:
            s = float(smoothstep((th - sec.theta_min) / sec.width))
            terms = [(1.0 - s, self._neighbour(i, -1)), (s, self._neighbour(i, +1))]
        half = 0.5 * self.blend_width
        if half > 0 and len(self.sectors) > 1:
            for b in self._hard_boundaries():
                d = float(_circ_diff(th, b["theta"]))
                if abs(d) < half:
                    s = float(smoothstep((d + half) / self.blend_width))
                    terms = [(1.0 - s, b["left"]), (s, b["right"])]
        terms = [(w, p) for w, p in terms if w != 0.0 and not p.is_flat]
        strip = self.flat_strip
        sin_t = abs(math.sin(th - strip.theta_axis)) if strip is not None else 0.0

        def k_of_r(r):
            out = 0.0
            for w, p in terms:
                out = out + w * p(r)
            if strip is not None:
                out = out * strip.mask(r, th)
            return out

        k_of_r.is_flat = not terms or (strip is not None and sin_t == 0.0)
        return k_of_r

    def _reduce(self, theta):
        """Map angles into ``[start, start + 2 pi)`` where start is the first sector."""
        t0 = self.sectors[0].theta_min
        return t0 + np.mod(theta - t0, TWO_PI)

    def _hard_boundaries(self):
        out = []
        n = len(self.sectors)
        for i in range(n):
            a, b = self.sectors[i], self.sectors[(i + 1) % n]
            if a.profile is None or b.profile is None or a.profile == b.profile:
                continue
            out.append({"theta": b.theta_min, "left": a.profile, "right": b.profile})
        return out

    # -- structure queries -----------------------------------------------
    @property
    def is_radial(self):
        if self.flat_strip is not None:
            return False
        profs = {s.profile for s in self.sectors}
        return len(profs) == 1 and None not in profs

    @property
    def radial_profile(self):
        if not self.is_radial:
            raise ValueError("model is not radially symmetric")
        return self.sectors[0].profile

    @property
    def is_flat(self):
        return all(s.profile is not None and s.profile.is_flat for s in self.sectors)

    def is_pure(self, theta):
        """True where ``K(., theta)`` is exactly one sector profile, so ``d_theta J = 0``."""
        if self.flat_strip is not None:
            return np.zeros(np.shape(theta), dtype=bool)
        th = self._reduce(np.asarray(theta, dtype=float))
        idx = self._locate(th)
        pure = np.array([self.sectors[i].profile is not None for i in np.ravel(idx)],
                        dtype=bool).reshape(np.shape(idx))
        half = 0.5 * self.blend_width
        for b in self._hard_boundaries():
            pure &= np.abs(_circ_diff(th, b["theta"])) >= half
        return pure

    def sector_boundaries(self):
        return [s.theta_min for s in self.sectors]

    def describe(self):
        """Model description plus the conventions used to complete it."""
        return {
            "spec": self.spec,
            "conventions": {
                "inner_fill": "constant K(R) on [0,R], C1 smoothstep to the family on [R,R+w]",
                "sector_blend": "smoothstep in theta over blend_width at hard boundaries; "
                                "fill sectors interpolate across their full width",
                "blend_width": self.blend_width,
            },
        }


def _circ_diff(theta, ref):
    return np.mod(theta - ref + math.pi, TWO_PI) - math.pi


def radial_model(profile, lower_bound=None):
    """Radially symmetric model whose single sector is ``profile``."""
    spec = {"sectors": [{"theta_min": 0.0, "theta_max": TWO_PI, "profile": profile.to_dict()}]}
    if lower_bound is not None:
        spec["lower_bound"] = lower_bound.to_dict()
    return build_model(spec)


def build_model(spec, check_grid=None):
    """Validate a model description and return a :class:`CurvatureModel`.

    Parameters
    ----------
    spec : dict
        ``{"sectors": [{"theta_min", "theta_max", "profile"}, ...],
        "blend_width", "fill", "upper_bound", "lower_bound", "flat_strip"}``.
        A sector profile of ``{"family": "blend"}`` (or ``"fill": "blend"``
        for uncovered gaps) interpolates between its neighbours.
    check_grid : tuple of arrays, optional
        ``(r, theta)`` sample points for the bound checks.
    """
    if "sectors" not in spec or not spec["sectors"]:
        raise CoverageGap("model needs at least one sector")
    blend_width = float(spec.get("blend_width", DEFAULT_BLEND_WIDTH))
    if blend_width < 0:
        raise InvalidParameters("blend_width must be >= 0")

    raw = []
    for s in spec["sectors"]:
        lo, hi = float(s["theta_min"]), float(s["theta_max"])
        if not hi > lo:
            raise InvalidParameters(f"empty sector [{lo}, {hi}]")
        pd = s["profile"]
        prof = None if pd.get("family") == "blend" else profile_from_dict(pd)
        raw.append((lo, hi, prof))
    raw.sort(key=lambda t: t[0])
    sectors = _close_circle(raw, spec.get("fill"))
    if all(s.profile is None for s in sectors):
        raise InvalidParameters("at least one sector needs a profile")

    strip = None
    if spec.get("flat_strip"):
        fs = spec["flat_strip"]
        strip = FlatStrip(float(fs["theta_axis"]), float(fs["half_width"]),
                          float(fs.get("radial_blend", DEFAULT_INNER_BLEND)))
        if not strip.half_width > 0:
            raise InvalidParameters("flat strip half_width must be > 0")

    profiles = [s.profile for s in sectors if s.profile is not None]
    if "upper_bound" in spec:
        upper = profile_from_dict(spec["upper_bound"])
    elif len(set(profiles)) == 1 and strip is None:
        upper = profiles[0]
    else:
        upper = Flat()
    lower = None
    if "lower_bound" in spec:
        lower = profile_from_dict(spec["lower_bound"])
    elif len(set(profiles)) == 1 and strip is None:
        lower = profiles[0]

    model = CurvatureModel(tuple(sectors), upper, lower, blend_width, strip, spec=dict(spec))
    _check_bounds(model, check_grid)
    return model


def _close_circle(raw, fill):
    t0 = raw[0][0]
    out = []
    cursor = t0
    for lo, hi, prof in raw:
        if lo < cursor - 1e-12:
            raise InvalidParameters(f"sectors overlap near theta={lo}")
        if lo > cursor + 1e-12:
            if fill != "blend":
                raise CoverageGap(f"sectors leave [{cursor}, {lo}) uncovered")
            out.append(Sector(cursor, lo, None))
        out.append(Sector(lo, hi, prof))
        cursor = hi
    end = t0 + TWO_PI
    if cursor > end + 1e-12:
        raise InvalidParameters("sectors span more than 2*pi")
    if cursor < end - 1e-12:
        if fill != "blend":
            raise CoverageGap(f"sectors leave [{cursor}, {end}) uncovered")
        out.append(Sector(cursor, end, None))
    return out


def _check_bounds(model, check_grid=None):
    if check_grid is None:
        r = np.concatenate([np.linspace(0.0, 10.0, 81), np.geomspace(10.0, 1e4, 40)])
        theta = np.linspace(0.0, TWO_PI, 181, endpoint=False)
    else:
        r, theta = check_grid
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    k = model.curvature(rr, tt)
    if np.any(k > 0):
        raise PositiveCurvature("sampled curvature is positive")
    up = model.upper_bound(r)[:, None]
    if np.any(up > 0):
        raise PositiveCurvature("declared upper bound is positive")
    # compare only where values are finite (super-exponential profiles overflow)
    ok = np.isfinite(k) & np.isfinite(up)
    slack = 1e-12 * (1.0 + np.abs(k))
    with np.errstate(invalid="ignore"):
        if np.any((k > up + slack) & ok):
            raise InvalidParameters("curvature exceeds the declared upper bound")
        if model.lower_bound is not None:
            lo = model.lower_bound(r)[:, None]
            ok = np.isfinite(k) & np.isfinite(lo)
            if np.any((k < lo - slack) & ok):
                raise InvalidParameters("curvature is below the declared lower bound")


def curvature_at(model, r, theta):
    """Pointwise ``K(r, theta)``; 2 pi periodic in theta."""
    return model.curvature(r, theta)


def load_model(path):
    with open(path) as fh:
        return build_model(json.load(fh))
