"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import THIRD
from hadamard_lab.brownian import SimConfig, confinement_from_batch, simulate
from hadamard_lab.criteria import (
    FINITE,
    INFINITE,
    analyze_ray,
    doyle_transience,
    dpi_certificate,
    flat_singularity_test,
    radial_transience,
)
from hadamard_lab.jacobi import check_comparison, solve_log_jacobi
from hadamard_lab.potential import green_radial, martin_finite_length
from hadamard_lab.surface import (
    ConstantNegative,
    Exponential,
    Flat,
    LogLaw,
    PowerLaw,
    radial_model,
)
from hadamard_lab.uniformize import DiskMap, disk_radius


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def test_01_hyperbolic_closed_forms(verdict):
    profile = ConstantNegative(1.0)
    analyze_ray(radial_model(Flat()), 0.0)        # warm imports and caches
    t0 = time.perf_counter()
    model = radial_model(profile)
    sol = solve_log_jacobi(model, 0.0, 64.0)
    r = np.linspace(0.1, 20.0, 400)
    v, logj = sol._eval(r)
    err_v = np.max(np.abs(v * np.tanh(r) - 1.0))
    err_l = np.max(np.abs(logj / np.log(np.sinh(r)) - 1.0))
    ray = analyze_ray(model, 0.0)
    g = np.array([green_radial(ray.sol, x) for x in r])
    err_g = np.max(np.abs(g / (2 * np.arctanh(np.exp(-r))) - 1.0))
    dmap = DiskMap.from_profile(profile)
    err_d = np.max(np.abs(disk_radius(dmap, r) / np.tanh(r / 2) - 1.0))
    elapsed = time.perf_counter() - t0
    ok = err_v <= 1e-6 and err_l <= 1e-6 and err_g <= 1e-6 and err_d <= 1e-5 and elapsed < 1.0
    verdict(1, ok, f"v {err_v:.1e}, logJ {err_l:.1e}, G {err_g:.1e}, rho {err_d:.1e}, "
                   f"{elapsed:.2f}s")


def _random_pair(rng):
    kind = rng.integers(5)
    if kind == 0:
        a = rng.uniform(0.1, 2.0)
        return ConstantNegative(a), ConstantNegative(a * rng.uniform(1.0, 2.0))
    if kind == 1:
        al = rng.uniform(1.05, 4.0)
        R = rng.uniform(0.5, 3.0)
        return PowerLaw(alpha=al, R=R), PowerLaw(alpha=al + rng.uniform(0, 2), R=R)
    if kind == 2:
        c = rng.uniform(0.2, 3.0)
        return LogLaw(c=c, R=2.0), LogLaw(c=c + rng.uniform(0, 2), R=2.0)
    if kind == 3:
        # the power profile is at most alpha(alpha-1)/R^2 in magnitude
        al, R = rng.uniform(1.05, 3.0), rng.uniform(1.0, 3.0)
        a = math.sqrt(al * (al - 1)) / R * rng.uniform(1.0, 1.5)
        return PowerLaw(alpha=al, R=R), ConstantNegative(a)
    weak = Flat() if rng.random() < 0.3 else ConstantNegative(0.5)
    return weak, Exponential(C=rng.uniform(0.25, 1.0), lam=rng.uniform(0.05, 0.5), R=0.0)


def test_02_comparison_theorem(verdict):
    rng = np.random.default_rng(20240611)
    violations, worst = 0, -np.inf
    n_pairs = 60
    for _ in range(n_pairs):
        weak, strong = _random_pair(rng)
        sw = solve_log_jacobi(radial_model(weak), 0.0, 40.0)
        ss = solve_log_jacobi(radial_model(strong), 0.0, 40.0)
        res = check_comparison(sw, ss)
        worst = max(worst, res["max_logJ_violation"], res["max_v_violation"])
        violations += not res["passed"]
    verdict(2, violations == 0, f"{n_pairs} pairs, {violations} violations, "
                                f"worst excess {worst:.1e} (allowed 1e-8)")


def test_03_transience_table(verdict):
    table = [
        ("flat", Flat(), INFINITE),
        ("K=-1", ConstantNegative(1.0), FINITE),
        ("-1.5/(r^2 log r)", LogLaw(c=1.5, R=2.0), FINITE),
        ("J=r log r borderline", LogLaw(c=1.0, R=2.0), INFINITE),
        ("-2/r^2", PowerLaw(alpha=2.0, R=1.0), FINITE),
    ]
    t0 = time.perf_counter()
    got = [(name, radial_transience(p)[0], want) for name, p, want in table]
    elapsed = time.perf_counter() - t0
    wrong = [name for name, v, want in got if v.status != want]
    fitted = all(v.method == "fitted_tail" for name, v, _ in got if name != "flat")
    ok = not wrong and fitted and elapsed < 10.0
    verdict(3, ok, ", ".join(f"{n}: {v.status}" for n, v, _ in got) + f"; {elapsed:.1f}s")


def test_04_dpi_chain(verdict):
    models = {"K=-1": ConstantNegative(1.0), "log c=1.5": LogLaw(c=1.5, R=2.0),
              "-2/r^2": PowerLaw(alpha=2.0, R=1.0)}
    beta = 0.5
    missing, notes = [], []
    for name, p in models.items():
        assert radial_transience(p)[0].status == FINITE
        for eps in (1e-1, 1e-2, 1e-3):
            cert = dpi_certificate(radial_model(p), 0.0, beta, eps)
            if not cert.found:
                missing.append((name, eps))
            if name == "K=-1":
                rho_star = 2 * math.atanh(math.exp(-eps / (2 * beta)))
                steps = abs(cert.log_rho - math.log(rho_star)) / math.log(cert.grid_ratio)
                notes.append(steps)
    ok = not missing and all(s <= 1.0 for s in notes)
    verdict(4, ok, f"not found: {missing}; K=-1 offsets in grid steps "
                   + ", ".join(f"{s:.2f}" for s in notes))


def test_05_lambda_boundary(verdict):
    t0 = time.perf_counter()
    upper = ConstantNegative(1.0)
    res = {lam: martin_finite_length(upper, Exponential(C=1.0, lam=lam)).status
           for lam in (0.5, 1.0, 1.9, 2.1, 2.5)}
    power = martin_finite_length(PowerLaw.from_coefficient(2.5, R=1.0), ConstantNegative(1.0))
    elapsed = time.perf_counter() - t0
    ok = (all(res[lam] == FINITE for lam in (0.5, 1.0, 1.9))
          and all(res[lam] == INFINITE for lam in (2.1, 2.5))
          and power.status == FINITE and elapsed < 5.0)
    verdict(5, ok, ", ".join(f"lambda={k}: {v}" for k, v in res.items())
            + f"; -(2+0.5)/r^2: {power.status}; {elapsed:.1f}s")


def test_06_harmonic_measure(verdict, hyperbolic, flat):
    t0 = time.perf_counter()
    batch = simulate(hyperbolic, 0.01, 0.0, SimConfig(n_paths=10_000, seed=6))
    ang = np.mod(batch.theta_final[batch.status == 0], 2 * math.pi)
    ks = stats.kstest(ang / (2 * math.pi), "uniform")
    fb = simulate(flat, 5.0, 0.0, SimConfig(n_paths=10_000, seed=6, r_inner=1.0, r_escape=12.0))
    p = fb.counts()["hit_inner"] / fb.n_paths
    exact = math.log(12 / 5) / math.log(12)
    se = math.sqrt(exact * (1 - exact) / fb.n_paths)
    elapsed = time.perf_counter() - t0
    ok = len(ang) == 10_000 and ks.pvalue > 0.01 and abs(p - exact) < 3 * se and elapsed < 120
    verdict(6, ok, f"KS p={ks.pvalue:.3f} (r_escape={batch.config.r_escape:.2f}); "
                   f"flat hit {p:.4f} vs {exact:.4f} (SE {se:.4f}); {elapsed:.1f}s")


def test_07_confinement(verdict, hyperbolic):
    est = [confinement_from_batch(simulate(hyperbolic, r0, 1.0, SimConfig(n_paths=4000, seed=7)),
                                  0.3) for r0 in (3.0, 5.0, 8.0)]
    # non-decreasing within the 95% intervals
    mono = all(b.ci_high >= a.ci_low for a, b in zip(est, est[1:]))
    ok = mono and est[-1].estimate > 0.9
    verdict(7, ok, ", ".join(f"r0={e.r0:g}: {e.estimate:.4f} [{e.ci_low:.4f}, {e.ci_high:.4f}]"
                             for e in est))


def test_08_composite_example(verdict, composite):
    doyle = doyle_transience(composite)
    batch = simulate(composite, 0.01, 0.0, SimConfig(n_paths=20_000, seed=8))
    ang = np.mod(batch.theta_final[batch.status == 0], 2 * math.pi)
    lo, hi = THIRD + THIRD / 3, THIRD + 2 * THIRD / 3
    mass = float(np.mean((ang >= lo) & (ang < hi)))
    ok = doyle.status == FINITE and mass < 0.02 and len(ang) > 0.9 * batch.n_paths
    verdict(8, ok, f"Doyle {doyle.status} (finite rays {doyle.value:.3f}); "
                   f"central-third mass {mass:.5f} of {len(ang)} escapes")


def _strip_ray_oracle(phi, alpha=2.0, hw=1.0, blend=0.5):
    """int_alpha^inf dr/J off the strip axis: J = r inside the strip, a direct
    Riccati solve in r across the curvature ramp, and the closed-form K = -1 tail."""
    s = math.sin(phi)
    R, r1 = hw / s, (hw + blend) / s

    def rhs(r, y):
        x = min(max((r * s - hw) / blend, 0.0), 1.0)
        return [-y[0] ** 2 + x * x * (3 - 2 * x), y[0], math.exp(-y[1])]

    y = integrate.solve_ivp(rhs, (R, r1), [1 / R, math.log(R), 0.0], method="LSODA",
                            rtol=1e-11, atol=1e-13).y[:, -1]
    v1, lj1, inner = y
    if v1 > 1 - 1e-12:
        f = 1.0
    else:
        s0 = math.atanh(v1)
        f = (math.pi / 2 - 2 * math.atan(math.tanh(s0 / 2))) / math.sqrt(1 - v1 * v1)
    return math.log(R / alpha) + inner + (math.exp(-lj1) * f if lj1 < 700 else 0.0)


def test_09_flat_integrability(verdict, strip, flat):
    v = flat_singularity_test(strip, math.pi / 2, 0.5, 2.0)
    oracle = 2 * integrate.quad(_strip_ray_oracle, 0.0, 0.5, limit=200, epsabs=1e-8)[0]
    vf = flat_singularity_test(flat, 1.0, 0.5, 2.0)
    ok = (v.status == FINITE and abs(v.value - oracle) <= v.error_bound
          and vf.status == INFINITE)
    verdict(9, ok, f"strip {v.status} {v.value:.5f} +- {v.error_bound:.1e} "
                   f"(oracle {oracle:.5f}); flat {vf.status}")


def test_10_cli_determinism(verdict, tmp_path):
    from conftest import write_model
    model = write_model(tmp_path / "h.json", {"family": "constant_negative", "a": 1.0})
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        cmd = [sys.executable, "-m", "hadamard_lab", "simulate", "bm", "--model", model,
               "--paths", "10000", "--seed", "7", "--out", str(out)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_bytes())
    verdict(10, outs[0] == outs[1], f"two runs, {len(outs[0])} bytes each, "
                                    f"{'identical' if outs[0] == outs[1] else 'different'}")
