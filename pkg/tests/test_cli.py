from __future__ import annotations

import json
import math

import numpy as np
import pytest

from conftest import COMPOSITE_SPEC, write_model
from hadamard_lab.cli import EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_OK, EXIT_USAGE, dump_report, main
from hadamard_lab.surface import build_model

HYP = {"family": "constant_negative", "a": 1.0}


def _run(tmp_path, *argv):
    out = tmp_path / "report.json"
    status = main([*argv, "--out", str(out)])
    return status, json.loads(out.read_text())


def test_usage_errors_exit_64(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "nothing"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "transience"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "bm", "--model", "m.json", "--paths", "many"])
    assert exc.value.code == EXIT_USAGE


def test_transience_hyperbolic(tmp_path):
    model = write_model(tmp_path / "h.json", HYP)
    status, rep = _run(tmp_path, "analyze", "transience", "--model", model)
    assert status == EXIT_OK
    assert rep["schema"] == "hadamard-lab/1"
    t = rep["transience"]
    assert t["status"] == "finite" and t["transient"] and t["criterion"] == "milnor"
    assert t["method"] == "fitted_tail" and t["tolerance"] == 1e-9
    np.testing.assert_allclose(t["value"], -math.log(math.tanh(0.5)), rtol=1e-8)


def test_dpi_flat_not_found(tmp_path):
    model = write_model(tmp_path / "f.json", {"family": "flat"})
    status, rep = _run(tmp_path, "analyze", "dpi", "--model", model, "--eps", "0.01")
    assert status == EXIT_INCONCLUSIVE
    assert rep["dpi"][0]["rho"] == "NotFound"


def test_dpi_hyperbolic_found(tmp_path):
    model = write_model(tmp_path / "h.json", HYP)
    status, rep = _run(tmp_path, "analyze", "dpi", "--model", model, "--eps", "0.1", "0.01")
    assert status == EXIT_OK
    assert [c["found"] for c in rep["dpi"]] == [True, True]
    np.testing.assert_allclose(rep["dpi"][1]["rho"], 2 ** 2.5)


def test_martin(tmp_path):
    spec = {"sectors": [{"theta_min": 0.0, "theta_max": 2 * math.pi, "profile": HYP}],
            "lower_bound": {"family": "exponential", "C": 1.0, "lambda": 2.5}}
    model = write_model(tmp_path / "m.json", spec=spec)
    status, rep = _run(tmp_path, "analyze", "martin", "--model", model)
    assert rep["martin"]["status"] == "infinite"
    assert rep["martin"]["reason"] == "criterion inconclusive for homeomorphism"
    assert status == EXIT_OK


def test_missing_model_file(tmp_path):
    status, rep = _run(tmp_path, "analyze", "transience", "--model", str(tmp_path / "none.json"))
    assert status == EXIT_ERROR
    assert rep["error"]["type"] == "FileNotFoundError"


def test_invalid_model_serialized(tmp_path):
    model = write_model(tmp_path / "bad.json", {"family": "power_law", "alpha": 1.0})
    status, rep = _run(tmp_path, "analyze", "transience", "--model", model)
    assert status == EXIT_ERROR
    assert rep["error"]["type"] == "InvalidParameters"


def test_model_echo_round_trip(tmp_path):
    model = write_model(tmp_path / "c.json", spec=COMPOSITE_SPEC)
    _, rep = _run(tmp_path, "analyze", "dpi", "--model", model, "--eps", "0.1",
                  "--theta0", "4.71238898038469")
    echo = rep["model_echo"]
    assert "inner_fill" in echo["conventions"]
    a, b = build_model(COMPOSITE_SPEC), build_model(echo["spec"])
    r = np.geomspace(0.01, 100.0, 40)[:, None]
    th = np.linspace(0, 2 * math.pi, 97)[None, :]
    np.testing.assert_array_equal(a.curvature(r, th), b.curvature(r, th))


def test_simulate_and_csv(tmp_path):
    model = write_model(tmp_path / "h.json", HYP)
    csv_dir = tmp_path / "csv"
    status, rep = _run(tmp_path, "simulate", "bm", "--model", model, "--paths", "300",
                       "--seed", "4", "--r0", "1.0", "--traces", "2", "--emit-csv", str(csv_dir),
                       "--confine-r0", "3")
    assert status == EXIT_OK
    sim = rep["simulation"]
    assert sim["counts"]["escaped"] == 300
    assert sim["label"] == "statistical"
    assert "skipped" in sim["atoms"]           # fewer than 1000 escapes
    assert len(sim["confinement"]) == 2
    assert rep["provenance"]["seed"] == 4
    assert rep["csv_files"] == ["escape_angles.csv", "traces.csv"]


def test_simulate_deterministic(tmp_path):
    model = write_model(tmp_path / "h.json", HYP)
    outs = []
    for threads in ("1", "2"):
        out = tmp_path / f"r{threads}.json"
        main(["simulate", "bm", "--model", model, "--paths", "500", "--seed", "9",
              "--threads", threads, "--out", str(out)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_report_all_flat(tmp_path):
    model = write_model(tmp_path / "f.json", {"family": "flat"})
    status, rep = _run(tmp_path, "report", "all", "--model", model, "--paths", "200",
                       "--eps", "0.1", "--r0", "1.0")
    assert status == EXIT_INCONCLUSIVE
    assert rep["transience"]["status"] == "infinite"
    assert rep["martin"]["status"] == "inconclusive"
    assert rep["boundary_correspondence"]["verdict"] == "DPI prerequisites unmet"


def test_dump_report_sanitizes():
    text = dump_report({"x": math.inf, "y": [np.float64(math.nan), np.int64(3)]})
    assert json.loads(text) == {"x": "inf", "y": ["nan", 3]}
