import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from varmin import io as vio
from varmin.analysis import SampledCurve
from varmin.cli import main
from varmin.model import catalog_lookup
from varmin.problem import Problem
from varmin.solve import solve

TESTS = Path(__file__).parent

BASE = {
    "schema_version": 1,
    "model": {"name": "harmonic_oscillator", "params": {"omega": 1.0}},
    "problem": {"kind": "two_point", "t": 1.0, "x_tilde": [0.0], "x": [1.0]},
    "solver": {"K": 64},
    "study": {"K0": 16, "levels": 3},
    "verify": {"n_samples": 200},
}


def write_config(tmp_path, **overrides):
    cfg = json.loads(json.dumps(BASE))
    for key, val in overrides.items():
        if val is None:
            cfg.pop(key, None)
        elif isinstance(val, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def zigzag_csv(tmp_path, n=2048):
    s = np.linspace(0, 1, n + 1)
    y = np.where(s < 0.5, 3 * s, 1.5 - (s - 0.5))
    y[-1] = 1.0
    path = tmp_path / "zigzag.csv"
    path.write_text(vio.curve_csv(SampledCurve(s, y)))
    return path


def test_solve_writes_json_and_csv(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "-c", write_config(tmp_path), "-o", str(out), "--format", "both", "--quiet"]) == 0
    data = json.loads((tmp_path / "run.json").read_text())
    assert data["converged"] and data["K"] == 64
    rows = (tmp_path / "run.csv").read_text().splitlines()
    assert rows[0] == "k,t_k,y0,z0"
    assert len(rows) == 66


def test_solve_roundtrip_revalidates_bit_exact(tmp_path):
    out = tmp_path / "run"
    main(["solve", "-c", write_config(tmp_path), "-o", str(out), "--quiet"])
    data = json.loads((tmp_path / "run.json").read_text())
    problem = Problem.two_point(catalog_lookup("harmonic_oscillator"), [0.0], [1.0], 1.0)
    action, gnorm = vio.revalidate(problem, data)
    assert action == data["action"]
    assert gnorm == data["grad_norm"]


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = write_config(tmp_path)
    main(["converge", "-c", cfg, "-o", str(a), "--format", "both", "--quiet"])
    main(["converge", "-c", cfg, "-o", str(b), "--format", "both", "--quiet"])
    for suffix in (".json", ".csv"):
        assert (tmp_path / f"a{suffix}").read_bytes() == (tmp_path / f"b{suffix}").read_bytes()


def test_solve_to_stdout(tmp_path, capsys):
    assert main(["solve", "-c", write_config(tmp_path), "--quiet"]) == 0
    assert json.loads(capsys.readouterr().out)["converged"]


def test_non_convergence_exit_1(tmp_path):
    cfg = write_config(tmp_path, solver={"max_iter": 1, "method": "gradient"})
    assert main(["solve", "-c", cfg, "--quiet", "-o", str(tmp_path / "r")]) == 1


def test_one_newton_step_solves_quadratic_action(tmp_path):
    # the discrete action of the oscillator is quadratic, so max_iter=1 suffices
    cfg = write_config(tmp_path, solver={"max_iter": 1})
    assert main(["solve", "-c", cfg, "--quiet", "-o", str(tmp_path / "r")]) == 0
    assert json.loads((tmp_path / "r.json").read_text())["iterations"] == 1


def test_non_convergence_still_writes_result(tmp_path):
    cfg = write_config(tmp_path, solver={"max_iter": 0})
    assert main(["solve", "-c", cfg, "--quiet", "-o", str(tmp_path / "r")]) == 1
    assert json.loads((tmp_path / "r.json").read_text())["converged"] is False


def test_free_particle_solve_action(tmp_path):
    cfg = write_config(tmp_path, model={"name": "free_particle", "params": {}})
    assert main(["solve", "-c", cfg, "--quiet", "-o", str(tmp_path / "f")]) == 0
    assert json.loads((tmp_path / "f.json").read_text())["action"] == pytest.approx(0.5, abs=1e-14)


def test_converge_single_level_exit_2(tmp_path):
    assert main(["converge", "-c", write_config(tmp_path, study={"levels": 1}), "--quiet"]) == 2


def test_verify_missing_model_exit_2(tmp_path):
    assert main(["verify", "-c", write_config(tmp_path, model=None), "--quiet"]) == 2


def test_bolza_solve(tmp_path):
    cfg = write_config(tmp_path, model={"name": "free_particle", "params": {}},
                       problem={"kind": "bolza", "t": 1.0, "x": [1.0],
                                "terminal_cost": {"name": "quadratic", "params": {"weight": 1.0}}},
                       solver={"init": "constant"})
    assert main(["solve", "-c", cfg, "-o", str(tmp_path / "b"), "--quiet"]) == 0
    data = json.loads((tmp_path / "b.json").read_text())
    assert data["action"] == pytest.approx(0.25, abs=1e-12)


def test_converge_exit_0(tmp_path):
    out = tmp_path / "conv"
    assert main(["converge", "-c", write_config(tmp_path), "-o", str(out), "--quiet"]) == 0
    rep = json.loads((tmp_path / "conv.json").read_text())["report"]
    assert rep["verdict"] == "first_order"


def test_verify_catalog_passes(tmp_path):
    assert main(["verify", "-c", write_config(tmp_path), "-o", str(tmp_path / "v"), "--quiet"]) == 0
    data = json.loads((tmp_path / "v.json").read_text())
    assert data["passed"]
    assert set(data["checks"]) == {"conditions", "legendre_roundtrip", "derivatives", "discrete_gradient"}


def test_verify_user_factory(tmp_path, monkeypatch):
    monkeypatch.syspath_prepend(str(TESTS))
    good = write_config(tmp_path, model={"factory": "user_models:quartic", "dim": 2},
                        problem={"kind": "two_point", "t": 1.0, "x_tilde": [0.0, 0.0], "x": [1.0, 1.0]})
    assert main(["verify", "-c", good, "-o", str(tmp_path / "q"), "--quiet"]) == 0
    bad = write_config(tmp_path, model={"factory": "user_models:degenerate"}, problem=None)
    assert main(["verify", "-c", bad, "-o", str(tmp_path / "d"), "--quiet"]) == 1
    data = json.loads((tmp_path / "d.json").read_text())
    assert not data["checks"]["conditions"]["conditions"]["convexity"]["passed"]


def test_mollify(tmp_path):
    zigzag_csv(tmp_path)
    cfg = write_config(tmp_path, model={"name": "free_particle", "params": {}},
                       study={"curve": "zigzag.csv", "eps_list": [0.2, 0.1, 0.05], "minimizer_action": 0.5})
    assert main(["mollify", "-c", cfg, "-o", str(tmp_path / "m"), "--format", "both", "--quiet"]) == 0
    table = json.loads((tmp_path / "m.json").read_text())["table"]
    assert table["raw_action"] == pytest.approx(2.5)
    assert table["all_dominated"]


def test_mollify_reference_from_solve(tmp_path):
    zigzag_csv(tmp_path)
    cfg = write_config(tmp_path, solver={"K": 256}, study={"curve": "zigzag.csv", "eps_list": [0.1, 0.05]})
    assert main(["mollify", "-c", cfg, "-o", str(tmp_path / "m"), "--quiet"]) == 0
    ref = json.loads((tmp_path / "m.json").read_text())["table"]["minimizer_action"]
    assert ref == pytest.approx(0.5 / math.tan(1.0), abs=2e-3)


@pytest.mark.parametrize("overrides", [
    {"model": {"name": "no_such_model"}},
    {"model": None},
    {"schema_version": 2},
    {"problem": {"kind": "three_point"}},
    {"solver": {"K": 1}},
    {"solver": {"method": "bfgs"}},
    {"solver": {"init": "constant"}},
])
def test_config_errors_exit_2(tmp_path, overrides):
    cfg = write_config(tmp_path, **overrides)
    assert main(["solve", "-c", cfg, "--quiet"]) == 2


def test_missing_config_file_exit_2(tmp_path):
    assert main(["solve", "-c", str(tmp_path / "absent.json")]) == 2


def test_bad_arguments_exit_2(tmp_path):
    assert main(["solve"]) == 2
    assert main(["frobnicate", "-c", "x"]) == 2
    assert main(["solve", "-c", write_config(tmp_path), "--format", "xml"]) == 2


@pytest.mark.parametrize("eps", [[0.25], [0.0], [0.1, 0.2]])
def test_mollify_bad_eps_exit_2(tmp_path, eps):
    zigzag_csv(tmp_path)
    cfg = write_config(tmp_path, study={"curve": "zigzag.csv", "eps_list": eps, "minimizer_action": 0.5})
    assert main(["mollify", "-c", cfg, "--quiet"]) == 2


def test_mollify_malformed_curve_exit_2(tmp_path):
    (tmp_path / "bad.csv").write_text("s,y0\n0,0\n0.5,abc\n1,1\n")
    cfg = write_config(tmp_path, study={"curve": "bad.csv", "eps_list": [0.1], "minimizer_action": 0.5})
    assert main(["mollify", "-c", cfg, "--quiet"]) == 2


def test_read_curve_csv_roundtrip(tmp_path):
    s = np.linspace(0, 1, 11)
    c = SampledCurve(s, np.column_stack([s, s ** 2]), np.column_stack([np.ones(11), 2 * s]))
    p = tmp_path / "c.csv"
    p.write_text(vio.curve_csv(c))
    back = vio.read_curve_csv(p)
    assert np.array_equal(back.values, c.values)
    assert np.array_equal(back.derivs, c.derivs)


@pytest.mark.parametrize("text", ["", "t,y0\n0,0\n1,1\n", "s,y0,dy0,dy1\n0,0,0,0\n1,1,1,1\n",
                                  "s,y0\n0,0\n1\n", "s,y0\n0,0\n1,nan\n"])
def test_read_curve_csv_rejects(tmp_path, text):
    p = tmp_path / "c.csv"
    p.write_text(text)
    with pytest.raises(ValueError):
        vio.read_curve_csv(p)


def test_dumps_handles_nan_and_numpy():
    text = vio.dumps({"b": np.float64("nan"), "a": np.arange(2), "c": np.bool_(True)})
    assert json.loads(text) == {"a": [0, 1], "b": None, "c": True}
    assert text.index('"a"') < text.index('"b"')


def test_path_csv_values_round_trip():
    p = Problem.two_point(catalog_lookup("mechanical"), [0.0], [1.0], 1.0)
    res = solve(p, 8)
    rows = vio.path_csv(res.path, res.momenta).splitlines()[1:]
    y = np.array([float(r.split(",")[2]) for r in rows])
    assert np.array_equal(y, res.path.nodes[:, 0])


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path)
    proc = subprocess.run([sys.executable, "-m", "varmin", "solve", "-c", cfg, "--quiet"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["converged"]
