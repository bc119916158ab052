"""Batch command line: ``varmin {solve,converge,verify,mollify} -c config.json``.

Exit codes: 0 success, 1 numerical failure (non-convergence or a failed
check), 2 usage or configuration error.

Config (JSON, ``schema_version`` 1)::

    {
      "schema_version": 1,
      "model":   {"name": "harmonic_oscillator", "params": {"omega": 1.0}, "dim": 1},
      "problem": {"kind": "two_point", "t": 1.0, "x_tilde": [0.0], "x": [1.0]},
      "solver":  {"K": 64, "tol_grad": 1e-10, "max_iter": 200, "init": "straight_line"},
      "study":   {"K0": 16, "levels": 6, "eps_list": [0.125, 0.0625],
                  "curve": "zigzag.csv", "minimizer_action": 0.5},
      "verify":  {"box": [-5, 5], "n_samples": 1000, "seed": 0},
      "output":  {"path": "result", "format": "json"}
    }

A Bolza problem uses ``{"kind": "bolza", "t": ..., "x": [...],
"terminal_cost": {"name": "quadratic", "params": {"weight": 1.0}}}``.
Instead of a catalog ``name`` the model may give ``"factory": "module:function"``;
the function is called with ``dim`` and ``params`` and returns a LagrangianModel.
Relative file paths in the config resolve against the config's directory.
"""

from __future__ import annotations

import argparse
import importlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import io as vio
from .analysis import refine_study
from .discrete import gradient_check
from .errors import VarminError
from .legendre import roundtrip_residual
from .model import (
    LagrangianModel,
    catalog_lookup,
    check_conditions,
    check_derivatives,
    estimate_superlinearity,
    sample_box,
    terminal_cost_lookup,
)
from .mollify import mollification_study
from .problem import Problem
from .solve import SolveOptions, initial_guess, minimize_discrete

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
FORMATS = ("json", "csv", "both")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    model: LagrangianModel
    problem: Optional[Problem]
    solver: dict
    study: dict
    verify: dict
    output: dict
    base_dir: Path = field(default_factory=Path.cwd)


def _model_from_section(section):
    if not isinstance(section, dict):
        raise ConfigError("'model' must be an object")
    dim = section.get("dim", 1)
    params = section.get("params", {}) or {}
    if "factory" in section:
        target = section["factory"]
        mod_name, _, func_name = str(target).partition(":")
        try:
            factory = getattr(importlib.import_module(mod_name), func_name)
        except (ImportError, AttributeError, ValueError) as exc:
            raise ConfigError(f"cannot import model factory {target!r}: {exc}") from None
        model = factory(dim=int(dim), params=params)
        if not isinstance(model, LagrangianModel):
            raise ConfigError(f"factory {target!r} did not return a LagrangianModel")
        return model
    if "name" not in section:
        raise ConfigError("model needs 'name' (catalog entry) or 'factory'")
    return catalog_lookup(section["name"], params, dim)


def _problem_from_section(section, model):
    if not isinstance(section, dict):
        raise ConfigError("'problem' must be an object")
    kind = section.get("kind")
    try:
        t = float(section["t"])
        if kind == "two_point":
            return Problem.two_point(model, section["x_tilde"], section["x"], t)
        if kind == "bolza":
            tc = section.get("terminal_cost", {"name": "zero"})
            w = terminal_cost_lookup(tc.get("name"), tc.get("params", {}), model.dim)
            return Problem.bolza(model, section["x"], t, w)
    except KeyError as exc:
        raise ConfigError(f"problem is missing {exc}") from None
    raise ConfigError(f"problem kind must be 'two_point' or 'bolza', got {kind!r}")


def load_config(path):
    """Parse and validate a config file into a :class:`RunConfig`.

    Raises
    ------
    ConfigError
        For unreadable files, schema mismatches, unknown catalog names and
        dimension mismatches.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("schema_version") != vio.SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {raw.get('schema_version')!r}")
    if "model" not in raw:
        raise ConfigError("config has no 'model'")
    try:
        model = _model_from_section(raw["model"])
        problem = _problem_from_section(raw["problem"], model) if "problem" in raw else None
    except VarminError as exc:
        raise ConfigError(str(exc)) from None
    sections = {}
    for key in ("solver", "study", "verify", "output"):
        sec = raw.get(key, {}) or {}
        if not isinstance(sec, dict):
            raise ConfigError(f"'{key}' must be an object")
        sections[key] = sec
    return RunConfig(model=model, problem=problem, base_dir=path.parent.resolve(), **sections)


def _solver_opts(cfg):
    s = cfg.solver
    try:
        return SolveOptions(tol_grad=float(s.get("tol_grad", 1e-10)),
                            max_iter=int(s.get("max_iter", 200)),
                            method=s.get("method", "newton"))
    except (VarminError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad solver options: {exc}") from None


def _need_problem(cfg):
    if cfg.problem is None:
        raise ConfigError("config has no 'problem'")
    return cfg.problem


def _int(section, key, default, minimum, name=None):
    try:
        val = int(section.get(key, default))
    except (TypeError, ValueError):
        raise ConfigError(f"{name or key} must be an integer") from None
    if val < minimum:
        raise ConfigError(f"{name or key} must be >= {minimum}, got {val}")
    return val


class Output:
    """Writes payloads to ``--out`` (suffixes .json/.csv/.txt) or stdout."""

    def __init__(self, out, fmt, quiet):
        self.out = Path(out) if out else None
        self.fmt = fmt
        self.quiet = quiet

    def _target(self, suffix):
        return self.out.with_suffix(suffix) if self.out.suffix in (".json", ".csv", ".txt") \
            else self.out.parent / (self.out.name + suffix)

    def emit(self, payload, csv_text=None, text=None):
        wrote = []
        if self.fmt in ("json", "both") or csv_text is None:
            body = vio.dumps(payload)
            if self.out is None:
                sys.stdout.write(body)
            else:
                self._target(".json").write_text(body)
                wrote.append(self._target(".json"))
        if self.fmt in ("csv", "both") and csv_text is not None:
            if self.out is None:
                sys.stdout.write(csv_text)
            else:
                self._target(".csv").write_text(csv_text)
                wrote.append(self._target(".csv"))
        if text is not None:
            if self.out is not None:
                self._target(".txt").write_text(text + "\n")
            if not self.quiet:
                sys.stderr.write(text + "\n")
        return wrote


def cmd_solve(cfg, out):
    problem = _need_problem(cfg)
    K = _int(cfg.solver, "K", 64, 2)
    opts = _solver_opts(cfg)
    strategy = cfg.solver.get("init", "straight_line")
    try:
        init = initial_guess(problem, K, strategy)
    except VarminError as exc:
        raise ConfigError(str(exc)) from None
    res = minimize_discrete(problem, K, init, opts)
    payload = vio.solve_result_to_dict(problem, res)
    out.emit(payload, csv_text=vio.path_csv(res.path, res.momenta),
             text=None if out.quiet else
             f"action={res.action!r} grad_norm={res.grad_norm:.3e} iterations={res.iterations} "
             f"converged={res.converged}")
    return EXIT_OK if res.converged else EXIT_FAIL


def cmd_converge(cfg, out):
    problem = _need_problem(cfg)
    K0 = _int(cfg.study, "K0", 16, 2)
    levels = _int(cfg.study, "levels", 4, 2)
    opts = _solver_opts(cfg)
    rep = refine_study(problem, K0, levels, opts, strategy=cfg.solver.get("init", "straight_line"),
                       oracle=bool(cfg.study.get("oracle", True)))
    payload = {"schema_version": vio.SCHEMA_VERSION, "report": rep.to_dict()}
    csv_rows = ["K,h,action,grad_norm,hamilton_residual,el_residual,polygon_action,"
                "distance_to_next,distance_to_oracle"]
    for r in rep.levels:
        vals = [r.K, r.h, r.action, r.grad_norm, r.hamilton_residual, r.el_residual,
                r.polygon_action, r.distance_to_next, r.distance_to_oracle]
        csv_rows.append(",".join("" if v is None else (str(v) if isinstance(v, int) else vio.fmt(v))
                                 for v in vals))
    out.emit(payload, csv_text="\n".join(csv_rows) + "\n", text=rep.table())
    return EXIT_OK if rep.verdict in ("exact", "first_order") else EXIT_FAIL


def cmd_verify(cfg, out):
    model = cfg.model
    v = cfg.verify
    box = v.get("box", [-5.0, 5.0])
    n = _int(v, "n_samples", 1000, 1)
    seed = _int(v, "seed", 0, 0)
    tol_roundtrip = float(v.get("roundtrip_tol", 1e-10))
    tol_deriv = float(v.get("derivative_tol", 1e-6))
    tol_grad = float(v.get("gradient_tol", 1e-6))
    checks = {}
    if model.superlinearity is None:
        model = estimate_superlinearity(model, box, n, seed)
    problem = cfg.problem
    try:
        report = check_conditions(model, problem.terminal if problem is not None else None,
                                  box, n, seed=seed)
        checks["conditions"] = report.to_dict()
        checks["conditions"]["passed"] = report.passed
    except (VarminError, ValueError) as exc:
        checks["conditions"] = {"passed": False, "error": str(exc)}

    try:
        rng = np.random.default_rng(seed)
        x, t, xi = sample_box(box, model.dim, n, rng)
        rt = roundtrip_residual(model, x, t, xi)
        checks["legendre_roundtrip"] = {"passed": rt <= tol_roundtrip, "max_residual": rt,
                                        "tol": tol_roundtrip}
    except (VarminError, ValueError) as exc:
        checks["legendre_roundtrip"] = {"passed": False, "error": str(exc)}

    try:
        worst, ok = check_derivatives(model, box, min(n, 200), rel_tol=tol_deriv, seed=seed)
        checks["derivatives"] = {"passed": ok, "worst_relative_error": worst, "tol": tol_deriv}
    except (VarminError, ValueError) as exc:
        checks["derivatives"] = {"passed": False, "error": str(exc)}

    gp = problem if problem is not None else Problem.two_point(
        model, np.zeros(model.dim), np.ones(model.dim), 1.0)
    try:
        worst = max(gradient_check(gp, K, int(v.get("n_paths", 20)), seed=seed)
                    for K in v.get("K_list", [4, 32]))
        checks["discrete_gradient"] = {"passed": worst <= tol_grad, "worst_relative_error": worst,
                                       "tol": tol_grad}
    except (VarminError, ValueError) as exc:
        checks["discrete_gradient"] = {"passed": False, "error": str(exc)}

    passed = all(c["passed"] for c in checks.values())
    payload = {"schema_version": vio.SCHEMA_VERSION, "model": model.name, "passed": passed,
               "checks": checks}
    lines = [f"{name:20s} {'PASS' if c['passed'] else 'FAIL'}" for name, c in checks.items()]
    out.emit(payload, text="\n".join(lines))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_mollify(cfg, out):
    problem = _need_problem(cfg)
    st = cfg.study
    if "curve" not in st:
        raise ConfigError("study.curve (input curve CSV) is required")
    curve_path = Path(st["curve"])
    if not curve_path.is_absolute():
        curve_path = cfg.base_dir / curve_path
    try:
        curve = vio.read_curve_csv(curve_path)
    except (OSError, ValueError, VarminError) as exc:
        raise ConfigError(f"malformed curve file {curve_path}: {exc}") from None
    eps_list = [float(e) for e in st.get("eps_list", [])]
    if not eps_list:
        raise ConfigError("study.eps_list must be non-empty")
    if any(e <= 0 or e >= problem.t / 4 for e in eps_list):
        raise ConfigError(f"every eps must lie in (0, t/4) = (0, {problem.t / 4:g})")
    if any(b >= a for a, b in zip(eps_list[:-1], eps_list[1:])):
        raise ConfigError("study.eps_list must be strictly decreasing")
    if abs(curve.t - problem.t) > 1e-12 * max(1.0, problem.t) or curve.s[0] != 0.0:
        raise ConfigError("curve must be sampled on [0, t]")
    if "minimizer_action" in st:
        ref = float(st["minimizer_action"])
    else:
        K = _int(cfg.solver, "K", 256, 2)
        res = minimize_discrete(problem, K, initial_guess(problem, K, cfg.solver.get("init", "straight_line")),
                                _solver_opts(cfg))
        if not res.converged:
            out.emit({"schema_version": vio.SCHEMA_VERSION, "error": "reference solve did not converge"})
            return EXIT_FAIL
        ref = res.action
    try:
        table = mollification_study(problem, curve, eps_list, ref,
                                    extension=st.get("extension", "linear"))
    except VarminError as exc:
        raise ConfigError(str(exc)) from None
    payload = {"schema_version": vio.SCHEMA_VERSION, "table": table.to_dict()}
    csv_lines = ["eps,action,difference,dominated,endpoint_error,dbr_spread"]
    for r in table.rows:
        csv_lines.append(",".join([vio.fmt(r["eps"]), vio.fmt(r["action"]), vio.fmt(r["difference"]),
                                   str(r["dominated"]).lower(), vio.fmt(r["endpoint_error"]),
                                   vio.fmt(r["dbr_spread"])]))
    out.emit(payload, csv_text="\n".join(csv_lines) + "\n", text=table.table())
    return EXIT_OK if table.all_dominated else EXIT_FAIL


COMMANDS = {"solve": cmd_solve, "converge": cmd_converge, "verify": cmd_verify, "mollify": cmd_mollify}


def build_parser():
    parser = argparse.ArgumentParser(prog="varmin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", required=True, help="JSON run config")
        p.add_argument("-o", "--out", help="output path stem; stdout if omitted")
        p.add_argument("--format", choices=FORMATS, default=None)
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        fmt = args.format or cfg.output.get("format", "json")
        if fmt not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        out_path = args.out or cfg.output.get("path")
        if out_path and not Path(out_path).is_absolute() and not args.out:
            out_path = cfg.base_dir / out_path
        out = Output(out_path, fmt, args.quiet)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        sys.stderr.write(f"varmin: config error: {exc}\n")
        return EXIT_USAGE
    except VarminError as exc:
        sys.stderr.write(f"varmin: numerical failure: {type(exc).__name__}: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
