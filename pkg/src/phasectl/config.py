"""Run configuration: parsing, defaults, validation, problem assembly.

A run is described by one YAML file with nested sections.  Field-valued
entries accept a scalar (broadcast over the grid and, for space-time
data, over time levels), a path to a field CSV (replicated over time
levels where a trajectory is expected), or a path to a directory of
numbered snapshot CSVs holding a full trajectory.  Relative paths
resolve against the directory containing the config file.

Unknown sections or keys are rejected so typos fail loudly, and every
validation error names the offending key path and the violated
condition.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ConfigError, MissingKey, ValidationError
from .fields import as_field, as_trajectory, read_field_csv, read_snapshot_dir
from .forward import ProblemData, SolverConfig, solve_state
from .mesh import Grid, TimeGrid, make_grid, make_time_grid
from .optimize import OptimizerConfig
from .potential import Potential
from .sensitivity import ADJOINT_MODES

_MANDATORY = object()

_SCHEMA = {
    "domain": {"dim": _MANDATORY, "n": _MANDATORY, "length": _MANDATORY},
    "time": {"T": _MANDATORY, "N": _MANDATORY},
    "params": {"epsilon": _MANDATORY, "delta": _MANDATORY,
               "beta1": 1.0, "beta2": 1e-4},
    "potential": {"c_log": 0.5, "c_quad": 2.0},
    "init": {"rho0": 0.5, "mu0": 0.0},
    "control": {"u_max": 1.0, "u_init": 0.0},
    "targets": {"rho_T": 0.5, "mu_T": 0.0, "from_state": None},
    "solver": {"newton_tol": 1e-10, "newton_max": 30, "boundary_margin": 0.1,
               "coupling_iters": 1, "linear_tol": 1e-8, "bound_tol": 1e-10,
               "adjoint_mode": "discrete"},
    "optimizer": {"max_iters": 200, "armijo_c": 1e-4, "armijo_shrink": 0.5,
                  "step0": 1.0, "stat_tol": 1e-6, "min_step": 1e-12},
    "output": {"directory": "out", "snapshot_stride": 1, "seed": 0,
               "iter_snapshots": False},
}


@dataclass
class OutputConfig:
    directory: str = "out"
    snapshot_stride: int = 1
    seed: int = 0
    iter_snapshots: bool = False


@dataclass
class RunConfig:
    """Validated configuration with data loaded onto the grids."""

    grid: Grid
    tgrid: TimeGrid
    epsilon: float
    delta: float
    beta1: float
    beta2: float
    potential: Potential
    rho0: np.ndarray
    mu0: np.ndarray
    u_max: np.ndarray
    u_init: np.ndarray
    rho_target: np.ndarray
    mu_target: np.ndarray
    from_state_control: np.ndarray
    solver: SolverConfig
    adjoint_mode: str
    optimizer: OptimizerConfig
    output: OutputConfig
    raw: dict


def _merge_defaults(data: dict) -> dict:
    if not isinstance(data, dict):
        raise ValidationError("top level must be a mapping of sections")
    merged = {}
    for section, keys in _SCHEMA.items():
        given = data.get(section, {})
        if given is None:
            given = {}
        if not isinstance(given, dict):
            raise ValidationError("%s: must be a mapping" % section)
        for key in given:
            if key not in keys:
                raise ValidationError("%s.%s: unknown key" % (section, key))
        merged[section] = {}
        for key, default in keys.items():
            if key in given:
                merged[section][key] = given[key]
            elif default is _MANDATORY:
                raise MissingKey("%s.%s: mandatory key missing" % (section, key))
            else:
                merged[section][key] = copy.deepcopy(default)
    for section in data:
        if section not in _SCHEMA:
            raise ValidationError("%s: unknown section" % section)
    return merged


def _require(cond: bool, path: str, condition: str, value) -> None:
    if not cond:
        raise ValidationError(
            "%s: requires %s, got %r" % (path, condition, value))


def _load_field_value(value, grid, base, cfg_dir, path):
    """Scalar or CSV path to a single field."""
    if isinstance(value, str):
        full = os.path.join(cfg_dir, value)
        if os.path.isdir(full):
            raise ValidationError(
                "%s: requires a scalar or field CSV path, got directory %r"
                % (path, value))
        return read_field_csv(full, grid)
    if isinstance(value, (int, float)):
        return as_field(grid, float(value))
    raise ValidationError(
        "%s: requires a number or CSV path, got %r" % (path, value))


def _load_spacetime_value(value, tg, grid, base, cfg_dir, path):
    """Scalar, field CSV (replicated in time) or snapshot directory."""
    if isinstance(value, str):
        full = os.path.join(cfg_dir, value)
        if os.path.isdir(full):
            return read_snapshot_dir(full, base, tg, grid)
        return as_trajectory(tg, grid, read_field_csv(full, grid))
    if isinstance(value, (int, float)):
        return as_trajectory(tg, grid, float(value))
    raise ValidationError(
        "%s: requires a number, CSV path or snapshot directory, got %r"
        % (path, value))


def parse_config(path: str) -> RunConfig:
    """Read, validate and materialize one YAML run configuration."""
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc))
    except yaml.YAMLError as exc:
        raise ConfigError("cannot parse config %s: %s" % (path, exc))
    if data is None:
        data = {}
    merged = _merge_defaults(data)
    cfg_dir = os.path.dirname(os.path.abspath(path))

    dom = merged["domain"]
    _require(isinstance(dom["dim"], int), "domain.dim", "an integer dim",
             dom["dim"])
    # out-of-scope dim surfaces as UnsupportedDimension from the grid
    grid = make_grid(int(dom["dim"]), dom["n"], dom["length"])

    tim = merged["time"]
    _require(isinstance(tim["T"], (int, float)) and tim["T"] > 0,
             "time.T", "T > 0", tim["T"])
    _require(int(tim["N"]) >= 1, "time.N", "N >= 1", tim["N"])
    tgrid = make_time_grid(float(tim["T"]), int(tim["N"]))

    par = merged["params"]
    _require(par["epsilon"] > 0, "params.epsilon", "epsilon > 0", par["epsilon"])
    _require(par["delta"] > 0, "params.delta", "delta > 0", par["delta"])
    _require(par["beta1"] >= 0, "params.beta1", "beta1 >= 0", par["beta1"])
    _require(par["beta2"] >= 0, "params.beta2", "beta2 >= 0", par["beta2"])

    pot = merged["potential"]
    _require(pot["c_log"] > 0, "potential.c_log", "c_log > 0", pot["c_log"])
    _require(pot["c_quad"] >= 0, "potential.c_quad", "c_quad >= 0",
             pot["c_quad"])
    potential = Potential(c_log=float(pot["c_log"]), c_quad=float(pot["c_quad"]))

    ini = merged["init"]
    rho0 = _load_field_value(ini["rho0"], grid, "rho", cfg_dir, "init.rho0")
    mu0 = _load_field_value(ini["mu0"], grid, "mu", cfg_dir, "init.mu0")
    _require(float(np.min(rho0)) > 0.0, "init.rho0", "inf rho0 > 0",
             float(np.min(rho0)))
    _require(float(np.max(rho0)) < 1.0, "init.rho0", "sup rho0 < 1",
             float(np.max(rho0)))
    _require(float(np.min(mu0)) >= 0.0, "init.mu0", "mu0 >= 0",
             float(np.min(mu0)))

    ctl = merged["control"]
    u_max = _load_spacetime_value(ctl["u_max"], tgrid, grid, "u", cfg_dir,
                                  "control.u_max")
    _require(float(np.min(u_max)) >= 0.0, "control.u_max", "u_max >= 0",
             float(np.min(u_max)))
    u_init = _load_spacetime_value(ctl["u_init"], tgrid, grid, "u", cfg_dir,
                                   "control.u_init")

    tar = merged["targets"]
    from_state_control = None
    if tar["from_state"] is not None:
        fs = tar["from_state"]
        if not isinstance(fs, dict) or "u" not in fs:
            raise ValidationError(
                "targets.from_state: requires a mapping with key u, got %r"
                % (fs,))
        for key in fs:
            if key != "u":
                raise ValidationError(
                    "targets.from_state.%s: unknown key" % key)
        from_state_control = _load_spacetime_value(
            fs["u"], tgrid, grid, "u", cfg_dir, "targets.from_state.u")
    rho_target = _load_field_value(tar["rho_T"], grid, "rho", cfg_dir,
                                   "targets.rho_T")
    mu_target = _load_spacetime_value(tar["mu_T"], tgrid, grid, "mu", cfg_dir,
                                      "targets.mu_T")

    sol = merged["solver"]
    _require(sol["newton_tol"] > 0, "solver.newton_tol", "newton_tol > 0",
             sol["newton_tol"])
    _require(int(sol["newton_max"]) >= 1, "solver.newton_max",
             "newton_max >= 1", sol["newton_max"])
    _require(0.0 < sol["boundary_margin"] < 1.0, "solver.boundary_margin",
             "0 < boundary_margin < 1", sol["boundary_margin"])
    _require(int(sol["coupling_iters"]) >= 1, "solver.coupling_iters",
             "coupling_iters >= 1", sol["coupling_iters"])
    _require(sol["linear_tol"] > 0, "solver.linear_tol", "linear_tol > 0",
             sol["linear_tol"])
    _require(sol["bound_tol"] >= 0, "solver.bound_tol", "bound_tol >= 0",
             sol["bound_tol"])
    _require(sol["adjoint_mode"] in ADJOINT_MODES, "solver.adjoint_mode",
             "adjoint_mode in {discrete, pde}", sol["adjoint_mode"])
    solver = SolverConfig(
        newton_tol=float(sol["newton_tol"]), newton_max=int(sol["newton_max"]),
        boundary_margin=float(sol["boundary_margin"]),
        coupling_iters=int(sol["coupling_iters"]),
        linear_tol=float(sol["linear_tol"]), bound_tol=float(sol["bound_tol"]))

    opt = merged["optimizer"]
    _require(int(opt["max_iters"]) >= 0, "optimizer.max_iters",
             "max_iters >= 0", opt["max_iters"])
    _require(0.0 < opt["armijo_c"] < 1.0, "optimizer.armijo_c",
             "0 < armijo_c < 1", opt["armijo_c"])
    _require(0.0 < opt["armijo_shrink"] < 1.0, "optimizer.armijo_shrink",
             "0 < armijo_shrink < 1", opt["armijo_shrink"])
    _require(opt["step0"] > 0, "optimizer.step0", "step0 > 0", opt["step0"])
    _require(opt["stat_tol"] >= 0, "optimizer.stat_tol", "stat_tol >= 0",
             opt["stat_tol"])
    _require(opt["min_step"] > 0, "optimizer.min_step", "min_step > 0",
             opt["min_step"])
    optimizer = OptimizerConfig(
        max_iters=int(opt["max_iters"]), armijo_c=float(opt["armijo_c"]),
        armijo_shrink=float(opt["armijo_shrink"]), step0=float(opt["step0"]),
        stat_tol=float(opt["stat_tol"]), min_step=float(opt["min_step"]))

    out = merged["output"]
    _require(int(out["snapshot_stride"]) >= 1, "output.snapshot_stride",
             "snapshot_stride >= 1", out["snapshot_stride"])
    output = OutputConfig(
        directory=str(out["directory"]),
        snapshot_stride=int(out["snapshot_stride"]),
        seed=int(out["seed"]), iter_snapshots=bool(out["iter_snapshots"]))

    return RunConfig(
        grid=grid, tgrid=tgrid, epsilon=float(par["epsilon"]),
        delta=float(par["delta"]), beta1=float(par["beta1"]),
        beta2=float(par["beta2"]), potential=potential, rho0=rho0, mu0=mu0,
        u_max=u_max, u_init=u_init, rho_target=rho_target,
        mu_target=mu_target, from_state_control=from_state_control,
        solver=solver, adjoint_mode=str(sol["adjoint_mode"]),
        optimizer=optimizer, output=output, raw=merged)


def build_problem(rc: RunConfig) -> ProblemData:
    """Assemble the problem instance, generating targets if requested.

    With targets.from_state set, the given control is forward-solved
    and its terminal order parameter and full potential trajectory
    become the targets, so the optimum is known reachable.
    """
    rho_target, mu_target = rc.rho_target, rc.mu_target
    if rc.from_state_control is not None:
        generator = ProblemData(
            grid=rc.grid, tgrid=rc.tgrid, epsilon=rc.epsilon, delta=rc.delta,
            potential=rc.potential, rho0=rc.rho0, mu0=rc.mu0, u_max=rc.u_max,
            beta1=rc.beta1, beta2=rc.beta2)
        state = solve_state(generator, rc.from_state_control, rc.solver)
        rho_target = state.rho[rc.tgrid.N]
        mu_target = state.mu
    return ProblemData(
        grid=rc.grid, tgrid=rc.tgrid, epsilon=rc.epsilon, delta=rc.delta,
        potential=rc.potential, rho0=rc.rho0, mu0=rc.mu0, u_max=rc.u_max,
        beta1=rc.beta1, beta2=rc.beta2, rho_target=rho_target,
        mu_target=mu_target)
