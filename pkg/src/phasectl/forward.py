"""Implicit time stepping for the coupled phase-field / potential system.

Each step advances the order parameter first and the chemical potential
second.  The order-parameter equation

    delta * (rho^{n+1} - rho^n) / tau - Lap rho^{n+1} + f'(rho^{n+1}) = mu^n

is solved by a damped Newton iteration whose steps are scaled to keep
every cell a fixed fraction of its current distance away from the
singular endpoints 0 and 1.  The chemical-potential equation is linear
once rho^{n+1} is known; the time derivative of the product mu * rho is
discretized as mu^{n+1} * (rho^{n+1} - rho^n) / tau, which folds into the
diagonal and preserves an M-matrix, hence nonnegativity of mu for
nonnegative data and sources.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import mesh
from .errors import (NewtonDivergence, NonpositiveCoefficient, ShapeMismatch,
                     SolverStepError)
from .fields import as_field, as_trajectory
from .mesh import Grid, TimeGrid
from .potential import Potential


@dataclass
class ProblemData:
    """Everything defining one control problem instance.

    Initial data, targets and the box bound are normalized to arrays on
    construction; scalars broadcast.  The order-parameter initial datum
    must be strictly inside (0, 1).
    """

    grid: Grid
    tgrid: TimeGrid
    epsilon: float
    delta: float
    potential: Potential
    rho0: np.ndarray
    mu0: np.ndarray
    u_max: np.ndarray
    beta1: float = 1.0
    beta2: float = 1e-4
    rho_target: np.ndarray = None
    mu_target: np.ndarray = None

    def __post_init__(self):
        if self.epsilon <= 0.0 or self.delta <= 0.0:
            raise ShapeMismatch("requires epsilon > 0 and delta > 0")
        if self.beta1 < 0.0 or self.beta2 < 0.0:
            raise ShapeMismatch("requires beta1 >= 0 and beta2 >= 0")
        self.rho0 = as_field(self.grid, self.rho0)
        self.mu0 = as_field(self.grid, self.mu0)
        self.u_max = as_trajectory(self.tgrid, self.grid, self.u_max)
        if np.min(self.rho0) <= 0.0 or np.max(self.rho0) >= 1.0:
            raise ShapeMismatch(
                "requires 0 < rho0 < 1 cellwise, got range [%g, %g]"
                % (np.min(self.rho0), np.max(self.rho0)))
        if np.min(self.u_max) < 0.0:
            raise ShapeMismatch("requires u_max >= 0")
        if self.rho_target is None:
            self.rho_target = np.full(self.grid.num_cells, 0.5)
        self.rho_target = as_field(self.grid, self.rho_target)
        if self.mu_target is None:
            self.mu_target = np.zeros((self.tgrid.N + 1, self.grid.num_cells))
        self.mu_target = as_trajectory(self.tgrid, self.grid, self.mu_target)


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-10
    newton_max: int = 30
    boundary_margin: float = 0.1
    coupling_iters: int = 1
    linear_tol: float = 1e-8
    bound_tol: float = 1e-10


@dataclass
class Diagnostics:
    """Per-step and per-level records from one forward solve."""

    newton_iters: list = dc_field(default_factory=list)
    newton_residuals: list = dc_field(default_factory=list)
    min_coefficient: list = dc_field(default_factory=list)
    m_matrix_ok: list = dc_field(default_factory=list)
    rho_min: list = dc_field(default_factory=list)
    rho_max: list = dc_field(default_factory=list)
    mu_min: list = dc_field(default_factory=list)
    mu_max: list = dc_field(default_factory=list)
    bound_violations: int = 0

    def record_level(self, rho, mu, bound_tol):
        self.rho_min.append(float(np.min(rho)))
        self.rho_max.append(float(np.max(rho)))
        self.mu_min.append(float(np.min(mu)))
        self.mu_max.append(float(np.max(mu)))
        self.bound_violations += int(
            np.count_nonzero(rho <= 0.0) + np.count_nonzero(rho >= 1.0)
            + np.count_nonzero(mu < -bound_tol))

    def to_dict(self) -> dict:
        return {
            "newton_iters": list(self.newton_iters),
            "newton_residuals": list(self.newton_residuals),
            "min_coefficient": list(self.min_coefficient),
            "m_matrix_ok": list(self.m_matrix_ok),
            "rho_min": list(self.rho_min),
            "rho_max": list(self.rho_max),
            "mu_min": list(self.mu_min),
            "mu_max": list(self.mu_max),
            "bound_violations": self.bound_violations,
        }


@dataclass
class StateTrajectory:
    rho: np.ndarray
    mu: np.ndarray
    diagnostics: Diagnostics


def step_rho(grid: Grid, pot: Potential, delta: float, tau: float,
             rho_prev: np.ndarray, mu_prev: np.ndarray, cfg: SolverConfig,
             return_history: bool = False):
    """Advance the order parameter by one implicit step.

    Newton iteration warm-started at the previous level.  Steps are
    scaled by the largest factor in (0, 1] that keeps every cell at
    least boundary_margin times its current distance from each endpoint,
    so iterates can approach 0 and 1 but never jump onto them.  Raises
    NewtonDivergence if the residual norm fails to reach newton_tol
    within newton_max iterations.
    """
    theta = cfg.boundary_margin
    rho = rho_prev.copy()
    history = []
    for _ in range(cfg.newton_max + 1):
        res = (delta / tau) * (rho - rho_prev) - mesh.laplacian_apply(grid, rho) \
            + pot.d1(rho) - mu_prev
        rnorm = mesh.norm_h(grid, res)
        history.append(rnorm)
        if rnorm <= cfg.newton_tol:
            return (rho, history) if return_history else rho
        shift = delta / tau + pot.d2(rho)
        step = mesh.solve_shifted(grid, shift, -res)
        lam = 1.0
        down = step < 0.0
        if np.any(down):
            lam = min(lam, (1.0 - theta) * np.min(rho[down] / -step[down]))
        up = step > 0.0
        if np.any(up):
            lam = min(lam, (1.0 - theta) * np.min((1.0 - rho[up]) / step[up]))
        rho = rho + lam * step
    raise NewtonDivergence(
        "Newton residual %.3e above tolerance %.3e after %d iterations"
        % (history[-1], cfg.newton_tol, cfg.newton_max))


def mu_step_coefficient(epsilon: float, rho_prev: np.ndarray,
                        rho_new: np.ndarray) -> np.ndarray:
    """Diagonal coefficient of the potential step, must stay positive."""
    return epsilon + 3.0 * rho_new - rho_prev


def step_mu(grid: Grid, epsilon: float, tau: float, rho_prev: np.ndarray,
            rho_new: np.ndarray, mu_prev: np.ndarray, u_new: np.ndarray,
            cfg: SolverConfig) -> np.ndarray:
    """Advance the chemical potential by one linear implicit step."""
    coeff = mu_step_coefficient(epsilon, rho_prev, rho_new)
    if np.min(coeff) <= 0.0:
        raise NonpositiveCoefficient(
            "potential step coefficient min %.3e is nonpositive" % np.min(coeff))
    rhs = u_new + (epsilon + 2.0 * rho_new) * mu_prev / tau
    return mesh.solve_shifted(grid, coeff / tau, rhs, tol=cfg.linear_tol)


def solve_state(problem: ProblemData, u, cfg: SolverConfig = SolverConfig()
                ) -> StateTrajectory:
    """March the coupled system from the initial data under control u.

    Per step: coupling_iters sweeps of (order-parameter step against the
    latest potential iterate standing in for the previous level, then
    potential step).  One sweep is the plain staggered scheme.  Errors
    raised inside a step carry that step's index.
    """
    grid, tg = problem.grid, problem.tgrid
    u = as_trajectory(tg, grid, u)
    tau = tg.tau
    rho = np.zeros((tg.N + 1, grid.num_cells))
    mu = np.zeros_like(rho)
    rho[0] = problem.rho0
    mu[0] = problem.mu0
    diag = Diagnostics()
    diag.record_level(rho[0], mu[0], cfg.bound_tol)
    sweeps = max(int(cfg.coupling_iters), 1)
    for n in range(tg.N):
        try:
            mu_guess = mu[n]
            for _ in range(sweeps):
                rho_new, hist = step_rho(grid, problem.potential, problem.delta,
                                         tau, rho[n], mu_guess, cfg,
                                         return_history=True)
                mu_guess = step_mu(grid, problem.epsilon, tau, rho[n], rho_new,
                                   mu[n], u[n + 1], cfg)
        except SolverStepError as exc:
            exc.step = n + 1
            raise
        rho[n + 1] = rho_new
        mu[n + 1] = mu_guess
        diag.newton_iters.append(len(hist) - 1)
        diag.newton_residuals.append(hist[-1])
        coeff = mu_step_coefficient(problem.epsilon, rho[n], rho_new)
        diag.min_coefficient.append(float(np.min(coeff)))
        diag.m_matrix_ok.append(bool(np.min(coeff) > 0.0))
        diag.record_level(rho[n + 1], mu[n + 1], cfg.bound_tol)
    return StateTrajectory(rho=rho, mu=mu, diagnostics=diag)


def residual_norms(problem: ProblemData, u, state: StateTrajectory) -> dict:
    """Cell-norm residuals of both discrete equations on a trajectory.

    Uses the same stencils and the same one-sweep staggering as the
    solver, so a freshly solved trajectory scores at the Newton and
    linear tolerances.  Returns arrays indexed by step 1..N.
    """
    grid, tg = problem.grid, problem.tgrid
    u = as_trajectory(tg, grid, u)
    tau = tg.tau
    rho, mu = state.rho, state.mu
    rho_res = np.zeros(tg.N)
    mu_res = np.zeros(tg.N)
    for n in range(tg.N):
        r_new, r_old = rho[n + 1], rho[n]
        res1 = (problem.delta / tau) * (r_new - r_old) \
            - mesh.laplacian_apply(grid, r_new) \
            + problem.potential.d1(r_new) - mu[n]
        coeff = mu_step_coefficient(problem.epsilon, r_old, r_new)
        res2 = coeff * mu[n + 1] / tau - mesh.laplacian_apply(grid, mu[n + 1]) \
            - u[n + 1] - (problem.epsilon + 2.0 * r_new) * mu[n] / tau
        rho_res[n] = mesh.norm_h(grid, res1)
        mu_res[n] = mesh.norm_h(grid, res2)
    return {"rho": rho_res, "mu": mu_res}
