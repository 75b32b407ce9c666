"""Reduced cost, gradient machinery and projected gradient descent.

The reduced gradient at a control is beta2 * u + q with q the potential
adjoint, so one adjoint solve prices every pointwise component.  Descent
uses projection onto the box [0, u_max] with a backtracking step rule
measured along the projection arc.  Stationarity is the space-time norm
of the pointwise violation of the first-order conditions, with the usual
case split at the bounds; with beta2 = 0 that measure encodes the
bang-bang rule (control at the lower bound where q is positive, at the
upper bound where q is negative).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import mesh
from .errors import InfeasibleControl
from .fields import as_trajectory
from .forward import ProblemData, SolverConfig, StateTrajectory, solve_state
from .sensitivity import AdjointTrajectory, solve_adjoint

TERMINATION_STATIONARY = "Stationary"
TERMINATION_MAX_ITERS = "MaxIters"
TERMINATION_STALLED = "Stalled"


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 200
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    step0: float = 1.0
    stat_tol: float = 1e-6
    min_step: float = 1e-12


@dataclass
class OptimizeResult:
    u: np.ndarray
    state: StateTrajectory
    adjoint: AdjointTrajectory
    gradient: np.ndarray
    J_history: list
    kkt_history: list
    step_history: list
    iter_seconds: list
    termination: str
    iterations: int


def cost_parts(problem: ProblemData, state: StateTrajectory, u) -> dict:
    """Terminal, tracking and control quadratic terms of the cost."""
    grid, tg = problem.grid, problem.tgrid
    u = as_trajectory(tg, grid, u)
    terminal_diff = state.rho[tg.N] - problem.rho_target
    terminal = 0.5 * mesh.inner_h(grid, terminal_diff, terminal_diff)
    mu_diff = state.mu - problem.mu_target
    tracking = 0.5 * problem.beta1 * mesh.inner_q(tg, grid, mu_diff, mu_diff)
    control = 0.5 * problem.beta2 * mesh.inner_q(tg, grid, u, u)
    return {"terminal": terminal, "tracking": tracking, "control": control,
            "total": terminal + tracking + control}


def cost(problem: ProblemData, state: StateTrajectory, u) -> float:
    return cost_parts(problem, state, u)["total"]


def project_control(problem: ProblemData, u) -> np.ndarray:
    """Pointwise projection onto the box [0, u_max]."""
    u = as_trajectory(problem.tgrid, problem.grid, u)
    return np.minimum(problem.u_max, np.maximum(0.0, u))


def reduced_gradient(problem: ProblemData, u, state: StateTrajectory = None,
                     cfg: SolverConfig = SolverConfig(),
                     mode: str = "discrete"):
    """Gradient beta2 * u + q at a control; reuses a state if given.

    Returns (gradient, adjoint, state).
    """
    u = as_trajectory(problem.tgrid, problem.grid, u)
    if state is None:
        state = solve_state(problem, u, cfg)
    adjoint = solve_adjoint(problem, state, cfg, mode=mode)
    return problem.beta2 * u + adjoint.q, adjoint, state


def directional_derivative(problem: ProblemData, u, q, h) -> float:
    """Derivative of the reduced cost along h given the potential adjoint."""
    grid, tg = problem.grid, problem.tgrid
    u = as_trajectory(tg, grid, u)
    h = as_trajectory(tg, grid, h)
    q = as_trajectory(tg, grid, q)
    return problem.beta2 * mesh.inner_q(tg, grid, u, h) \
        + mesh.inner_q(tg, grid, q, h)


def kkt_residual(problem: ProblemData, u, gradient,
                 bound_tol: float = 1e-10) -> float:
    """Space-time norm of the pointwise first-order violation.

    Interior cells contribute |g|, cells at the lower bound contribute
    max(0, -g), cells at the upper bound contribute max(0, g).
    """
    grid, tg = problem.grid, problem.tgrid
    u = as_trajectory(tg, grid, u)
    g = as_trajectory(tg, grid, gradient)
    upper = problem.u_max
    if np.min(u) < -bound_tol or np.max(u - upper) > bound_tol:
        raise InfeasibleControl(
            "control leaves [0, u_max] by more than %.1e" % bound_tol)
    at_lo = u <= bound_tol
    at_hi = u >= upper - bound_tol
    viol = np.abs(g)
    viol = np.where(at_lo, np.maximum(0.0, -g), viol)
    # Cells with coincident bounds are fully constrained: no violation.
    viol = np.where(at_hi, np.where(at_lo, 0.0, np.maximum(0.0, g)), viol)
    return mesh.norm_q(tg, grid, viol)


def projected_gradient_descent(problem: ProblemData, u0=0.0,
                               opt: OptimizerConfig = OptimizerConfig(),
                               cfg: SolverConfig = SolverConfig(),
                               adjoint_mode: str = "discrete",
                               callback=None) -> OptimizeResult:
    """Minimize the reduced cost over the box by projected gradient.

    Each iteration prices the gradient with one adjoint solve, then
    backtracks from step0 along the projection arc until the accepted
    point decreases the cost by at least
    armijo_c / step * |u - u_new|_Q^2.  Terminates when the
    stationarity measure falls to stat_tol (Stationary), the iteration
    budget is spent (MaxIters), or no step above min_step is acceptable
    (Stalled).  The returned adjoint, gradient and stationarity history
    always correspond to the returned control.
    """
    grid, tg = problem.grid, problem.tgrid
    u = project_control(problem, as_trajectory(tg, grid, u0))
    state = solve_state(problem, u, cfg)
    J = cost(problem, state, u)
    J_history = [J]
    kkt_history = []
    step_history = []
    iter_seconds = []
    iterations = 0
    termination = TERMINATION_MAX_ITERS
    while True:
        tic = time.perf_counter()
        gradient, adjoint, _ = reduced_gradient(problem, u, state, cfg,
                                                mode=adjoint_mode)
        kkt = kkt_residual(problem, u, gradient, cfg.bound_tol)
        kkt_history.append(kkt)
        if callback is not None:
            callback(iterations, u, J, kkt)
        if kkt <= opt.stat_tol:
            termination = TERMINATION_STATIONARY
            break
        if iterations >= opt.max_iters:
            termination = TERMINATION_MAX_ITERS
            break
        step = opt.step0
        accepted = False
        while step >= opt.min_step:
            u_try = project_control(problem, u - step * gradient)
            diff = u - u_try
            decrease = mesh.inner_q(tg, grid, diff, diff)
            if decrease > 0.0:
                state_try = solve_state(problem, u_try, cfg)
                J_try = cost(problem, state_try, u_try)
                if J_try <= J - opt.armijo_c * decrease / step:
                    accepted = True
                    break
            step *= opt.armijo_shrink
        if not accepted:
            termination = TERMINATION_STALLED
            break
        u, state, J = u_try, state_try, J_try
        J_history.append(J)
        step_history.append(step)
        iterations += 1
        iter_seconds.append(time.perf_counter() - tic)
    return OptimizeResult(u=u, state=state, adjoint=adjoint, gradient=gradient,
                          J_history=J_history, kkt_history=kkt_history,
                          step_history=step_history, iter_seconds=iter_seconds,
                          termination=termination, iterations=iterations)
