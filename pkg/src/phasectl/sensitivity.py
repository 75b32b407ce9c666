"""Tangent and adjoint solves around a stored state trajectory.

The tangent system is the exact derivative of the implemented stepping:
each step linearizes the order-parameter solve (same operator as the
final Newton Jacobian) and the potential solve (including the derivative
of its rho-dependent diagonal), with the same staggering as the forward
march and zero initial data.

Two adjoint constructions are provided.

``discrete``
    Transposes the tangent step by step and composes it with the cost
    derivatives, so the duality identity and the reduced-gradient
    pairing hold to solver precision.  The multiplier of the terminal
    potential equation is generally a small nonzero field, so the
    terminal levels carry the transposed values rather than the formal
    terminal conditions; they approach those conditions at first order
    in the step size.

``pde``
    Marches a backward scheme for the continuous adjoint system in
    which the couplings are delayed by one step, with the formal
    terminal conditions imposed exactly: q vanishes at the final level
    and delta * p equals the terminal tracking misfit there.

Both modes agree up to O(tau + h^2); the verification module measures
exactly that.  Either mode requires a state produced with a single
coupling sweep per step, the default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mesh
from .errors import ValidationError
from .fields import as_trajectory
from .forward import ProblemData, SolverConfig, StateTrajectory

ADJOINT_MODES = ("discrete", "pde")


@dataclass
class TangentTrajectory:
    """Directional state derivative: xi for rho, eta for mu."""

    xi: np.ndarray
    eta: np.ndarray


@dataclass
class AdjointTrajectory:
    """Adjoint pair: p for the order parameter, q for the potential."""

    p: np.ndarray
    q: np.ndarray
    mode: str


def _require_single_sweep(cfg: SolverConfig):
    if cfg.coupling_iters != 1:
        raise ValidationError(
            "sensitivity solves linearize the single-sweep scheme; "
            "got coupling_iters=%d" % cfg.coupling_iters)


def solve_tangent(problem: ProblemData, state: StateTrajectory, h,
                  cfg: SolverConfig = SolverConfig()) -> TangentTrajectory:
    """Differentiate the forward march along control direction h."""
    _require_single_sweep(cfg)
    grid, tg = problem.grid, problem.tgrid
    h = as_trajectory(tg, grid, h)
    tau = tg.tau
    eps, delta = problem.epsilon, problem.delta
    rho, mu = state.rho, state.mu
    xi = np.zeros((tg.N + 1, grid.num_cells))
    eta = np.zeros_like(xi)
    for n in range(tg.N):
        shift_rho = delta / tau + problem.potential.d2(rho[n + 1])
        xi[n + 1] = mesh.solve_shifted(
            grid, shift_rho, (delta / tau) * xi[n] + eta[n], tol=cfg.linear_tol)
        coeff = (eps + 3.0 * rho[n + 1] - rho[n]) / tau
        rhs = (h[n + 1]
               + ((2.0 * mu[n] - 3.0 * mu[n + 1]) / tau) * xi[n + 1]
               + (mu[n + 1] / tau) * xi[n]
               + ((eps + 2.0 * rho[n + 1]) / tau) * eta[n])
        eta[n + 1] = mesh.solve_shifted(grid, coeff, rhs, tol=cfg.linear_tol)
    return TangentTrajectory(xi=xi, eta=eta)


def solve_adjoint(problem: ProblemData, state: StateTrajectory,
                  cfg: SolverConfig = SolverConfig(),
                  mode: str = "discrete") -> AdjointTrajectory:
    """Solve the adjoint pair backward from the tracking misfits."""
    if mode not in ADJOINT_MODES:
        raise ValueError("adjoint mode must be one of %r, got %r"
                         % (ADJOINT_MODES, mode))
    _require_single_sweep(cfg)
    if mode == "discrete":
        return _adjoint_discrete(problem, state, cfg)
    return _adjoint_pde(problem, state, cfg)


def _adjoint_discrete(problem, state, cfg):
    # Backward substitution through the transposed tangent steps.  All
    # step operators are symmetric, so each backward solve reuses the
    # forward-step operator at its level.
    grid, tg = problem.grid, problem.tgrid
    tau = tg.tau
    eps, delta = problem.epsilon, problem.delta
    rho, mu = state.rho, state.mu
    c = tg.trap_weights()
    terminal = rho[tg.N] - problem.rho_target
    y = np.zeros((tg.N + 1, grid.num_cells))
    x = np.zeros_like(y)
    for k in range(tg.N, 0, -1):
        rhs_y = problem.beta1 * tau * c[k] * (mu[k] - problem.mu_target[k])
        if k < tg.N:
            rhs_y = rhs_y + x[k + 1] + ((eps + 2.0 * rho[k + 1]) / tau) * y[k + 1]
        y[k] = mesh.solve_shifted(
            grid, (eps + 3.0 * rho[k] - rho[k - 1]) / tau, rhs_y,
            tol=cfg.linear_tol)
        rhs_x = ((2.0 * mu[k - 1] - 3.0 * mu[k]) / tau) * y[k]
        if k == tg.N:
            rhs_x = rhs_x + terminal
        else:
            rhs_x = rhs_x + (delta / tau) * x[k + 1] + (mu[k + 1] / tau) * y[k + 1]
        x[k] = mesh.solve_shifted(
            grid, delta / tau + problem.potential.d2(rho[k]), rhs_x,
            tol=cfg.linear_tol)
    q = np.zeros_like(y)
    q[1:] = y[1:] / (tau * c[1:, None])
    p = np.zeros_like(x)
    p[1:] = x[1:] / tau
    # No multiplier exists at level 0; pad with the adjacent level.
    p[0] = p[1]
    return AdjointTrajectory(p=p, q=q, mode="discrete")


def _adjoint_pde(problem, state, cfg):
    grid, tg = problem.grid, problem.tgrid
    tau = tg.tau
    eps, delta = problem.epsilon, problem.delta
    rho, mu = state.rho, state.mu
    q = np.zeros((tg.N + 1, grid.num_cells))
    p = np.zeros_like(q)
    p[tg.N] = (rho[tg.N] - problem.rho_target) / delta
    for n in range(tg.N - 1, -1, -1):
        rho_t = (rho[n + 1] - rho[n]) / tau
        mu_t = (mu[n + 1] - mu[n]) / tau
        weight = eps + 2.0 * rho[n]
        rhs_q = (weight / tau) * q[n + 1] + (1.0 + rho_t) * q[n + 1] \
            + p[n + 1] + problem.beta1 * (mu[n] - problem.mu_target[n])
        q[n] = mesh.solve_shifted(grid, weight / tau + 1.0, rhs_q,
                                  tol=cfg.linear_tol)
        rhs_p = (delta / tau) * p[n + 1] + mu[n] * (q[n + 1] - q[n]) / tau \
            - mu_t * q[n]
        p[n] = mesh.solve_shifted(
            grid, delta / tau + problem.potential.d2(rho[n]), rhs_p,
            tol=cfg.linear_tol)
    return AdjointTrajectory(p=p, q=q, mode="pde")


def adjoint_mode_gap(problem: ProblemData, state: StateTrajectory,
                     cfg: SolverConfig = SolverConfig()) -> float:
    """Largest per-level cell-norm gap between the two adjoint modes.

    Compared over the multiplier levels 1..N: level 0 of the discrete
    potential adjoint is a structural zero because the first control
    level never enters the dynamics, while the backward pde march
    integrates to t=0.  Over the compared levels the gap shrinks first
    order in tau on a fixed spatial grid.
    """
    qd = solve_adjoint(problem, state, cfg, mode="discrete").q
    qp = solve_adjoint(problem, state, cfg, mode="pde").q
    grid = problem.grid
    return max(mesh.norm_h(grid, qd[k] - qp[k])
               for k in range(1, problem.tgrid.N + 1))


def duality_pairing(problem: ProblemData, state: StateTrajectory,
                    tangent: TangentTrajectory, adjoint: AdjointTrajectory,
                    h) -> tuple:
    """Both sides of the tangent-adjoint duality identity.

    Left side pairs the tracking misfits with the tangent response;
    right side pairs the potential adjoint with the control direction.
    For the discrete mode the two agree to solver precision; for the pde
    mode the gap shrinks first order under refinement.
    """
    grid, tg = problem.grid, problem.tgrid
    h = as_trajectory(tg, grid, h)
    lhs = mesh.inner_h(grid, state.rho[tg.N] - problem.rho_target,
                       tangent.xi[tg.N])
    lhs += problem.beta1 * mesh.inner_q(tg, grid, state.mu - problem.mu_target,
                                        tangent.eta)
    rhs = mesh.inner_q(tg, grid, adjoint.q, h)
    return lhs, rhs
