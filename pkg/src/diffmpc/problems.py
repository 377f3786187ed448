"""Example problem definitions constructed in code.

Two problems ship with the package: a two-state linear-quadratic tracking
problem with slack-relaxed state boxes and learnable model/cost parameters
(the Q-learning example), and a chain-of-masses stabilization problem with
dense learnable cost weights (the sensitivity benchmark). The linear problem
carries hand-coded derivative callbacks; the chain problem generates its
dynamics derivatives with :mod:`diffmpc.ad`.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import ad
from .envs import ChainMassModel, chain_rest_state, rk4_step
from .ocp import (
    Dims,
    Dynamics,
    InputConstraint,
    ParametricOcp,
    PathConstraint,
    SlackPenalty,
    StageCost,
    TerminalConstraint,
    TerminalCost,
    TerminalSlackPenalty,
)

LTI_A0 = np.array([[1.0, 0.25], [0.0, 1.0]])
LTI_B0 = np.array([[0.0312], [0.25]])
LTI_STATE_LB = np.array([0.0, -1.0])
LTI_STATE_UB = np.array([1.0, 1.0])

LTI_THETA_SLICES = {
    "V_0": slice(0, 1),
    "b": slice(1, 3),
    "f": slice(3, 6),
    "A": slice(6, 10),
    "B": slice(10, 12),
}


def lti_initial_theta() -> np.ndarray:
    theta = np.zeros(12)
    theta[LTI_THETA_SLICES["A"]] = LTI_A0.ravel()
    theta[LTI_THETA_SLICES["B"]] = LTI_B0.ravel()
    return theta


def discounted_dare(A, B, Q, R, gamma):
    """Terminal weight: algebraic Riccati solution of the discounted problem
    (equivalent to the standard equation with sqrt(gamma)-scaled matrices)."""
    g = np.sqrt(gamma)
    return scipy.linalg.solve_discrete_are(g * A, g * B, Q, R)


def lti_ocp(N: int = 40, gamma: float = 0.9, w=(100.0, 100.0), state_constraints: bool = True) -> ParametricOcp:
    """Learnable linear MPC problem.

    theta = (V_0, b, f, A, B): additive value offset, dynamics bias, linear
    cost coefficients on (x, u), and the model matrices, initialized to the
    nominal model with everything else zero. State boxes are relaxed by one
    slack vector per stage shared between the lower and upper rows, with the
    nonnegativity rows folded into the same constraint block.
    """
    w = np.asarray(w, dtype=float)
    nx, nu = 2, 1
    lb, ub = LTI_STATE_LB, LTI_STATE_UB
    S = discounted_dare(LTI_A0, LTI_B0, np.eye(nx), np.eye(nu), gamma)
    gamma_pow = gamma ** np.arange(N + 1)

    if state_constraints:
        dims = Dims(nx=nx, nu=nu, n_theta=12, N=N, ng=2, nh=6, nh_term=6, ns=2, ns_term=2)
    else:
        dims = Dims(nx=nx, nu=nu, n_theta=12, N=N, ng=2)

    sl = LTI_THETA_SLICES

    def cost_value(k, x, u, th):
        return float(th[sl["f"]] @ np.concatenate([x, u]) + 0.5 * gamma_pow[k] * (x @ x + u @ u))

    def cost_grad(k, x, u, th):
        return th[sl["f"]] + gamma_pow[k] * np.concatenate([x, u])

    def cost_hess(k, x, u, th):
        return gamma_pow[k] * np.eye(nx + nu)

    def cost_grad_theta(k, x, u, th):
        g = np.zeros(12)
        g[sl["f"]] = np.concatenate([x, u])
        return g

    cost_mixed_const = np.zeros((nx + nu, 12))
    cost_mixed_const[:, sl["f"]] = np.eye(nx + nu)

    def cost_hess_z_theta(k, x, u, th):
        return cost_mixed_const

    stage_cost = StageCost(cost_value, cost_grad, cost_hess, cost_grad_theta, cost_hess_z_theta)

    gN = gamma_pow[N]

    def term_value(x, th):
        return float(th[sl["V_0"]][0] + 0.5 * gN * x @ S @ x)

    def term_grad(x, th):
        return gN * (S @ x)

    def term_hess(x, th):
        return gN * S

    def term_grad_theta(x, th):
        g = np.zeros(12)
        g[sl["V_0"]] = 1.0
        return g

    def term_hess_x_theta(x, th):
        return np.zeros((nx, 12))

    terminal_cost = TerminalCost(term_value, term_grad, term_hess, term_grad_theta, term_hess_x_theta)

    def dyn_value(x, u, th):
        return th[sl["A"]].reshape(nx, nx) @ x + th[sl["B"]].reshape(nx, nu) @ u + th[sl["b"]]

    def dyn_jac_x(x, u, th):
        return th[sl["A"]].reshape(nx, nx)

    def dyn_jac_u(x, u, th):
        return th[sl["B"]].reshape(nx, nu)

    def dyn_jac_theta(x, u, th):
        J = np.zeros((nx, 12))
        J[:, sl["b"]] = np.eye(nx)
        for p in range(nx):
            J[p, 6 + nx * p : 6 + nx * (p + 1)] = x
        J[:, sl["B"]] = u[0] * np.eye(nx)
        return J

    def dyn_hess_lam_zz(x, u, th, lam):
        return np.zeros((nx + nu, nx + nu))

    def dyn_hess_lam_z_theta(x, u, th, lam):
        M = np.zeros((nx + nu, 12))
        for p in range(nx):
            M[:nx, 6 + nx * p : 6 + nx * (p + 1)] = lam[p] * np.eye(nx)
        M[nx, sl["B"]] = lam
        return M

    dynamics = Dynamics(dyn_value, dyn_jac_x, dyn_jac_u, dyn_jac_theta, dyn_hess_lam_zz, dyn_hess_lam_z_theta)

    g_jac = np.array([[1.0], [-1.0]])
    input_constraint = InputConstraint(
        value=lambda u: np.array([u[0] - 1.0, -1.0 - u[0]]),
        jac=lambda u: g_jac,
    )

    if not state_constraints:
        theta = lti_initial_theta()
        return ParametricOcp(
            dims=dims,
            theta=theta,
            stage_cost=stage_cost,
            terminal_cost=terminal_cost,
            dynamics=dynamics,
            input_constraint=input_constraint,
            theta_slices=dict(sl),
        )

    h_jac_x = np.vstack([-np.eye(nx), np.eye(nx), np.zeros((nx, nx))])
    h_jac_u = np.zeros((6, nu))
    h_jac_s = np.vstack([-np.eye(nx), -np.eye(nx), -np.eye(nx)])
    h_jac_theta = np.zeros((6, 12))
    h_zz = np.zeros((nx + nu + 2, nx + nu + 2))

    def h_value(x, u, s, th):
        return np.concatenate([lb - x - s, x - ub - s, -s])

    path_constraint = PathConstraint(
        value=h_value,
        jac_x=lambda x, u, s, th: h_jac_x,
        jac_u=lambda x, u, s, th: h_jac_u,
        jac_sigma=lambda x, u, s, th: h_jac_s,
        jac_theta=lambda x, u, s, th: h_jac_theta,
        hess_lam_zz=lambda x, u, s, th, lam: h_zz,
        hess_lam_z_theta=lambda x, u, s, th, lam: np.zeros((nx + nu + 2, 12)),
    )

    hf_zz = np.zeros((nx + 2, nx + 2))
    terminal_constraint = TerminalConstraint(
        value=lambda x, s, th: np.concatenate([lb - x - s, x - ub - s, -s]),
        jac_x=lambda x, s, th: h_jac_x,
        jac_sigma=lambda x, s, th: h_jac_s,
        jac_theta=lambda x, s, th: h_jac_theta,
        hess_lam_zz=lambda x, s, th, lam: hf_zz,
        hess_lam_z_theta=lambda x, s, th, lam: np.zeros((nx + 2, 12)),
    )

    slack_penalty = SlackPenalty(
        value=lambda k, s: float(0.5 * gamma_pow[k] * w @ s),
        grad=lambda k, s: 0.5 * gamma_pow[k] * w,
        hess=lambda k, s: np.zeros((2, 2)),
    )
    terminal_slack_penalty = TerminalSlackPenalty(
        value=lambda s: float(0.5 * gN * w @ s),
        grad=lambda s: 0.5 * gN * w,
        hess=lambda s: np.zeros((2, 2)),
    )

    return ParametricOcp(
        dims=dims,
        theta=lti_initial_theta(),
        stage_cost=stage_cost,
        terminal_cost=terminal_cost,
        dynamics=dynamics,
        slack_penalty=slack_penalty,
        terminal_slack_penalty=terminal_slack_penalty,
        input_constraint=input_constraint,
        path_constraint=path_constraint,
        terminal_constraint=terminal_constraint,
        theta_slices=dict(sl),
    )


# -- chain of masses -----------------------------------------------------------


def chain_initial_theta(nx: int, nu: int, q_pos: float = 25.0, q_vel: float = 1.0, r_weight: float = 0.1):
    diag = np.empty(nx)
    npos = (nx + 3) // 2  # position block width: 3*(n_mass-1)
    diag[:npos] = q_pos
    diag[npos:] = q_vel
    Q = np.diag(diag)
    R = r_weight * np.eye(nu)
    return np.concatenate([Q.ravel(), R.ravel()])


def chain_mass_ocp(
    n_mass: int = 3,
    N: int = 20,
    dt: float = 0.1,
    model: ChainMassModel | None = None,
    x_ref: np.ndarray | None = None,
):
    """Chain stabilization problem with dense learnable cost weights.

    theta stacks the full stage/terminal state weight matrix and the input
    weight matrix; the dynamics are the RK4-discretized chain and are not
    parameterized. Returns ``(ocp, model, x_ref)``.
    """
    model = model or ChainMassModel(n_mass=n_mass)
    nx, nu = model.nx, model.nu
    if x_ref is None:
        x_ref = chain_rest_state(model)
    n_theta = nx * nx + nu * nu
    dims = Dims(nx=nx, nu=nu, n_theta=n_theta, N=N, ng=2 * nu)
    q_sl = slice(0, nx * nx)
    r_sl = slice(nx * nx, n_theta)
    eye_x = np.eye(nx)
    eye_u = np.eye(nu)

    def unpackQR(th):
        return th[q_sl].reshape(nx, nx), th[r_sl].reshape(nu, nu)

    def cost_value(k, x, u, th):
        Q, R = unpackQR(th)
        d = x - x_ref
        return float(0.5 * d @ Q @ d + 0.5 * u @ R @ u)

    def cost_grad(k, x, u, th):
        Q, R = unpackQR(th)
        d = x - x_ref
        return np.concatenate([0.5 * (Q + Q.T) @ d, 0.5 * (R + R.T) @ u])

    def cost_hess(k, x, u, th):
        Q, R = unpackQR(th)
        H = np.zeros((nx + nu, nx + nu))
        H[:nx, :nx] = 0.5 * (Q + Q.T)
        H[nx:, nx:] = 0.5 * (R + R.T)
        return H

    def cost_grad_theta(k, x, u, th):
        d = x - x_ref
        return np.concatenate([0.5 * np.outer(d, d).ravel(), 0.5 * np.outer(u, u).ravel()])

    def _mixed_block(vec, eye):
        # d/dW_pq of 0.5 (W + W^T) v  ->  rows i, cols (p, q)
        n = vec.size
        E = 0.5 * (
            np.einsum("ip,q->ipq", eye, vec) + np.einsum("iq,p->ipq", eye, vec)
        )
        return E.reshape(n, n * n)

    def cost_hess_z_theta(k, x, u, th):
        M = np.zeros((nx + nu, n_theta))
        M[:nx, q_sl] = _mixed_block(x - x_ref, eye_x)
        M[nx:, r_sl] = _mixed_block(u, eye_u)
        return M

    stage_cost = StageCost(cost_value, cost_grad, cost_hess, cost_grad_theta, cost_hess_z_theta)

    def term_value(x, th):
        Q, _ = unpackQR(th)
        d = x - x_ref
        return float(0.5 * d @ Q @ d)

    def term_grad(x, th):
        Q, _ = unpackQR(th)
        return 0.5 * (Q + Q.T) @ (x - x_ref)

    def term_hess(x, th):
        Q, _ = unpackQR(th)
        return 0.5 * (Q + Q.T)

    def term_grad_theta(x, th):
        d = x - x_ref
        g = np.zeros(n_theta)
        g[q_sl] = 0.5 * np.outer(d, d).ravel()
        return g

    def term_hess_x_theta(x, th):
        M = np.zeros((nx, n_theta))
        M[:, q_sl] = _mixed_block(x - x_ref, eye_x)
        return M

    terminal_cost = TerminalCost(term_value, term_grad, term_hess, term_grad_theta, term_hess_x_theta)

    def dyn_value(x, u, th):
        return rk4_step(model, x, u, dt)

    def dyn_jac_x(x, u, th):
        return ad.jacobian(lambda xx: rk4_step(model, xx, u, dt), x)

    def dyn_jac_u(x, u, th):
        return ad.jacobian(lambda uu: rk4_step(model, x, uu, dt), u)

    def dyn_jac_theta(x, u, th):
        return np.zeros((nx, n_theta))

    def dyn_hess_lam_zz(x, u, th, lam):
        def weighted(z):
            return ad.dot(lam, rk4_step(model, z[:nx], z[nx:], dt))

        return ad.hessian(weighted, np.concatenate([x, u]))

    def dyn_hess_lam_z_theta(x, u, th, lam):
        return np.zeros((nx + nu, n_theta))

    dynamics = Dynamics(dyn_value, dyn_jac_x, dyn_jac_u, dyn_jac_theta, dyn_hess_lam_zz, dyn_hess_lam_z_theta)

    g_jac = np.vstack([eye_u, -eye_u])
    input_constraint = InputConstraint(
        value=lambda u: np.concatenate([u - 1.0, -1.0 - u]),
        jac=lambda u: g_jac,
    )

    ocp = ParametricOcp(
        dims=dims,
        theta=chain_initial_theta(nx, nu),
        stage_cost=stage_cost,
        terminal_cost=terminal_cost,
        dynamics=dynamics,
        input_constraint=input_constraint,
        theta_slices={"Q": q_sl, "R": r_sl},
    )
    return ocp, model, x_ref
