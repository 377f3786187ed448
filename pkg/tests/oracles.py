"""Independent reference implementations used as test oracles.

Everything here deliberately avoids the structured solver internals: the
LQR oracle is the textbook backward recursion, the bounded-QP oracle
enumerates active sets on a dense stacked formulation, the dense
interior-point oracle runs its own Newton loop on the assembled KKT matrix,
and the finite-difference oracles re-solve the NLP from scratch.
"""

from __future__ import annotations

import itertools

import numpy as np

from diffmpc import Dims, SolverSettings, sqp_solve
from diffmpc.ocp import (
    Dynamics,
    InputConstraint,
    ParametricOcp,
    StageCost,
    TerminalCost,
)
from diffmpc.ocp import PackLayout
from diffmpc.solver import assemble_kkt_matrix, assemble_residual, evaluate_blocks


def lq_ocp(A, B, Q, R, QN, N, u_bound=None, n_theta=0):
    """Plain LQ problem (optionally with symmetric input bounds)."""
    A, B, Q, R, QN = (np.asarray(m, dtype=float) for m in (A, B, Q, R, QN))
    nx, nu = B.shape
    ng = 2 * nu if u_bound is not None else 0
    dims = Dims(nx=nx, nu=nu, n_theta=n_theta, N=N, ng=ng)

    def cost_value(k, x, u, th):
        return float(0.5 * (x @ Q @ x + u @ R @ u))

    def cost_grad(k, x, u, th):
        return np.concatenate([Q @ x, R @ u])

    hess = np.zeros((nx + nu, nx + nu))
    hess[:nx, :nx] = Q
    hess[nx:, nx:] = R
    stage_cost = StageCost(
        cost_value,
        cost_grad,
        lambda k, x, u, th: hess,
        lambda k, x, u, th: np.zeros(n_theta),
        lambda k, x, u, th: np.zeros((nx + nu, n_theta)),
    )
    terminal_cost = TerminalCost(
        lambda x, th: float(0.5 * x @ QN @ x),
        lambda x, th: QN @ x,
        lambda x, th: QN,
        lambda x, th: np.zeros(n_theta),
        lambda x, th: np.zeros((nx, n_theta)),
    )
    dynamics = Dynamics(
        lambda x, u, th: A @ x + B @ u,
        lambda x, u, th: A,
        lambda x, u, th: B,
        lambda x, u, th: np.zeros((nx, n_theta)),
        lambda x, u, th, lam: np.zeros((nx + nu, nx + nu)),
        lambda x, u, th, lam: np.zeros((nx + nu, n_theta)),
    )
    input_constraint = None
    if u_bound is not None:
        gj = np.vstack([np.eye(nu), -np.eye(nu)])
        input_constraint = InputConstraint(
            value=lambda u: np.concatenate([u - u_bound, -u_bound - u]),
            jac=lambda u: gj,
        )
    return ParametricOcp(
        dims=dims,
        theta=np.zeros(n_theta),
        stage_cost=stage_cost,
        terminal_cost=terminal_cost,
        dynamics=dynamics,
        input_constraint=input_constraint,
    )


def lqr_trajectory(A, B, Q, R, QN, N, s):
    """Finite-horizon LQR by textbook backward recursion, then a rollout."""
    A, B = np.asarray(A, float), np.asarray(B, float)
    P = np.asarray(QN, float)
    gains = []
    for _ in range(N):
        BtP = B.T @ P
        K = np.linalg.solve(R + BtP @ B, BtP @ A)
        P = Q + A.T @ P @ (A - B @ K)
        gains.append(K)
    gains.reverse()
    xs = [np.asarray(s, float)]
    us = []
    for k in range(N):
        us.append(-gains[k] @ xs[-1])
        xs.append(A @ xs[-1] + B @ us[-1])
    return np.array(xs), np.array(us), gains


def stacked_lq_matrices(A, B, Q, R, QN, N, s):
    """Dense stacked form of the LQ problem: variables (x_0..x_N, u_0..u_{N-1})."""
    nx, nu = B.shape
    nvx, nvu = (N + 1) * nx, N * nu
    n = nvx + nvu
    H = np.zeros((n, n))
    for k in range(N):
        H[k * nx : (k + 1) * nx, k * nx : (k + 1) * nx] = Q
        H[nvx + k * nu : nvx + (k + 1) * nu, nvx + k * nu : nvx + (k + 1) * nu] = R
    H[N * nx : (N + 1) * nx, N * nx : (N + 1) * nx] = QN
    neq = (N + 1) * nx
    Aeq = np.zeros((neq, n))
    beq = np.zeros(neq)
    Aeq[:nx, :nx] = np.eye(nx)
    beq[:nx] = s
    for k in range(N):
        r = (k + 1) * nx
        Aeq[r : r + nx, k * nx : (k + 1) * nx] = A
        Aeq[r : r + nx, nvx + k * nu : nvx + (k + 1) * nu] = B
        Aeq[r : r + nx, (k + 1) * nx : (k + 2) * nx] = -np.eye(nx)
    return H, Aeq, beq


def active_set_qp(A, B, Q, R, QN, N, s, u_bound):
    """Bounded LQ by brute-force enumeration over bound activity patterns.

    Every input entry is inactive, at the upper bound, or at the lower
    bound; each consistent pattern is an equality-constrained QP solved
    densely, and the optimум among primal/dual-feasible candidates wins.
    Only usable for tiny instances.
    """
    nx, nu = B.shape
    H, Aeq, beq = stacked_lq_matrices(A, B, Q, R, QN, N, s)
    n = H.shape[0]
    nvx = (N + 1) * nx
    best = None
    for pattern in itertools.product((0, 1, -1), repeat=N * nu):
        rows = []
        vals = []
        for i, p in enumerate(pattern):
            if p:
                row = np.zeros(n)
                row[nvx + i] = 1.0
                rows.append(row)
                vals.append(p * u_bound)
        Aall = np.vstack([Aeq] + rows) if rows else Aeq
        ball = np.concatenate([beq, vals]) if rows else beq
        m = Aall.shape[0]
        kkt = np.block([[H, Aall.T], [Aall, np.zeros((m, m))]])
        rhs = np.concatenate([np.zeros(n), ball])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        w = sol[:n]
        lam = sol[n + beq.size :]
        u = w[nvx:]
        if np.any(np.abs(u) > u_bound + 1e-9):
            continue
        ok = True
        for j, (i, p) in enumerate([(i, p) for i, p in enumerate(pattern) if p]):
            # stationarity: H w + A^T lam = 0; the inequality multiplier of an
            # active bound u_i = p * ub is p * lam_j and must be nonnegative
            if p * lam[j] < -1e-9:
                ok = False
                break
        if not ok:
            continue
        obj = 0.5 * w @ H @ w
        if best is None or obj < best[0] - 1e-12:
            best = (obj, w)
    assert best is not None, "no feasible active set found"
    w = best[1]
    xs = w[:nvx].reshape(N + 1, nx)
    us = w[nvx:].reshape(N, nu)
    return xs, us, best[0]


def dense_ip_solve(ocp, s, settings=None, max_iters=200):
    """Interior-point solve using dense LU on the assembled KKT matrix.

    Independent of the Riccati code path: same residual definition, its own
    Newton loop, numpy linear algebra.
    """
    settings = settings or SolverSettings()
    from diffmpc.solver import cold_start, ip_solve_qp  # noqa: F401 (structure reference)
    from diffmpc.ocp import PrimalDualPoint, V_MODE

    d = ocp.dims
    layout = PackLayout(d, V_MODE)
    point = PrimalDualPoint.zeros(d, V_MODE)
    point.x[:] = s
    point.chi[:] = 1.0
    point.nu[:] = 1.0
    point.mu[:] = 1.0
    point.mu_term[:] = 1.0
    th = ocp.theta
    for k in range(d.N):
        if d.ng:
            point.t_nu[k] = np.maximum(-np.asarray(ocp.input_constraint.value(point.u[k])), 1.0)
        if d.nh:
            hv = ocp.path_constraint.value(point.x[k], point.u[k], point.sigma[k], th)
            point.t_mu[k] = np.maximum(-np.asarray(hv), 1.0)
    if d.nh_term:
        hfv = ocp.terminal_constraint.value(point.x[d.N], point.sigma_term, th)
        point.t_mu_term[:] = np.maximum(-np.asarray(hfv), 1.0)

    n_ineq = point.nu.size + point.mu.size + point.mu_term.size
    tau = 1.0 if n_ineq else settings.tau_min
    for _ in range(max_iters):
        blocks = evaluate_blocks(ocp, point, "exact")
        r_min = assemble_residual(blocks, point, settings.tau_min, s, None, layout, at_lin=True)
        if np.max(np.abs(r_min)) <= settings.kkt_tol:
            return point, True
        r_tau = assemble_residual(blocks, point, tau, s, None, layout, at_lin=True)
        J = assemble_kkt_matrix(blocks, point, layout)
        step = layout.unpack(np.linalg.solve(J, -r_tau))
        alpha = 1.0
        for name in ("nu", "mu", "mu_term", "t_nu", "t_mu", "t_mu_term"):
            p = getattr(point, name)
            dp = getattr(step, name)
            if p.size and np.any(dp < 0):
                neg = dp < 0
                alpha = min(alpha, float(np.min(-0.995 * p[neg] / dp[neg])))
        for name in ("x", "u", "sigma", "sigma_term", "chi", "nu", "mu", "mu_term", "t_nu", "t_mu", "t_mu_term"):
            getattr(point, name).__iadd__(alpha * getattr(step, name))
        r_chk = assemble_residual(blocks, point, tau, s, None, layout, at_lin=True)
        if np.max(np.abs(r_chk)) <= max(10.0 * tau, settings.kkt_tol):
            tau = max(tau * 0.2, settings.tau_min)
    return point, False


def fd_value_gradient(ocp, s, h=1e-6, settings=None, a=None, warm=None):
    """Central finite differences of the re-solved objective in theta."""
    settings = settings or SolverSettings(kkt_tol=1e-12, tau_min=1e-10)
    theta0 = ocp.get_theta()
    if warm is None:
        warm, info = sqp_solve(ocp, s, a=a, settings=settings)
        assert info.converged
    grad = np.empty(theta0.size)
    try:
        for i in range(theta0.size):
            vals = []
            for sign in (+1.0, -1.0):
                th = theta0.copy()
                th[i] += sign * h
                ocp.set_theta(th)
                point, info = sqp_solve(ocp, s, a=a, warm=warm, settings=settings)
                assert info.converged, f"fd solve failed at parameter {i}"
                vals.append(info.objective_value)
            grad[i] = (vals[0] - vals[1]) / (2 * h)
    finally:
        ocp.set_theta(theta0)
    return grad


def fd_policy_jacobian(ocp, s, h=1e-5, settings=None, warm=None):
    """Central finite differences of the re-solved first input in theta."""
    settings = settings or SolverSettings(kkt_tol=1e-12, tau_min=1e-10)
    theta0 = ocp.get_theta()
    if warm is None:
        warm, info = sqp_solve(ocp, s, settings=settings)
        assert info.converged
    nu = ocp.dims.nu
    grad = np.empty((nu, theta0.size))
    try:
        for i in range(theta0.size):
            us = []
            for sign in (+1.0, -1.0):
                th = theta0.copy()
                th[i] += sign * h
                ocp.set_theta(th)
                point, info = sqp_solve(ocp, s, warm=warm, settings=settings)
                assert info.converged, f"fd solve failed at parameter {i}"
                us.append(point.u[0].copy())
            grad[:, i] = (us[0] - us[1]) / (2 * h)
    finally:
        ocp.set_theta(theta0)
    return grad


def random_ocp_qp(rng, with_bounds=True):
    """Random stable LQ instance within the acceptance-criterion size caps."""
    nx = int(rng.integers(2, 5))
    nu = int(rng.integers(1, 3))
    N = int(rng.integers(2, 11))
    A = rng.standard_normal((nx, nx))
    A *= 0.95 / max(np.abs(np.linalg.eigvals(A)).max(), 1e-6)
    B = rng.standard_normal((nx, nu))
    M = rng.standard_normal((nx, nx))
    Q = M @ M.T + 0.5 * np.eye(nx)
    Mr = rng.standard_normal((nu, nu))
    R = Mr @ Mr.T + 0.5 * np.eye(nu)
    QN = Q + np.eye(nx)
    u_bound = None
    if with_bounds:
        u_bound = float(rng.uniform(0.05, 1.0))
    ocp = lq_ocp(A, B, Q, R, QN, N, u_bound=u_bound)
    if PackLayout(ocp.dims, "v").size > 200:
        return random_ocp_qp(rng, with_bounds=with_bounds)
    s = rng.uniform(-1.0, 1.0, nx)
    return ocp, s, (A, B, Q, R, QN, N, u_bound)
