"""Parameter sensitivities of converged NLP solutions.

Value and action-value gradients are gradients of the Lagrangian with
respect to the parameters, evaluated at the primal-dual solution. The policy
gradient differentiates the smoothed KKT system at the converged barrier
level: factorize the exact-Hessian KKT matrix once (structured Riccati or
dense LU), solve one linear system per parameter against the
parameter-Jacobian of the residual, and read off the first-input rows.
Forward differences over re-solves serve as the reference baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import CapabilityError, FactorizationError, PreconditionError, SingularKktError, SolveError
from .ocp import PackLayout, ParametricOcp, PrimalDualPoint, Q_MODE, V_MODE
from .solver import (
    HESSIAN_EXACT,
    RiccatiFactorization,
    Solution,
    SolverSettings,
    assemble_kkt_matrix,
    evaluate_blocks,
    kkt_matvec,
    sqp_solve,
)

METHOD_STRUCTURED = "structured"
METHOD_DENSE = "dense"
METHOD_FINITE_DIFFERENCE = "finite_difference"


@dataclass
class SensitivityBundle:
    grad_v: np.ndarray
    grad_q: np.ndarray
    grad_pi: np.ndarray
    method: str
    residual_check: float


@dataclass
class KktJacobians:
    d_xi_d_y: np.ndarray
    d_xi_d_theta: np.ndarray


def lagrangian(ocp: ParametricOcp, s, a, point: PrimalDualPoint) -> float:
    """Cost plus multiplier-weighted constraint terms at ``point``.

    With ``a = u_0`` or a zero first-input multiplier this coincides with the
    value-problem Lagrangian.
    """
    d = ocp.dims
    th = ocp.theta
    s = np.asarray(s, dtype=float)
    total = float(point.chi[0] @ (point.x[0] - s))
    for k in range(d.N):
        x, u, sg = point.x[k], point.u[k], point.sigma[k]
        total += float(ocp.stage_cost.value(k, x, u, th))
        total += float(point.chi[k + 1] @ (np.asarray(ocp.dynamics.value(x, u, th)) - point.x[k + 1]))
        if d.ns:
            total += float(ocp.slack_penalty.value(k, sg))
        if d.ng:
            total += float(point.nu[k] @ np.asarray(ocp.input_constraint.value(u)))
        if d.nh:
            total += float(point.mu[k] @ np.asarray(ocp.path_constraint.value(x, u, sg, th)))
    total += float(ocp.terminal_cost.value(point.x[d.N], th))
    if d.ns_term:
        total += float(ocp.terminal_slack_penalty.value(point.sigma_term))
    if d.nh_term:
        total += float(
            point.mu_term
            @ np.asarray(ocp.terminal_constraint.value(point.x[d.N], point.sigma_term, th))
        )
    if point.zeta is not None:
        a = np.asarray(a, dtype=float)
        total += float(point.zeta @ (point.u[0] - a))
    return total


def _require(fn, what):
    if fn is None:
        raise CapabilityError(
            f"{what} is not available; supply the callback or generate it with diffmpc.ad"
        )
    return fn


def lagrangian_grad_theta(ocp: ParametricOcp, point: PrimalDualPoint) -> np.ndarray:
    """Gradient of the Lagrangian with respect to theta at ``point``.

    Only parameterized pieces contribute: costs, dynamics, and the mixed and
    terminal constraints. Missing ``*_theta`` callbacks mean "independent of
    theta" only when the owning module never references theta; here they are
    required for cost and dynamics and optional (zero) for constraints.
    """
    d = ocp.dims
    th = ocp.theta
    g = np.zeros(d.n_theta)
    sc_gt = _require(ocp.stage_cost.grad_theta, "stage_cost.grad_theta")
    dy_jt = _require(ocp.dynamics.jac_theta, "dynamics.jac_theta")
    for k in range(d.N):
        x, u, sg = point.x[k], point.u[k], point.sigma[k]
        g += sc_gt(k, x, u, th)
        g += point.chi[k + 1] @ dy_jt(x, u, th)
        if d.nh and ocp.path_constraint.jac_theta is not None:
            g += point.mu[k] @ ocp.path_constraint.jac_theta(x, u, sg, th)
    g += _require(ocp.terminal_cost.grad_theta, "terminal_cost.grad_theta")(point.x[d.N], th)
    if d.nh_term and ocp.terminal_constraint.jac_theta is not None:
        g += point.mu_term @ ocp.terminal_constraint.jac_theta(point.x[d.N], point.sigma_term, th)
    return g


def _check_converged(sol: Solution, what: str):
    if not sol.info.converged:
        raise PreconditionError(f"{what} requires a converged solution, got {sol.info}")


def grad_v_theta(ocp: ParametricOcp, s, solution_v: Solution) -> np.ndarray:
    """Gradient of the value function: Lagrangian theta-gradient at the
    value-problem solution (zero first-input multiplier)."""
    _check_converged(solution_v, "grad_v_theta")
    return lagrangian_grad_theta(ocp, solution_v.point)


def grad_q_theta(ocp: ParametricOcp, s, a, solution_q: Solution) -> np.ndarray:
    """Gradient of the action-value function at the pinned-input solution."""
    _check_converged(solution_q, "grad_q_theta")
    return lagrangian_grad_theta(ocp, solution_q.point)


def assemble_theta_jacobian(ocp: ParametricOcp, point: PrimalDualPoint, layout: PackLayout) -> np.ndarray:
    """Jacobian of the KKT residual with respect to theta (packed rows)."""
    d = ocp.dims
    th = ocp.theta
    N, nx, nu, ns = d.N, d.nx, d.nu, d.ns
    out = np.zeros((layout.size, d.n_theta))
    sc_mix = _require(ocp.stage_cost.hess_z_theta, "stage_cost.hess_z_theta")
    dy_jt = _require(ocp.dynamics.jac_theta, "dynamics.jac_theta")
    dy_mix = ocp.dynamics.hess_lam_z_theta
    pc = ocp.path_constraint
    for k in range(N):
        x, u, sg = point.x[k], point.u[k], point.sigma[k]
        stat = np.zeros((d.nz, d.n_theta))
        stat[: nx + nu] = sc_mix(k, x, u, th)
        lam = point.chi[k + 1]
        if np.any(lam):
            stat[: nx + nu] += _require(dy_mix, "dynamics.hess_lam_z_theta")(x, u, th, lam)
        if d.nh and np.any(point.mu[k]) and pc.hess_lam_z_theta is not None:
            stat += pc.hess_lam_z_theta(x, u, sg, th, point.mu[k])
        out[layout.x(k)] = stat[:nx]
        out[layout.u(k)] = stat[nx : nx + nu]
        if ns:
            out[layout.sigma(k)] = stat[nx + nu :]
        out[layout.chi(k + 1)] = dy_jt(x, u, th)
        if d.nh and pc.jac_theta is not None:
            out[layout.mu(k)] = pc.jac_theta(x, u, sg, th)
    xN, sgN = point.x[N], point.sigma_term
    tc_mix = ocp.terminal_cost.hess_x_theta
    statN = np.zeros((d.nz_term, d.n_theta))
    if tc_mix is not None:
        statN[:nx] = tc_mix(xN, th)
    tcon = ocp.terminal_constraint
    if d.nh_term:
        if np.any(point.mu_term) and tcon.hess_lam_z_theta is not None:
            statN += tcon.hess_lam_z_theta(xN, sgN, th, point.mu_term)
        if tcon.jac_theta is not None:
            out[layout.mu_term] = tcon.jac_theta(xN, sgN, th)
    out[layout.x_term] = statN[:nx]
    out[layout.sigma_term] = statN[nx:]
    return out


def kkt_jacobians(
    ocp: ParametricOcp,
    s,
    a_opt,
    point: PrimalDualPoint,
    tau: float,
) -> KktJacobians:
    """Exact-Hessian Jacobians of the residual in packed ordering.

    Complementarity rows treat the barrier parameter as a constant, so these
    are the sensitivities of the smoothed system at fixed ``tau``.
    """
    mode = Q_MODE if a_opt is not None else V_MODE
    layout = PackLayout(ocp.dims, mode)
    blocks = evaluate_blocks(ocp, point, hessian_mode=HESSIAN_EXACT)
    d_y = assemble_kkt_matrix(blocks, point, layout)
    d_theta = assemble_theta_jacobian(ocp, point, layout)
    return KktJacobians(d_xi_d_y=d_y, d_xi_d_theta=d_theta)


def _solution_sensitivity(
    ocp: ParametricOcp,
    point: PrimalDualPoint,
    layout: PackLayout,
    method: str,
):
    """Solve d_xi_d_y . dY = -d_xi_d_theta with one refinement pass.

    Returns (dY, residual_check, blocks).
    """
    blocks = evaluate_blocks(ocp, point, hessian_mode=HESSIAN_EXACT)
    d_theta = assemble_theta_jacobian(ocp, point, layout)
    if method == METHOD_STRUCTURED:
        try:
            fact = RiccatiFactorization(blocks, point, layout, reg_eps=0.0, allow_regularization=False)
        except FactorizationError as exc:
            raise SingularKktError(f"structured factorization failed at stage {exc.stage}") from exc

        def solve(rhs):
            return fact.backsolve(rhs)

    elif method == METHOD_DENSE:
        d_y = assemble_kkt_matrix(blocks, point, layout)
        try:
            lu = scipy.linalg.lu_factor(d_y)
        except scipy.linalg.LinAlgError as exc:
            raise SingularKktError("dense KKT factorization failed", np.linalg.cond(d_y)) from exc

        def solve(rhs):
            return scipy.linalg.lu_solve(lu, rhs)

    else:
        raise ValueError(f"unknown method {method!r}")

    dY = solve(-d_theta)
    # one step of iterative refinement against the exact operator
    resid = kkt_matvec(blocks, point, layout, dY) + d_theta
    check = float(np.max(np.abs(resid))) if resid.size else 0.0
    for _ in range(2):
        if check <= 1e-9:
            break
        dY = dY - solve(resid)
        resid = kkt_matvec(blocks, point, layout, dY) + d_theta
        check = float(np.max(np.abs(resid)))
    if not np.all(np.isfinite(dY)):
        cond = None
        if method == METHOD_DENSE:
            cond = np.linalg.cond(assemble_kkt_matrix(blocks, point, layout))
        raise SingularKktError("non-finite solution sensitivity", cond)
    return dY, check


def policy_gradient(
    ocp: ParametricOcp,
    s,
    solution_v: Solution,
    method: str = METHOD_STRUCTURED,
    return_full: bool = False,
):
    """Sensitivity of the first optimal input to theta, (nu, n_theta).

    Differentiates the value-problem KKT system at the converged point; the
    pinned-input system (with its extra rows) gives the same answer by the
    coincidence of the two Lagrangians at the optimal action and is exposed
    through :func:`policy_gradient_from_q` for parity testing.
    """
    _check_converged(solution_v, "policy_gradient")
    point = solution_v.point
    layout = PackLayout(ocp.dims, point.mode)
    dY, check = _solution_sensitivity(ocp, point, layout, method)
    grad_pi = dY[layout.u0, :].copy()
    if return_full:
        return grad_pi, dY, check
    return grad_pi


def policy_gradient_from_q(
    ocp: ParametricOcp,
    s,
    solution_q: Solution,
    method: str = METHOD_STRUCTURED,
):
    """Parity variant: drop the pin rows of a converged action-value solution
    taken at the optimal action and differentiate the resulting value-mode
    system."""
    _check_converged(solution_q, "policy_gradient_from_q")
    if solution_q.point.zeta is None:
        raise PreconditionError("expected an action-value solution")
    point = solution_q.point.copy()
    point.zeta = None
    layout = PackLayout(ocp.dims, V_MODE)
    dY, _ = _solution_sensitivity(ocp, point, layout, method)
    return dY[layout.u0, :].copy()


def sensitivity_bundle(
    ocp: ParametricOcp,
    s,
    solution_v: Solution,
    solution_q: Solution,
    method: str = METHOD_STRUCTURED,
) -> SensitivityBundle:
    grad_pi, _, check = policy_gradient(ocp, s, solution_v, method=method, return_full=True)
    return SensitivityBundle(
        grad_v=grad_v_theta(ocp, s, solution_v),
        grad_q=grad_q_theta(ocp, s, solution_q.a, solution_q),
        grad_pi=grad_pi,
        method=method,
        residual_check=check,
    )


def fd_policy_gradient(
    ocp: ParametricOcp,
    s,
    step: float,
    settings: Optional[SolverSettings] = None,
    base: Optional[Solution] = None,
    info_out: Optional[dict] = None,
) -> np.ndarray:
    """Forward-difference policy gradient: one extra warm-started solve per
    parameter, (pi(theta + h e_i) - pi(theta)) / h."""
    if step <= 0.0:
        raise PreconditionError("finite-difference step must be positive")
    settings = settings or SolverSettings()
    d = ocp.dims
    s = np.asarray(s, dtype=float)
    if base is None or not base.info.converged:
        point0, info0 = sqp_solve(ocp, s, settings=settings)
        if not info0.converged:
            raise SolveError("base solve failed", info0)
    else:
        point0 = base.point
    u0 = point0.u[0].copy()
    theta0 = ocp.get_theta()
    grad = np.empty((d.nu, d.n_theta))
    n_solves = 0
    try:
        for i in range(d.n_theta):
            theta = theta0.copy()
            theta[i] += step
            ocp.set_theta(theta)
            point_i, info_i = sqp_solve(ocp, s, warm=point0, settings=settings)
            n_solves += 1
            if not info_i.converged:
                raise SolveError(f"perturbed solve failed for parameter index {i}", info_i)
            grad[:, i] = (point_i.u[0] - u0) / step
    finally:
        ocp.set_theta(theta0)
        if info_out is not None:
            info_out["extra_solves"] = n_solves
    return grad
