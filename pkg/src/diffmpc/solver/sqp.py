"""SQP outer loop: linearize, solve the QP by interior point, repeat.

Steps are full QP solutions accepted on decrease of the true KKT residual at
``tau = tau_min``; there is no merit-function line search. A warm start that
already satisfies the tolerance returns immediately with zero iterations.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import DimensionError
from ..ocp import PackLayout, ParametricOcp, PrimalDualPoint, Q_MODE, V_MODE
from .ipm import QpData, ip_solve_qp
from .kkt import assemble_residual, evaluate_blocks, objective_value
from .types import CONVERGED, MAX_ITERS, QP_FAILURE, HESSIAN_GAUSS_NEWTON, SolveInfo, SolverSettings


def default_start(ocp: ParametricOcp, s: np.ndarray, a: Optional[np.ndarray]) -> PrimalDualPoint:
    """Cold-start point for the NLP (same rules as the QP cold start)."""
    d = ocp.dims
    mode = Q_MODE if a is not None else V_MODE
    point = PrimalDualPoint.zeros(d, mode)
    point.x[:] = s
    if mode == Q_MODE:
        point.u[0] = a
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
    return point


def sqp_solve(
    ocp: ParametricOcp,
    s: np.ndarray,
    a: Optional[np.ndarray] = None,
    warm: Optional[PrimalDualPoint] = None,
    settings: Optional[SolverSettings] = None,
) -> tuple[PrimalDualPoint, SolveInfo]:
    """Solve the value NLP (``a is None``) or the action-value NLP.

    Returns the best iterate with a status that is ``converged`` only when
    the KKT residual at ``tau_min`` meets ``kkt_tol``; in Q-mode the returned
    first input equals ``a`` exactly.
    """
    settings = settings or SolverSettings()
    d = ocp.dims
    s = np.asarray(s, dtype=float)
    if s.shape != (d.nx,):
        raise DimensionError(f"state has shape {s.shape}, expected ({d.nx},)")
    if a is not None:
        a = np.asarray(a, dtype=float)
        if a.shape != (d.nu,):
            raise DimensionError(f"action has shape {a.shape}, expected ({d.nu},)")
    mode = Q_MODE if a is not None else V_MODE
    layout = PackLayout(d, mode)

    point = warm.copy() if warm is not None else default_start(ocp, s, a)
    if point.mode != mode:
        point = point.as_q_mode() if mode == Q_MODE else _strip_zeta(point)
    if mode == Q_MODE:
        point.u[0] = a

    ip_total = 0
    n_qp = 0
    prev_nr = np.inf
    best = (np.inf, point)
    status = MAX_ITERS
    message = ""
    final_blocks = None
    while True:
        blocks = evaluate_blocks(
            ocp, point, hessian_mode=settings.hessian_mode, reg_eps=settings.reg_eps
        )
        r = assemble_residual(blocks, point, settings.tau_min, s, a, layout, at_lin=True)
        nr = float(np.max(np.abs(r))) if r.size else 0.0
        if not np.isfinite(nr):
            status = QP_FAILURE
            message = "non-finite NLP residual"
            break
        if nr < best[0]:
            best = (nr, point)
        if nr <= settings.kkt_tol:
            status = CONVERGED
            final_blocks = blocks
            break
        if n_qp > 0 and nr >= prev_nr:
            status = MAX_ITERS
            message = f"no KKT residual decrease ({prev_nr:.3e} -> {nr:.3e})"
            break
        if n_qp == settings.max_sqp_iters:
            status = MAX_ITERS
            message = "max_sqp_iters exceeded"
            break
        prev_nr = nr
        qp = QpData(blocks, layout)
        point, qinfo = ip_solve_qp(qp, s, a, warm=point, settings=settings)
        n_qp += 1
        ip_total += qinfo.ip_iters_total
        if qinfo.status == QP_FAILURE:
            status = QP_FAILURE
            message = f"QP subproblem failed: {qinfo.message}"
            break

    if status != CONVERGED:
        nr, point = best
    info = SolveInfo(
        status=status,
        sqp_iters=n_qp,
        ip_iters_total=ip_total,
        final_kkt_residual=nr,
        final_tau=settings.tau_min,
        objective_value=final_blocks.objective if final_blocks is not None else objective_value(ocp, point),
        message=message,
    )
    return point, info


def _strip_zeta(point: PrimalDualPoint) -> PrimalDualPoint:
    out = point.copy()
    out.zeta = None
    return out


def exact_hessian(ocp: ParametricOcp, point: PrimalDualPoint):
    """Stage-block Hessian of the Lagrangian at ``point``.

    Returns ``(stage, terminal)`` where ``stage`` is (N, nz, nz) over
    (x, u, sigma) and ``terminal`` is (nz_term, nz_term) over (x_N, sigma_N).
    Multiplier-weighted curvature of the dynamics and mixed constraints is
    included; raises CapabilityError when the needed callbacks are missing.
    """
    blocks = evaluate_blocks(ocp, point, hessian_mode="exact")
    return blocks.stage_hess, blocks.term_hess


def gauss_newton_hessian(ocp: ParametricOcp, point: PrimalDualPoint):
    blocks = evaluate_blocks(ocp, point, hessian_mode=HESSIAN_GAUSS_NEWTON)
    return blocks.stage_hess, blocks.term_hess
