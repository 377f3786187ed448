"""Primal-dual interior-point solver for one (linearized) OCP-structured QP.

A single geometric homotopy drives the complementarity target ``tau`` from an
adaptive initial level down to ``tau_min``; each level takes damped Newton
steps on the smoothed KKT system, factorized by the Riccati recursion, with
fraction-to-boundary clipping as the only globalization. Convergence is
declared on the residual at ``tau = tau_min``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import FactorizationError
from ..ocp import PackLayout, PrimalDualPoint, Q_MODE
from .kkt import KktBlocks, assemble_residual
from .riccati import RiccatiFactorization
from .types import CONVERGED, MAX_ITERS, QP_FAILURE, SolveInfo, SolverSettings

_POSITIVE_FIELDS = ("nu", "mu", "mu_term", "t_nu", "t_mu", "t_mu_term")


@dataclass
class QpData:
    """A QP subproblem: frozen linearization blocks plus its layout."""

    blocks: KktBlocks
    layout: PackLayout

    @property
    def dims(self):
        return self.blocks.dims


def cold_start(qp: QpData, s: np.ndarray, a: Optional[np.ndarray]) -> PrimalDualPoint:
    """Deterministic default initializer.

    States copy ``s``, inputs are zero (the pinned action in Q-mode),
    slacks zero, all multipliers one, and the inequality slacks
    ``t = max(-c, 1)`` so the point is strictly interior regardless of the
    constraint values at that primal guess.
    """
    d = qp.dims
    mode = qp.layout.mode
    point = PrimalDualPoint.zeros(d, mode)
    point.x[:] = s
    if mode == Q_MODE:
        point.u[0] = a
    point.chi[:] = 1.0
    point.nu[:] = 1.0
    point.mu[:] = 1.0
    point.mu_term[:] = 1.0
    point.t_nu[:] = np.maximum(-qp.blocks.g_val, 1.0)
    point.t_mu[:] = np.maximum(-qp.blocks.h_val, 1.0)
    point.t_mu_term[:] = np.maximum(-qp.blocks.hf_val, 1.0)
    return point


def _floor_positive(point: PrimalDualPoint, floor: float = 1e-12):
    for name in _POSITIVE_FIELDS:
        arr = getattr(point, name)
        if arr.size:
            np.maximum(arr, floor, out=arr)


def _complementarity_mean(point: PrimalDualPoint) -> float:
    total = float(
        np.sum(point.nu * point.t_nu)
        + np.sum(point.mu * point.t_mu)
        + np.sum(point.mu_term * point.t_mu_term)
    )
    m = point.nu.size + point.mu.size + point.mu_term.size
    return total / m if m else 0.0


def _fraction_to_boundary(point: PrimalDualPoint, step: PrimalDualPoint, frac: float) -> float:
    alpha = 1.0
    for name in _POSITIVE_FIELDS:
        p = getattr(point, name)
        dp = getattr(step, name)
        if p.size == 0:
            continue
        neg = dp < 0.0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-frac * p[neg] / dp[neg])))
    return alpha


def _advance(point: PrimalDualPoint, step: PrimalDualPoint, alpha: float):
    point.x += alpha * step.x
    point.u += alpha * step.u
    point.sigma += alpha * step.sigma
    point.sigma_term += alpha * step.sigma_term
    point.chi += alpha * step.chi
    point.nu += alpha * step.nu
    point.mu += alpha * step.mu
    point.mu_term += alpha * step.mu_term
    point.t_nu += alpha * step.t_nu
    point.t_mu += alpha * step.t_mu
    point.t_mu_term += alpha * step.t_mu_term
    if point.zeta is not None:
        point.zeta += alpha * step.zeta


def _comp_shift(layout: PackLayout, residual: np.ndarray, delta: float) -> np.ndarray:
    """Residual at tau + delta given the residual at tau (complementarity rows only)."""
    out = residual.copy()
    sv = layout.stage_view(out)
    sv[:, layout.ctnu] -= delta
    sv[:, layout.ctmu] -= delta
    out[layout.t_mu_term] -= delta
    return out


def ip_solve_qp(
    qp: QpData,
    s: np.ndarray,
    a: Optional[np.ndarray] = None,
    warm: Optional[PrimalDualPoint] = None,
    settings: Optional[SolverSettings] = None,
) -> tuple[PrimalDualPoint, SolveInfo]:
    """Solve the QP described by ``qp`` to the ``tau_min`` residual tolerance."""
    settings = settings or SolverSettings()
    layout = qp.layout
    s = np.asarray(s, dtype=float)
    point = warm.copy() if warm is not None else cold_start(qp, s, a)
    _floor_positive(point)
    if layout.mode == Q_MODE:
        point.u[0] = a  # exact pin; steps keep it invariant

    n_ineq = point.nu.size + point.mu.size + point.mu_term.size
    tau_min, tol = settings.tau_min, settings.kkt_tol
    tau = tau_min if n_ineq == 0 else float(np.clip(_complementarity_mean(point), tau_min, 1e2))

    def residual_min(pt):
        return assemble_residual(qp.blocks, pt, tau_min, s, a, layout, at_lin=False)

    r_min = residual_min(point)
    if not np.all(np.isfinite(r_min)):
        info = SolveInfo(QP_FAILURE, message="non-finite residual at the initial point")
        return point, info

    best_norm = np.inf
    best_point = point.copy()
    iters = 0
    status = MAX_ITERS
    message = ""
    while True:
        nr = float(np.max(np.abs(r_min))) if r_min.size else 0.0
        if nr <= tol:
            status = CONVERGED
            best_norm, best_point = nr, point
            break
        if nr < best_norm:
            best_norm, best_point = nr, point.copy()
        if iters >= settings.max_ip_iters:
            status = QP_FAILURE
            message = "max_ip_iters exceeded"
            break
        iters += 1
        r_tau = _comp_shift(layout, r_min, tau - tau_min)
        try:
            fact = RiccatiFactorization(qp.blocks, point, layout, reg_eps=settings.reg_eps)
        except FactorizationError as exc:
            status = QP_FAILURE
            message = str(exc)
            break
        step = layout.unpack(fact.backsolve(-r_tau))
        alpha = _fraction_to_boundary(point, step, settings.fraction_to_boundary)
        _advance(point, step, alpha)
        r_min = residual_min(point)
        if not np.all(np.isfinite(r_min)):
            status = QP_FAILURE
            message = "non-finite residual after step"
            break
        if tau > tau_min:
            r_tau_new = _comp_shift(layout, r_min, tau - tau_min)
            if float(np.max(np.abs(r_tau_new))) <= max(10.0 * tau, tol):
                tau = max(tau * settings.tau_decrease, tau_min)

    if status != CONVERGED:
        point = best_point
    info = SolveInfo(
        status=status,
        sqp_iters=0,
        ip_iters_total=iters,
        final_kkt_residual=best_norm if status != CONVERGED else float(np.max(np.abs(r_min)) if r_min.size else 0.0),
        final_tau=tau_min,
        objective_value=np.nan,
        message=message,
    )
    return point, info
