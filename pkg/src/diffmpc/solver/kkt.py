"""Evaluation of the interior-point KKT system in packed ordering.

``evaluate_blocks`` calls the problem callbacks once per stage and stacks
values, Jacobians, and (optionally) Lagrangian Hessian blocks. Everything
downstream — residual assembly, the structured factorization, the dense
Jacobian, and the matrix-vector product — consumes these frozen blocks, so
a QP subproblem is simply "blocks evaluated at the linearization point".

The residual vector stacks, in the slot order of :class:`~diffmpc.ocp.PackLayout`:
stationarity rows for (x, u, sigma), the initial-state pin, dynamics defects,
inequality-plus-slack rows, complementarity rows, the terminal block, and in
action-value mode the first-input pin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import CapabilityError, DimensionError, InteriorityError
from ..ocp import PackLayout, ParametricOcp, PrimalDualPoint, Q_MODE, V_MODE
from .types import HESSIAN_EXACT, HESSIAN_GAUSS_NEWTON, HESSIAN_REGULARIZED


@dataclass
class KktBlocks:
    """Problem data linearized at one primal-dual point."""

    dims: object
    mode: str
    hessian_mode: Optional[str]
    # linearization point (primal part)
    lin_x: np.ndarray  # (N+1, nx)
    lin_u: np.ndarray  # (N, nu)
    lin_sigma: np.ndarray  # (N, ns)
    lin_sigma_term: np.ndarray  # (ns_term,)
    # stage data
    cost_grad: np.ndarray  # (N, nx+nu)
    rho_grad: np.ndarray  # (N, ns)
    f_val: np.ndarray  # (N, nx)
    A: np.ndarray  # (N, nx, nx)
    B: np.ndarray  # (N, nx, nu)
    g_val: np.ndarray  # (N, ng)
    G: np.ndarray  # (N, ng, nu)
    h_val: np.ndarray  # (N, nh)
    J: np.ndarray  # (N, nh, nz) Jacobian of h wrt (x, u, sigma)
    stage_hess: Optional[np.ndarray]  # (N, nz, nz)
    # terminal data
    term_grad: np.ndarray  # (nz_term,) gradient of Vf + rho_f wrt (x_N, sigma_N)
    hf_val: np.ndarray  # (nh_term,)
    Jf: np.ndarray  # (nh_term, nz_term)
    term_hess: Optional[np.ndarray]  # (nz_term, nz_term)
    objective: float = np.nan

    @property
    def has_hessian(self):
        return self.stage_hess is not None


def _require(fn, what):
    if fn is None:
        raise CapabilityError(
            f"{what} is not available; supply the callback or generate it with diffmpc.ad"
        )
    return fn


def evaluate_blocks(
    ocp: ParametricOcp,
    point: PrimalDualPoint,
    hessian_mode: Optional[str] = HESSIAN_EXACT,
    reg_eps: float = 0.0,
) -> KktBlocks:
    """Evaluate callbacks at ``point``; ``hessian_mode=None`` skips Hessians."""
    d = ocp.dims
    th = ocp.theta
    N, nx, nu, ns = d.N, d.nx, d.nu, d.ns
    nz, nzt = d.nz, d.nz_term
    mode = point.mode

    cost_grad = np.empty((N, nx + nu))
    rho_grad = np.zeros((N, ns))
    f_val = np.empty((N, nx))
    A = np.empty((N, nx, nx))
    B = np.empty((N, nx, nu))
    g_val = np.zeros((N, d.ng))
    G = np.zeros((N, d.ng, nu))
    h_val = np.zeros((N, d.nh))
    J = np.zeros((N, d.nh, nz))
    stage_hess = np.zeros((N, nz, nz)) if hessian_mode is not None else None

    sc, dyn = ocp.stage_cost, ocp.dynamics
    gcb, hcb = ocp.input_constraint, ocp.path_constraint
    rho = ocp.slack_penalty
    exact = hessian_mode in (HESSIAN_EXACT, HESSIAN_REGULARIZED)
    objective = 0.0

    for k in range(N):
        x, u, sg = point.x[k], point.u[k], point.sigma[k]
        objective += float(sc.value(k, x, u, th))
        cost_grad[k] = sc.grad(k, x, u, th)
        f_val[k] = dyn.value(x, u, th)
        A[k] = dyn.jac_x(x, u, th)
        B[k] = dyn.jac_u(x, u, th)
        if d.ng:
            g_val[k] = gcb.value(u)
            G[k] = gcb.jac(u)
        if d.nh:
            h_val[k] = hcb.value(x, u, sg, th)
            J[k, :, :nx] = hcb.jac_x(x, u, sg, th)
            J[k, :, nx : nx + nu] = hcb.jac_u(x, u, sg, th)
            J[k, :, nx + nu :] = hcb.jac_sigma(x, u, sg, th)
        if ns:
            objective += float(rho.value(k, sg))
            rho_grad[k] = rho.grad(k, sg)
        if hessian_mode is not None:
            Hs = stage_hess[k]
            Hs[: nx + nu, : nx + nu] = sc.hess(k, x, u, th)
            if ns:
                Hs[nx + nu :, nx + nu :] = rho.hess(k, sg)
            if exact:
                lam = point.chi[k + 1]
                if np.any(lam):
                    hdyn = _require(dyn.hess_lam_zz, "dynamics.hess_lam_zz")
                    Hs[: nx + nu, : nx + nu] += hdyn(x, u, th, lam)
                if d.nh and np.any(point.mu[k]):
                    hh = hcb.hess_lam_zz
                    if hh is not None:
                        Hs += hh(x, u, sg, th, point.mu[k])
                    # None means the constraint is affine in (x, u, sigma)
            if hessian_mode == HESSIAN_REGULARIZED and reg_eps > 0.0:
                Hs[np.diag_indices(nz)] += reg_eps

    xN, sgN = point.x[N], point.sigma_term
    tc, rhoT, tcon = ocp.terminal_cost, ocp.terminal_slack_penalty, ocp.terminal_constraint
    objective += float(tc.value(xN, th))
    term_grad = np.zeros(nzt)
    term_grad[:nx] = tc.grad(xN, th)
    hf_val = np.zeros(d.nh_term)
    Jf = np.zeros((d.nh_term, nzt))
    if d.ns_term:
        objective += float(rhoT.value(sgN))
        term_grad[nx:] = rhoT.grad(sgN)
    if d.nh_term:
        hf_val[:] = tcon.value(xN, sgN, th)
        Jf[:, :nx] = tcon.jac_x(xN, sgN, th)
        Jf[:, nx:] = tcon.jac_sigma(xN, sgN, th)
    term_hess = None
    if hessian_mode is not None:
        term_hess = np.zeros((nzt, nzt))
        term_hess[:nx, :nx] = tc.hess(xN, th)
        if d.ns_term:
            term_hess[nx:, nx:] = rhoT.hess(sgN)
        if exact and d.nh_term and np.any(point.mu_term):
            hh = tcon.hess_lam_zz
            if hh is not None:
                term_hess += hh(xN, sgN, th, point.mu_term)
        if hessian_mode == HESSIAN_REGULARIZED and reg_eps > 0.0:
            term_hess[np.diag_indices(nzt)] += reg_eps

    return KktBlocks(
        dims=d,
        mode=mode,
        hessian_mode=hessian_mode,
        lin_x=point.x.copy(),
        lin_u=point.u.copy(),
        lin_sigma=point.sigma.copy(),
        lin_sigma_term=point.sigma_term.copy(),
        cost_grad=cost_grad,
        rho_grad=rho_grad,
        f_val=f_val,
        A=A,
        B=B,
        g_val=g_val,
        G=G,
        h_val=h_val,
        J=J,
        stage_hess=stage_hess,
        term_grad=term_grad,
        hf_val=hf_val,
        Jf=Jf,
        term_hess=term_hess,
        objective=objective,
    )


def objective_value(ocp: ParametricOcp, point: PrimalDualPoint) -> float:
    """Cost function evaluated at the primal part of ``point``."""
    d = ocp.dims
    th = ocp.theta
    total = 0.0
    for k in range(d.N):
        total += float(ocp.stage_cost.value(k, point.x[k], point.u[k], th))
        if d.ns:
            total += float(ocp.slack_penalty.value(k, point.sigma[k]))
    total += float(ocp.terminal_cost.value(point.x[d.N], th))
    if d.ns_term:
        total += float(ocp.terminal_slack_penalty.value(point.sigma_term))
    return total


def check_interior(point: PrimalDualPoint):
    for name in ("nu", "mu", "mu_term", "t_nu", "t_mu", "t_mu_term"):
        arr = getattr(point, name)
        if arr.size and np.min(arr) <= 0.0:
            raise InteriorityError(f"{name} has non-positive entries; point is not interior")


def assemble_residual(
    blocks: KktBlocks,
    point: PrimalDualPoint,
    tau: float,
    s: np.ndarray,
    a: Optional[np.ndarray],
    layout: PackLayout,
    at_lin: bool = True,
) -> np.ndarray:
    """Stack the KKT residual at ``point``.

    With ``at_lin=True`` the blocks are taken as evaluated at ``point`` and
    the residual is the NLP one; otherwise nonlinear quantities are
    extrapolated affinely from the linearization point (the QP residual).
    """
    d = blocks.dims
    N, nx, nu, ns = d.N, d.nx, d.nu, d.ns
    mode = layout.mode
    vec = np.empty(layout.size)
    sv = layout.stage_view(vec)

    if at_lin:
        dx = du = dsg = None
        grad_z = np.concatenate([blocks.cost_grad, blocks.rho_grad], axis=1)
        f_lin = blocks.f_val
        g_lin = blocks.g_val
        h_lin = blocks.h_val
    else:
        dx = point.x - blocks.lin_x
        du = point.u - blocks.lin_u
        dsg = point.sigma - blocks.lin_sigma
        dz = np.concatenate([dx[:-1], du, dsg], axis=1)
        grad_z = np.concatenate([blocks.cost_grad, blocks.rho_grad], axis=1)
        grad_z = grad_z + np.einsum("kij,kj->ki", blocks.stage_hess, dz)
        f_lin = (
            blocks.f_val
            + np.einsum("kij,kj->ki", blocks.A, dx[:-1])
            + np.einsum("kij,kj->ki", blocks.B, du)
        )
        g_lin = blocks.g_val + np.einsum("kij,kj->ki", blocks.G, du) if d.ng else blocks.g_val
        h_lin = blocks.h_val + np.einsum("kij,kj->ki", blocks.J, dz) if d.nh else blocks.h_val

    chi_next = point.chi[1:]
    r_x = grad_z[:, :nx] + np.einsum("kij,ki->kj", blocks.A, chi_next)
    r_x -= point.chi[:-1]
    r_x[0] += 2.0 * point.chi[0]  # the x0 pin enters with +chi_0, defects with -chi_k
    r_u = grad_z[:, nx : nx + nu] + np.einsum("kij,ki->kj", blocks.B, chi_next)
    if d.ng:
        r_u += np.einsum("kij,ki->kj", blocks.G, point.nu)
    if d.nh:
        r_x += np.einsum("kiz,ki->kz", blocks.J[:, :, :nx], point.mu)
        r_u += np.einsum("kiz,ki->kz", blocks.J[:, :, nx : nx + nu], point.mu)
    if mode == Q_MODE:
        r_u[0] += point.zeta
    sv[:, layout.cx] = r_x
    sv[:, layout.cu] = r_u
    if ns:
        r_s = grad_z[:, nx + nu :]
        r_s += np.einsum("kiz,ki->kz", blocks.J[:, :, nx + nu :], point.mu)
        sv[:, layout.cs] = r_s

    # pins and dynamics defects occupy the chi slots
    defects = f_lin - point.x[1:]
    sv[0, layout.cchi] = point.x[0] - s
    if N > 1:
        sv[1:, layout.cchi] = defects[:-1]
    vec[layout.chi_term] = defects[-1]

    sv[:, layout.cnu] = g_lin + point.t_nu
    sv[:, layout.cmu] = h_lin + point.t_mu
    sv[:, layout.ctnu] = point.nu * point.t_nu - tau
    sv[:, layout.ctmu] = point.mu * point.t_mu - tau

    # terminal block
    if at_lin:
        term_grad = blocks.term_grad
        hf_lin = blocks.hf_val
    else:
        dzN = np.concatenate([dx[-1], point.sigma_term - blocks.lin_sigma_term])
        term_grad = blocks.term_grad + blocks.term_hess @ dzN
        hf_lin = blocks.hf_val + blocks.Jf @ dzN if d.nh_term else blocks.hf_val
    r_xN = term_grad[:nx] - point.chi[N]
    r_sN = term_grad[nx:].copy()
    if d.nh_term:
        r_xN = r_xN + blocks.Jf[:, :nx].T @ point.mu_term
        r_sN += blocks.Jf[:, nx:].T @ point.mu_term
    vec[layout.x_term] = r_xN
    vec[layout.sigma_term] = r_sN
    vec[layout.mu_term] = hf_lin + point.t_mu_term
    vec[layout.t_mu_term] = point.mu_term * point.t_mu_term - tau
    if mode == Q_MODE:
        vec[layout.zeta] = point.u[0] - a
    return vec


def kkt_residual(
    ocp: ParametricOcp,
    s: np.ndarray,
    a: Optional[np.ndarray],
    point: PrimalDualPoint,
    tau: float,
) -> np.ndarray:
    """KKT residual of the NLP at ``point`` (packed ordering).

    ``a`` selects the mode: an action pins the first input and activates the
    zeta rows. Raises if the point is not strictly interior.
    """
    mode = Q_MODE if a is not None else V_MODE
    if point.mode != mode:
        raise DimensionError(f"point is in {point.mode}-mode but a {'was' if a is None else 'was not'} omitted")
    check_interior(point)
    layout = PackLayout(ocp.dims, mode)
    blocks = evaluate_blocks(ocp, point, hessian_mode=None)
    return assemble_residual(blocks, point, tau, np.asarray(s, float), a, layout, at_lin=True)


def assemble_kkt_matrix(blocks: KktBlocks, point: PrimalDualPoint, layout: PackLayout) -> np.ndarray:
    """Dense Jacobian of the residual with respect to the packed point."""
    if not blocks.has_hessian:
        raise ValueError("blocks were evaluated without Hessians")
    d = blocks.dims
    N, nx, nu, ns = d.N, d.nx, d.nu, d.ns
    Jm = np.zeros((layout.size, layout.size))
    for k in range(N):
        rx, ru, rs = layout.x(k), layout.u(k), layout.sigma(k)
        rchi, rnu, rmu = layout.chi(k), layout.nu(k), layout.mu(k)
        rtnu, rtmu = layout.t_nu(k), layout.t_mu(k)
        H = blocks.stage_hess[k]
        zsl = (rx, ru, rs)
        offs = (slice(0, nx), slice(nx, nx + nu), slice(nx + nu, nx + nu + ns))
        for ri, oi in zip(zsl, offs):
            for cj, oj in zip(zsl, offs):
                Jm[ri, cj] = H[oi, oj]
        Jm[rx, layout.chi(k + 1)] = blocks.A[k].T
        Jm[ru, layout.chi(k + 1)] = blocks.B[k].T
        if k == 0:
            Jm[rx, rchi] = np.eye(nx)
        else:
            Jm[rx, rchi] = -np.eye(nx)
        if d.ng:
            Jm[ru, rnu] = blocks.G[k].T
            Jm[rnu, ru] = blocks.G[k]
            Jm[rnu, rtnu] = np.eye(d.ng)
            Jm[rtnu, rnu] = np.diag(point.t_nu[k])
            Jm[rtnu, rtnu] = np.diag(point.nu[k])
        if d.nh:
            Jk = blocks.J[k]
            Jm[rx, rmu] = Jk[:, :nx].T
            Jm[ru, rmu] = Jk[:, nx : nx + nu].T
            if ns:
                Jm[rs, rmu] = Jk[:, nx + nu :].T
                Jm[rmu, rs] = Jk[:, nx + nu :]
            Jm[rmu, rx] = Jk[:, :nx]
            Jm[rmu, ru] = Jk[:, nx : nx + nu]
            Jm[rmu, rtmu] = np.eye(d.nh)
            Jm[rtmu, rmu] = np.diag(point.t_mu[k])
            Jm[rtmu, rtmu] = np.diag(point.mu[k])
        # dynamics defect row for stage k lives in the chi(k+1) slot
        rdef = layout.chi(k + 1)
        Jm[rdef, rx] = blocks.A[k]
        Jm[rdef, ru] = blocks.B[k]
        Jm[rdef, layout.x(k + 1)] = -np.eye(nx)
    Jm[layout.chi(0), layout.x(0)] = np.eye(nx)

    rxN, rsN = layout.x_term, layout.sigma_term
    Ht = blocks.term_hess
    Jm[rxN, rxN] = Ht[:nx, :nx]
    Jm[rxN, layout.chi_term] = -np.eye(nx)
    if d.ns_term:
        Jm[rxN, rsN] = Ht[:nx, nx:]
        Jm[rsN, rxN] = Ht[nx:, :nx]
        Jm[rsN, rsN] = Ht[nx:, nx:]
    if d.nh_term:
        Jm[rxN, layout.mu_term] = blocks.Jf[:, :nx].T
        Jm[layout.mu_term, rxN] = blocks.Jf[:, :nx]
        if d.ns_term:
            Jm[rsN, layout.mu_term] = blocks.Jf[:, nx:].T
            Jm[layout.mu_term, rsN] = blocks.Jf[:, nx:]
        Jm[layout.mu_term, layout.t_mu_term] = np.eye(d.nh_term)
        Jm[layout.t_mu_term, layout.mu_term] = np.diag(point.t_mu_term)
        Jm[layout.t_mu_term, layout.t_mu_term] = np.diag(point.mu_term)
    if layout.mode == Q_MODE:
        Jm[layout.u(0), layout.zeta] = np.eye(nu)
        Jm[layout.zeta, layout.u(0)] = np.eye(nu)
    return Jm


def kkt_matvec(blocks: KktBlocks, point: PrimalDualPoint, layout: PackLayout, v: np.ndarray) -> np.ndarray:
    """Product of the KKT Jacobian with ``v`` (vector or column-stacked matrix)."""
    if not blocks.has_hessian:
        raise ValueError("blocks were evaluated without Hessians")
    d = blocks.dims
    N, nx, nu, ns = d.N, d.nx, d.nu, d.ns
    single = v.ndim == 1
    V = v[:, None] if single else v
    m = V.shape[1]
    out = np.zeros_like(V)
    sv_in = V[: layout.term_start].reshape(N, layout.stage_len, m)
    sv_out = out[: layout.term_start].reshape(N, layout.stage_len, m)

    vx = np.concatenate([sv_in[:, layout.cx], V[None, layout.x_term]], axis=0)  # (N+1, nx, m)
    vu = sv_in[:, layout.cu]
    vs = sv_in[:, layout.cs]
    vchi = np.concatenate([sv_in[:, layout.cchi], V[None, layout.chi_term]], axis=0)
    vnu = sv_in[:, layout.cnu]
    vmu = sv_in[:, layout.cmu]
    vtnu = sv_in[:, layout.ctnu]
    vtmu = sv_in[:, layout.ctmu]

    vz = np.concatenate([vx[:-1], vu, vs], axis=1)  # (N, nz, m)
    Hz = np.einsum("kij,kjm->kim", blocks.stage_hess, vz)
    r_x = Hz[:, :nx] + np.einsum("kij,kim->kjm", blocks.A, vchi[1:])
    r_x -= vchi[:-1]
    r_x[0] += 2.0 * vchi[0]
    r_u = Hz[:, nx : nx + nu] + np.einsum("kij,kim->kjm", blocks.B, vchi[1:])
    if d.ng:
        r_u += np.einsum("kij,kim->kjm", blocks.G, vnu)
    if d.nh:
        r_x += np.einsum("kiz,kim->kzm", blocks.J[:, :, :nx], vmu)
        r_u += np.einsum("kiz,kim->kzm", blocks.J[:, :, nx : nx + nu], vmu)
    if layout.mode == Q_MODE:
        r_u[0] += V[layout.zeta]
    sv_out[:, layout.cx] = r_x
    sv_out[:, layout.cu] = r_u
    if ns:
        sv_out[:, layout.cs] = Hz[:, nx + nu :] + np.einsum(
            "kiz,kim->kzm", blocks.J[:, :, nx + nu :], vmu
        )

    defect = np.einsum("kij,kjm->kim", blocks.A, vx[:-1]) + np.einsum(
        "kij,kjm->kim", blocks.B, vu
    ) - vx[1:]
    sv_out[0, layout.cchi] = vx[0]
    if N > 1:
        sv_out[1:, layout.cchi] = defect[:-1]
    out[layout.chi_term] = defect[-1]

    if d.ng:
        sv_out[:, layout.cnu] = np.einsum("kij,kjm->kim", blocks.G, vu) + vtnu
        sv_out[:, layout.ctnu] = point.t_nu[:, :, None] * vnu + point.nu[:, :, None] * vtnu
    if d.nh:
        sv_out[:, layout.cmu] = np.einsum("kiz,kzm->kim", blocks.J, vz) + vtmu
        sv_out[:, layout.ctmu] = point.t_mu[:, :, None] * vmu + point.mu[:, :, None] * vtmu

    vsN = V[layout.sigma_term]
    vzN = np.concatenate([vx[-1], vsN], axis=0)
    HtzN = blocks.term_hess @ vzN
    r_xN = HtzN[:nx] - vchi[-1]
    r_sN = HtzN[nx:]
    if d.nh_term:
        vmuN = V[layout.mu_term]
        vtmuN = V[layout.t_mu_term]
        r_xN = r_xN + blocks.Jf[:, :nx].T @ vmuN
        r_sN = r_sN + blocks.Jf[:, nx:].T @ vmuN
        out[layout.mu_term] = blocks.Jf @ vzN + vtmuN
        out[layout.t_mu_term] = point.t_mu_term[:, None] * vmuN + point.mu_term[:, None] * vtmuN
    out[layout.x_term] = r_xN
    out[layout.sigma_term] = r_sN
    if layout.mode == Q_MODE:
        out[layout.zeta] = vu[0]
    return out[:, 0] if single else out
