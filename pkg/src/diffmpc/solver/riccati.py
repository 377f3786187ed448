"""Stagewise factorization of the OCP-structured KKT matrix.

The inequality and complementarity rows are condensed into the stage blocks
(diagonal scalings ``nu/t`` and ``mu/t``), the slack columns join the inputs
as stage-local variables, and the resulting equality-constrained system is
factorized by a backward Riccati sweep. The factorization depends only on
the blocks and the current multipliers, so it is reused across arbitrary
right-hand sides; ``backsolve`` accepts a vector or a column-stacked matrix
and performs only the vector recursions.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg.lapack import dpotrs

from ..errors import FactorizationError
from ..ocp import PackLayout, PrimalDualPoint, Q_MODE
from .kkt import KktBlocks


def _chol(mat):
    if mat.shape[0] == 0:
        return np.zeros((0, 0))
    return np.linalg.cholesky(mat)


def _chol_solve(L, b):
    if L.shape[0] == 0:
        return np.zeros_like(b)
    x, info = dpotrs(L, b, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError(f"dpotrs failed with info={info}")
    return x


class RiccatiFactorization:
    """Reusable factor data for one KKT matrix.

    ``n_factorizations`` counts constructions (test instrumentation for
    factor reuse); back-solves never refactorize.
    """

    n_factorizations = 0

    def __init__(
        self,
        blocks: KktBlocks,
        point: PrimalDualPoint,
        layout: PackLayout,
        reg_eps: float = 0.0,
        allow_regularization: bool = True,
    ):
        if not blocks.has_hessian:
            raise ValueError("blocks were evaluated without Hessians")
        RiccatiFactorization.n_factorizations += 1
        d = blocks.dims
        N, nx, nu, ns = d.N, d.nx, d.nu, d.ns
        nw = nu + ns
        self.blocks = blocks
        self.layout = layout
        self.dims = d
        self.mode = layout.mode
        self.regularization_applied = 0.0

        # diagonal condensation weights from the current multipliers
        with np.errstate(divide="ignore"):
            self.W_nu = point.nu / point.t_nu if d.ng else np.zeros((N, 0))
            self.inv_t_nu = 1.0 / point.t_nu if d.ng else np.zeros((N, 0))
            self.W_mu = point.mu / point.t_mu if d.nh else np.zeros((N, 0))
            self.inv_t_mu = 1.0 / point.t_mu if d.nh else np.zeros((N, 0))
            if d.nh_term:
                self.W_muN = point.mu_term / point.t_mu_term
                self.inv_t_muN = 1.0 / point.t_mu_term
            else:
                self.W_muN = np.zeros(0)
                self.inv_t_muN = np.zeros(0)

        phi = blocks.stage_hess.copy()
        if d.nh:
            phi += np.einsum("kiz,ki,kiy->kzy", blocks.J, self.W_mu, blocks.J)
        if d.ng:
            gwg = np.einsum("kiu,ki,kiv->kuv", blocks.G, self.W_nu, blocks.G)
            phi[:, nx : nx + nu, nx : nx + nu] += gwg
        self.phi_xx = phi[:, :nx, :nx]
        self.phi_xw = phi[:, :nx, nx:]
        self.phi_ww = phi[:, nx:, nx:].copy()
        self.Bw = np.concatenate([blocks.B, np.zeros((N, nx, ns))], axis=2)

        phiN = blocks.term_hess.copy()
        if d.nh_term:
            phiN += np.einsum("iz,i,iy->zy", blocks.Jf, self.W_muN, blocks.Jf)
        self.phiN_xx = phiN[:nx, :nx]
        self.phiN_xs = phiN[:nx, nx:]
        self.phiN_ss = phiN[nx:, nx:]
        try:
            self.cholN_ss = _chol(self.phiN_ss)
        except np.linalg.LinAlgError as exc:
            if not allow_regularization:
                raise FactorizationError(N, f"terminal slack block not positive definite: {exc}")
            self.phiN_ss = self.phiN_ss + max(reg_eps, 1e-12) * np.eye(d.ns_term)
            self.cholN_ss = _chol(self.phiN_ss)
            self.regularization_applied = max(self.regularization_applied, reg_eps)
        QN = self.phiN_xx - self.phiN_xs @ _chol_solve(self.cholN_ss, self.phiN_xs.T)

        self.P = np.empty((N + 1, nx, nx))
        self.P[N] = 0.5 * (QN + QN.T)
        self.K = np.empty((N, nw, nx))
        self.chol_R = [None] * N
        self.M = np.empty((N, nx, nw))  # phi_xw + A^T P_next Bw, reused in back-solves
        for k in range(N - 1, -1, -1):
            A, Bw = blocks.A[k], self.Bw[k]
            Pn = self.P[k + 1]
            PA = Pn @ A
            PB = Pn @ Bw
            Rbar = self.phi_ww[k] + Bw.T @ PB
            reg = reg_eps
            for attempt in range(6):
                try:
                    L = _chol(0.5 * (Rbar + Rbar.T))
                    break
                except np.linalg.LinAlgError:
                    if not allow_regularization or attempt == 5 or reg <= 0.0:
                        raise FactorizationError(k)
                    Rbar = Rbar + reg * np.eye(nw)
                    self.phi_ww[k] = self.phi_ww[k] + reg * np.eye(nw)
                    self.regularization_applied = max(self.regularization_applied, reg)
                    reg *= 10.0
            self.chol_R[k] = L
            M = self.phi_xw[k] + A.T @ PB
            self.M[k] = M
            self.K[k] = _chol_solve(L, self.phi_wx(k) + Bw.T @ PA)
            Pk = self.phi_xx[k] + A.T @ PA - M @ self.K[k]
            self.P[k] = 0.5 * (Pk + Pk.T)
        if self.mode == Q_MODE:
            self.chol_ss0 = _chol(
                0.5 * (self.phi_ww[0][nu:, nu:] + self.phi_ww[0][nu:, nu:].T)
            )

    def phi_wx(self, k):
        return self.phi_xw[k].T

    def backsolve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the factorized system for ``rhs`` (vector or matrix of columns)."""
        layout, blocks = self.layout, self.blocks
        d = self.dims
        N, nx, nu, ns = d.N, d.nx, d.nu, d.ns
        single = rhs.ndim == 1
        B = rhs[:, None] if single else rhs
        m = B.shape[1]
        sv = B[: layout.term_start].reshape(N, layout.stage_len, m)

        b_z = np.concatenate([sv[:, layout.cx], sv[:, layout.cu], sv[:, layout.cs]], axis=1)
        b_chi = np.concatenate([sv[:, layout.cchi], B[None, layout.chi_term]], axis=0)
        b_nu, b_mu = sv[:, layout.cnu], sv[:, layout.cmu]
        b_tnu, b_tmu = sv[:, layout.ctnu], sv[:, layout.ctmu]

        # condense inequality and complementarity rows into the stage rhs
        rz = b_z.copy()
        if d.ng:
            d_nu = self.inv_t_nu[:, :, None] * b_tnu - self.W_nu[:, :, None] * b_nu
            rz[:, nx : nx + nu] -= np.einsum("kgu,kgm->kum", blocks.G, d_nu)
        if d.nh:
            d_mu = self.inv_t_mu[:, :, None] * b_tmu - self.W_mu[:, :, None] * b_mu
            rz -= np.einsum("kiz,kim->kzm", blocks.J, d_mu)
        q = rz[:, :nx]
        rw = rz[:, nx:]
        c = -b_chi[1:]
        b_pin = b_chi[0]

        b_muN, b_tmuN = B[layout.mu_term], B[layout.t_mu_term]
        rzN = np.concatenate([B[layout.x_term], B[layout.sigma_term]], axis=0)
        if d.nh_term:
            d_muN = self.inv_t_muN[:, None] * b_tmuN - self.W_muN[:, None] * b_muN
            rzN = rzN - blocks.Jf.T @ d_muN
        r_sN = rzN[nx:]
        r_xN = rzN[:nx] - self.phiN_xs @ _chol_solve(self.cholN_ss, r_sN)

        # backward vector recursion
        p = np.empty((N + 1, nx, m))
        p[N] = -r_xN
        kvec = np.empty((N, nu + ns, m))
        for k in range(N - 1, -1, -1):
            tmp = self.P[k + 1] @ c[k] + p[k + 1]
            kvec[k] = _chol_solve(self.chol_R[k], rw[k] - self.Bw[k].T @ tmp)
            p[k] = self.M[k] @ kvec[k] + blocks.A[k].T @ tmp - q[k]

        # forward rollout
        dx = np.empty((N + 1, nx, m))
        dchi = np.empty((N + 1, nx, m))
        dw = np.empty((N, nu + ns, m))
        dx[0] = b_pin
        for k in range(N):
            if k == 0 and self.mode == Q_MODE:
                du0 = B[layout.zeta]
                rhs_s = rw[0][nu:] - self.phi_wx(0)[nu:] @ dx[0] - self.phi_ww[0][nu:, :nu] @ du0
                ds0 = _chol_solve(self.chol_ss0, rhs_s)
                dw[0] = np.concatenate([du0, ds0], axis=0)
            else:
                dw[k] = -self.K[k] @ dx[k] + kvec[k]
            dx[k + 1] = blocks.A[k] @ dx[k] + self.Bw[k] @ dw[k] + c[k]
            dchi[k + 1] = self.P[k + 1] @ dx[k + 1] + p[k + 1]
        ds_N = _chol_solve(self.cholN_ss, r_sN - self.phiN_xs.T @ dx[N])
        dchi[0] = q[0] - self.phi_xx[0] @ dx[0] - self.phi_xw[0] @ dw[0] - blocks.A[0].T @ dchi[1]

        # expand eliminated inequality blocks
        out = np.empty_like(B)
        svo = out[: layout.term_start].reshape(N, layout.stage_len, m)
        dz = np.concatenate([dx[:-1], dw], axis=1)
        svo[:, layout.cx] = dx[:-1]
        svo[:, layout.cu] = dw[:, :nu]
        svo[:, layout.cs] = dw[:, nu:]
        svo[:, layout.cchi] = dchi[:-1]
        if d.ng:
            Gdu = np.einsum("kgu,kum->kgm", blocks.G, dw[:, :nu])
            svo[:, layout.cnu] = self.W_nu[:, :, None] * Gdu + d_nu
            svo[:, layout.ctnu] = b_nu - Gdu
        if d.nh:
            Jdz = np.einsum("kiz,kzm->kim", blocks.J, dz)
            svo[:, layout.cmu] = self.W_mu[:, :, None] * Jdz + d_mu
            svo[:, layout.ctmu] = b_mu - Jdz
        out[layout.x_term] = dx[N]
        out[layout.sigma_term] = ds_N
        out[layout.chi_term] = dchi[N]
        if d.nh_term:
            JdzN = blocks.Jf @ np.concatenate([dx[N], ds_N], axis=0)
            out[layout.mu_term] = self.W_muN[:, None] * JdzN + d_muN
            out[layout.t_mu_term] = b_muN - JdzN
        if self.mode == Q_MODE:
            dzeta = (
                rw[0][:nu]
                - self.phi_wx(0)[:nu] @ dx[0]
                - self.phi_ww[0][:nu] @ dw[0]
                - blocks.B[0].T @ dchi[1]
            )
            out[layout.zeta] = dzeta
        return out[:, 0] if single else out


def riccati_factorize(
    blocks: KktBlocks,
    point: PrimalDualPoint,
    layout: PackLayout,
    reg_eps: float = 0.0,
    allow_regularization: bool = True,
) -> RiccatiFactorization:
    return RiccatiFactorization(blocks, point, layout, reg_eps, allow_regularization)


def riccati_backsolve(fact: RiccatiFactorization, rhs: np.ndarray) -> np.ndarray:
    return fact.backsolve(rhs)
