"""Settings, diagnostics, and the solution bundle returned by solves."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..ocp import PrimalDualPoint

CONVERGED = "converged"
MAX_ITERS = "max_iters"
QP_FAILURE = "qp_failure"

HESSIAN_EXACT = "exact"
HESSIAN_GAUSS_NEWTON = "gauss_newton"
HESSIAN_REGULARIZED = "regularized"


@dataclass(frozen=True)
class SolverSettings:
    kkt_tol: float = 1e-8
    tau_min: float = 1e-8
    tau_decrease: float = 0.2
    max_ip_iters: int = 100
    max_sqp_iters: int = 50
    hessian_mode: str = HESSIAN_EXACT
    reg_eps: float = 1e-8
    fraction_to_boundary: float = 0.995

    def __post_init__(self):
        if not 0.0 < self.tau_decrease < 1.0:
            raise ValueError("tau_decrease must lie in (0, 1)")
        if self.kkt_tol <= 0.0 or self.tau_min <= 0.0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.fraction_to_boundary < 1.0:
            raise ValueError("fraction_to_boundary must lie in (0, 1)")
        if self.hessian_mode not in (HESSIAN_EXACT, HESSIAN_GAUSS_NEWTON, HESSIAN_REGULARIZED):
            raise ValueError(f"unknown hessian_mode {self.hessian_mode!r}")


@dataclass
class SolveInfo:
    status: str
    sqp_iters: int = 0
    ip_iters_total: int = 0
    final_kkt_residual: float = np.inf
    final_tau: float = np.inf
    objective_value: float = np.nan
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def __str__(self):
        out = (
            f"{self.status} (sqp={self.sqp_iters}, ip={self.ip_iters_total}, "
            f"kkt={self.final_kkt_residual:.3e}, obj={self.objective_value:.6g})"
        )
        return f"{out} {self.message}" if self.message else out


@dataclass
class Solution:
    """Converged (or best-effort) primal-dual point with its context."""

    mode: str
    s: np.ndarray
    a: Optional[np.ndarray]
    point: PrimalDualPoint
    info: SolveInfo
    theta_version: int = 0

    @property
    def u0(self) -> np.ndarray:
        return self.point.u[0].copy()

    @property
    def value(self) -> float:
        return self.info.objective_value
