"""Structured NLP solver: SQP outer loop over interior-point QP solves."""

from .ipm import QpData, cold_start, ip_solve_qp
from .kkt import (
    KktBlocks,
    assemble_kkt_matrix,
    assemble_residual,
    evaluate_blocks,
    kkt_matvec,
    kkt_residual,
    objective_value,
)
from .riccati import RiccatiFactorization, riccati_backsolve, riccati_factorize
from .sqp import default_start, exact_hessian, gauss_newton_hessian, sqp_solve
from .types import (
    CONVERGED,
    HESSIAN_EXACT,
    HESSIAN_GAUSS_NEWTON,
    HESSIAN_REGULARIZED,
    MAX_ITERS,
    QP_FAILURE,
    Solution,
    SolveInfo,
    SolverSettings,
)

__all__ = [
    "QpData",
    "cold_start",
    "ip_solve_qp",
    "KktBlocks",
    "assemble_kkt_matrix",
    "assemble_residual",
    "evaluate_blocks",
    "kkt_matvec",
    "kkt_residual",
    "objective_value",
    "RiccatiFactorization",
    "riccati_backsolve",
    "riccati_factorize",
    "default_start",
    "exact_hessian",
    "gauss_newton_hessian",
    "sqp_solve",
    "CONVERGED",
    "HESSIAN_EXACT",
    "HESSIAN_GAUSS_NEWTON",
    "HESSIAN_REGULARIZED",
    "MAX_ITERS",
    "QP_FAILURE",
    "Solution",
    "SolveInfo",
    "SolverSettings",
]
