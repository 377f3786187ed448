"""Differentiable model predictive control.

Solves parametric optimal-control NLPs for value, action-value, and policy;
computes exact parameter sensitivities of the solutions by differentiating
the interior-point KKT system; and trains the parameters with temporal-
difference learning against simulated plants.
"""

from .agent import MpcAgent
from .envs import ChainMassEnv, ChainMassModel, LtiEnv, chain_mass_rhs, chain_rest_state, rk4_step
from .ocp import (
    Dims,
    Dynamics,
    InputConstraint,
    PackLayout,
    ParametricOcp,
    PathConstraint,
    PrimalDualPoint,
    Q_MODE,
    SlackPenalty,
    StageCost,
    TerminalConstraint,
    TerminalCost,
    TerminalSlackPenalty,
    V_MODE,
    get_theta,
    pack,
    set_theta,
    unpack,
    validate,
)
from .problems import chain_mass_ocp, lti_ocp
from .rl import ReplayBuffer, TrainConfig, TrainHistory, Transition, q_update, td_error, train
from .sensitivity import (
    KktJacobians,
    SensitivityBundle,
    fd_policy_gradient,
    grad_q_theta,
    grad_v_theta,
    kkt_jacobians,
    lagrangian,
    policy_gradient,
    sensitivity_bundle,
)
from .solver import (
    Solution,
    SolveInfo,
    SolverSettings,
    exact_hessian,
    ip_solve_qp,
    kkt_residual,
    riccati_backsolve,
    riccati_factorize,
    sqp_solve,
)

__version__ = "0.1.0"

__all__ = [
    "MpcAgent",
    "ChainMassEnv",
    "ChainMassModel",
    "LtiEnv",
    "chain_mass_rhs",
    "chain_rest_state",
    "rk4_step",
    "Dims",
    "Dynamics",
    "InputConstraint",
    "PackLayout",
    "ParametricOcp",
    "PathConstraint",
    "PrimalDualPoint",
    "Q_MODE",
    "SlackPenalty",
    "StageCost",
    "TerminalConstraint",
    "TerminalCost",
    "TerminalSlackPenalty",
    "V_MODE",
    "get_theta",
    "pack",
    "set_theta",
    "unpack",
    "validate",
    "chain_mass_ocp",
    "lti_ocp",
    "ReplayBuffer",
    "TrainConfig",
    "TrainHistory",
    "Transition",
    "q_update",
    "td_error",
    "train",
    "KktJacobians",
    "SensitivityBundle",
    "fd_policy_gradient",
    "grad_q_theta",
    "grad_v_theta",
    "kkt_jacobians",
    "lagrangian",
    "policy_gradient",
    "sensitivity_bundle",
    "Solution",
    "SolveInfo",
    "SolverSettings",
    "exact_hessian",
    "ip_solve_qp",
    "kkt_residual",
    "riccati_backsolve",
    "riccati_factorize",
    "sqp_solve",
]
