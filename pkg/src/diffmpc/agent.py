"""MPC as a deterministic function approximator.

One agent owns a pair of warm-start caches, one per problem flavor: the
value solve at a state also provides the policy (first optimal input), and
its solution seeds the pinned-input solve for the action value. Caches are
invalidated whenever the parameters change; stale points may still seed warm
starts, which only affects iteration counts, never solutions.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import PreconditionError, SolveError
from .ocp import ParametricOcp, Q_MODE, V_MODE
from .solver import Solution, SolverSettings, sqp_solve

_FEASIBILITY_TOL = 1e-9


class MpcAgent:
    def __init__(self, ocp: ParametricOcp, settings: Optional[SolverSettings] = None):
        self.ocp = ocp
        self.settings = settings or SolverSettings()
        self._cache = {V_MODE: None, Q_MODE: None}
        # last primal-dual points per mode; stale ones only seed warm starts
        self._seed = {V_MODE: None, Q_MODE: None}

    # -- parameter handling --

    def set_theta(self, theta) -> None:
        self.ocp.set_theta(theta)
        self._cache = {V_MODE: None, Q_MODE: None}

    def get_theta(self) -> np.ndarray:
        return self.ocp.get_theta()

    # -- solves --

    def value(self, s) -> tuple[float, Solution]:
        """Objective of the value problem at ``s``; caches the solution."""
        s = np.asarray(s, dtype=float)
        warm = self._warm_point(V_MODE)
        point, info = sqp_solve(self.ocp, s, warm=warm, settings=self.settings)
        if not info.converged:
            raise SolveError(f"value solve failed at s={s}", info)
        sol = Solution(V_MODE, s, None, point, info, self.ocp.theta_version)
        self._cache[V_MODE] = sol
        self._seed[V_MODE] = point
        return info.objective_value, sol

    def action_value(self, s, a) -> tuple[float, Solution]:
        """Objective of the pinned-input problem at ``(s, a)``."""
        s = np.asarray(s, dtype=float)
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if self.ocp.input_constraint is not None and self.ocp.dims.ng:
            g = np.asarray(self.ocp.input_constraint.value(a))
            if np.any(g > _FEASIBILITY_TOL):
                raise PreconditionError(f"action {a} violates the hard input constraints: max g = {g.max():.3e}")
        warm = None
        seed_v = self._cache[V_MODE]
        if seed_v is not None and np.array_equal(seed_v.s, s):
            warm = seed_v.point.as_q_mode()  # fresh value solve at this state
        if warm is None:
            warm = self._warm_point(Q_MODE)
        point, info = sqp_solve(self.ocp, s, a=a, warm=warm, settings=self.settings)
        if not info.converged:
            raise SolveError(f"action-value solve failed at s={s}, a={a}", info)
        sol = Solution(Q_MODE, s, a, point, info, self.ocp.theta_version)
        self._cache[Q_MODE] = sol
        self._seed[Q_MODE] = point
        return info.objective_value, sol

    def act(self, s) -> tuple[np.ndarray, Solution]:
        """Policy evaluation: first input of the value solution."""
        _, sol = self.value(s)
        return sol.u0, sol

    def _warm_point(self, mode):
        return self._seed[mode]
