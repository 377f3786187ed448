"""Simulated plants with an episodic reset/step interface.

Every environment owns one seeded generator; there is no global randomness.
``step`` is functional in the state: it takes the current state explicitly
and returns ``(next_state, cost)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from . import ad
from .errors import DimensionError, PreconditionError

LTI_A_TRUE = np.array([[0.9, 0.35], [0.0, 1.1]])
LTI_B_TRUE = np.array([[0.0813], [0.2]])
LTI_STATE_LB = np.array([0.0, -1.0])
LTI_STATE_UB = np.array([1.0, 1.0])
LTI_INPUT_BOUND = 1.0
DISTURBANCE_LOW = -0.1
DISTURBANCE_HIGH = 0.0


class LtiEnv:
    """Two-state linear plant with a uniform disturbance on the first state.

    The plant matrices intentionally differ from the initial model used by
    the controller; they are fixed here and never shared with OCP builders.
    The step cost is quadratic in (state, clipped action) plus a weighted
    penalty on how far the successor state violates the box bounds.
    """

    def __init__(self, penalty_weights=(100.0, 100.0), disturbed: bool = True, seed=None):
        self.A_true = LTI_A_TRUE.copy()
        self.B_true = LTI_B_TRUE.copy()
        self.state_lb = LTI_STATE_LB.copy()
        self.state_ub = LTI_STATE_UB.copy()
        self.penalty_weights = np.asarray(penalty_weights, dtype=float)
        self.disturbed = disturbed
        self._rng = np.random.default_rng(seed)

    def reset(self, s0, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        s0 = np.asarray(s0, dtype=float)
        if s0.shape != (2,):
            raise DimensionError("LTI state must have shape (2,)")
        return s0.copy()

    def violation(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.maximum(0.0, self.state_lb - s) + np.maximum(0.0, s - self.state_ub)

    def violates(self, s) -> bool:
        return bool(np.any(self.violation(s) > 0.0))

    def step(self, s, a):
        s = np.asarray(s, dtype=float)
        a = np.clip(np.atleast_1d(np.asarray(a, dtype=float)), -LTI_INPUT_BOUND, LTI_INPUT_BOUND)
        e = self._rng.uniform(DISTURBANCE_LOW, DISTURBANCE_HIGH) if self.disturbed else 0.0
        s_next = self.A_true @ s + self.B_true @ a + np.array([e, 0.0])
        cost = 0.5 * (s @ s + a @ a) + self.penalty_weights @ self.violation(s_next)
        return s_next, float(cost)


# -- chain of masses ----------------------------------------------------------


@dataclass
class ChainMassModel:
    """Point masses on massless spring-damper links; first mass fixed at the
    origin, last mass velocity-controlled.

    State: positions of masses 1..n_mass-1 then velocities of the free
    masses 1..n_mass-2 (all 3-D). Input: velocity of the last mass.
    """

    n_mass: int = 3
    masses: np.ndarray = None  # (n_mass,), entries for free masses are used
    stiffness: np.ndarray = field(default_factory=lambda: np.array([2.5, 2.5, 3.0]))
    rest_length: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.033]))
    damping: np.ndarray = field(default_factory=lambda: np.array([0.02, 0.02, 0.03]))
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        if self.n_mass < 3:
            raise DimensionError("need at least 3 masses (fixed, free, controlled)")
        if self.masses is None:
            self.masses = np.full(self.n_mass, 0.45)
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.shape != (self.n_mass,):
            raise DimensionError("masses must have one entry per ball")
        for name in ("stiffness", "rest_length", "damping", "gravity"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (3,):
                raise DimensionError(f"{name} must have shape (3,)")
            setattr(self, name, arr)

    @property
    def n_free(self):
        return self.n_mass - 2

    @property
    def nx(self):
        return 3 * (self.n_mass - 1) + 3 * self.n_free

    @property
    def nu(self):
        return 3


def chain_mass_rhs(model: ChainMassModel, x, u):
    """Time derivative of the chain state; accepts plain or dual arrays."""
    n = model.n_mass
    npos = 3 * (n - 1)
    rest = float(np.linalg.norm(model.rest_length))
    positions = [np.zeros(3)] + [x[3 * i : 3 * i + 3] for i in range(n - 1)]
    velocities = [np.zeros(3)] + [x[npos + 3 * i : npos + 3 * i + 3] for i in range(model.n_free)] + [u]
    forces = []
    for i in range(n - 1):
        dxi = positions[i + 1] - positions[i]
        dvi = velocities[i + 1] - velocities[i]
        dist2 = ad.dot(dxi, dxi)
        d2val = dist2.val if isinstance(dist2, (ad.Dual, ad.Dual2)) else dist2
        if float(d2val) < 1e-18:  # link length below 1e-9
            raise PreconditionError(f"masses {i} and {i + 1} coincide")
        dist = ad.sqrt(dist2)
        forces.append(model.stiffness * dxi * (1.0 - rest / dist) + model.damping * dvi)
    parts = velocities[1 : n - 1] + [u]  # position rates; last mass is velocity-controlled
    for j in range(1, n - 1):
        accel = (forces[j] - forces[j - 1]) * (1.0 / model.masses[j]) + model.gravity
        parts.append(accel)
    return ad.concatenate(parts)


def rk4_step(model: ChainMassModel, x, u, dt: float):
    """One fixed-step fourth-order Runge-Kutta integration step."""
    k1 = chain_mass_rhs(model, x, u)
    k2 = chain_mass_rhs(model, x + 0.5 * dt * k1, u)
    k3 = chain_mass_rhs(model, x + 0.5 * dt * k2, u)
    k4 = chain_mass_rhs(model, x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def chain_rest_state(model: ChainMassModel, last_position=None) -> np.ndarray:
    """Hanging equilibrium with the last mass held at ``last_position``.

    Free-mass positions are found by root-finding the force balance at zero
    velocity; the returned state has zero velocities.
    """
    n = model.n_mass
    if last_position is None:
        last_position = np.array([0.066 * (n - 1), 0.0, 0.0])
    last_position = np.asarray(last_position, dtype=float)

    def residual(free_flat):
        pos = np.vstack(
            [np.zeros(3)]
            + [free_flat[3 * i : 3 * i + 3] for i in range(model.n_free)]
            + [last_position]
        )
        forces = []
        for i in range(n - 1):
            dxi = pos[i + 1] - pos[i]
            dist = np.linalg.norm(dxi)
            rest = np.linalg.norm(model.rest_length)
            forces.append(model.stiffness * dxi * (1.0 - rest / dist))
        out = []
        for j in range(1, n - 1):
            out.append((forces[j] - forces[j - 1]) / model.masses[j] + model.gravity)
        return np.concatenate(out) if out else np.zeros(0)

    init = np.concatenate(
        [last_position * (i + 1) / (n - 1) + np.array([0.0, 0.0, -0.02]) for i in range(model.n_free)]
    )
    if model.n_free:
        sol = scipy.optimize.root(residual, init, method="hybr", tol=1e-12)
        if not sol.success:
            raise RuntimeError(f"equilibrium root-finding failed: {sol.message}")
        free = sol.x
    else:
        free = np.zeros(0)
    positions = np.concatenate([free, last_position])
    return np.concatenate([positions, np.zeros(3 * model.n_free)])


class ChainMassEnv:
    """Deterministic chain-mass plant stepped with the same RK4 as the model."""

    def __init__(self, model: ChainMassModel, dt: float, x_ref=None, seed=None):
        self.model = model
        self.dt = float(dt)
        self.x_ref = np.zeros(model.nx) if x_ref is None else np.asarray(x_ref, dtype=float)
        self._rng = np.random.default_rng(seed)

    def reset(self, x0, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (self.model.nx,):
            raise DimensionError(f"state must have shape ({self.model.nx},)")
        return x0.copy()

    def step(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        x_next = rk4_step(self.model, x, u, self.dt)
        dx = x - self.x_ref
        cost = 0.5 * float(dx @ dx + u @ u)
        return x_next, cost
