"""Problem data model for parametric trajectory-optimization NLPs.

Two NLPs share the data here: the value problem (initial state pinned) and
the action-value problem (initial state and first input pinned). Both
minimize stage costs plus slack penalties subject to dynamics, hard input
constraints ``g(u) <= 0`` and slack-relaxed mixed constraints
``h(x, u, sigma) <= 0`` per stage with a terminal variant. Everything that
the learning layer may adapt lives in one flat parameter vector ``theta``
addressed through a named-slice registry.

This module also owns the packing convention used by the solver and the
sensitivity code: a flat vector with stage-major ordering (per stage:
x, u, sigma, chi, nu, mu, t_nu, t_mu; terminal block x_N, sigma_N, chi_N,
mu_N, t_mu_N last; the zeta block is appended in action-value mode). The
residual vector uses the same slot order, so the KKT Jacobian is square and
indexed by one layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError

V_MODE = "v"
Q_MODE = "q"


@dataclass(frozen=True)
class Dims:
    """Static dimensions of one problem instance.

    ``N`` counts stages 0..N; stage quantities (ng, nh, ns) apply to stages
    0..N-1 and the ``*_term`` variants to the terminal stage.
    """

    nx: int
    nu: int
    n_theta: int
    N: int
    ng: int = 0
    nh: int = 0
    nh_term: int = 0
    ns: int = 0
    ns_term: int = 0

    def __post_init__(self):
        for name in ("nx", "nu", "n_theta", "ng", "nh", "nh_term", "ns", "ns_term"):
            if getattr(self, name) < 0:
                raise DimensionError(f"{name} must be >= 0")
        if self.N < 1:
            raise DimensionError("N must be >= 1")

    @property
    def nz(self):
        """Stage primal width (x, u, sigma)."""
        return self.nx + self.nu + self.ns

    @property
    def nz_term(self):
        return self.nx + self.ns_term


# -- callback bundles --------------------------------------------------------
#
# Derivatives are supplied explicitly. Optional second-derivative slots may be
# None; exact-Hessian and sensitivity paths then raise CapabilityError and
# point at diffmpc.ad, which generates all of them from a plain function.


@dataclass(frozen=True)
class StageCost:
    """l(k, x, u, theta) with derivatives; k admits stage-varying scaling."""

    value: Callable
    grad: Callable  # (k, x, u, theta) -> (nx+nu,)
    hess: Callable  # (k, x, u, theta) -> (nx+nu, nx+nu)
    grad_theta: Optional[Callable] = None  # -> (n_theta,)
    hess_z_theta: Optional[Callable] = None  # -> (nx+nu, n_theta)


@dataclass(frozen=True)
class TerminalCost:
    value: Callable  # (x, theta) -> float
    grad: Callable  # -> (nx,)
    hess: Callable  # -> (nx, nx)
    grad_theta: Optional[Callable] = None
    hess_x_theta: Optional[Callable] = None  # -> (nx, n_theta)


@dataclass(frozen=True)
class SlackPenalty:
    """rho(k, sigma); not parameterized by theta."""

    value: Callable
    grad: Callable  # (k, sigma) -> (ns,)
    hess: Callable  # (k, sigma) -> (ns, ns)


@dataclass(frozen=True)
class TerminalSlackPenalty:
    value: Callable  # (sigma) -> float
    grad: Callable
    hess: Callable


@dataclass(frozen=True)
class Dynamics:
    """x_next = f(x, u, theta) with Jacobians and directional curvature."""

    value: Callable
    jac_x: Callable  # -> (nx, nx)
    jac_u: Callable  # -> (nx, nu)
    jac_theta: Optional[Callable] = None  # -> (nx, n_theta)
    hess_lam_zz: Optional[Callable] = None  # (x, u, theta, lam) -> (nx+nu, nx+nu)
    hess_lam_z_theta: Optional[Callable] = None  # -> (nx+nu, n_theta)


@dataclass(frozen=True)
class InputConstraint:
    """g(u) <= 0, hard and unparameterized; assumed affine (no curvature slot)."""

    value: Callable
    jac: Callable  # (u) -> (ng, nu)


@dataclass(frozen=True)
class PathConstraint:
    """h(x, u, sigma, theta) <= 0; slack coupling rows included here."""

    value: Callable
    jac_x: Callable
    jac_u: Callable
    jac_sigma: Callable
    jac_theta: Optional[Callable] = None  # -> (nh, n_theta)
    hess_lam_zz: Optional[Callable] = None  # (x, u, sigma, theta, lam) -> (nz, nz)
    hess_lam_z_theta: Optional[Callable] = None  # -> (nz, n_theta)


@dataclass(frozen=True)
class TerminalConstraint:
    value: Callable  # (x, sigma, theta) -> (nh_term,)
    jac_x: Callable
    jac_sigma: Callable
    jac_theta: Optional[Callable] = None
    hess_lam_zz: Optional[Callable] = None  # -> (nz_term, nz_term)
    hess_lam_z_theta: Optional[Callable] = None


@dataclass
class ParametricOcp:
    """One parametric OCP instance.

    Immutable after construction except through :meth:`set_theta`; callbacks
    must be deterministic and side-effect free. ``theta_slices`` names index
    ranges of ``theta`` so learning code and CSV emitters can address
    parameters symbolically.
    """

    dims: Dims
    theta: np.ndarray
    stage_cost: StageCost
    terminal_cost: TerminalCost
    dynamics: Dynamics
    slack_penalty: Optional[SlackPenalty] = None
    terminal_slack_penalty: Optional[TerminalSlackPenalty] = None
    input_constraint: Optional[InputConstraint] = None
    path_constraint: Optional[PathConstraint] = None
    terminal_constraint: Optional[TerminalConstraint] = None
    theta_slices: dict = field(default_factory=dict)
    theta_version: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).copy()
        if self.theta.shape != (self.dims.n_theta,):
            raise DimensionError(
                f"theta has length {self.theta.size}, expected {self.dims.n_theta}"
            )

    def set_theta(self, theta_new) -> "ParametricOcp":
        theta_new = np.asarray(theta_new, dtype=float)
        if theta_new.shape != (self.dims.n_theta,):
            raise DimensionError(
                f"theta has length {theta_new.size}, expected {self.dims.n_theta}"
            )
        self.theta = theta_new.copy()
        self.theta_version += 1
        return self

    def get_theta(self) -> np.ndarray:
        return self.theta.copy()

    def theta_slice(self, name: str) -> np.ndarray:
        return self.theta[self.theta_slices[name]].copy()


def set_theta(ocp: ParametricOcp, theta_new) -> ParametricOcp:
    return ocp.set_theta(theta_new)


def get_theta(ocp: ParametricOcp) -> np.ndarray:
    return ocp.get_theta()


# -- primal-dual point and packing -------------------------------------------


@dataclass
class PrimalDualPoint:
    """All unknowns of the interior-point KKT system.

    Stage arrays are stacked over k = 0..N-1; terminal quantities carry their
    own fields because their row counts may differ. ``zeta`` (multiplier of
    the first-input pin) exists only in action-value mode. At any accepted
    interior-point iterate all of ``nu``, ``mu`` and the ``t`` blocks are
    strictly positive.
    """

    x: np.ndarray  # (N+1, nx)
    u: np.ndarray  # (N, nu)
    sigma: np.ndarray  # (N, ns)
    sigma_term: np.ndarray  # (ns_term,)
    chi: np.ndarray  # (N+1, nx)
    nu: np.ndarray  # (N, ng)
    mu: np.ndarray  # (N, nh)
    mu_term: np.ndarray  # (nh_term,)
    t_nu: np.ndarray  # (N, ng)
    t_mu: np.ndarray  # (N, nh)
    t_mu_term: np.ndarray  # (nh_term,)
    zeta: Optional[np.ndarray] = None  # (nu,) in Q-mode

    @property
    def mode(self):
        return V_MODE if self.zeta is None else Q_MODE

    def copy(self) -> "PrimalDualPoint":
        return PrimalDualPoint(
            self.x.copy(),
            self.u.copy(),
            self.sigma.copy(),
            self.sigma_term.copy(),
            self.chi.copy(),
            self.nu.copy(),
            self.mu.copy(),
            self.mu_term.copy(),
            self.t_nu.copy(),
            self.t_mu.copy(),
            self.t_mu_term.copy(),
            None if self.zeta is None else self.zeta.copy(),
        )

    def as_q_mode(self) -> "PrimalDualPoint":
        """Copy extended with zeta = 0 (no-op when already in Q-mode)."""
        out = self.copy()
        if out.zeta is None:
            out.zeta = np.zeros(self.u.shape[1])
        return out

    @staticmethod
    def zeros(dims: Dims, mode: str = V_MODE) -> "PrimalDualPoint":
        N = dims.N
        return PrimalDualPoint(
            np.zeros((N + 1, dims.nx)),
            np.zeros((N, dims.nu)),
            np.zeros((N, dims.ns)),
            np.zeros(dims.ns_term),
            np.zeros((N + 1, dims.nx)),
            np.zeros((N, dims.ng)),
            np.zeros((N, dims.nh)),
            np.zeros(dims.nh_term),
            np.zeros((N, dims.ng)),
            np.zeros((N, dims.nh)),
            np.zeros(dims.nh_term),
            np.zeros(dims.nu) if mode == Q_MODE else None,
        )


class PackLayout:
    """Index map between :class:`PrimalDualPoint` and the flat packed vector.

    The ordering here is the single source of truth for residual stacking
    and KKT Jacobian rows/columns. All stage offsets are affine in the stage
    index, so e.g. the first-input block always sits at ``[nx, nx + nu)``.
    """

    def __init__(self, dims: Dims, mode: str = V_MODE):
        if mode not in (V_MODE, Q_MODE):
            raise ValueError(f"unknown mode {mode!r}")
        self.dims = dims
        self.mode = mode
        nx, nu, ns, ng, nh = dims.nx, dims.nu, dims.ns, dims.ng, dims.nh
        self.stage_len = nx + nu + ns + nx + ng + nh + ng + nh
        offs = np.cumsum([0, nx, nu, ns, nx, ng, nh, ng])
        self._off_x, self._off_u, self._off_s, self._off_chi = offs[0], offs[1], offs[2], offs[3]
        self._off_nu, self._off_mu, self._off_tnu, self._off_tmu = offs[4], offs[5], offs[6], offs[7]
        self.term_start = dims.N * self.stage_len
        t = self.term_start
        self.x_term = slice(t, t + nx)
        t += nx
        self.sigma_term = slice(t, t + dims.ns_term)
        t += dims.ns_term
        self.chi_term = slice(t, t + nx)
        t += nx
        self.mu_term = slice(t, t + dims.nh_term)
        t += dims.nh_term
        self.t_mu_term = slice(t, t + dims.nh_term)
        t += dims.nh_term
        if mode == Q_MODE:
            self.zeta = slice(t, t + nu)
            t += nu
        else:
            self.zeta = None
        self.size = t

    def _stage(self, k, off, width):
        base = k * self.stage_len + off
        return slice(base, base + width)

    def x(self, k):
        if k == self.dims.N:
            return self.x_term
        return self._stage(k, self._off_x, self.dims.nx)

    def u(self, k):
        return self._stage(k, self._off_u, self.dims.nu)

    def sigma(self, k):
        return self._stage(k, self._off_s, self.dims.ns)

    def chi(self, k):
        if k == self.dims.N:
            return self.chi_term
        return self._stage(k, self._off_chi, self.dims.nx)

    def nu(self, k):
        return self._stage(k, self._off_nu, self.dims.ng)

    def mu(self, k):
        if k == self.dims.N:
            return self.mu_term
        return self._stage(k, self._off_mu, self.dims.nh)

    def t_nu(self, k):
        return self._stage(k, self._off_tnu, self.dims.ng)

    def t_mu(self, k):
        if k == self.dims.N:
            return self.t_mu_term
        return self._stage(k, self._off_tmu, self.dims.nh)

    @property
    def u0(self):
        """Slice of the first input; the policy-gradient row selection."""
        return self.u(0)

    def stage_view(self, vec):
        """View of the stage-uniform part as (N, stage_len)."""
        return vec[: self.term_start].reshape(self.dims.N, self.stage_len)

    def stage_cols(self, off, width):
        return slice(off, off + width)

    # column offsets within a stage row of stage_view
    @property
    def cx(self):
        return slice(self._off_x, self._off_x + self.dims.nx)

    @property
    def cu(self):
        return slice(self._off_u, self._off_u + self.dims.nu)

    @property
    def cs(self):
        return slice(self._off_s, self._off_s + self.dims.ns)

    @property
    def cchi(self):
        return slice(self._off_chi, self._off_chi + self.dims.nx)

    @property
    def cnu(self):
        return slice(self._off_nu, self._off_nu + self.dims.ng)

    @property
    def cmu(self):
        return slice(self._off_mu, self._off_mu + self.dims.nh)

    @property
    def ctnu(self):
        return slice(self._off_tnu, self._off_tnu + self.dims.ng)

    @property
    def ctmu(self):
        return slice(self._off_tmu, self._off_tmu + self.dims.nh)

    def pack(self, point: PrimalDualPoint) -> np.ndarray:
        d = self.dims
        expected_zeta = self.mode == Q_MODE
        if (point.zeta is not None) != expected_zeta:
            raise DimensionError("point mode does not match layout mode")
        checks = [
            (point.x, (d.N + 1, d.nx)),
            (point.u, (d.N, d.nu)),
            (point.sigma, (d.N, d.ns)),
            (point.sigma_term, (d.ns_term,)),
            (point.chi, (d.N + 1, d.nx)),
            (point.nu, (d.N, d.ng)),
            (point.mu, (d.N, d.nh)),
            (point.mu_term, (d.nh_term,)),
            (point.t_nu, (d.N, d.ng)),
            (point.t_mu, (d.N, d.nh)),
            (point.t_mu_term, (d.nh_term,)),
        ]
        for arr, shape in checks:
            if np.shape(arr) != shape:
                raise DimensionError(f"field with shape {np.shape(arr)}, expected {shape}")
        vec = np.empty(self.size)
        sv = self.stage_view(vec)
        sv[:, self.cx] = point.x[:-1]
        sv[:, self.cu] = point.u
        sv[:, self.cs] = point.sigma
        sv[:, self.cchi] = point.chi[:-1]
        sv[:, self.cnu] = point.nu
        sv[:, self.cmu] = point.mu
        sv[:, self.ctnu] = point.t_nu
        sv[:, self.ctmu] = point.t_mu
        vec[self.x_term] = point.x[-1]
        vec[self.sigma_term] = point.sigma_term
        vec[self.chi_term] = point.chi[-1]
        vec[self.mu_term] = point.mu_term
        vec[self.t_mu_term] = point.t_mu_term
        if self.mode == Q_MODE:
            vec[self.zeta] = point.zeta
        return vec

    def unpack(self, vec: np.ndarray) -> PrimalDualPoint:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise DimensionError(f"vector has length {vec.size}, expected {self.size}")
        d = self.dims
        sv = self.stage_view(vec)
        x = np.vstack([sv[:, self.cx], vec[self.x_term]])
        chi = np.vstack([sv[:, self.cchi], vec[self.chi_term]])
        return PrimalDualPoint(
            x,
            sv[:, self.cu].copy(),
            sv[:, self.cs].copy(),
            vec[self.sigma_term].copy(),
            chi,
            sv[:, self.cnu].copy(),
            sv[:, self.cmu].copy(),
            vec[self.mu_term].copy(),
            sv[:, self.ctnu].copy(),
            sv[:, self.ctmu].copy(),
            vec[self.t_mu_term].copy(),
            vec[self.zeta].copy() if self.mode == Q_MODE else None,
        )


def pack(point: PrimalDualPoint, dims: Dims) -> np.ndarray:
    return PackLayout(dims, point.mode).pack(point)


def unpack(vec: np.ndarray, dims: Dims, mode: str) -> PrimalDualPoint:
    return PackLayout(dims, mode).unpack(vec)


# -- validation ---------------------------------------------------------------


@dataclass
class ValidationReport:
    entries: list

    @property
    def ok(self) -> bool:
        return not self.entries

    def __str__(self):
        return "ok" if self.ok else "\n".join(self.entries)


def validate(ocp: ParametricOcp, seed: int = 0) -> ValidationReport:
    """Probe every callback at a fixed pseudo-random point and compare output
    shapes against the declared dimensions. An empty report means valid."""
    d = ocp.dims
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(d.nx)
    u = rng.standard_normal(d.nu)
    sig = rng.uniform(0.1, 1.0, d.ns)
    sig_term = rng.uniform(0.1, 1.0, d.ns_term)
    th = ocp.theta
    entries = []

    def check(label, fn, expected):
        if fn is None:
            return
        try:
            out = np.atleast_1d(np.asarray(fn(), dtype=float))
        except Exception as exc:  # a crashing callback is itself a finding
            entries.append(f"{label}: raised {type(exc).__name__}: {exc}")
            return
        if out.shape != expected:
            entries.append(f"{label}: shape {out.shape}, expected {expected}")

    nz0 = d.nx + d.nu
    check("stage_cost.value", lambda: [ocp.stage_cost.value(0, x, u, th)], (1,))
    check("stage_cost.grad", lambda: ocp.stage_cost.grad(0, x, u, th), (nz0,))
    check("stage_cost.hess", lambda: ocp.stage_cost.hess(0, x, u, th), (nz0, nz0))
    check("terminal_cost.value", lambda: [ocp.terminal_cost.value(x, th)], (1,))
    check("terminal_cost.grad", lambda: ocp.terminal_cost.grad(x, th), (d.nx,))
    check("terminal_cost.hess", lambda: ocp.terminal_cost.hess(x, th), (d.nx, d.nx))
    check("dynamics.value", lambda: ocp.dynamics.value(x, u, th), (d.nx,))
    check("dynamics.jac_x", lambda: ocp.dynamics.jac_x(x, u, th), (d.nx, d.nx))
    check("dynamics.jac_u", lambda: ocp.dynamics.jac_u(x, u, th), (d.nx, d.nu))
    if ocp.slack_penalty is not None:
        check("slack_penalty.grad", lambda: ocp.slack_penalty.grad(0, sig), (d.ns,))
        check("slack_penalty.hess", lambda: ocp.slack_penalty.hess(0, sig), (d.ns, d.ns))
    if ocp.terminal_slack_penalty is not None:
        check("terminal_slack_penalty.grad", lambda: ocp.terminal_slack_penalty.grad(sig_term), (d.ns_term,))
    if d.ng and ocp.input_constraint is not None:
        check("input_constraint.value", lambda: ocp.input_constraint.value(u), (d.ng,))
        check("input_constraint.jac", lambda: ocp.input_constraint.jac(u), (d.ng, d.nu))
    if d.nh and ocp.path_constraint is not None:
        pc = ocp.path_constraint
        check("path_constraint.value", lambda: pc.value(x, u, sig, th), (d.nh,))
        check("path_constraint.jac_x", lambda: pc.jac_x(x, u, sig, th), (d.nh, d.nx))
        check("path_constraint.jac_u", lambda: pc.jac_u(x, u, sig, th), (d.nh, d.nu))
        check("path_constraint.jac_sigma", lambda: pc.jac_sigma(x, u, sig, th), (d.nh, d.ns))
    if d.nh_term and ocp.terminal_constraint is not None:
        tc = ocp.terminal_constraint
        check("terminal_constraint.value", lambda: tc.value(x, sig_term, th), (d.nh_term,))
        check("terminal_constraint.jac_x", lambda: tc.jac_x(x, sig_term, th), (d.nh_term, d.nx))
        check("terminal_constraint.jac_sigma", lambda: tc.jac_sigma(x, sig_term, th), (d.nh_term, d.ns_term))
    if d.ng and ocp.input_constraint is None:
        entries.append("input_constraint: ng > 0 but no callback supplied")
    if d.nh and ocp.path_constraint is None:
        entries.append("path_constraint: nh > 0 but no callback supplied")
    if d.nh_term and ocp.terminal_constraint is None:
        entries.append("terminal_constraint: nh_term > 0 but no callback supplied")
    return ValidationReport(entries)
