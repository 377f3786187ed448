import numpy as np
import pytest

from diffmpc import (
    MpcAgent,
    PackLayout,
    SolverSettings,
    fd_policy_gradient,
    grad_q_theta,
    grad_v_theta,
    kkt_jacobians,
    kkt_residual,
    lagrangian,
    lti_ocp,
    policy_gradient,
    sqp_solve,
)
from diffmpc.errors import PreconditionError, SingularKktError
from diffmpc.ocp import PrimalDualPoint, Q_MODE, V_MODE
from diffmpc.sensitivity import policy_gradient_from_q
from diffmpc.solver import Solution, SolveInfo, objective_value

from oracles import fd_policy_jacobian, fd_value_gradient, lq_ocp

# oracle-grade settings: a deeper barrier keeps finite-difference noise from
# the smoothed-objective state well below the 1e-4 comparison tolerances
TIGHT = SolverSettings(kkt_tol=1e-12, tau_min=1e-10)


def _solve_v(ocp, s, settings=None):
    point, info = sqp_solve(ocp, s, settings=settings)
    assert info.converged
    return Solution(V_MODE, np.asarray(s, float), None, point, info, ocp.theta_version)


def _solve_q(ocp, s, a, settings=None, warm=None):
    point, info = sqp_solve(ocp, s, a=a, warm=warm, settings=settings)
    assert info.converged
    return Solution(Q_MODE, np.asarray(s, float), np.asarray(a, float), point, info, ocp.theta_version)


# -- Lagrangian ---------------------------------------------------------------


def test_lagrangian_with_zero_multipliers_equals_objective(lti_small):
    s = np.array([0.4, 0.2])
    point, info = sqp_solve(lti_small, s)
    stripped = point.copy()
    stripped.chi[...] = 0.0
    stripped.nu[...] = 0.0
    stripped.mu[...] = 0.0
    stripped.mu_term[...] = 0.0
    assert abs(lagrangian(lti_small, s, None, stripped) - objective_value(lti_small, point)) < 1e-12


def test_lagrangian_equality_terms_vanish_on_feasible_rollout(lti_small):
    th = lti_small.theta
    s = np.array([0.3, 0.1])
    point = PrimalDualPoint.zeros(lti_small.dims, V_MODE)
    point.x[0] = s
    rng = np.random.default_rng(1)
    point.u[...] = rng.uniform(-0.5, 0.5, point.u.shape)
    for k in range(lti_small.dims.N):
        point.x[k + 1] = lti_small.dynamics.value(point.x[k], point.u[k], th)
    point.chi[...] = rng.standard_normal(point.chi.shape)  # must not matter
    point.nu[...] = rng.uniform(0.1, 1.0, point.nu.shape)
    point.mu[...] = rng.uniform(0.1, 1.0, point.mu.shape)
    point.mu_term[...] = rng.uniform(0.1, 1.0, point.mu_term.shape)
    ineq = 0.0
    for k in range(lti_small.dims.N):
        ineq += point.nu[k] @ lti_small.input_constraint.value(point.u[k])
        ineq += point.mu[k] @ lti_small.path_constraint.value(
            point.x[k], point.u[k], point.sigma[k], th
        )
    ineq += point.mu_term @ lti_small.terminal_constraint.value(
        point.x[-1], point.sigma_term, th
    )
    expected = objective_value(lti_small, point) + ineq
    assert abs(lagrangian(lti_small, s, None, point) - expected) < 1e-12


def test_lagrangian_one_stage_hand_expansion():
    q, r, qn, a_d, b_d = 2.0, 0.5, 3.0, 0.9, 0.4
    ocp = lq_ocp([[a_d]], [[b_d]], [[q]], [[r]], [[qn]], N=1)
    pt = PrimalDualPoint.zeros(ocp.dims, Q_MODE)
    pt.x[0, 0], pt.u[0, 0], pt.x[1, 0] = 0.7, -0.3, 0.5
    pt.chi[0, 0], pt.chi[1, 0] = 1.1, -0.8
    pt.zeta = np.array([0.25])
    s, a = np.array([0.6]), np.array([-0.2])
    x0, u0, x1 = 0.7, -0.3, 0.5
    hand = (
        0.5 * (q * x0**2 + r * u0**2)
        + 0.5 * qn * x1**2
        + 1.1 * (x0 - 0.6)
        + (-0.8) * (a_d * x0 + b_d * u0 - x1)
        + 0.25 * (u0 - (-0.2))
    )
    assert abs(lagrangian(ocp, s, a, pt) - hand) < 1e-14


# -- value/action-value gradients ----------------------------------------------


def test_grad_v_additive_offset_slice_is_exactly_one(lti):
    sol = _solve_v(lti, np.array([0.5, 0.5]))
    g = grad_v_theta(lti, sol.s, sol)
    assert abs(g[lti.theta_slices["V_0"]][0] - 1.0) <= 1e-10


def test_grad_v_matches_central_fd(lti):
    s = np.array([0.45, 0.3])
    sol = _solve_v(lti, s, settings=TIGHT)
    g = grad_v_theta(lti, s, sol)
    g_fd = fd_value_gradient(lti, s, h=1e-6, warm=sol.point)
    b_slice = lti.theta_slices["b"]
    rel = np.abs(g - g_fd) / np.maximum(np.abs(g_fd), 1e-3)
    assert rel.max() < 1e-4
    assert np.abs(g[b_slice] - g_fd[b_slice]).max() / np.abs(g_fd[b_slice]).max() < 1e-4


def test_grad_v_zero_for_unused_parameter():
    ocp = lq_ocp(np.eye(2) * 0.8, [[0.1], [0.3]], np.eye(2), [[1.0]], np.eye(2), N=4, n_theta=1)
    sol = _solve_v(ocp, np.array([0.5, -0.2]))
    g = grad_v_theta(ocp, sol.s, sol)
    assert np.array_equal(g, np.zeros(1))


def test_grad_v_refuses_unconverged_input(lti_small):
    s = np.array([0.2, 0.2])
    point, _ = sqp_solve(lti_small, s)
    fake = Solution(V_MODE, s, None, point, SolveInfo("max_iters"), 0)
    with pytest.raises(PreconditionError):
        grad_v_theta(lti_small, s, fake)


def test_grad_q_equals_grad_v_at_optimal_action(lti):
    s = np.array([0.5, 0.5])
    sol_v = _solve_v(lti, s)
    a = sol_v.u0
    sol_q = _solve_q(lti, s, a, warm=sol_v.point.as_q_mode())
    gv = grad_v_theta(lti, s, sol_v)
    gq = grad_q_theta(lti, s, a, sol_q)
    assert np.abs(gq - gv).max() <= 1e-6


def test_grad_q_matches_fd_at_perturbed_action(lti):
    s = np.array([0.5, 0.5])
    sol_v = _solve_v(lti, s, settings=TIGHT)
    a = sol_v.u0 + 0.1
    sol_q = _solve_q(lti, s, a, settings=TIGHT)
    gq = grad_q_theta(lti, s, a, sol_q)
    gq_fd = fd_value_gradient(lti, s, h=1e-6, a=a, warm=sol_q.point)
    rel = np.abs(gq - gq_fd) / np.maximum(np.abs(gq_fd), 1e-3)
    assert rel.max() < 1e-4


def test_grad_q_additive_offset_slice_is_exactly_one(lti):
    s = np.array([0.2, 0.4])
    sol_q = _solve_q(lti, s, np.array([0.3]))
    g = grad_q_theta(lti, s, np.array([0.3]), sol_q)
    assert abs(g[lti.theta_slices["V_0"]][0] - 1.0) <= 1e-10


# -- KKT Jacobians --------------------------------------------------------------


def test_kkt_jacobians_match_fd_at_converged_point(lti):
    s = np.array([0.5, 0.5])
    sol = _solve_v(lti, s)
    jac = kkt_jacobians(lti, s, None, sol.point, tau=1e-8)
    layout = PackLayout(lti.dims, V_MODE)
    v0 = layout.pack(sol.point)

    def res(vec):
        return kkt_residual(lti, s, None, layout.unpack(vec), tau=1e-8)

    rng = np.random.default_rng(5)
    cols = rng.choice(layout.size, size=40, replace=False)
    for i in cols:
        # positive variables get steps that keep both sides interior
        h = min(1e-6, 0.4 * abs(v0[i])) if abs(v0[i]) > 1e-12 else 1e-6
        e = np.zeros(layout.size)
        e[i] = h
        try:
            col = (res(v0 + e) - res(v0 - e)) / (2 * h)
        except Exception:
            continue  # stepping a tiny slack out of the cone; skip that column
        err = np.abs(jac.d_xi_d_y[:, i] - col).max()
        assert err <= 1e-6 * (1 + np.abs(jac.d_xi_d_y[:, i]).max()), f"column {i}: {err:.2e}"


def test_theta_jacobian_zero_on_input_constraint_rows(lti):
    s = np.array([0.5, 0.5])
    sol = _solve_v(lti, s)
    jac = kkt_jacobians(lti, s, None, sol.point, tau=1e-8)
    layout = PackLayout(lti.dims, V_MODE)
    for k in range(lti.dims.N):
        assert not jac.d_xi_d_theta[layout.nu(k)].any()
        assert not jac.d_xi_d_theta[layout.t_nu(k)].any()
        assert not jac.d_xi_d_theta[layout.t_mu(k)].any()


def test_kkt_jacobian_one_stage_hand_matrix():
    q, r, qn, a_d, b_d = 2.0, 0.5, 3.0, 0.9, 0.4
    ocp = lq_ocp([[a_d]], [[b_d]], [[q]], [[r]], [[qn]], N=1)
    pt = PrimalDualPoint.zeros(ocp.dims, Q_MODE)
    pt.x[0, 0], pt.u[0, 0], pt.x[1, 0] = 0.7, -0.3, 0.5
    pt.chi[0, 0], pt.chi[1, 0] = 1.1, -0.8
    pt.zeta = np.array([0.25])
    jac = kkt_jacobians(ocp, np.array([0.7]), np.array([-0.3]), pt, tau=1e-8)
    # packed order: x0, u0, chi0, x1, chi1, zeta
    hand = np.array(
        [
            [q, 0.0, 1.0, 0.0, a_d, 0.0],
            [0.0, r, 0.0, 0.0, b_d, 1.0],
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, qn, -1.0, 0.0],
            [a_d, b_d, 0.0, -1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        ]
    )
    assert jac.d_xi_d_y.shape == (6, 6)
    assert np.abs(jac.d_xi_d_y - hand).max() < 1e-14


# -- policy gradient -------------------------------------------------------------


def test_policy_gradient_offset_column_is_zero(lti):
    sol = _solve_v(lti, np.array([0.5, 0.5]))
    gp = policy_gradient(lti, sol.s, sol)
    assert np.abs(gp[:, lti.theta_slices["V_0"]]).max() <= 1e-8


def test_policy_gradient_matches_central_fd(lti):
    s = np.array([0.5, 0.5])
    sol = _solve_v(lti, s, settings=TIGHT)
    gp = policy_gradient(lti, s, sol)
    gp_fd = fd_policy_jacobian(lti, s, h=1e-5, warm=sol.point)
    b_cols = lti.theta_slices["b"]
    assert np.abs(gp - gp_fd).max() <= 1e-4 * max(1.0, np.abs(gp_fd).max())
    assert np.abs(gp[:, b_cols] - gp_fd[:, b_cols]).max() <= 1e-4 * np.abs(gp_fd[:, b_cols]).max()


def test_structured_and_dense_methods_agree(lti):
    sol = _solve_v(lti, np.array([0.35, -0.15]))
    gs = policy_gradient(lti, sol.s, sol, method="structured")
    gd = policy_gradient(lti, sol.s, sol, method="dense")
    assert np.abs(gs - gd).max() <= 1e-8 * max(1.0, np.abs(gd).max())


def test_policy_gradient_from_q_parity(lti):
    s = np.array([0.5, 0.5])
    sol_v = _solve_v(lti, s)
    sol_q = _solve_q(lti, s, sol_v.u0, warm=sol_v.point.as_q_mode())
    gp_v = policy_gradient(lti, s, sol_v)
    gp_q = policy_gradient_from_q(lti, s, sol_q)
    assert np.abs(gp_v - gp_q).max() <= 1e-6 * max(1.0, np.abs(gp_v).max())


def test_ift_residual_check_is_small(lti):
    sol = _solve_v(lti, np.array([0.5, 0.5]))
    gp, dY, check = policy_gradient(lti, sol.s, sol, return_full=True)
    assert check <= 1e-6


def test_singular_kkt_raises_with_diagnosis():
    # no input cost and no terminal weight: the reduced Hessian is singular
    ocp = lq_ocp(np.eye(2), [[0.0], [1.0]], np.eye(2), [[0.0]], np.zeros((2, 2)), N=1)
    point = PrimalDualPoint.zeros(ocp.dims, V_MODE)
    fake = Solution(V_MODE, np.zeros(2), None, point, SolveInfo("converged"), 0)
    with pytest.raises(SingularKktError):
        policy_gradient(ocp, fake.s, fake, method="structured")


# -- finite-difference baseline ---------------------------------------------------


def test_fd_policy_gradient_agrees_with_ift(lti):
    # default barrier level: the forward-difference truncation stays within
    # the 10*step envelope there
    settings = SolverSettings(kkt_tol=1e-12)
    s = np.array([0.5, 0.5])
    sol = _solve_v(lti, s, settings=settings)
    step = 1e-5
    info_out = {}
    gp_fd = fd_policy_gradient(lti, s, step, settings=settings, base=sol, info_out=info_out)
    gp = policy_gradient(lti, s, sol)
    assert np.abs(gp - gp_fd).max() <= 10 * step


def test_fd_policy_gradient_rejects_zero_step(lti_small):
    with pytest.raises(PreconditionError):
        fd_policy_gradient(lti_small, np.array([0.1, 0.1]), 0.0)


def test_fd_policy_gradient_performs_exactly_n_theta_solves(lti):
    s = np.array([0.5, 0.5])
    sol = _solve_v(lti, s, settings=TIGHT)
    info_out = {}
    fd_policy_gradient(lti, s, 1e-5, settings=TIGHT, base=sol, info_out=info_out)
    assert info_out["extra_solves"] == lti.dims.n_theta


# -- cross-cutting invariants -------------------------------------------------------


def test_directional_derivative_consistency(lti):
    s = np.array([0.5, 0.5])
    sol = _solve_v(lti, s, settings=TIGHT)
    g = grad_v_theta(lti, s, sol)
    theta0 = lti.get_theta()
    rng = np.random.default_rng(11)
    h = 1e-5
    for _ in range(3):
        d = rng.standard_normal(12)
        d /= np.linalg.norm(d)
        vals = []
        try:
            for sign in (+1.0, -1.0):
                lti.set_theta(theta0 + sign * h * d)
                point, info = sqp_solve(lti, s, warm=sol.point, settings=TIGHT)
                assert info.converged
                vals.append(info.objective_value)
        finally:
            lti.set_theta(theta0)
        fd = (vals[0] - vals[1]) / (2 * h)
        assert abs(g @ d - fd) <= 1e-4 * max(1.0, abs(fd))


def test_argmin_invariance_of_additive_offset(lti):
    s = np.array([0.5, 0.5])
    theta0 = lti.get_theta()
    sol0 = _solve_v(lti, s)
    gp0 = policy_gradient(lti, s, sol0)
    c = 3.7
    try:
        theta = theta0.copy()
        theta[lti.theta_slices["V_0"]] += c
        lti.set_theta(theta)
        sol1 = _solve_v(lti, s)
        gp1 = policy_gradient(lti, s, sol1)
    finally:
        lti.set_theta(theta0)
    assert abs((sol1.value - sol0.value) - c) < 1e-8
    assert np.abs(sol1.u0 - sol0.u0).max() < 1e-8
    assert np.abs(gp1 - gp0).max() < 1e-6
