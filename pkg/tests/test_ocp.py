import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffmpc import Dims, PackLayout, PrimalDualPoint, lti_ocp, validate
from diffmpc.errors import DimensionError
from diffmpc.ocp import Q_MODE, V_MODE, pack, unpack
from diffmpc.problems import LTI_THETA_SLICES, lti_initial_theta


def _random_point(dims, mode, rng):
    pt = PrimalDualPoint.zeros(dims, mode)
    for name in ("x", "u", "sigma", "sigma_term", "chi", "nu", "mu", "mu_term", "t_nu", "t_mu", "t_mu_term"):
        arr = getattr(pt, name)
        arr[...] = rng.standard_normal(arr.shape)
    if mode == Q_MODE:
        pt.zeta = rng.standard_normal(dims.nu)
    return pt


def test_dims_validation():
    with pytest.raises(DimensionError):
        Dims(nx=2, nu=1, n_theta=0, N=0)
    with pytest.raises(DimensionError):
        Dims(nx=-1, nu=1, n_theta=0, N=1)


def test_pack_unpack_roundtrip_fieldwise(rng):
    dims = Dims(nx=3, nu=2, n_theta=5, N=4, ng=2, nh=4, nh_term=3, ns=2, ns_term=1)
    for mode in (V_MODE, Q_MODE):
        pt = _random_point(dims, mode, rng)
        back = unpack(pack(pt, dims), dims, mode)
        for name in ("x", "u", "sigma", "sigma_term", "chi", "nu", "mu", "mu_term", "t_nu", "t_mu", "t_mu_term"):
            assert np.array_equal(getattr(pt, name), getattr(back, name)), name
        if mode == Q_MODE:
            assert np.array_equal(pt.zeta, back.zeta)


def test_zero_point_packs_to_zero_vector():
    dims = Dims(nx=2, nu=1, n_theta=3, N=3, ng=2, nh=6, nh_term=6, ns=2, ns_term=2)
    vec = pack(PrimalDualPoint.zeros(dims, V_MODE), dims)
    assert not vec.any()


def test_mode_lengths_differ_by_nu():
    # independent count of the packed fields from the dimensions
    dims = Dims(nx=3, nu=2, n_theta=1, N=5, ng=2, nh=4, nh_term=3, ns=2, ns_term=1)
    per_stage = dims.nx + dims.nu + dims.ns + dims.nx + dims.ng + dims.nh + dims.ng + dims.nh
    terminal = dims.nx + dims.ns_term + dims.nx + 2 * dims.nh_term
    expected_v = dims.N * per_stage + terminal
    lv = PackLayout(dims, V_MODE)
    lq = PackLayout(dims, Q_MODE)
    assert lv.size == expected_v
    assert lq.size == expected_v + dims.nu


def test_u0_indices_closed_form():
    dims = Dims(nx=3, nu=2, n_theta=1, N=5, ng=2, nh=4, nh_term=3, ns=2, ns_term=1)
    layout = PackLayout(dims, V_MODE)
    assert layout.u0 == slice(dims.nx, dims.nx + dims.nu)
    # stable across layouts of identical dims
    assert PackLayout(dims, Q_MODE).u0 == layout.u0


@settings(max_examples=30, deadline=None)
@given(
    nx=st.integers(1, 4),
    nu=st.integers(1, 3),
    N=st.integers(1, 6),
    ng=st.integers(0, 3),
    nh=st.integers(0, 4),
    nh_term=st.integers(0, 3),
    ns=st.integers(0, 2),
    ns_term=st.integers(0, 2),
    mode=st.sampled_from([V_MODE, Q_MODE]),
    seed=st.integers(0, 2**16),
)
def test_roundtrip_property(nx, nu, N, ng, nh, nh_term, ns, ns_term, mode, seed):
    dims = Dims(nx=nx, nu=nu, n_theta=0, N=N, ng=ng, nh=nh, nh_term=nh_term, ns=ns, ns_term=ns_term)
    pt = _random_point(dims, mode, np.random.default_rng(seed))
    layout = PackLayout(dims, mode)
    vec = layout.pack(pt)
    assert vec.shape == (layout.size,)
    back = layout.unpack(vec)
    assert np.array_equal(layout.pack(back), vec)


def test_unpack_length_mismatch():
    dims = Dims(nx=2, nu=1, n_theta=0, N=2)
    with pytest.raises(DimensionError):
        unpack(np.zeros(5), dims, V_MODE)


def test_pack_shape_mismatch():
    dims = Dims(nx=2, nu=1, n_theta=0, N=2)
    pt = PrimalDualPoint.zeros(dims, V_MODE)
    pt.u = np.zeros((3, 1))
    with pytest.raises(DimensionError):
        pack(pt, dims)


def test_set_get_theta_roundtrip(lti_small):
    theta = np.arange(12.0)
    lti_small.set_theta(theta)
    assert np.array_equal(lti_small.get_theta(), theta)
    with pytest.raises(DimensionError):
        lti_small.set_theta(np.zeros(11))


def test_lti_theta_layout():
    theta = lti_initial_theta()
    assert theta.shape == (12,)  # 1 + 2 + 3 + 4 + 2
    assert LTI_THETA_SLICES["V_0"] == slice(0, 1)
    assert np.array_equal(theta[LTI_THETA_SLICES["A"]], np.array([1.0, 0.25, 0.0, 1.0]))
    assert np.array_equal(theta[LTI_THETA_SLICES["B"]], np.array([0.0312, 0.25]))
    assert not theta[LTI_THETA_SLICES["V_0"]].any()
    assert not theta[LTI_THETA_SLICES["b"]].any()
    assert not theta[LTI_THETA_SLICES["f"]].any()


def test_identical_theta_resolve_bitwise(lti_small):
    from diffmpc import sqp_solve

    s = np.array([0.4, 0.2])
    start = None
    p1, i1 = sqp_solve(lti_small, s, warm=start)
    lti_small.set_theta(lti_small.get_theta())
    p2, i2 = sqp_solve(lti_small, s, warm=start)
    assert np.array_equal(p1.u, p2.u)
    assert np.array_equal(p1.x, p2.x)
    assert i1.ip_iters_total == i2.ip_iters_total


def test_validate_clean_problem(lti):
    assert validate(lti).ok


def test_validate_detects_dynamics_dimension_corruption(lti_small):
    from dataclasses import replace

    bad_dyn = replace(
        lti_small.dynamics,
        value=lambda x, u, th: np.zeros(3),
    )
    corrupted = replace_ocp(lti_small, dynamics=bad_dyn)
    report = validate(corrupted)
    assert not report.ok
    assert any("dynamics.value" in e for e in report.entries)


def test_validate_detects_path_constraint_row_corruption(lti_small):
    from dataclasses import replace

    bad_pc = replace(
        lti_small.path_constraint,
        value=lambda x, u, s, th: np.zeros(7),
    )
    corrupted = replace_ocp(lti_small, path_constraint=bad_pc)
    report = validate(corrupted)
    assert not report.ok
    assert any("path_constraint.value" in e for e in report.entries)


def replace_ocp(ocp, **kwargs):
    from diffmpc.ocp import ParametricOcp

    fields = dict(
        dims=ocp.dims,
        theta=ocp.theta,
        stage_cost=ocp.stage_cost,
        terminal_cost=ocp.terminal_cost,
        dynamics=ocp.dynamics,
        slack_penalty=ocp.slack_penalty,
        terminal_slack_penalty=ocp.terminal_slack_penalty,
        input_constraint=ocp.input_constraint,
        path_constraint=ocp.path_constraint,
        terminal_constraint=ocp.terminal_constraint,
        theta_slices=ocp.theta_slices,
    )
    fields.update(kwargs)
    return ParametricOcp(**fields)
