"""Scheme, vector fields, and residual processes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughheat.driver import enhance_geometric, make_deterministic, sample_fbm
from roughheat.operator_path import ConvRoughPath, build_Xxx
from roughheat.scheme import (
    REGISTRY,
    DivergenceError,
    Problem,
    ScalarComponent,
    Trajectory,
    VectorField,
    compensated_J,
    delta_hat,
    delta_hat_J,
    F_pair,
    make_vector_field,
    nemytskii,
    residual_J,
    residual_K,
    solve,
    step,
)
from roughheat.spectral import Field, SpectralBasis, make_basis, semigroup_apply, to_spectral

# sample grid dodges the exact saturation joins of linear_patch,
# where one-sided fourth derivatives differ and central differences degrade
SAMPLE_VS = np.linspace(-2.97, 3.03, 51)


# ---------------------------------------------------------------------------
# vector field registry

@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_declared_bounds_hold_on_grid(name):
    comp = REGISTRY[name]()
    for r in range(4):
        vals = comp.derivative(r)(SAMPLE_VS)
        assert np.abs(vals).max() <= comp.bounds[r] + 1e-12


@pytest.mark.parametrize("name", sorted(set(REGISTRY) - {"zero"}))
def test_derivatives_match_finite_differences(name):
    comp = REGISTRY[name]()
    h = 1e-4
    for r in range(1, 4):
        lo = comp.derivative(r - 1)(SAMPLE_VS - h)
        hi = comp.derivative(r - 1)(SAMPLE_VS + h)
        fd = (hi - lo) / (2 * h)
        closed = comp.derivative(r)(SAMPLE_VS)
        assert np.abs(fd - closed).max() <= 1e-6 * (1 + np.abs(closed).max())


def test_linear_patch_shape():
    comp = REGISTRY["linear_patch"]()
    inner = np.linspace(-1, 1, 21)
    np.testing.assert_array_equal(comp.value(inner), inner)
    np.testing.assert_array_equal(comp.d1(inner), np.ones(21))
    outer = np.array([-5.0, -2.0, 2.0, 3.0])
    np.testing.assert_allclose(comp.value(outer), [-1.5, -1.5, 1.5, 1.5], rtol=1e-15)
    assert comp.d1(np.array([4.0]))[0] == 0.0
    # odd symmetry
    vs = np.linspace(0.1, 2.5, 17)
    np.testing.assert_allclose(comp.value(-vs), -comp.value(vs), rtol=1e-15)


def test_registry_construction():
    vf = make_vector_field(["tanh", {"name": "sin", "beta": 0.2}])
    assert vf.m == 2
    assert vf.components[1].bounds[1] == 0.2
    with pytest.raises(ValueError):
        make_vector_field(["nope"])
    with pytest.raises(ValueError):
        make_vector_field([])
    with pytest.raises(ValueError):
        REGISTRY["tanh"]().derivative(4)


# ---------------------------------------------------------------------------
# fixtures

@pytest.fixture(scope="module")
def setup():
    b = make_basis(16, 0.5, 0.1, 32)
    e = enhance_geometric(sample_fbm(0.5, 1, 8, seed=3))
    crp = ConvRoughPath(b, e, q_off=2)
    psi = Field(b, coeff=np.exp(-np.arange(1, 17).astype(float)))
    return b, e, crp, psi


@pytest.fixture(scope="module")
def sin_problem(setup):
    b, e, crp, psi = setup
    prob = Problem(b, e, crp, make_vector_field([{"name": "sin", "beta": 1.0}]), psi)
    return prob, solve(prob, 5)


@pytest.fixture(scope="module")
def ode_problem():
    # single flat mode, unit-slope ramp driver: the scheme becomes the
    # second-order Taylor recursion for dy = f(y) dt
    b0 = SpectralBasis(1, 1.0, 0.0, 4, np.array([0.0]))
    lin = enhance_geometric(make_deterministic("linear", {"slope": 1.0}, 1, 12))
    crp0 = ConvRoughPath(b0, lin, q_off=0)
    psi0 = Field(b0, coeff=np.array([0.2]))
    return Problem(b0, lin, crp0, make_vector_field(["linear_patch"]), psi0)


# ---------------------------------------------------------------------------
# nonlinearity evaluation

def test_nemytskii_trivial(setup):
    b, _, _, _ = setup
    zero = Field(b, coeff=np.zeros(16))
    assert nemytskii(REGISTRY["tanh"](), zero).l2_norm() == 0.0
    # composition happens on the grid, so the result is the K-mode
    # projection of the constant sin(0.7)
    const = Field(b, grid=np.full(32, 0.7))
    out = nemytskii(REGISTRY["sin"](), const)
    ref = to_spectral(b, np.full(32, np.sin(0.7)))
    np.testing.assert_allclose(out.coeff, ref.coeff, atol=1e-14)


def test_nemytskii_taylor_small_field(setup):
    b, _, _, _ = setup
    eps = 1e-3
    phi = Field(b, coeff=np.r_[eps, np.zeros(15)])
    out = nemytskii(REGISTRY["sin"](), phi)
    # sin(eps e_1) = eps e_1 + O(eps^3)
    assert abs(out.coeff[0] - eps) < eps**3
    assert np.abs(out.coeff[1:]).max() < eps**3


def test_F_pair_values(setup):
    b, _, _, _ = setup
    vf = make_vector_field(["sin", "zero"])
    phi = Field(b, grid=np.full(32, 0.4))
    assert F_pair(vf, 0, 1, phi).l2_norm() == 0.0
    out = F_pair(vf, 0, 0, phi)
    ref = to_spectral(b, np.full(32, np.cos(0.4) * np.sin(0.4)))
    np.testing.assert_allclose(out.coeff, ref.coeff, atol=1e-14)


# ---------------------------------------------------------------------------
# problem validation

def test_problem_validation(setup):
    b, e, crp, psi = setup
    vf = make_vector_field(["sin"])
    with pytest.raises(ValueError):
        Problem(b, e, crp, vf, psi, gamma=0.6)
    with pytest.raises(ValueError):
        Problem(b, e, crp, vf, psi, gamma_prime=0.5)  # <= 1 - gamma
    with pytest.raises(ValueError):
        Problem(b, e, crp, vf, psi, gamma_prime=0.96)
    with pytest.raises(ValueError):
        Problem(b, e, crp, make_vector_field(["sin", "sin"]), psi)  # m mismatch
    other = make_basis(16, 0.5, 0.1, 32)
    with pytest.raises(ValueError):
        Problem(other, e, crp, vf, Field(other, coeff=psi.coeff))
    slow = Field(b, coeff=1.0 / np.arange(1, 17))
    with pytest.raises(ValueError):
        Problem(b, e, crp, vf, slow)


def test_trajectory_container(setup):
    b, _, _, _ = setup
    coeffs = np.zeros((5, 16))
    tr = Trajectory(b, 2, coeffs)
    assert tr.grid_index(0.75) == 3
    with pytest.raises(ValueError):
        tr.grid_index(0.3)
    with pytest.raises(ValueError):
        Trajectory(b, 3, coeffs)
    with pytest.raises(ValueError):
        tr.at(1.5)


# ---------------------------------------------------------------------------
# solving

def test_zero_field_is_semigroup_flow(setup):
    b, e, crp, psi = setup
    prob = Problem(b, e, crp, make_vector_field(["zero"]), psi)
    tr = solve(prob, 4)
    assert np.array_equal(tr.coeffs[0], psi.coeff)
    for k in (1, 7, 16):
        exact = semigroup_apply(b, tr.times[k], psi).coeff
        assert np.abs(tr.coeffs[k] - exact).max() < 1e-15


def test_constant_driver_is_semigroup_flow(setup):
    b, _, _, psi = setup
    e0 = enhance_geometric(make_deterministic("linear", {"slope": 0.0}, 1, 8))
    crp0 = ConvRoughPath(b, e0, q_off=2)
    prob = Problem(b, e0, crp0, make_vector_field(["sin"]), psi)
    tr = solve(prob, 3)
    # composed one-step exponentials differ from the single-shot one
    # only in the last ulps
    exact = semigroup_apply(b, 1.0, psi).coeff
    np.testing.assert_allclose(tr.coeffs[-1], exact, rtol=1e-13)


def test_scalar_ode_flow(ode_problem):
    errs = []
    for n in (4, 6, 8):
        tr = solve(ode_problem, n)
        errs.append(abs(tr.coeffs[-1, 0] - 0.2 * np.e))
    # second-order scheme: two levels shrink the error by about 16
    assert errs[0] / errs[1] > 10
    assert errs[1] / errs[2] > 10
    assert errs[-1] < 2e-6


def test_milstein_degeneration(ode_problem):
    tr = solve(ode_problem, 3)
    dt = 2.0**-3
    manual = 0.2 * (1 + dt + dt * dt / 2)
    assert tr.coeffs[1, 0] == manual


def test_step_matches_solve(sin_problem):
    prob, tr = sin_problem
    out = step(prob, tr.field(7), 7, 5)
    assert np.array_equal(out.coeff, tr.coeffs[8])


def test_solve_level_range(ode_problem):
    with pytest.raises(ValueError):
        solve(ode_problem, 13)
    with pytest.raises(ValueError):
        solve(ode_problem, -1)


def test_build_times_recorded(sin_problem):
    _, tr = sin_problem
    assert tr.build_seconds.shape == (32,)
    assert np.all(tr.build_seconds >= 0)


@pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
def test_divergence_reported_with_step_index():
    cubic = ScalarComponent("cubic", (np.inf,) * 4, (
        lambda v: v**3,
        lambda v: 3 * v**2,
        lambda v: 6 * v,
        lambda v: 6 * np.ones_like(v),
    ))
    b0 = SpectralBasis(1, 1.0, 0.0, 4, np.array([0.0]))
    lin = enhance_geometric(make_deterministic("linear", {"slope": 1.0}, 1, 10))
    crp0 = ConvRoughPath(b0, lin, q_off=0)
    prob = Problem(b0, lin, crp0, VectorField([cubic]), Field(b0, coeff=np.array([3.0])))
    with pytest.raises(DivergenceError) as exc:
        solve(prob, 6)
    assert 0 <= exc.value.step < 64
    assert str(exc.value.step) in str(exc.value)


# ---------------------------------------------------------------------------
# increments and residuals

def test_delta_hat_basics(sin_problem):
    prob, tr = sin_problem
    y = tr.field(4)
    moved = semigroup_apply(prob.basis, 0.25, y)
    assert delta_hat(prob, y, moved, 0.5, 0.75).l2_norm() < 1e-16
    assert delta_hat(prob, y, y, 0.5, 0.5).l2_norm() == 0.0
    with pytest.raises(ValueError):
        delta_hat(prob, y, y, 0.75, 0.5)


def test_delta_hat_telescoping(sin_problem):
    prob, tr = sin_problem
    b = prob.basis
    dh = delta_hat(prob, tr.field(8), tr.field(24), 0.25, 0.75)
    acc = np.zeros(b.K)
    dt = 2.0**-5
    for k in range(8, 24):
        piece = delta_hat(prob, tr.field(k), tr.field(k + 1), k * dt, (k + 1) * dt)
        acc += semigroup_apply(b, 0.75 - (k + 1) * dt, piece).coeff
    assert np.abs(dh.coeff - acc).max() < 1e-12


@given(st.lists(st.integers(0, 32), min_size=3, max_size=3))
@settings(deadline=None, max_examples=30)
def test_delta_hat_cochain_vanishes(sin_problem, idx):
    prob, tr = sin_problem
    ks, ku, kt = sorted(idx)
    dt = 2.0**-5
    s, u, t = ks * dt, ku * dt, kt * dt
    d_ts = delta_hat(prob, tr.field(ks), tr.field(kt), s, t)
    d_tu = delta_hat(prob, tr.field(ku), tr.field(kt), u, t)
    d_us = delta_hat(prob, tr.field(ks), tr.field(ku), s, u)
    resid = d_ts - d_tu - semigroup_apply(prob.basis, t - u, d_us)
    assert resid.l2_norm() <= 1e-12 * (1 + tr.field(kt).l2_norm())


def test_consecutive_pair_residual_vanishes(sin_problem):
    prob, tr = sin_problem
    dt = 2.0**-5
    for k in range(32):
        r = residual_J(prob, tr, k * dt, (k + 1) * dt)
        assert r.l2_norm() <= 1e-12 * (1 + tr.field(k + 1).l2_norm())


def test_zero_field_residuals_vanish(setup):
    b, e, crp, psi = setup
    prob = Problem(b, e, crp, make_vector_field(["zero"]), psi)
    tr = solve(prob, 4)
    assert residual_J(prob, tr, 0.25, 1.0).l2_norm() < 1e-15
    assert residual_K(prob, tr, 0.25, 1.0).l2_norm() < 1e-15


def test_K_minus_J_identity(sin_problem):
    prob, tr = sin_problem
    b = prob.basis
    s, t = 0.25, 0.75
    rj = residual_J(prob, tr, s, t)
    rk = residual_K(prob, tr, s, t)
    g = tr.field(tr.grid_index(s)).grid
    comp = prob.f.components[0]
    F = to_spectral(b, comp.d1(g) * comp.value(g)).coeff
    manual = build_Xxx(prob.conv, 0, 0, s, t).multipliers * F
    assert np.abs((rk.coeff - rj.coeff) - manual).max() < 1e-15


def test_residual_rejects_off_grid(sin_problem):
    prob, tr = sin_problem
    with pytest.raises(ValueError):
        residual_J(prob, tr, 0.1, 0.75)
    with pytest.raises(ValueError):
        residual_J(prob, tr, 0.75, 0.25)


def test_two_step_residual_scaling(setup):
    # |J| over spans of two steps should shrink like dt^(min(3g, g+g'')) > dt
    b, e, crp, psi = setup
    prob = Problem(b, e, crp, make_vector_field([{"name": "sin", "beta": 1.0}]), psi)
    levels = (6, 7, 8)
    norms = []
    for n in levels:
        tr = solve(prob, n)
        dt = 2.0**-n
        norms.append(max(residual_J(prob, tr, k * dt, (k + 2) * dt).l2_norm()
                         for k in range(0, (1 << n) - 1, 2)))
    slope = np.polyfit([-n for n in levels], np.log2(norms), 1)[0]
    assert slope > 1.0


# ---------------------------------------------------------------------------
# compensated residuals

def test_compensated_full_grid_equals_J(sin_problem):
    prob, tr = sin_problem
    s, t = 0.25, 0.75
    cj = compensated_J(prob, tr, tr.times, s, t)
    rj = residual_J(prob, tr, s, t)
    assert np.abs(cj.coeff - rj.coeff).max() < 1e-14


def test_compensated_no_inner_points(sin_problem):
    prob, tr = sin_problem
    out = compensated_J(prob, tr, [0.0, 1.0], 0.25, 0.75)
    assert out.l2_norm() == 0.0


def test_compensated_single_point_is_second_increment(sin_problem):
    prob, tr = sin_problem
    out = compensated_J(prob, tr, [0.5], 0.25, 0.75)
    ref = delta_hat_J(prob, tr, 0.25, 0.5, 0.75)
    assert np.array_equal(out.coeff, ref.coeff)


def test_point_removal_changes_value_by_weighted_increment(sin_problem):
    prob, tr = sin_problem
    b = prob.basis
    s, t = 0.25, 0.75
    pts = [0.25, 0.375, 0.5, 0.625, 0.75]
    c_all = compensated_J(prob, tr, pts, s, t)
    # removing the middle inner point
    c_mid = compensated_J(prob, tr, [0.25, 0.375, 0.625, 0.75], s, t)
    pred = semigroup_apply(b, t - 0.625, delta_hat_J(prob, tr, 0.375, 0.5, 0.625))
    assert np.abs((c_all.coeff - c_mid.coeff) - pred.coeff).max() < 1e-12
    # removing the last inner point drops the semigroup weight
    c_last = compensated_J(prob, tr, [0.25, 0.375, 0.5, 0.75], s, t)
    pred2 = delta_hat_J(prob, tr, 0.5, 0.625, t)
    assert np.abs((c_all.coeff - c_last.coeff) - pred2.coeff).max() < 1e-12


def test_compensated_rejects_non_nested(sin_problem):
    prob, tr = sin_problem
    with pytest.raises(ValueError):
        compensated_J(prob, tr, [0.3], 0.25, 0.75)
