import numpy as np
import pytest

from ksbif.grid import Field, inner, make_grid, norm2
from ksbif.lsred import amplitude_prediction, ls_coefficients
from ksbif.newton import (
    ArclengthConstraint,
    ContinuationPoint,
    NewtonError,
    NewtonSettings,
    gmres,
    newton_solve,
    point_residual_norm,
    residual,
)
from ksbif.stepper import compute_trajectory, flow, flow_time_derivative, propagate_tangent
from ksbif.symmetry import classify_kappa, kernel_function

G32 = make_grid(32)
SETTINGS = NewtonSettings()
H = 1e-3


def zero_point(nu):
    return ContinuationPoint(
        u=Field(G32, np.zeros(G32.size)), P=1.0, nu=nu, kind="equilibrium"
    )


@pytest.fixture(scope="module")
def k_half_equilibrium():
    # flow to the stable attractor just below nu* = 4/pi^2, then polish
    e1 = kernel_function(G32, 1, "even").field
    u = flow(Field(G32, 0.1 * e1.values), 300.0, 0.40, H)
    pt, info = newton_solve(
        ContinuationPoint(u=u, P=1.0, nu=0.40, kind="equilibrium"), SETTINGS, H
    )
    return pt, info


def test_settings_validation():
    with pytest.raises(ValueError):
        NewtonSettings(residual_tol=-1.0)


def test_residual_at_zero():
    rf, psi = residual(zero_point(0.5), H, SETTINGS)
    assert norm2(rf) == 0.0
    assert psi == 0.0


def test_residual_nonzero_off_equilibrium():
    e1 = kernel_function(G32, 1, "even").field
    p = ContinuationPoint(u=Field(G32, 0.1 * e1.values), P=1.0, nu=0.5, kind="equilibrium")
    rf, _ = residual(p, H, SETTINGS)
    assert norm2(rf) > 1e-3


def test_gmres_identity_one_iteration():
    b = np.arange(1.0, 11.0)
    x, info = gmres(lambda v: v.copy(), b, 1e-6, 10)
    assert np.allclose(x, b, atol=1e-12)
    assert info["iterations"] == 1


def test_gmres_zero_rhs():
    x, info = gmres(lambda v: v, np.zeros(7), 1e-6, 5)
    assert np.all(x == 0.0)
    assert info["iterations"] == 0


def test_gmres_random_map_vs_dense_oracle():
    rng = np.random.default_rng(0)
    A = np.eye(20) + 0.3 * rng.standard_normal((20, 20)) / np.sqrt(20)
    b = rng.standard_normal(20)
    x, info = gmres(lambda v: A @ v, b, 1e-6, 20)
    assert info["converged"] and info["iterations"] <= 20
    assert np.linalg.norm(A @ x - b) <= 1e-6 * np.linalg.norm(b) * 1.01
    assert np.linalg.norm(x - np.linalg.solve(A, b)) < 1e-5


def test_gmres_custom_inner_product():
    rng = np.random.default_rng(1)
    w = rng.uniform(0.5, 2.0, 15)
    A = np.eye(15) + 0.2 * rng.standard_normal((15, 15)) / np.sqrt(15)
    b = rng.standard_normal(15)
    inner_w = lambda a, c: float((a * w) @ c)
    x, info = gmres(lambda v: A @ v, b, 1e-8, 15, inner=inner_w)
    assert np.linalg.norm(A @ x - b) < 1e-6


def test_trivial_guess_converges_fast():
    pt, info = newton_solve(zero_point(0.5), SETTINGS, H)
    assert info.converged and info.iterations <= 2
    assert norm2(pt.u) == 0.0
    assert pt.P == pytest.approx(1.0)


def test_nontrivial_equilibrium_matches_ls_amplitude(k_half_equilibrium):
    pt, info = k_half_equilibrium
    assert info.converged
    assert classify_kappa(pt.u) == "generic"
    e1 = kernel_function(G32, 1, "even")
    y = abs(inner(pt.u, e1.field))
    c = ls_coefficients(1)
    predicted = amplitude_prediction(1, 0.40, c.g_ynu_oracle)
    # finite-amplitude corrections at nu* - nu ~ 5e-3 stay below 10%
    assert abs(y - predicted) / predicted < 0.1


def test_accepted_residual_below_tolerance(k_half_equilibrium):
    pt, _ = k_half_equilibrium
    assert point_residual_norm(pt, H, SETTINGS) <= 1e-8


def test_quadratic_convergence_ratios(k_half_equilibrium):
    pt, _ = k_half_equilibrium
    # restart from a perturbed guess and watch the residual contraction
    rng = np.random.default_rng(4)
    bump = 0.02 * np.sin(np.pi * G32.nodes) * rng.uniform(0.9, 1.1)
    guess = ContinuationPoint(
        u=Field(G32, pt.u.values + bump), P=1.0, nu=pt.nu, kind="equilibrium"
    )
    _, info = newton_solve(guess, SETTINGS, H)
    hist = info.residual_history
    ratios = [
        hist[i + 1] / hist[i] ** 2
        for i in range(len(hist) - 1)
        if 1e-6 < hist[i] < 1e-1
    ]
    assert ratios and max(ratios) < 1e4


def test_gmres_iteration_counts_moderate(k_half_equilibrium):
    _, info = k_half_equilibrium
    assert info.gmres_iterations and max(info.gmres_iterations) <= 25


def test_jacobian_action_matches_fd(k_half_equilibrium):
    pt, _ = k_half_equilibrium
    nu, P = pt.nu, pt.P
    traj = compute_trajectory(pt.u, P, nu, H, need_u4=True)
    dphidP = flow_time_derivative(traj)
    rng = np.random.default_rng(9)
    du = 0.1 * np.sin(np.pi * G32.nodes) + 0.05 * np.cos(3 * np.pi * G32.nodes / 2)
    dP, dnu = 0.3 * rng.uniform(), 0.02 * rng.uniform()
    jac = propagate_tangent(traj, du, omega=dnu) + dphidP * dP - du

    eps = 1e-6
    def res_field(s):
        u = Field(G32, pt.u.values + s * eps * du)
        return flow(u, P + s * eps * dP, nu + s * eps * dnu, H).values - u.values

    fd = (res_field(1.0) - res_field(-1.0)) / (2 * eps)
    denom = max(np.abs(jac).max(), 1.0)
    assert np.abs(fd - jac).max() / denom < 1e-4


def test_arclength_constrained_solve(k_half_equilibrium):
    pt, _ = k_half_equilibrium
    # second nearby point to build a secant tangent
    guess2 = ContinuationPoint(u=pt.u, P=pt.P, nu=pt.nu - 5e-4, kind="equilibrium")
    pt2, _ = newton_solve(guess2, SETTINGS, H)
    w = G32.quad_weights
    du = pt2.u.values - pt.u.values
    dP, dnu = pt2.P - pt.P, pt2.nu - pt.nu
    scale = np.sqrt((du * w) @ du + dP**2 + dnu**2)
    t_u, t_P, t_nu = du / scale, dP / scale, dnu / scale
    ds = 2.0 * scale
    constraint = ArclengthConstraint(
        t_u=t_u, t_P=t_P, t_nu=t_nu,
        base_u=pt2.u.values, base_P=pt2.P, base_nu=pt2.nu, ds=ds,
    )
    guess3 = ContinuationPoint(
        u=Field(G32, pt2.u.values + ds * t_u), P=pt2.P + ds * t_P,
        nu=pt2.nu + ds * t_nu, kind="equilibrium",
    )
    pt3, info3 = newton_solve(guess3, SETTINGS, H, constraint=constraint)
    assert info3.converged
    assert pt3.nu < pt2.nu  # continued down the branch
    du3 = pt3.u.values - pt2.u.values
    arc = (t_u * w) @ du3 + t_P * (pt3.P - pt2.P) + t_nu * (pt3.nu - pt2.nu)
    assert arc == pytest.approx(ds, abs=1e-8)
    assert point_residual_norm(pt3, H, SETTINGS) <= 1e-8


def test_newton_blowup_guess_raises():
    bad = ContinuationPoint(
        u=Field(G32, 1e6 * np.sin(np.pi * G32.nodes)), P=1.0, nu=0.02,
        kind="equilibrium",
    )
    with pytest.raises(NewtonError):
        newton_solve(bad, NewtonSettings(max_newton=6), H)


def test_newton_iteration_budget_reports_history(k_half_equilibrium):
    pt, _ = k_half_equilibrium
    guess = ContinuationPoint(
        u=Field(G32, pt.u.values + 0.05 * np.sin(np.pi * G32.nodes)),
        P=1.0, nu=pt.nu, kind="equilibrium",
    )
    with pytest.raises(NewtonError) as exc:
        newton_solve(guess, NewtonSettings(max_newton=1), H)
    assert len(exc.value.info.residual_history) >= 2
