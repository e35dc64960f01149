import numpy as np
import pytest

from ksbif.eigen import (
    SpectrumError,
    arnoldi,
    default_start_vector,
    equilibrium_spectrum,
    floquet,
)
from ksbif.grid import Field, make_grid

G32 = make_grid(32)
ZERO = Field(G32, np.zeros(G32.size))


def analytic_rate(k, nu):
    return (k * np.pi) ** 2 - nu * (k * np.pi) ** 4


def test_arnoldi_identity_map():
    vals, vecs, res = arnoldi(lambda v: v.copy(), np.ones(30), 10, 3)
    assert np.allclose(vals, 1.0)
    assert np.all(res < 1e-10)


def test_arnoldi_diagonal_oracle():
    diag = np.zeros(30)
    diag[:3] = [3.0, 2.0, 1.0]
    vals, vecs, res = arnoldi(lambda v: diag * v, np.ones(30), 10, 3)
    assert abs(vals[0] - 3.0) < 1e-8
    assert abs(vals[1] - 2.0) < 1e-8
    assert abs(vals[2] - 1.0) < 1e-8


def test_arnoldi_time1_map_leading_value():
    # leading Ritz value of the linearized time-1 map at zero is e^lambda with
    # lambda evaluated at k = 1/2
    from ksbif.stepper import compute_trajectory, propagate_tangent

    nu, h = 0.12, 1e-3
    traj = compute_trajectory(ZERO, 1.0, nu, h)
    vals, _, _ = arnoldi(
        lambda w: propagate_tangent(traj, w), default_start_vector(G32), 30, 3
    )
    lam = analytic_rate(0.5, nu)
    # the map multiplier carries the O(h) Euler bias of the discrete stepper
    assert abs(vals[0] - np.exp(lam)) < 2e-2 * np.exp(lam)


def test_arnoldi_rejects_small_dimension():
    with pytest.raises(ValueError):
        arnoldi(lambda v: v, np.ones(30), 6, 3)


def test_arnoldi_deterministic():
    diag = np.linspace(2, 0.1, 30)
    a1 = arnoldi(lambda v: diag * v, np.ones(30), 15, 5)[0]
    a2 = arnoldi(lambda v: diag * v, np.ones(30), 15, 5)[0]
    assert np.array_equal(a1, a2)


def test_spectrum_matches_characteristic_equation():
    spec = equilibrium_spectrum(ZERO, 0.12, T=1.0, want=5)
    for i, k in enumerate((0.5, 1.0, 1.5)):
        expected = analytic_rate(k, 0.12)
        assert abs(spec.rates[i].real - expected) <= 1e-6 * abs(expected)
        assert abs(spec.rates[i].imag) < 1e-8


@pytest.mark.parametrize("nu", [0.5, 0.12, 0.04])
def test_spectrum_rate_table(nu):
    spec = equilibrium_spectrum(ZERO, nu, T=1.0, want=4)
    got = sorted(spec.rates.real, reverse=True)
    expected = sorted((analytic_rate(k, nu) for k in (0.5, 1.0, 1.5, 2.0)), reverse=True)
    for g, e in zip(got, expected):
        assert abs(g - e) <= 1e-5 * abs(e)


def test_spectrum_marginal_at_first_bifurcation():
    spec = equilibrium_spectrum(ZERO, 4.0 / np.pi**2, T=1.0, want=3)
    assert abs(spec.rates[0].real) < 1e-7


def test_spectrum_stable_at_high_viscosity():
    spec = equilibrium_spectrum(ZERO, 0.5, T=1.0, want=4)
    assert spec.stable
    assert np.all(spec.rates.real < 0)


def test_spectrum_residual_invariant():
    spec = equilibrium_spectrum(ZERO, 0.12, T=1.0, want=5)
    assert spec.converged_count == 5
    assert np.all(spec.residuals <= 1e-6)


def test_spectrum_rejects_non_equilibrium():
    u = Field(G32, 0.5 * np.cos(np.pi * G32.nodes / 2))
    with pytest.raises(SpectrumError):
        equilibrium_spectrum(u, 0.12, T=1.0, want=3)


def test_floquet_rejects_equilibrium_input():
    with pytest.raises(SpectrumError):
        floquet(ZERO, 2.0, 0.3, want=3)
