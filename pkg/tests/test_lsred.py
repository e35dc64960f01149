import numpy as np
import pytest

from ksbif.grid import make_grid
from ksbif.lsred import (
    amplitude_prediction,
    bif_values,
    calibrate_g_ynu,
    fit_power_law,
    ls_coefficients,
    ls_verify,
)

G32 = make_grid(32)
G64 = make_grid(64)


def test_bif_values():
    vals = bif_values([0.5, 1.0, 1.5, 2.0])
    assert vals[0] == pytest.approx(4.0 / np.pi**2)
    assert vals[0] == pytest.approx(0.405285, abs=1e-6)
    assert vals[1] == pytest.approx(1.0 / np.pi**2)
    assert vals[1] == pytest.approx(0.101321, abs=1e-6)
    assert vals[2] == pytest.approx(4.0 / (9.0 * np.pi**2))
    assert vals[3] == pytest.approx(1.0 / (4.0 * np.pi**2))
    assert vals[3] == pytest.approx(0.025330, abs=1e-6)


def test_bif_values_rejects_nonpositive():
    with pytest.raises(ValueError):
        bif_values([0.0])


def test_coefficients_n1():
    c = ls_coefficients(1)
    assert c.beta == pytest.approx(np.pi / 2)
    assert c.w_y2_amplitude == pytest.approx(1.0 / (6.0 * np.pi))
    assert c.w_y2_amplitude == pytest.approx(0.053052, abs=1e-6)
    assert c.g_y3 == 0.125
    assert c.g_ynu_paper == pytest.approx(-np.pi**2 / 4)
    assert c.g_ynu_oracle == pytest.approx(np.pi**4 / 16)


def test_coefficients_family():
    for n in (1, 2, 3):
        c = ls_coefficients(n)
        assert c.w_y2_amplitude == pytest.approx(1.0 / (6.0 * np.pi * (2 * n - 1)))
        assert c.nu_star == pytest.approx(1.0 / ((n - 0.5) * np.pi) ** 2)
        # consistency of the eigenvalue identity behind w_y2:
        # nu* (2 beta)^2 = 4, so the inverted eigenvalue is 12 beta^2
        lam = c.nu_star * (2 * c.beta) ** 4 - (2 * c.beta) ** 2
        assert lam == pytest.approx(12.0 * c.beta**2, rel=1e-12)
        assert c.g_y3 > 0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_verify_quadrature_reproduction(n):
    # n = 3 integrands reach wavenumber 2(2n-1) = 10, beyond what order-32
    # Clenshaw-Curtis resolves to 1e-9; order 64 does
    rep = ls_verify(n, G64)
    assert rep["e_norm"] == pytest.approx(1.0, abs=1e-9)
    assert abs(rep["e_e2prime"]) < 1e-9
    assert rep["g_y3"] == pytest.approx(0.125, abs=1e-9)
    assert rep["w_y2_amplitude"] == pytest.approx(rep["w_y2_amplitude_formula"], rel=1e-12)


def test_verify_n1_tight_tolerances():
    rep = ls_verify(1, G32)
    assert rep["g_y3"] == pytest.approx(0.125, abs=1e-10)
    assert rep["g_ynu_paper"] == pytest.approx(-np.pi**2 / 4, abs=1e-10)
    assert rep["g_ynu_oracle"] == pytest.approx(np.pi**4 / 16, abs=1e-9)
    assert rep["g_ynu_signs"] == (-1.0, 1.0)
    assert rep["supercritical_by_paper_sign"]


def test_fit_power_law_recovers_exponent():
    offsets = np.logspace(-4, -2.7, 6)
    amps = 3.7 * offsets**0.5
    C, p = fit_power_law(offsets, amps)
    assert C == pytest.approx(3.7, rel=1e-10)
    assert p == pytest.approx(0.5, abs=1e-10)


def test_calibration_and_prediction_roundtrip():
    c = ls_coefficients(1)
    g_eff = c.beta**4  # the empirically observed effective value
    offsets = np.array([1e-4, 5e-4, 1e-3, 2e-3])
    amps = np.sqrt(6.0 * g_eff * offsets / c.g_y3)
    got = calibrate_g_ynu(1, offsets, amps)
    assert got == pytest.approx(g_eff, rel=1e-12)
    y = amplitude_prediction(1, c.nu_star - 1e-3, got)
    assert y == pytest.approx(np.sqrt(6 * g_eff * 1e-3 / c.g_y3), rel=1e-12)


def test_prediction_rejects_wrong_side():
    c = ls_coefficients(1)
    with pytest.raises(ValueError):
        amplitude_prediction(1, c.nu_star + 1e-3, c.beta**4)


def test_prediction_vanishes_at_onset():
    c = ls_coefficients(1)
    assert amplitude_prediction(1, c.nu_star, c.beta**4) == 0.0
