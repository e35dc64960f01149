import numpy as np
import pytest

from ksbif.grid import Field, GridError, diff_matrix, make_grid
from ksbif.greens import (
    GreensError,
    OperatorParams,
    apply,
    assemble_tables,
    char_roots,
    get_tables,
)


@pytest.fixture(scope="module")
def tables32():
    return get_tables(32, 1e-3, 0.1)


def multiplier(h, nu, k):
    return 1.0 - h * (k * np.pi) ** 2 + h * nu * (k * np.pi) ** 4


def eigenfield(grid, k):
    # sin(k pi x) for integer k, cos(k pi x) for half-integer k: both satisfy
    # u = u_xx = 0 at the ends and diagonalize the implicit operator
    if k == int(k):
        return np.sin(k * np.pi * grid.nodes)
    return np.cos(k * np.pi * grid.nodes)


def test_char_roots_vieta():
    for h, nu in ((1e-3, 0.1), (1e-2, 1.0), (5e-3, 0.02)):
        r = char_roots(OperatorParams(h=h, nu=nu))
        assert abs(r.sum()) < 1e-10
        assert np.prod(r) == pytest.approx(1.0 / (h * nu), rel=1e-12)
        # roots satisfy the quartic
        assert np.allclose(h * nu * r**4 + h * r**2 + 1.0, 0.0, atol=1e-9)


def test_char_roots_complex_regime():
    r = char_roots(OperatorParams(h=1e-3, nu=0.1))
    assert np.all(np.abs(r.imag) > 0)  # h^2 < 4 h nu


def test_char_roots_closed_under_conj_and_negation():
    r = char_roots(OperatorParams(h=1e-3, nu=0.05))
    as_set = sorted(np.round(r, 10), key=lambda z: (z.real, z.imag))
    for transform in (np.conj, np.negative):
        t = sorted(np.round(transform(r), 10), key=lambda z: (z.real, z.imag))
        assert np.allclose(as_set, t)


def test_params_validation():
    with pytest.raises(GreensError):
        OperatorParams(h=0.02, nu=0.1)
    with pytest.raises(GreensError):
        OperatorParams(h=1e-3, nu=1.5)
    with pytest.raises(GreensError):
        OperatorParams(h=-1e-3, nu=0.1)


def test_k0_eigen_action(tables32):
    g, p = tables32.grid, tables32.params
    for k in (0.5, 1.0, 1.5, 2.0):
        v = eigenfield(g, k)
        m = multiplier(p.h, p.nu, k)
        assert np.abs(tables32.K0 @ v - v / m).max() < 1e-9


def test_k4_eigen_action(tables32):
    g, p = tables32.grid, tables32.params
    for k in (0.5, 1.0, 1.5, 2.0):
        v = eigenfield(g, k)
        m = multiplier(p.h, p.nu, k)
        assert np.abs(tables32.K4 @ v - (k * np.pi) ** 4 * v / m).max() < 1e-8


def test_k0_boundary_rows_zero(tables32):
    g = tables32.grid
    f = np.cos(np.pi * g.nodes / 2) + 0.3 * np.sin(2 * np.pi * g.nodes)
    v = tables32.K0 @ f
    assert abs(v[0]) <= 1e-12 and abs(v[-1]) <= 1e-12
    d2v = diff_matrix(g, 2) @ v
    assert abs(d2v[0]) <= 1e-7 and abs(d2v[-1]) <= 1e-7


def test_apply_zero_and_linearity(tables32):
    g = tables32.grid
    zero = Field(g, np.zeros(g.size))
    assert np.all(apply(tables32.K0, zero).values == 0.0)
    rng = np.random.default_rng(3)
    f = Field(g, rng.standard_normal(g.size))
    h = Field(g, rng.standard_normal(g.size))
    lhs = apply(tables32.K0, f + h).values
    rhs = apply(tables32.K0, f).values + apply(tables32.K0, h).values
    assert np.abs(lhs - rhs).max() < 1e-13


def test_apply_dimension_mismatch(tables32):
    g16 = make_grid(16)
    with pytest.raises(GridError):
        apply(tables32.K0, Field(g16, np.zeros(17)))


def test_apply_recovers_kernel_column(tables32):
    g = tables32.grid
    delta = np.zeros(g.size)
    delta[10] = 1.0
    col = apply(tables32.K0, Field(g, delta)).values
    assert np.allclose(col, tables32.K0[:, 10])


def test_sin_pi_eigen_example():
    T = get_tables(32, 1e-3, 0.1)
    g, p = T.grid, T.params
    v = np.sin(np.pi * g.nodes)
    m = 1.0 - p.h * np.pi**2 + p.h * p.nu * np.pi**4
    assert np.abs(T.K0 @ v - v / m).max() < 1e-9


def test_cos_half_eigen_example():
    T = get_tables(32, 1e-3, 0.1)
    g, p = T.grid, T.params
    v = np.cos(np.pi * g.nodes / 2)
    m = 1.0 - p.h * np.pi**2 / 4 + p.h * p.nu * np.pi**4 / 16
    assert np.abs(T.K0 @ v - v / m).max() < 1e-9


def test_inverse_property_random_fields(tables32):
    # L(K0 f) = f at interior nodes, with L applied by spectral differentiation
    g, p = tables32.grid, tables32.params
    D2, D4 = diff_matrix(g, 2), diff_matrix(g, 4)
    rng = np.random.default_rng(1)
    for _ in range(20):
        c = 0.5 * rng.standard_normal(6)
        f = sum(c[j] * np.sin((j + 1) * np.pi * g.nodes) for j in range(3))
        f += sum(
            c[3 + j] * np.cos((2 * j + 1) * np.pi * g.nodes / 2) for j in range(3)
        )
        v = tables32.K0 @ f
        Lv = v + p.h * (D2 @ v) + p.h * p.nu * (D4 @ v)
        assert np.abs((Lv - f)[1:-1]).max() < 1e-8


def test_k1_is_flux_form(tables32):
    # K1 f = -K0 (Df) for fields vanishing at the boundary: the source-variable
    # derivative realizes -L^{-1} d/dx after integration by parts
    g = tables32.grid
    u = 0.3 * np.sin(np.pi * g.nodes) + 0.1 * np.cos(np.pi * g.nodes / 2)
    usq = u * u
    D = diff_matrix(g)
    assert np.abs(tables32.K1 @ usq + tables32.K0 @ (D @ usq)).max() < 1e-12


def test_k5_matches_fourth_derivative_of_k1(tables32):
    g = tables32.grid
    u = 0.3 * np.sin(np.pi * g.nodes) + 0.1 * np.cos(np.pi * g.nodes / 2)
    usq = u * u
    D4 = diff_matrix(g, 4)
    # oracle limited by spectral D4 roundoff at N=32 (~1e-6 absolute)
    assert np.abs(tables32.K5 @ usq - D4 @ (tables32.K1 @ usq)).max() < 1e-5


def test_reflection_symmetry_exact(tables32):
    assert np.array_equal(tables32.K0, tables32.K0[::-1, ::-1])
    assert np.array_equal(tables32.K1, -tables32.K1[::-1, ::-1])
    assert np.array_equal(tables32.K4, tables32.K4[::-1, ::-1])
    assert np.array_equal(tables32.K5, -tables32.K5[::-1, ::-1])


def test_assembly_other_params():
    # N=64 / low-viscosity regime used below nu = 0.03
    T = assemble_tables(make_grid(64), OperatorParams(h=1e-3, nu=0.02))
    v = eigenfield(T.grid, 2.0)
    m = multiplier(1e-3, 0.02, 2.0)
    assert np.abs(T.K0 @ v - v / m).max() < 1e-9


def test_cache_returns_same_object():
    a = get_tables(32, 1e-3, 0.07)
    b = get_tables(32, 1e-3, 0.07)
    assert a is b
