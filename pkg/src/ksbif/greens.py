"""Analytic Green's function of the implicit operator 1 + h*d2 + h*nu*d4.

The semi-implicit time step solves (1 + h u_xx-op + h nu u_xxxx-op) v = rhs
with v = v_xx = 0 at x = +-1.  Its Green's function G(x, xi) is assembled in
closed form from the four roots of the characteristic quartic
h*nu*s^4 + h*s^2 + 1 = 0: on each side of the source point, G is a
combination of exp(s_i x); the eight coefficients follow from the four
boundary conditions, continuity of G, G_x, G_xx across x = xi, and the jump
[G_xxx] = 1/(h nu).

Four dense convolution tables are produced, with quadrature weights folded
into the columns:

    K0 f ~ integral G(x_i, xi) f(xi) dxi          (solves L v = f)
    K1 f ~ integral dG/dxi (x_i, xi) f(xi) dxi    (= -L^{-1} f' for f(+-1)=0)
    K4 f ~ integral d4G/dx4 (x_i, xi) f(xi) dxi   (fourth derivative of K0 f)
    K5 f ~ integral d4/dx4 dG/dxi f(xi) dxi       (fourth derivative of K1 f)

The source-variable derivative in K1/K5 is what makes the advective term
enter with the correct sign after integration by parts; the boundary terms
vanish because the convolved quantities (u^2, u*w) satisfy the Dirichlet BCs.

G(x, .) has a kink at the target point, so a single global quadrature would
lose the exponential accuracy.  Each row is instead integrated on the two
analytic pieces [-1, x_i] and [x_i, 1] separately, with Clenshaw-Curtis
nodes mapped to each piece and the integrand values pulled back to the grid
through barycentric interpolation.  The result is still one (N+1) x (N+1)
matrix per kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .grid import ChebyshevGrid, Field, GridError, interp_matrix, make_grid

# fractional final steps of a flow can reach 1.5x the nominal step, which is
# capped at 1e-2; table assembly therefore accepts up to 1.5e-2
MAX_STEP = 1.5e-2


class GreensError(RuntimeError):
    """Raised when the Green's-function matching system cannot be solved."""


@dataclass(frozen=True)
class OperatorParams:
    """Time step h and viscosity nu of the implicit operator."""

    h: float
    nu: float

    def __post_init__(self):
        if not (0.0 < self.h <= MAX_STEP):
            raise GreensError(f"time step {self.h} outside (0, {MAX_STEP}]")
        if not (0.0 < self.nu <= 1.0):
            raise GreensError(f"viscosity {self.nu} outside (0, 1]")


def char_roots(p: OperatorParams) -> np.ndarray:
    """The four roots of h*nu*s^4 + h*s^2 + 1 = 0.

    Returned as (s, -s, conj(s), -conj(s)) when the quadratic in s^2 has a
    complex pair (the case h < 4 nu), or the analogous negation-closed order
    for real s^2.
    """
    h, nu = p.h, p.nu
    disc = complex(h * h - 4.0 * h * nu)
    sq = np.sqrt(disc)
    z1 = (-h + sq) / (2.0 * h * nu)
    z2 = (-h - sq) / (2.0 * h * nu)
    s1 = np.sqrt(z1)
    s2 = np.sqrt(z2)
    return np.array([s1, -s1, s2, -s2], dtype=complex)


@dataclass
class GreensTables:
    """Dense convolution tables for one (grid, h, nu) combination."""

    grid: ChebyshevGrid
    params: OperatorParams
    K0: np.ndarray
    K1: np.ndarray
    K4: np.ndarray
    K5: np.ndarray
    _ops: dict = field(default_factory=dict, repr=False)

    @cached_property
    def op_state(self) -> np.ndarray:
        """[K0 | (h/2) K1]: maps stacked (u, u^2) to the next state."""
        return np.hstack([self.K0, 0.5 * self.params.h * self.K1])

    @cached_property
    def op_deriv(self) -> np.ndarray:
        """[K4 | (h/2) K5]: maps stacked (u, u^2) to the next 4th derivative."""
        return np.hstack([self.K4, 0.5 * self.params.h * self.K5])

    @cached_property
    def op_tangent(self) -> np.ndarray:
        """[K0 | h K1]: maps stacked (w - h*omega*u4, u*w) to the next tangent."""
        return np.hstack([self.K0, self.params.h * self.K1])


def apply(K: np.ndarray, f: Field) -> Field:
    """Apply one convolution table to a field."""
    if K.shape != (f.grid.size, f.grid.size):
        raise GridError(f"kernel shape {K.shape} does not match grid {f.grid.size}")
    return Field(f.grid, K @ f.values)


def _solve_coefficients(roots, anchors, xi, h, nu):
    """Batched solve of the 8x8 matching systems for many source points xi.

    Returns (c, cp): coefficient vectors of G(., xi) and dG/dxi(., xi) in the
    anchored-exponential basis, shape (len(xi), 8); entries 0..3 are the
    coefficients left of xi, 4..7 right of xi.
    """
    xi = np.asarray(xi, dtype=float)
    K = xi.size
    s = roots[None, :]  # (1, 4)
    phi_m1 = np.exp(roots * (-1.0 - anchors))  # basis at x = -1
    phi_p1 = np.exp(roots * (1.0 - anchors))  # basis at x = +1
    phi_xi = np.exp(roots[None, :] * (xi[:, None] - anchors[None, :]))  # (K, 4)

    M = np.zeros((K, 8, 8), dtype=complex)
    M[:, 0, 0:4] = phi_m1
    M[:, 1, 0:4] = roots**2 * phi_m1
    M[:, 2, 4:8] = phi_p1
    M[:, 3, 4:8] = roots**2 * phi_p1
    for p in range(4):
        sp = s**p * phi_xi
        M[:, 4 + p, 0:4] = -sp
        M[:, 4 + p, 4:8] = sp

    jump = 1.0 / (h * nu)
    rhs = np.zeros((K, 8, 1), dtype=complex)
    rhs[:, 7, 0] = jump
    try:
        c = np.linalg.solve(M, rhs)[..., 0]
    except np.linalg.LinAlgError as exc:
        raise GreensError(f"singular matching system for (h={h}, nu={nu})") from exc

    # differentiate the system in xi: rows 4..7 gain one power of s, so the
    # right-hand side for dc/dxi is built from the already-known jumps
    j4 = np.einsum("kj,j,kj->k", c[:, 4:8] - c[:, 0:4], roots**4, phi_xi)
    rhs_d = np.zeros((K, 8, 1), dtype=complex)
    rhs_d[:, 6, 0] = -jump
    rhs_d[:, 7, 0] = -j4
    cp = np.linalg.solve(M, rhs_d)[..., 0]
    return c, cp, phi_xi


def assemble_tables(grid: ChebyshevGrid, p: OperatorParams) -> GreensTables:
    """Build the four convolution tables for one (grid, h, nu)."""
    N = grid.order
    n = grid.size
    h, nu = p.h, p.nu
    roots = char_roots(p)
    anchors = np.where(roots.real > 0, 1.0, -1.0)

    # quadrature rule on each analytic piece: enough points to integrate the
    # degree-N interpolant times the O((h nu)^{-1/4})-scale exponentials
    m_sub = N + 32
    sub = make_grid(m_sub)
    t_nodes, t_weights = sub.nodes, sub.quad_weights
    nq = t_nodes.size

    # all (target row, piece, quadrature node) source points in one batch;
    # on [-1, x] the source sits right of the target (b side), on [x, 1] left
    xs = grid.nodes[1:N]
    nrow = xs.size
    lo = np.stack([np.full(nrow, -1.0), xs], axis=1)  # (nrow, 2)
    hi = np.stack([xs, np.full(nrow, 1.0)], axis=1)
    half = 0.5 * (hi - lo)  # (nrow, 2)
    xi = (
        0.5 * (hi + lo)[:, :, None] + half[:, :, None] * t_nodes[None, None, :]
    )  # (nrow, 2, nq)
    wq = half[:, :, None] * t_weights[None, None, :]

    c, cp, _ = _solve_coefficients(roots, anchors, xi.ravel(), h, nu)
    c = c.reshape(nrow, 2, nq, 8)
    cp = cp.reshape(nrow, 2, nq, 8)
    phi_x = np.exp(roots[None, :] * (xs[:, None] - anchors[None, :]))  # (nrow, 4)
    s4 = roots**4
    # piece 0 uses the right-side coefficients (columns 4:8), piece 1 the left
    coef = np.stack([c[:, 0, :, 4:8], c[:, 1, :, 0:4]], axis=1)  # (nrow,2,nq,4)
    coef_p = np.stack([cp[:, 0, :, 4:8], cp[:, 1, :, 0:4]], axis=1)
    g0 = np.einsum("rpqj,rj->rpq", coef, phi_x).real
    g1 = np.einsum("rpqj,rj->rpq", coef_p, phi_x).real
    g4 = np.einsum("rpqj,rj->rpq", coef, s4[None, :] * phi_x).real
    g5 = np.einsum("rpqj,rj->rpq", coef_p, s4[None, :] * phi_x).real
    E = interp_matrix(grid, xi.ravel()).reshape(nrow, 2, nq, n)

    K0 = np.zeros((n, n))
    K1 = np.zeros((n, n))
    K4 = np.zeros((n, n))
    K5 = np.zeros((n, n))
    K0[1:N] = np.einsum("rpq,rpq,rpqj->rj", wq, g0, E)
    K1[1:N] = np.einsum("rpq,rpq,rpqj->rj", wq, g1, E)
    K4[1:N] = np.einsum("rpq,rpq,rpqj->rj", wq, g4, E)
    K5[1:N] = np.einsum("rpq,rpq,rpqj->rj", wq, g5, E)

    # K4/K5 so far hold only the classical (piecewise) derivatives.  The
    # distributional fourth derivative of the convolution also picks up the
    # source singularity: L G = delta gives
    #     d4/dx4 (K0 f) = K4_classical f + f/(h nu),
    # and differentiating the kinked split integrals of K1 f adds the
    # cross-derivative jumps [d2x dxi G] = -1/(h nu) (against f') and
    # [d3x dxi G](x, x) (against f):
    #     d4/dx4 (K1 f) = K5_classical f - (1/(h nu)) f' + J3(x) f.
    from .grid import diff_matrix  # deferred: grid does not depend on greens

    inv = 1.0 / (h * nu)
    K4[1:N, :] += inv * np.eye(n)[1:N, :]
    xi_diag = grid.nodes[1:N]
    c_d, _, phi_d = _solve_coefficients(roots, anchors, xi_diag, h, nu)
    j3 = -np.einsum("kj,j,kj->k", c_d[:, 4:8] - c_d[:, 0:4], s4, phi_d).real
    K5[1:N, :] -= inv * diff_matrix(grid)[1:N, :]
    K5[np.arange(1, N), np.arange(1, N)] += j3

    # enforce the reflection symmetry G(-x, -xi) = G(x, xi) exactly:
    # value kernels are invariant, source-derivative kernels flip sign
    def sym(K, sign):
        return 0.5 * (K + sign * K[::-1, ::-1])

    K0, K4 = sym(K0, 1.0), sym(K4, 1.0)
    K1, K5 = sym(K1, -1.0), sym(K5, -1.0)

    for K in (K0, K1, K4, K5):
        if not np.all(np.isfinite(K)):
            raise GreensError(f"non-finite table entries for (h={h}, nu={nu})")
    return GreensTables(grid=grid, params=p, K0=K0, K1=K1, K4=K4, K5=K5)


@lru_cache(maxsize=64)
def _tables_cached(N: int, h: float, nu: float) -> GreensTables:
    return assemble_tables(make_grid(N), OperatorParams(h=h, nu=nu))


def get_tables(N: int, h: float, nu: float) -> GreensTables:
    """Cached table lookup keyed on (N, h, nu)."""
    return _tables_cached(N, float(h), float(nu))
