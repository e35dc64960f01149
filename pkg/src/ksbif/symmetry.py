"""Reflection symmetry, kernel functions, and the odd periodic extension.

The Dirichlet problem has the single symmetry kappa: u(x) -> -u(-x), which on
the descending node ordering is the exact index permutation j -> N - j with a
sign flip.  Equilibria also extend, by odd reflection about x = +-1, to
equilibria of the periodic problem on [-2, 2]; that extension and a spectral
residual check of the extended steady equation are provided here, along with
the null directions of the linearization at zero:

    even family  cos((2n-1) pi x / 2)   (kappa-antisymmetric)
    odd family   sin(n pi x)            (kappa-fixed)

Both families are L2-normalized on [-1, 1] as written.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ChebyshevGrid, Field, inner, interp_matrix, norm2
from .stepper import flow


@dataclass(frozen=True)
class KernelFunction:
    """One null direction of the linearization at the zero state."""

    n: int
    parity: str  # 'even' | 'odd'
    beta: float
    field: Field


def kernel_function(grid: ChebyshevGrid, n: int, parity: str) -> KernelFunction:
    if n < 1:
        raise ValueError(f"kernel index must be >= 1, got {n}")
    if parity == "even":
        beta = 0.5 * np.pi * (2 * n - 1)
        vals = np.cos(beta * grid.nodes)
    elif parity == "odd":
        beta = n * np.pi
        vals = np.sin(beta * grid.nodes)
    else:
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    return KernelFunction(n=n, parity=parity, beta=beta, field=Field(grid, vals))


def kappa(f: Field) -> Field:
    """The reflection u(x) -> -u(-x): exact index flip plus sign change."""
    return Field(f.grid, -f.values[::-1])


def kappa_values(u: np.ndarray) -> np.ndarray:
    return -u[::-1]


def classify_kappa(f: Field, tol: float = 1e-6) -> str:
    """Classify a field as kappa-'fixed', 'anti'(symmetric), or 'generic'."""
    scale = norm2(f)
    if scale == 0.0:
        return "fixed"
    ku = kappa(f)
    if norm2(ku - f) <= tol * scale:
        return "fixed"
    if norm2(ku + f) <= tol * scale:
        return "anti"
    return "generic"


def project_kernel(f: Field, k: KernelFunction) -> float:
    """L2 projection of f onto one (unit-norm) kernel function."""
    return inner(f, k.field)


def diagram_coord(f: Field) -> float:
    """Bifurcation-diagram ordinate: sum of the four leading kernel projections."""
    total = 0.0
    for n in (1, 2):
        for parity in ("even", "odd"):
            total += project_kernel(f, kernel_function(f.grid, n, parity))
    return total


@dataclass(frozen=True)
class ExtendedField:
    """Odd periodic extension on a uniform 4M-point grid over [-2, 2)."""

    M: int
    x: np.ndarray
    values: np.ndarray


def extend_periodic(f: Field, M: int = 256, bc_tol: float = 1e-8) -> ExtendedField:
    """Extend a Dirichlet field to [-2, 2) by odd reflection about x = +-1.

    uhat(x) = f(x) on [-1, 1], -f(2 - x) on [1, 2], -f(-2 - x) on [-2, -1],
    sampled through barycentric interpolation of f.
    """
    b0, b1 = abs(f.values[0]), abs(f.values[-1])
    if max(b0, b1) > bc_tol:
        raise ValueError(
            f"field violates Dirichlet BCs (|u(+-1)| up to {max(b0, b1):.2e})"
        )
    npts = 4 * M
    x = -2.0 + 4.0 * np.arange(npts) / npts
    source = np.where(x < -1.0, -2.0 - x, np.where(x > 1.0, 2.0 - x, x))
    sign = np.where(np.abs(x) > 1.0, -1.0, 1.0)
    vals = sign * (interp_matrix(f.grid, source) @ f.values)
    return ExtendedField(M=M, x=x, values=vals)


def periodic_residual(e: ExtendedField, nu: float) -> float:
    """Max-norm residual of the steady periodic equation for the extension.

    Computes u u_x + u_xx + nu u_xxxx by Fourier differentiation on the
    4M-point periodic grid; an exact equilibrium extension gives zero up to
    discretization.
    """
    if e.M < 64 or (e.M & (e.M - 1)) != 0:
        raise ValueError(f"extension resolution must be a power of two >= 64, got {e.M}")
    u = e.values
    npts = u.size
    k = 2.0 * np.pi * np.fft.rfftfreq(npts, d=4.0 / npts)
    uh = np.fft.rfft(u)
    ux = np.fft.irfft(1j * k * uh, npts)
    uxx = np.fft.irfft(-(k**2) * uh, npts)
    uxxxx = np.fft.irfft(k**4 * uh, npts)
    return float(np.abs(u * ux + uxx + nu * uxxxx).max())


def shift_reflect_check(
    u0: Field, P: float, nu: float, h: float, tol: float = 1e-4
) -> bool:
    """True iff advancing half a period equals the kappa image of the state."""
    half = flow(u0, 0.5 * P, nu, h)
    scale = norm2(u0)
    if scale == 0.0:
        return True
    return norm2(half - kappa(u0)) <= tol * scale


def write_extended_csv(path, e: ExtendedField) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("x,u\n")
        for x, v in zip(e.x, e.values):
            fh.write(f"{x:.17g},{v:.17g}\n")
