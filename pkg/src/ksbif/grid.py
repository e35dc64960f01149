"""Closed Chebyshev grid with barycentric interpolation and Clenshaw-Curtis quadrature.

Every field in the package lives on one of these grids.  Nodes are stored in
descending order, x_0 = 1 down to x_N = -1, so that the reflection x -> -x is
the exact index permutation j -> N - j.  The order N is restricted to even
values so that x = 0 is a node (the periodic-orbit phase condition pins the
midpoint value).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class GridError(ValueError):
    """Raised for invalid grid construction or mismatched grids."""


@dataclass(frozen=True)
class ChebyshevGrid:
    """Closed Chebyshev (Lobatto) grid on [-1, 1].

    nodes[j] = cos(j*pi/N), descending; bary_weights are the barycentric
    interpolation weights; quad_weights the Clenshaw-Curtis weights, which
    sum to 2 and integrate polynomials of degree <= N exactly.
    """

    order: int
    nodes: np.ndarray
    bary_weights: np.ndarray
    quad_weights: np.ndarray

    @property
    def size(self) -> int:
        return self.order + 1

    @property
    def mid_index(self) -> int:
        return self.order // 2


@dataclass(frozen=True)
class Field:
    """Grid values of a scalar function u(x)."""

    grid: ChebyshevGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.size,):
            raise GridError(
                f"field has {vals.shape} values, grid expects ({self.grid.size},)"
            )
        object.__setattr__(self, "values", vals)

    def __add__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def __rmul__(self, c: float) -> "Field":
        return Field(self.grid, c * self.values)


def _check_same_grid(f: Field, g: Field) -> None:
    if f.grid.order != g.grid.order:
        raise GridError("fields live on different grids")


@lru_cache(maxsize=16)
def make_grid(N: int) -> ChebyshevGrid:
    """Build the order-N closed Chebyshev grid.

    N must be even and >= 2 so that x = 0 is a node.  Node symmetry
    x_{N-j} = -x_j is enforced by construction (mirror the upper half).
    """
    if N < 2 or N % 2 != 0:
        raise GridError(f"grid order must be even and >= 2, got {N}")

    half = np.cos(np.arange(N // 2) * np.pi / N)
    nodes = np.empty(N + 1)
    nodes[: N // 2] = half
    nodes[N // 2] = 0.0
    nodes[N // 2 + 1 :] = -half[::-1]

    bary = np.ones(N + 1)
    bary[1::2] = -1.0
    bary[0] *= 0.5
    bary[N] *= 0.5

    nodes.flags.writeable = False
    bary.flags.writeable = False
    quad = _clenshaw_curtis_weights(N)
    quad.flags.writeable = False
    return ChebyshevGrid(order=N, nodes=nodes, bary_weights=bary, quad_weights=quad)


def _clenshaw_curtis_weights(N: int) -> np.ndarray:
    """Clenshaw-Curtis weights for even N via the explicit cosine-sum formula."""
    w = np.zeros(N + 1)
    theta = np.arange(1, N) * np.pi / N
    v = np.ones(N - 1)
    for m in range(1, N // 2):
        v -= 2.0 * np.cos(2.0 * m * theta) / (4.0 * m * m - 1.0)
    v -= np.cos(N * theta) / (N * N - 1.0)
    w[1:N] = 2.0 * v / N
    w[0] = w[N] = 1.0 / (N * N - 1.0)
    # symmetrize against rounding so w_{N-j} = w_j exactly
    w = 0.5 * (w + w[::-1])
    return w


def interpolate(f: Field, x: float) -> float:
    """Evaluate the barycentric interpolant of f at x in [-1, 1]."""
    if not -1.0 <= x <= 1.0:
        raise GridError(f"evaluation point {x} outside [-1, 1]")
    nodes = f.grid.nodes
    diff = x - nodes
    exact = np.nonzero(diff == 0.0)[0]
    if exact.size:
        return float(f.values[exact[0]])
    t = f.grid.bary_weights / diff
    return float(t @ f.values / t.sum())


def interp_matrix(grid: ChebyshevGrid, xs: np.ndarray) -> np.ndarray:
    """Matrix E with (E @ values)[q] = interpolant(xs[q]) for each target point."""
    xs = np.asarray(xs, dtype=float)
    diff = xs[:, None] - grid.nodes[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = grid.bary_weights[None, :] / diff
        E = t / t.sum(axis=1, keepdims=True)
    hit_rows, hit_cols = np.nonzero(diff == 0.0)
    if hit_rows.size:
        E[hit_rows, :] = 0.0
        E[hit_rows, hit_cols] = 1.0
    return E


def resample(f: Field, new_grid: ChebyshevGrid) -> Field:
    """Re-interpolate a field onto another Chebyshev grid."""
    return Field(new_grid, interp_matrix(f.grid, new_grid.nodes) @ f.values)


def quad(f: Field) -> float:
    """Clenshaw-Curtis integral of f over [-1, 1]."""
    return float(f.grid.quad_weights @ f.values)


def inner(f: Field, g: Field) -> float:
    """L2 inner product <f, g> = integral of f*g."""
    _check_same_grid(f, g)
    return float(f.grid.quad_weights @ (f.values * g.values))


def norm2(f: Field) -> float:
    """Quadrature L2 norm of f."""
    return float(np.sqrt(max(inner(f, f), 0.0)))


def inner_values(grid: ChebyshevGrid, u: np.ndarray, v: np.ndarray) -> float:
    """Array-level L2 inner product (hot-path variant of ``inner``)."""
    return float(grid.quad_weights @ (u * v))


@lru_cache(maxsize=32)
def _diff_matrix_cached(N: int, order: int) -> np.ndarray:
    grid = make_grid(N)
    x = grid.nodes
    w = grid.bary_weights
    with np.errstate(divide="ignore", invalid="ignore"):
        D = np.where(
            x[:, None] != x[None, :],
            (w[None, :] / w[:, None]) / (x[:, None] - x[None, :]),
            0.0,
        )
    # negative sum trick keeps row sums exactly zero (constants differentiate to 0)
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    out = D
    for _ in range(order - 1):
        out = D @ out
    out.flags.writeable = False
    return out


def diff_matrix(grid: ChebyshevGrid, order: int = 1) -> np.ndarray:
    """Spectral differentiation matrix of the given derivative order."""
    if order < 1:
        raise GridError("derivative order must be >= 1")
    return _diff_matrix_cached(grid.order, order)
