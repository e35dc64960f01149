"""Arnoldi iteration on linearized flow maps: equilibrium spectra and Floquet
multipliers.

Spectra are computed from the time-T linearized flow (T = 1 for equilibria,
T = P for orbit monodromy) with a fixed deterministic start vector, so results
are reproducible bit-for-bit.

Growth rates of equilibria are reported two ways.  ``rates_map`` is
log(mu)/T of the map multipliers; it carries the O(h) bias of the
semi-implicit Euler discretization and, for strongly contracted modes, the
roundoff floor of the T-map (a mode with rate -37 is multiplied by 1e-16 over
T = 1, below the noise the dominant mode injects).  ``rates`` therefore
inverts the one-step multiplier mu_step = 1/(1 - h*lambda): the Arnoldi
subspace is re-diagonalized against the single-step tangent map, whose
eigenvalues stay O(1) and well separated, and the resulting per-mode
mu_step are mapped back to growth rates.  At the zero state this is exact up
to roundoff.  Stability flags and bifurcation test functions use the map
multipliers directly (the honest |mu| vs 1 criterion of the discrete
system); both orderings agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Field, norm2
from .stepper import Trajectory, compute_trajectory, propagate_tangent, rhs

STABILITY_TOL = 1e-8


class SpectrumError(RuntimeError):
    """Raised for unconverged inputs or unidentifiable trivial multipliers."""


@dataclass
class SpectrumResult:
    """Leading Ritz data of one linearized map."""

    ritz_values: np.ndarray  # map multipliers, sorted by descending growth
    ritz_vectors: list  # complex arrays, unit Euclidean norm
    residuals: np.ndarray  # ||A v - mu v|| per pair
    T_map: float
    converged_count: int
    rates_map: np.ndarray  # log(mu)/T
    rates: np.ndarray  # discretization-corrected growth rates
    trivial_index: int | None = None  # orbit phase multiplier, if identified
    extra: dict = field(default_factory=dict)

    @property
    def stable(self) -> bool:
        """All (nontrivial) growth rates negative within STABILITY_TOL."""
        keep = [i for i in range(len(self.ritz_values)) if i != self.trivial_index]
        if not keep:
            return True
        return max(self.rates_map[keep].real) < STABILITY_TOL

    def n_unstable(self) -> int:
        keep = [i for i in range(len(self.ritz_values)) if i != self.trivial_index]
        return int(sum(self.rates_map[i].real > STABILITY_TOL for i in keep))


def _fresh_direction(V: np.ndarray, j: int, counter: list) -> np.ndarray | None:
    """Deterministic replacement direction orthogonal to the current basis."""
    n = V.shape[0]
    while counter[0] < n:
        w = np.zeros(n)
        w[counter[0]] = 1.0
        counter[0] += 1
        for i in range(j + 1):
            w -= (V[:, i] @ w) * V[:, i]
        for i in range(j + 1):
            w -= (V[:, i] @ w) * V[:, i]
        nrm = np.linalg.norm(w)
        if nrm > 1e-8:
            return w / nrm
    return None


def arnoldi(matvec, start: np.ndarray, m: int, want: int):
    """m-step Arnoldi factorization; returns the ``want`` leading Ritz pairs.

    Modified Gram-Schmidt with one reorthogonalization pass.  A happy
    breakdown (exact invariant subspace) terminates early once ``want`` pairs
    are available; if it strikes earlier -- routine for strongly contracting
    maps, where a few steps exhaust the start vector's surviving content --
    the subdiagonal is zeroed and the basis is extended with a deterministic
    fresh direction so the remaining modes can still be explored.

    Result: (values, vectors, residuals) with values sorted by descending
    magnitude, vectors of unit Euclidean norm, residuals from the standard
    last-subdiagonal estimate.
    """
    if m < want + 5:
        raise ValueError(f"Krylov dimension {m} too small for {want} wanted pairs")
    n = start.size
    m = min(m, n)
    V = np.zeros((n, m + 1))
    H = np.zeros((m + 1, m))
    nrm = np.linalg.norm(start)
    if nrm == 0.0:
        raise ValueError("start vector must be nonzero")
    V[:, 0] = start / nrm
    k_eff = m
    counter = [0]
    for j in range(m):
        w = matvec(V[:, j])
        for i in range(j + 1):
            H[i, j] = V[:, i] @ w
            w -= H[i, j] * V[:, i]
        for i in range(j + 1):  # one reorthogonalization pass
            c = V[:, i] @ w
            H[i, j] += c
            w -= c * V[:, i]
        beta = np.linalg.norm(w)
        if beta <= 1e-12 * max(1.0, np.abs(H[: j + 1, : j + 1]).max()):
            if j + 1 >= want:
                k_eff = j + 1
                H[j + 1, j] = 0.0
                break
            fresh = _fresh_direction(V, j, counter)
            if fresh is None:
                k_eff = j + 1
                H[j + 1, j] = 0.0
                break
            H[j + 1, j] = 0.0
            V[:, j + 1] = fresh
        else:
            H[j + 1, j] = beta
            V[:, j + 1] = w / beta

    Hk = H[:k_eff, :k_eff]
    vals, Y = np.linalg.eig(Hk)
    beta = H[k_eff, k_eff - 1] if k_eff <= m else 0.0
    order = np.argsort(-np.abs(vals))
    vals = vals[order]
    Y = Y[:, order]
    res = np.abs(beta) * np.abs(Y[-1, :])
    take = min(want, k_eff)
    vectors = []
    for i in range(take):
        v = V[:, :k_eff] @ Y[:, i]
        v /= np.linalg.norm(v)
        vectors.append(v)
    return vals[:take], vectors, res[:take]


def propagate(traj: Trajectory, w: np.ndarray) -> np.ndarray:
    """Real or complex tangent propagation along a recorded trajectory."""
    if np.iscomplexobj(w):
        return propagate_tangent(traj, w.real) + 1j * propagate_tangent(traj, w.imag)
    return propagate_tangent(traj, w)


def _one_step(traj: Trajectory, v: np.ndarray) -> np.ndarray:
    """Single application of the one-step tangent map at the trajectory start."""
    T = traj.tables
    u0 = traj.states[0]
    if np.iscomplexobj(v):
        return _one_step(traj, v.real) + 1j * _one_step(traj, v.imag)
    return T.op_tangent @ np.concatenate([v, u0 * v])


def _corrected_rate(mu_step: complex, h: float) -> complex:
    """Invert the semi-implicit one-step multiplier 1/(1 - h*lambda)."""
    if mu_step == 0.0:
        return complex(-1.0 / h)
    return (1.0 - 1.0 / mu_step) / h


def _map_rates(mus: np.ndarray, T: float) -> np.ndarray:
    safe = np.where(np.abs(mus) < 1e-300, 1e-300, mus).astype(complex)
    return np.log(safe) / T


def default_start_vector(grid) -> np.ndarray:
    """Normalized sum of the four leading kernel functions (deterministic)."""
    from .symmetry import kernel_function

    v = sum(
        kernel_function(grid, n, parity).field.values
        for n in (1, 2)
        for parity in ("even", "odd")
    )
    return v / np.linalg.norm(v)


def equilibrium_spectrum(
    u_star: Field,
    nu: float,
    T: float = 1.0,
    want: int = 5,
    h: float = 1e-3,
    m: int = 30,
) -> SpectrumResult:
    """Leading spectrum of the linearized time-T flow at an equilibrium.

    At an equilibrium the T-map is a power of the single-step tangent map, so
    both share eigenvectors exactly -- but the T-map multiplies deep modes by
    factors far below roundoff, destroying their relative information in one
    application.  The Krylov iteration therefore runs on the one-step map,
    whose leading multipliers 1/(1 - h*lambda) stay O(1) and separated; the
    time-T multipliers and exact residuals ||A_T v - mu v|| are then
    evaluated per eigenvector, and growth rates come from inverting the
    one-step multipliers.
    """
    traj = compute_trajectory(u_star, T, nu, h, need_u4=False)
    drift = norm2(Field(u_star.grid, traj.final_state - u_star.values))
    if drift > 1e-6 * max(1.0, norm2(u_star)):
        raise SpectrumError(f"input is not an equilibrium (time-{T} drift {drift:.2e})")
    mu_steps, vectors, _ = arnoldi(
        lambda w: _one_step(traj, w), default_start_vector(u_star.grid), m, want
    )
    rates = np.array([_corrected_rate(mu, h) for mu in mu_steps])
    order = np.lexsort((-rates.imag, -rates.real))
    rates = rates[order]
    vectors = [vectors[i] for i in order]

    mus = np.empty(len(vectors), dtype=complex)
    residuals = np.empty(len(vectors))
    for i, v in enumerate(vectors):
        av = propagate(traj, v)
        mus[i] = np.vdot(v, av)
        residuals[i] = np.linalg.norm(av - mus[i] * v)
    return SpectrumResult(
        ritz_values=mus,
        ritz_vectors=vectors,
        residuals=residuals,
        T_map=T,
        converged_count=int(np.sum(residuals <= 1e-6)),
        rates_map=_map_rates(mus, T),
        rates=rates,
    )


def floquet(
    u0: Field,
    P: float,
    nu: float,
    want: int = 5,
    h: float = 1e-3,
    m: int = 30,
) -> SpectrumResult:
    """Floquet multipliers of the monodromy map of one periodic orbit.

    The trivial phase multiplier is identified as the Ritz value nearest +1
    whose eigenvector aligns (cosine >= 0.99) with the orbit's time
    derivative; it must lie within 1e-3 of +1 or the orbit is rejected as
    unconverged.
    """
    traj = compute_trajectory(u0, P, nu, h, need_u4=False)
    mus, vectors, residuals = arnoldi(
        lambda w: propagate(traj, w), default_start_vector(u0.grid), m, want
    )

    tangent = rhs(u0, nu).values
    tnorm = np.linalg.norm(tangent)
    if tnorm < 1e-12:
        raise SpectrumError("state has zero time derivative; not a periodic orbit")
    trivial = None
    best = np.inf
    for i, (mu, v) in enumerate(zip(mus, vectors)):
        dist = abs(mu - 1.0)
        cosine = abs(np.vdot(v, tangent)) / (np.linalg.norm(v) * tnorm)
        if cosine >= 0.99 and dist < best:
            best = dist
            trivial = i
    if trivial is None or best > 1e-3:
        raise SpectrumError(
            f"trivial Floquet multiplier not found within 1e-3 of +1 "
            f"(best distance {best:.2e})"
        )
    rates_map = _map_rates(mus, P)
    return SpectrumResult(
        ritz_values=mus,
        ritz_vectors=vectors,
        residuals=residuals,
        T_map=P,
        converged_count=int(np.sum(residuals <= 1e-6)),
        rates_map=rates_map,
        rates=rates_map.copy(),
        trivial_index=trivial,
    )
