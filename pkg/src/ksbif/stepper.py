"""Semi-implicit Euler time stepping of the KS problem and its linearization.

One step advances u by solving the implicit operator with the Green's-function
tables:

    u+  = K0 u + (h/2) K1 u^2
    u4+ = K4 u + (h/2) K5 u^2          (cached fourth derivative)
    w+  = K0 (w - h*omega*u4+) + h K1 (u w)

The tangent step is the exact derivative of the state step with respect to
(u, nu), so Newton's Jacobian-vector products are exact derivatives of the
discrete flow.

A flow over total time T uses n = round(T/h) steps: n-1 full steps followed
by one fractional step of size T - (n-1)h with its own table set, which keeps
the flow map smooth in T between half-step boundaries (Newton on the orbit
period requires this).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ChebyshevGrid, Field, make_grid
from .greens import GreensTables, OperatorParams, assemble_tables, get_tables


class FlowError(RuntimeError):
    """Raised when the state blows up during integration."""

    def __init__(self, msg: str, last_time: float):
        super().__init__(msg)
        self.last_time = last_time


BLOWUP_NORM = 1e8
_CHECK_EVERY = 64


@dataclass(frozen=True)
class StatePoint:
    """State u with its cached fourth derivative at elapsed time t."""

    u: Field
    u4: Field
    t: float


@dataclass(frozen=True)
class TangentState:
    """Tangent field w with parameter perturbation omega."""

    w: Field
    omega: float


def make_state(u: Field, tables: GreensTables, t: float = 0.0) -> StatePoint:
    """Initial StatePoint; u4 is produced by a zero-length bootstrap table pass.

    At t = 0 no previous step exists, so the fourth derivative is taken from
    the spectral differentiation of u (only step() outputs carry the exact
    convolved u4).
    """
    from .grid import diff_matrix

    u4 = Field(u.grid, diff_matrix(u.grid, 4) @ u.values)
    return StatePoint(u=u, u4=u4, t=t)


def step(s: StatePoint, tables: GreensTables) -> StatePoint:
    """One semi-implicit Euler step of size tables.params.h."""
    u = s.u.values
    z = np.concatenate([u, u * u])
    u_next = tables.op_state @ z
    u4_next = tables.op_deriv @ z
    g = s.u.grid
    return StatePoint(
        u=Field(g, u_next), u4=Field(g, u4_next), t=s.t + tables.params.h
    )


def step_linearized(
    s: StatePoint, s_next: StatePoint, v: TangentState, tables: GreensTables
) -> TangentState:
    """One step of the linearization about the trajectory segment s -> s_next."""
    h = tables.params.h
    if abs(s_next.t - s.t - h) > 1e-12:
        raise ValueError("s_next is not the step of s under these tables")
    w = v.w.values
    z = np.concatenate([w - h * v.omega * s_next.u4.values, s.u.values * w])
    return TangentState(w=Field(s.u.grid, tables.op_tangent @ z), omega=v.omega)


def split_steps(T_total: float, h: float) -> tuple[int, float]:
    """Number of steps and the fractional final step size for a T-flow."""
    if T_total <= 0.0:
        raise ValueError(f"total time must be positive, got {T_total}")
    n = max(1, round(T_total / h))
    h_last = T_total - (n - 1) * h
    return n, h_last


@dataclass
class Trajectory:
    """Recorded state history of one flow, for tangent propagation.

    states[k] is the state before step k (k = 0..n-1); u4_next[k] is the
    fourth derivative after step k, needed by the nu-perturbation forcing.
    """

    grid: ChebyshevGrid
    nu: float
    h: float
    n_steps: int
    h_last: float
    T_total: float
    states: np.ndarray
    u4_next: np.ndarray | None
    tables: GreensTables
    tables_last: GreensTables

    @property
    def final_state(self) -> np.ndarray:
        return self._final

    def __post_init__(self):
        self._final = None


def _tables_pair(N: int, T_total: float, nu: float, h: float):
    n, h_last = split_steps(T_total, h)
    tab = get_tables(N, h, nu)
    if abs(h_last - h) < 1e-14:
        tab_last = tab
    else:
        tab_last = assemble_tables(make_grid(N), OperatorParams(h=h_last, nu=nu))
    return n, h_last, tab, tab_last


def flow(
    u0: Field,
    T_total: float,
    nu: float,
    h: float,
    snapshot_every: int | None = None,
) -> Field | tuple[Field, np.ndarray]:
    """Integrate the state over T_total; optionally record snapshots.

    With snapshot_every = m, returns (u_final, trace) where trace rows are
    (t, u(x_0), ..., u(x_N)) every m steps, including t = 0 and the end state.
    """
    g = u0.grid
    n, h_last, tab, tab_last = _tables_pair(g.order, T_total, nu, h)
    u = u0.values.copy()
    z = np.empty(2 * g.size)
    rows = []
    t = 0.0
    if snapshot_every:
        rows.append(np.concatenate([[0.0], u]))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            T = tab if k < n - 1 else tab_last
            z[: g.size] = u
            np.multiply(u, u, out=z[g.size :])
            u = T.op_state @ z
            t += T.params.h
            if (k % _CHECK_EVERY == _CHECK_EVERY - 1 or k == n - 1) and not np.all(
                np.isfinite(u)
            ):
                raise FlowError(f"flow blew up by t={t:.6g} (nu={nu})", last_time=t - h)
            if snapshot_every and ((k + 1) % snapshot_every == 0 or k == n - 1):
                rows.append(np.concatenate([[t], u]))
    out = Field(g, u)
    if snapshot_every:
        return out, np.array(rows)
    return out


def compute_trajectory(
    u0: Field, T_total: float, nu: float, h: float, need_u4: bool = False
) -> Trajectory:
    """Integrate and record the state history for later tangent propagation."""
    g = u0.grid
    n, h_last, tab, tab_last = _tables_pair(g.order, T_total, nu, h)
    states = np.empty((n, g.size))
    u4s = np.empty((n, g.size)) if need_u4 else None
    u = u0.values.copy()
    z = np.empty(2 * g.size)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            T = tab if k < n - 1 else tab_last
            states[k] = u
            z[: g.size] = u
            np.multiply(u, u, out=z[g.size :])
            u = T.op_state @ z
            if need_u4:
                u4s[k] = T.op_deriv @ z
            if k % _CHECK_EVERY == _CHECK_EVERY - 1 and not np.all(np.isfinite(u)):
                raise FlowError(
                    f"flow blew up by t={(k + 1) * h:.6g} (nu={nu})", last_time=k * h
                )
    if not np.all(np.isfinite(u)):
        raise FlowError(f"flow blew up by t={T_total:.6g} (nu={nu})", last_time=T_total)
    traj = Trajectory(
        grid=g,
        nu=nu,
        h=h,
        n_steps=n,
        h_last=h_last,
        T_total=T_total,
        states=states,
        u4_next=u4s,
        tables=tab,
        tables_last=tab_last,
    )
    traj._final = u
    return traj


def propagate_tangent(traj: Trajectory, w0: np.ndarray, omega: float = 0.0) -> np.ndarray:
    """Propagate one tangent vector along a recorded trajectory."""
    if omega != 0.0 and traj.u4_next is None:
        raise ValueError("trajectory was recorded without u4 (needed for omega != 0)")
    g = traj.grid
    w = np.asarray(w0, dtype=float).copy()
    z = np.empty(2 * g.size)
    n = traj.n_steps
    states = traj.states
    if omega == 0.0:
        for k in range(n):
            T = traj.tables if k < n - 1 else traj.tables_last
            z[: g.size] = w
            np.multiply(states[k], w, out=z[g.size :])
            w = T.op_tangent @ z
    else:
        u4s = traj.u4_next
        for k in range(n):
            T = traj.tables if k < n - 1 else traj.tables_last
            np.multiply(states[k], w, out=z[g.size :])
            z[: g.size] = w
            z[: g.size] -= (T.params.h * omega) * u4s[k]
            w = T.op_tangent @ z
    return w


def flow_linearized(
    u0: Field, w0: Field, omega: float, T_total: float, nu: float, h: float
) -> Field:
    """Directional derivative of the flow in (u, nu) along (w0, omega)."""
    traj = compute_trajectory(u0, T_total, nu, h, need_u4=(omega != 0.0))
    return Field(u0.grid, propagate_tangent(traj, w0.values, omega))


def flow_time_derivative(traj: Trajectory) -> np.ndarray:
    """Exact derivative of the discrete flow with respect to total time.

    Only the fractional last step depends on T (the step count is locally
    constant), and the table derivative with respect to its step size tau
    satisfies dK0/dtau = (K0 K0 - K0)/tau, giving

        d phi / dT = (K0_last (phi) - phi)/tau + (1/2) K1_last v^2

    with v the state before the last step.
    """
    T = traj.tables_last
    tau = T.params.h
    v = traj.states[-1]
    phi = traj.final_state
    return (T.K0 @ phi - phi) / tau + 0.5 * (T.K1 @ (v * v))


def rhs(f: Field, nu: float) -> Field:
    """Continuous-time right-hand side -(u u_x + u_xx + nu u_xxxx), spectrally."""
    from .grid import diff_matrix

    g = f.grid
    u = f.values
    du = diff_matrix(g) @ u
    d2 = diff_matrix(g, 2) @ u
    d4 = diff_matrix(g, 4) @ u
    return Field(g, -(u * du + d2 + nu * d4))


def write_spacetime_csv(path, grid: ChebyshevGrid, trace: np.ndarray) -> None:
    """Export a snapshot trace: header row 't', node coordinates; then rows t, u."""
    with open(path, "w", newline="\n") as fh:
        fh.write("t," + ",".join(f"{x:.17g}" for x in grid.nodes) + "\n")
        for row in trace:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
