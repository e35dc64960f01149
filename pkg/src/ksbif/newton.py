"""Matrix-free Newton-Raphson with a GMRES inner solver for flow fixed points.

Equilibria and periodic orbits both solve

    phi(u, P, nu) - u = 0,   psi = 0

where phi is the time-P flow.  For equilibria the phase condition pins the
preconditioning time, psi = P - c (c = 1); integrating to time c rather than
solving the steady operator directly clusters the Jacobian spectrum, which is
what keeps the Krylov iteration count around ten.  For orbits psi pins the
state value at the midpoint node x = 0 to the point's section level (zero for
orbits born on reflection-fixed branches; see ContinuationPoint).

Jacobian actions are exact derivatives of the discrete flow: tangent
propagation along the recorded trajectory supplies d phi/d(u, nu), and the
closed-form table derivative supplies d phi/dP.  During pseudo-arclength
continuation an additional constraint row <tangent, x - x_base> - ds = 0
activates nu as an unknown.

Norms follow the composite convention sqrt(||u||_2^2 + psi^2) with the
quadrature L2 norm on the field part.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np

from .grid import Field, norm2
from .greens import GreensError
from .stepper import FlowError, compute_trajectory, flow_time_derivative, propagate_tangent


@dataclass(frozen=True)
class NewtonSettings:
    residual_tol: float = 1e-8
    krylov_tol: float = 1e-6
    max_newton: int = 20
    max_krylov: int = 40
    c: float = 1.0  # preconditioning integration time for equilibria

    def __post_init__(self):
        for name in ("residual_tol", "krylov_tol", "max_newton", "max_krylov", "c"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ContinuationPoint:
    """One point on a branch: state, period (or preconditioning time), nu."""

    u: Field
    P: float
    nu: float
    kind: str  # 'equilibrium' | 'orbit'
    section_level: float = 0.0

    def __post_init__(self):
        if self.kind not in ("equilibrium", "orbit"):
            raise ValueError(f"unknown point kind {self.kind!r}")
        if self.P <= 0:
            raise ValueError("period must be positive")


@dataclass(frozen=True)
class ArclengthConstraint:
    """Pseudo-arclength row: <tangent, x - base> = ds in the composite metric."""

    t_u: np.ndarray
    t_P: float
    t_nu: float
    base_u: np.ndarray
    base_P: float
    base_nu: float
    ds: float


@dataclass
class NewtonInfo:
    converged: bool = False
    iterations: int = 0
    residual_history: list = dfield(default_factory=list)
    gmres_iterations: list = dfield(default_factory=list)
    message: str = ""


class NewtonError(RuntimeError):
    def __init__(self, msg: str, info: NewtonInfo):
        super().__init__(msg)
        self.info = info


def residual(p: ContinuationPoint, h: float, settings: NewtonSettings | None = None):
    """(field part, phase part) of the fixed-point equations at p."""
    from .stepper import flow

    settings = settings or NewtonSettings()
    phi = flow(p.u, p.P, p.nu, h)
    if p.kind == "equilibrium":
        psi = p.P - settings.c
    else:
        psi = p.u.values[p.u.grid.mid_index] - p.section_level
    return phi - p.u, psi


def gmres(matvec, rhs, tol: float, maxit: int, inner=None):
    """Unrestarted GMRES via Arnoldi least squares.

    inner(a, b) sets the inner product (Euclidean by default); the returned
    info dict reports iterations, the achieved relative residual, and whether
    the tolerance was met.
    """
    if inner is None:
        inner = lambda a, b: float(a @ b)
    nrm = lambda a: np.sqrt(max(inner(a, a), 0.0))
    beta = nrm(rhs)
    info = {"iterations": 0, "relative_residual": 0.0, "converged": True}
    if beta == 0.0:
        return np.zeros_like(rhs), info
    maxit = min(maxit, rhs.size)
    V = np.zeros((rhs.size, maxit + 1))
    H = np.zeros((maxit + 1, maxit))
    V[:, 0] = rhs / beta
    y = None
    j_used = 0
    for j in range(maxit):
        w = matvec(V[:, j])
        for i in range(j + 1):
            H[i, j] = inner(V[:, i], w)
            w = w - H[i, j] * V[:, i]
        for i in range(j + 1):
            corr = inner(V[:, i], w)
            H[i, j] += corr
            w = w - corr * V[:, i]
        H[j + 1, j] = nrm(w)
        j_used = j + 1
        e1 = np.zeros(j + 2)
        e1[0] = beta
        y, res2, _, _ = np.linalg.lstsq(H[: j + 2, : j + 1], e1, rcond=None)
        resid = np.linalg.norm(H[: j + 2, : j + 1] @ y - e1)
        if resid <= tol * beta:
            break
        if H[j + 1, j] <= 1e-14 * beta:
            break  # lucky breakdown: Krylov space is invariant
        V[:, j + 1] = w / H[j + 1, j]
    x = V[:, :j_used] @ y
    rel = resid / beta
    info.update(
        iterations=j_used,
        relative_residual=float(rel),
        converged=bool(rel <= tol),
    )
    return x, info


def _composite_inner(grid, n, has_nu):
    w = grid.quad_weights

    def inner(a, b):
        s = float((a[:n] * w) @ b[:n]) + a[n] * b[n]
        if has_nu:
            s += a[n + 1] * b[n + 1]
        return s

    return inner


def newton_solve(
    guess: ContinuationPoint,
    settings: NewtonSettings,
    h: float,
    constraint: ArclengthConstraint | None = None,
) -> tuple[ContinuationPoint, NewtonInfo]:
    """Newton iteration on (u, P) -- and nu when an arclength row is active.

    Jacobian-vector products come from linearized flow propagation; updates
    are solved by GMRES in the composite inner product.  A single half-step
    damping retry is attempted when the residual increases; three consecutive
    increases or max_newton iterations abort with the iterate history.
    """
    grid = guess.u.grid
    n = grid.size
    has_nu = constraint is not None
    dim = n + 2 if has_nu else n + 1
    inner = _composite_inner(grid, n, has_nu)
    mid = grid.mid_index
    info = NewtonInfo()

    u = guess.u.values.copy()
    P = guess.P
    nu = guess.nu

    def eval_residual(u, P, nu):
        traj = compute_trajectory(Field(grid, u), P, nu, h, need_u4=has_nu)
        rf = traj.final_state - u
        if guess.kind == "equilibrium":
            psi = P - settings.c
        else:
            psi = u[mid] - guess.section_level
        parts = [rf, [psi]]
        if has_nu:
            c = constraint
            arc = (
                inner_field(grid, c.t_u, u - c.base_u)
                + c.t_P * (P - c.base_P)
                + c.t_nu * (nu - c.base_nu)
                - c.ds
            )
            parts.append([arc])
        R = np.concatenate(parts)
        rnorm = np.sqrt(max(inner(R, R), 0.0))
        return R, rnorm, traj

    def inner_field(grid, a, b):
        return float((a * grid.quad_weights) @ b)

    try:
        R, rnorm, traj = eval_residual(u, P, nu)
    except (FlowError, GreensError) as exc:
        raise NewtonError(f"initial residual evaluation failed: {exc}", info)
    info.residual_history.append(rnorm)

    increases = 0
    for it in range(settings.max_newton):
        if rnorm <= settings.residual_tol:
            info.converged = True
            info.iterations = it
            return (
                ContinuationPoint(
                    u=Field(grid, u), P=P, nu=nu, kind=guess.kind,
                    section_level=guess.section_level,
                ),
                info,
            )

        dphidP = flow_time_derivative(traj)

        def matvec(d):
            du, dP = d[:n], d[n]
            dnu = d[n + 1] if has_nu else 0.0
            jf = propagate_tangent(traj, du, omega=dnu) + dphidP * dP - du
            jpsi = dP if guess.kind == "equilibrium" else du[mid]
            rows = [jf, [jpsi]]
            if has_nu:
                c = constraint
                rows.append([inner_field(grid, c.t_u, du) + c.t_P * dP + c.t_nu * dnu])
            return np.concatenate(rows)

        delta, ginfo = gmres(matvec, -R, settings.krylov_tol, settings.max_krylov, inner)
        info.gmres_iterations.append(ginfo["iterations"])

        step_scale = 1.0
        accepted = False
        for _ in range(4):  # full step, then damping retries
            u_new = u + step_scale * delta[:n]
            P_new = P + step_scale * delta[n]
            nu_new = nu + step_scale * delta[n + 1] if has_nu else nu
            if P_new <= h or not 0.0 < nu_new <= 1.0:
                step_scale *= 0.5
                continue
            if guess.kind == "orbit" and abs(P_new - P) > 0.5 * P:
                # near-degenerate period column: keep the shooting period sane
                step_scale *= 0.5
                continue
            try:
                R_new, rnorm_new, traj_new = eval_residual(u_new, P_new, nu_new)
            except (FlowError, GreensError):
                step_scale *= 0.5
                continue
            if rnorm_new < rnorm or step_scale < 1.0:
                accepted = True
                break
            step_scale *= 0.5
        if not accepted:
            info.iterations = it + 1
            info.message = "step rejected (flow failure or invalid parameters)"
            raise NewtonError("Newton step could not be taken", info)

        increases = increases + 1 if rnorm_new >= rnorm else 0
        u, P, nu = u_new, P_new, nu_new
        R, rnorm, traj = R_new, rnorm_new, traj_new
        info.residual_history.append(rnorm)
        if increases >= 3:
            info.iterations = it + 1
            info.message = "diverging (3 consecutive residual increases)"
            raise NewtonError("Newton iteration diverging", info)

    if rnorm <= settings.residual_tol:
        info.converged = True
        info.iterations = settings.max_newton
        return (
            ContinuationPoint(
                u=Field(grid, u), P=P, nu=nu, kind=guess.kind,
                section_level=guess.section_level,
            ),
            info,
        )
    info.iterations = settings.max_newton
    info.message = f"max_newton reached (residual {rnorm:.3e})"
    raise NewtonError("Newton did not converge", info)


def point_residual_norm(p: ContinuationPoint, h: float, settings=None) -> float:
    """Composite residual norm of a point (acceptance check)."""
    rf, psi = residual(p, h, settings)
    return float(np.sqrt(norm2(rf) ** 2 + psi**2))
