"""Pseudo-arclength continuation, bifurcation detection, and branch switching.

Branches of equilibria and periodic orbits are followed in nu with a secant
predictor and an arclength-constrained Newton corrector; every accepted point
carries its leading spectrum, reflection-symmetry class, and (for orbits) a
shift-reflect flag.  Instability counts between consecutive points drive
event detection; located events are classified by the symmetry rules:

  * reflection-fixed branch, reflection-antisymmetric null vector:
    symmetry-breaking pitchfork (children form a kappa pair);
  * reflection-fixed branch, reflection-fixed null vector: pitchfork whose
    children are individually kappa-fixed (the extended problem's broken
    translation shows up this way);
  * branch without reflection symmetry: transcritical;
  * null vector parallel to the branch tangent with d(nu)/ds flipping: fold;
  * complex pair: Hopf (orbit seeding via the critical eigenvector);
  * orbit multiplier through +1: orbit pitchfork; through -1: period
    doubling.

The working grid switches from N_coarse to N_fine once nu drops below
nu_switch, with the state re-interpolated and re-converged.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .eigen import STABILITY_TOL, SpectrumError, SpectrumResult, equilibrium_spectrum, floquet
from .grid import Field, interp_matrix, make_grid, norm2
from .newton import (
    ArclengthConstraint,
    ContinuationPoint,
    NewtonError,
    NewtonSettings,
    newton_solve,
)
from .stepper import FlowError, rhs
from .symmetry import classify_kappa, diagram_coord, kappa, shift_reflect_check

IMAG_TOL = 1e-3  # rates with |Im| above this count as a complex pair


@dataclass
class ContinuationConfig:
    h: float = 1e-3
    N_coarse: int = 32
    N_fine: int = 64
    nu_switch: float = 0.03
    want: int = 5
    krylov_m: int = 30
    ds: float = 2e-2
    ds_fine: float = 5e-3
    ds_min: float = 1e-5
    rate_slow: float = 0.25  # leading |Re rate| below this shrinks ds to ds_fine
    max_points: int = 400
    newton: NewtonSettings = field(default_factory=NewtonSettings)
    sr_tol: float = 1e-4
    event_tol: float = 1e-6
    max_bisections: int = 40


@dataclass
class Branch:
    label: str
    kind: str
    points: list = field(default_factory=list)
    tangents: list = field(default_factory=list)
    spectra: list = field(default_factory=list)
    kappa_classes: list = field(default_factory=list)
    sr_flags: list = field(default_factory=list)
    newton_stats: list = field(default_factory=list)
    notes: str = ""

    def __len__(self):
        return len(self.points)

    def nus(self):
        return np.array([p.nu for p in self.points])


@dataclass
class BifurcationRecord:
    type: str  # pitchfork | transcritical | fold | hopf | orbit_pitchfork | period_doubling
    nu_c: float
    point: ContinuationPoint
    critical_rate: complex
    critical_vector: np.ndarray | None
    parent_label: str
    child_labels: list = field(default_factory=list)
    subtype: str = ""
    test_value: float = 0.0
    segment: tuple = (0, 0)
    located: bool = True  # bisection drove |test| below tolerance
    notes: str = ""


class ContinuationError(RuntimeError):
    pass


def _grid_order_for(nu: float, cfg: ContinuationConfig) -> int:
    return cfg.N_fine if nu < cfg.nu_switch else cfg.N_coarse


def _composite_parts(grid, a_u, a_P, a_nu, b_u, b_P, b_nu):
    w = grid.quad_weights
    return float((a_u * w) @ b_u) + a_P * b_P + a_nu * b_nu


def _tangent_between(p_from: ContinuationPoint, p_to: ContinuationPoint):
    grid = p_to.u.grid
    du = p_to.u.values - p_from.u.values
    dP = p_to.P - p_from.P
    dnu = p_to.nu - p_from.nu
    scale = np.sqrt(_composite_parts(grid, du, dP, dnu, du, dP, dnu))
    if scale == 0.0:
        raise ContinuationError("coincident points; no tangent")
    return du / scale, dP / scale, dnu / scale, scale


def _resample_point(p: ContinuationPoint, N: int) -> ContinuationPoint:
    new_grid = make_grid(N)
    vals = interp_matrix(p.u.grid, new_grid.nodes) @ p.u.values
    return replace(p, u=Field(new_grid, vals))


def point_spectrum(p: ContinuationPoint, cfg: ContinuationConfig) -> SpectrumResult:
    if p.kind == "equilibrium":
        return equilibrium_spectrum(
            p.u, p.nu, T=cfg.newton.c, want=cfg.want, h=cfg.h, m=cfg.krylov_m
        )
    return floquet(p.u, p.P, p.nu, want=cfg.want, h=cfg.h, m=cfg.krylov_m)


def _point_metadata(p: ContinuationPoint, cfg: ContinuationConfig):
    spec = point_spectrum(p, cfg)
    kclass = classify_kappa(p.u)
    sr = None
    if p.kind == "orbit":
        sr = shift_reflect_check(p.u, p.P, p.nu, cfg.h, tol=cfg.sr_tol)
    return spec, kclass, sr


def _append_point(branch: Branch, p, tangent, cfg, newton_info=None):
    spec, kclass, sr = _point_metadata(p, cfg)
    branch.points.append(p)
    branch.tangents.append(tangent)
    branch.spectra.append(spec)
    branch.kappa_classes.append(kclass)
    branch.sr_flags.append(sr)
    branch.newton_stats.append(
        {
            "iterations": newton_info.iterations if newton_info else 0,
            "gmres": list(newton_info.gmres_iterations) if newton_info else [],
        }
    )
    return spec


def _initial_tangent(start: ContinuationPoint, direction: int, cfg: ContinuationConfig):
    """Bootstrap tangent from a small fixed-nu perturbation solve."""
    dnu = 1e-4
    for trial in (direction * dnu, -direction * dnu):
        nu2 = start.nu + trial
        if not 0.0 < nu2 <= 1.0:
            continue
        try:
            p2, _ = newton_solve(replace(start, nu=nu2), cfg.newton, cfg.h)
        except NewtonError:
            continue
        t_u, t_P, t_nu, _ = _tangent_between(start, p2)
        if t_nu * direction < 0:
            t_u, t_P, t_nu = -t_u, -t_P, -t_nu
        return t_u, t_P, t_nu
    raise ContinuationError(f"could not bootstrap a tangent at nu={start.nu}")


def continue_branch(
    start: ContinuationPoint,
    direction: int,
    cfg: ContinuationConfig,
    label: str,
    nu_min: float,
    nu_max: float = 1.0,
    max_points: int | None = None,
    ds: float | None = None,
    stop_when=None,
    initial_tangent=None,
) -> Branch:
    """Follow one branch from a converged starting point.

    direction = -1 continues toward decreasing nu initially (+1 increasing);
    the path itself is free to turn.  An explicit initial_tangent (u-part,
    P-part, nu-part) overrides the bootstrap solve -- branch switching uses
    this to walk away from a singular junction.  Stops at the nu window,
    max_points, loop closure, or unrecoverable corrector failure (the branch
    computed so far is returned, with a note).
    """
    max_points = max_points or cfg.max_points
    ds_target = ds or cfg.ds
    branch = Branch(label=label, kind=start.kind)

    if _grid_order_for(start.nu, cfg) != start.u.grid.order:
        start = _resample_point(start, _grid_order_for(start.nu, cfg))
    start, info0 = newton_solve(start, cfg.newton, cfg.h)
    if initial_tangent is not None:
        t_u, t_P, t_nu = initial_tangent
        scale = np.sqrt(
            _composite_parts(start.u.grid, t_u, t_P, t_nu, t_u, t_P, t_nu)
        )
        t = (t_u / scale, t_P / scale, t_nu / scale)
    else:
        t = _initial_tangent(start, direction, cfg)
    _append_point(branch, start, t, cfg, info0)

    ds_cur = ds_target
    failures_in_a_row = 0
    while len(branch) < max_points:
        base = branch.points[-1]
        t_u, t_P, t_nu = branch.tangents[-1]
        guess = ContinuationPoint(
            u=Field(base.u.grid, base.u.values + ds_cur * t_u),
            P=max(base.P + ds_cur * t_P, 2 * cfg.h),
            nu=float(np.clip(base.nu + ds_cur * t_nu, 1e-4, 1.0)),
            kind=base.kind,
            section_level=base.section_level,
        )
        constraint = ArclengthConstraint(
            t_u=t_u, t_P=t_P, t_nu=t_nu,
            base_u=base.u.values, base_P=base.P, base_nu=base.nu, ds=ds_cur,
        )
        try:
            new_pt, ninfo = newton_solve(guess, cfg.newton, cfg.h, constraint=constraint)
        except (NewtonError, FlowError, SpectrumError):
            ds_cur *= 0.5
            failures_in_a_row += 1
            if ds_cur < cfg.ds_min or failures_in_a_row > 4:
                branch.notes += f"corrector failed near nu={base.nu:.6g}; "
                break
            continue
        failures_in_a_row = 0

        # re-resolve on the fine grid when crossing the switching viscosity
        if _grid_order_for(new_pt.nu, cfg) != new_pt.u.grid.order:
            try:
                resampled = _resample_point(new_pt, _grid_order_for(new_pt.nu, cfg))
                new_pt, ninfo = newton_solve(resampled, cfg.newton, cfg.h)
                t_new = _initial_tangent(new_pt, -1 if t_nu < 0 else 1, cfg)
            except (NewtonError, ContinuationError):
                branch.notes += f"grid switch failed near nu={new_pt.nu:.6g}; "
                break
            spec_new = _append_point(branch, new_pt, t_new, cfg, ninfo)
        else:
            t_u2, t_P2, t_nu2, _ = _tangent_between(base, new_pt)
            spec_new = _append_point(branch, new_pt, (t_u2, t_P2, t_nu2), cfg, ninfo)

        # slow down when an eigenvalue is small and still heading toward zero
        # (an imminent crossing), so closely spaced events stay in separate
        # segments; a small but receding rate (fresh off a bifurcation) does
        # not hold the brake
        def _lead(spec):
            return min(
                (
                    abs(r.real)
                    for i, r in enumerate(spec.rates_map)
                    if i != spec.trivial_index
                ),
                default=np.inf,
            )

        lead_new = _lead(spec_new)
        lead_prev = _lead(branch.spectra[-2]) if len(branch) > 1 else np.inf
        approaching = lead_new < cfg.rate_slow and lead_new < 0.97 * lead_prev
        ds_cap = cfg.ds_fine if approaching else ds_target
        ds_cur = min(ds_cur * 1.3, ds_cap)

        if new_pt.nu < nu_min or new_pt.nu > nu_max:
            break
        if stop_when is not None and stop_when(branch):
            break
        # loop closure: returned to the start after a substantial excursion
        if len(branch) > 8 and new_pt.u.grid.order == branch.points[0].u.grid.order:
            du = new_pt.u.values - branch.points[0].u.values
            dist = np.sqrt(
                _composite_parts(
                    new_pt.u.grid, du, new_pt.P - branch.points[0].P,
                    new_pt.nu - branch.points[0].nu, du,
                    new_pt.P - branch.points[0].P, new_pt.nu - branch.points[0].nu,
                )
            )
            if dist < 0.75 * ds_target:
                branch.notes += "closed loop; "
                break
    return branch


def _unstable_profile(spec: SpectrumResult):
    """Instability counts split by crossing type (orbit trivial excluded)."""
    counts = {"real_plus": 0, "real_minus": 0, "complex": 0}
    for i, (mu, rate) in enumerate(zip(spec.ritz_values, spec.rates_map)):
        if i == spec.trivial_index:
            continue
        if rate.real <= STABILITY_TOL:
            continue
        if spec.trivial_index is None:
            kind = "complex" if abs(rate.imag) > IMAG_TOL else "real_plus"
        else:
            if abs(mu.imag) > IMAG_TOL * (1.0 + abs(mu)):
                kind = "complex"
            else:
                kind = "real_plus" if mu.real > 0 else "real_minus"
        counts[kind] += 1
    return counts


def _total_unstable(counts) -> int:
    return counts["real_plus"] + counts["real_minus"] + counts["complex"]


def _critical_index(spec: SpectrumResult):
    """Index of the eigenvalue nearest marginality."""
    best, best_i = np.inf, None
    for i, (mu, rate) in enumerate(zip(spec.ritz_values, spec.rates_map)):
        if i == spec.trivial_index:
            continue
        t = abs(rate.real)
        if t < best:
            best, best_i = t, i
    return best_i


def _solve_on_segment(branch, i, s, cfg):
    """Arclength-constrained solve at offset s along the secant of segment i."""
    a, b = branch.points[i], branch.points[i + 1]
    t_u, t_P, t_nu, seg_len = _tangent_between(a, b)
    frac = s / seg_len
    guess = ContinuationPoint(
        u=Field(a.u.grid, (1 - frac) * a.u.values + frac * b.u.values),
        P=(1 - frac) * a.P + frac * b.P,
        nu=(1 - frac) * a.nu + frac * b.nu,
        kind=a.kind,
        section_level=a.section_level,
    )
    constraint = ArclengthConstraint(
        t_u=t_u, t_P=t_P, t_nu=t_nu,
        base_u=a.u.values, base_P=a.P, base_nu=a.nu, ds=s,
    )
    pt, _ = newton_solve(guess, cfg.newton, cfg.h, constraint=constraint)
    spec = point_spectrum(pt, cfg)
    return pt, spec


def detect_events(branch: Branch, cfg: ContinuationConfig) -> list:
    """Locate and classify all stability changes along a branch.

    Orbit branches are additionally scanned for shift-reflect flag flips:
    the corrector tends to hop from the symmetric trunk onto the asymmetric
    child exactly at an orbit pitchfork, so the critical multiplier grazes
    +1 without a visible count change and only the symmetry flag records the
    junction.
    """
    records = []
    for i in range(len(branch) - 1):
        if branch.points[i].u.grid.order != branch.points[i + 1].u.grid.order:
            continue  # grid-switch seam: counts still comparable, states not
        c_a = _unstable_profile(branch.spectra[i])
        c_b = _unstable_profile(branch.spectra[i + 1])
        if c_a != c_b:
            records.extend(_locate_in_segment(branch, i, c_a, c_b, cfg))
        elif (
            branch.kind == "orbit"
            and branch.sr_flags[i] is not None
            and branch.sr_flags[i] != branch.sr_flags[i + 1]
        ):
            rec = _locate_sr_flip(branch, i, cfg)
            if rec is not None:
                records.append(rec)
    # a junction can be flagged by both detectors; keep the better-located one
    deduped = []
    for rec in sorted(records, key=lambda r: abs(r.test_value)):
        if any(
            abs(rec.nu_c - other.nu_c) < 1e-4 and rec.parent_label == other.parent_label
            for other in deduped
        ):
            continue
        deduped.append(rec)
    deduped.sort(key=lambda r: -r.nu_c)
    for rec in deduped:
        classify_event(rec, branch, cfg)
    return deduped


def _locate_sr_flip(branch, i, cfg):
    """Bisect a shift-reflect flag flip to the orbit-pitchfork junction."""
    from .symmetry import shift_reflect_check

    a, b = branch.points[i], branch.points[i + 1]
    _, _, _, seg_len = _tangent_between(a, b)
    flag_lo = branch.sr_flags[i]
    lo, hi = 0.0, seg_len
    best = None
    for _ in range(cfg.max_bisections):
        mid = 0.5 * (lo + hi)
        try:
            pt_mid, spec_mid = _solve_on_segment(branch, i, mid, cfg)
        except (NewtonError, FlowError, SpectrumError):
            break
        flag_mid = shift_reflect_check(pt_mid.u, pt_mid.P, pt_mid.nu, cfg.h, cfg.sr_tol)
        # test: nontrivial multiplier distance to the unit circle
        dist, crit = np.inf, None
        for j, mu in enumerate(spec_mid.ritz_values):
            if j == spec_mid.trivial_index:
                continue
            if abs(abs(mu) - 1.0) < dist:
                dist, crit = abs(abs(mu) - 1.0), j
        best = (pt_mid, spec_mid, crit, dist)
        if dist <= cfg.event_tol:
            break
        if flag_mid == flag_lo:
            lo = mid
        else:
            hi = mid
    if best is None:
        return None
    pt, spec, crit, dist = best
    rec = _make_record(branch, i, pt, spec, crit, dist)
    rec.located = dist <= cfg.event_tol
    if not rec.located:
        rec.notes += "sr-flip bisection tolerance not reached; "
    rec.notes += "located from shift-reflect flag flip; "
    return rec


def _locate_in_segment(branch, i, c_a, c_b, cfg):
    """Bisect segment i (in arclength) to the first instability-count change."""
    a, b = branch.points[i], branch.points[i + 1]
    _, _, _, seg_len = _tangent_between(a, b)
    lo, hi = 0.0, seg_len
    profile_lo = c_a
    pt_hi, spec_hi = b, branch.spectra[i + 1]
    pt_mid, spec_mid = None, None
    for _ in range(cfg.max_bisections):
        mid = 0.5 * (lo + hi)
        try:
            pt_mid, spec_mid = _solve_on_segment(branch, i, mid, cfg)
        except (NewtonError, FlowError, SpectrumError):
            # probe failed: shrink toward the known-good right end
            mid = 0.5 * (mid + hi)
            try:
                pt_mid, spec_mid = _solve_on_segment(branch, i, mid, cfg)
            except (NewtonError, FlowError, SpectrumError):
                break
        c_mid = _unstable_profile(spec_mid)
        if c_mid == profile_lo:
            lo = mid
        else:
            hi = mid
            pt_hi, spec_hi = pt_mid, spec_mid
        crit = _critical_index(spec_mid)
        test = spec_mid.rates_map[crit].real if crit is not None else np.inf
        if abs(test) <= cfg.event_tol:
            rec = _make_record(branch, i, pt_mid, spec_mid, crit, test)
            # a second crossing inside the same segment would still differ in
            # count from c_b; flag it rather than chase it at these step sizes
            if _unstable_profile(spec_mid) != c_a and _unstable_profile(spec_mid) != c_b:
                rec.notes += "additional crossing may remain in segment; "
            return [rec]
    # fell through: take the best bracketing point
    crit = _critical_index(spec_hi)
    test = spec_hi.rates_map[crit].real if crit is not None else np.nan
    rec = _make_record(branch, i, pt_hi, spec_hi, crit, test)
    rec.located = False
    rec.notes += "bisection tolerance not reached; "
    return [rec]


def _make_record(branch, i, pt, spec, crit, test):
    vec = spec.ritz_vectors[crit] if crit is not None else None
    rate = spec.rates_map[crit] if crit is not None else complex(np.nan)
    mu = spec.ritz_values[crit] if crit is not None else complex(np.nan)
    return BifurcationRecord(
        type="",
        nu_c=pt.nu,
        point=pt,
        critical_rate=complex(rate),
        critical_vector=vec,
        parent_label=branch.label,
        test_value=float(test),
        segment=(i, i + 1),
        notes="",
    )


def classify_event(rec: BifurcationRecord, branch: Branch, cfg: ContinuationConfig):
    """Fill in the event type from the symmetry rules and local geometry."""
    if branch.kind == "orbit":
        # the phase of the critical multiplier separates the crossing types:
        # +1 (orbit pitchfork), -1 (period doubling), or a complex pair
        arg = abs(rec.critical_rate.imag) * rec.point.P
        if arg < 0.5 * np.pi:
            rec.type = "orbit_pitchfork"
        elif arg > np.pi - 0.2:
            rec.type = "period_doubling"
        else:
            rec.type = "torus"
            rec.notes += "complex orbit multiplier crossing; "
        return rec

    if abs(rec.critical_rate.imag) > IMAG_TOL:
        rec.type = "hopf"
        return rec

    i = rec.segment[0]
    parent_class = branch.kappa_classes[i]
    v = rec.critical_vector.real
    v = v / max(np.linalg.norm(v), 1e-300)

    # fold: null direction parallel to the branch path with d(nu)/ds flipping
    t_before = branch.tangents[i]
    t_after = branch.tangents[min(i + 1, len(branch.tangents) - 1)]
    tu = t_before[0] / max(np.linalg.norm(t_before[0]), 1e-300)
    parallel = abs(float(v @ tu)) > 0.9
    nu_flip = t_before[2] * t_after[2] < 0
    if parallel and nu_flip:
        rec.type = "fold"
        return rec

    if parent_class == "fixed":
        rec.type = "pitchfork"
        vclass = classify_kappa(Field(rec.point.u.grid, v))
        if vclass == "anti":
            rec.subtype = "kappa-breaking"
        elif vclass == "fixed":
            rec.subtype = "hidden-symmetry"
        else:
            rec.subtype = "unclassified"
            rec.notes += "null vector has no clean reflection parity; "
    else:
        rec.type = "transcritical"
    return rec


def _distinct_from(u_new: np.ndarray, u_ref: np.ndarray, grid, eps: float) -> bool:
    d = u_new - u_ref
    return np.sqrt(float((d * grid.quad_weights) @ d)) > max(0.3 * eps, 1e-5)


def _parent_interp(parent, rec, nu):
    """Parent-branch state at nu, linearly interpolated near the event."""
    if parent is None or len(parent) < 2:
        return rec.point.u.values
    lo = max(0, rec.segment[0] - 3)
    hi = min(len(parent) - 1, rec.segment[1] + 3)
    for i in range(lo, hi):
        a, b = parent.points[i], parent.points[i + 1]
        if a.u.grid.order != rec.point.u.grid.order:
            continue
        if a.u.grid.order != b.u.grid.order:
            continue
        if (a.nu - nu) * (b.nu - nu) <= 0:
            frac = 0.5 if b.nu == a.nu else (nu - a.nu) / (b.nu - a.nu)
            return (1 - frac) * a.u.values + frac * b.u.values
    return rec.point.u.values


def branch_switch(
    rec: BifurcationRecord,
    cfg: ContinuationConfig,
    eps: float = 5e-3,
    ds: float | None = None,
    nu_offset: float = 2e-4,
    label_prefix: str = "",
    nu_min: float = 0.02,
    nu_max: float = 1.0,
    max_points: int | None = None,
    both_signs: bool = True,
    parent: Branch | None = None,
) -> list:
    """Seed and continue the branches emanating from a steady bifurcation.

    A plain fixed-nu solve from u_c + eps*v falls back onto the parent unless
    the seed already clears the pitchfork's basin boundary, which depends on
    the unknown branch curvature.  The child is instead solved with the
    kernel amplitude pinned: the constraint <v, u - u_c> = eps (with nu free)
    excludes the parent from the solution set and keeps the bordered
    Jacobian regular at the bifurcation.  The amplitude is escalated until a
    solution distinct from the (locally interpolated) parent branch
    converges; nu_offset only nudges the initial guess off the singular
    point.  Each seed sign yields one arm (pitchfork) or one half of the
    crossing curve (transcritical); the runs walk away from the junction
    along the +-kernel direction, since correctors that try to pass through
    the singular junction tend to bounce back onto the same arm.
    """
    if rec.type in ("hopf",):
        raise ContinuationError("use hopf_start for Hopf records")
    grid = rec.point.u.grid
    v = rec.critical_vector.real
    v = v / np.sqrt(float((v * grid.quad_weights) @ v))

    def parent_at(nu):
        return _parent_interp(parent, rec, nu)

    children = []
    signs = (1.0, -1.0) if both_signs else (1.0,)
    for sgn in signs:
        child_pt = None
        for amp in (eps, 4 * eps, 16 * eps, 64 * eps):
            constraint = ArclengthConstraint(
                t_u=sgn * v, t_P=0.0, t_nu=0.0,
                base_u=rec.point.u.values, base_P=rec.point.P,
                base_nu=rec.nu_c, ds=amp,
            )
            guess = ContinuationPoint(
                u=Field(grid, rec.point.u.values + sgn * amp * v),
                P=rec.point.P,
                nu=float(np.clip(rec.nu_c - nu_offset, 1e-4, 1.0)),
                kind="equilibrium",
                section_level=rec.point.section_level,
            )
            try:
                cand, _ = newton_solve(guess, cfg.newton, cfg.h, constraint=constraint)
            except (NewtonError, FlowError):
                continue
            if abs(cand.nu - rec.nu_c) > 0.2:
                continue  # wandered to a remote branch
            if _distinct_from(cand.u.values, parent_at(cand.nu), grid, amp):
                child_pt = cand
                break
        if child_pt is None:
            continue
        label = f"{label_prefix}{rec.parent_label}_{rec.type[:2]}{'p' if sgn > 0 else 'm'}"
        ch = continue_branch(
            child_pt, +1, cfg, label, nu_min=nu_min, nu_max=nu_max,
            max_points=max_points, ds=ds,
            initial_tangent=(sgn * v, 0.0, 0.0),
        )
        children.append(ch)
    for ch in children:
        rec.child_labels.append(ch.label)
    return children


def orbit_oscillation(p: ContinuationPoint, h: float) -> float:
    """Max state excursion over the period; ~0 identifies a disguised
    equilibrium (which satisfies the orbit equations for any period)."""
    from .stepper import flow

    amp = 0.0
    for frac in (0.25, 0.5, 0.75):
        ut = flow(p.u, frac * p.P, p.nu, h)
        amp = max(amp, norm2(ut - p.u))
    return amp


def hopf_start(
    rec: BifurcationRecord,
    cfg: ContinuationConfig,
    eps: float = 1e-2,
    nu_offset: float = 1e-3,
) -> ContinuationPoint:
    """Seed a periodic orbit at a located Hopf point.

    The initial period is 2 pi / omega from the corrected critical rate; the
    orbit's section level is the equilibrium's midpoint value (zero when the
    parent is reflection-fixed, matching the u(0) = 0 anchoring).  The parent
    equilibrium solves the orbit system too (with arbitrary period), so a
    candidate must show a genuine state excursion over its period; amplitude
    and the nu offset are escalated together, since the orbit's size grows
    like sqrt(|nu - nu_c|).
    """
    spec = point_spectrum(rec.point, cfg)
    crit = None
    best = np.inf
    for i, r in enumerate(spec.rates.real):
        if abs(spec.rates[i].imag) > IMAG_TOL and abs(r) < best:
            best, crit = abs(r), i
    if crit is None:
        raise ContinuationError("no complex critical pair at the Hopf record")
    omega = abs(spec.rates[crit].imag)
    if omega < 1e-3:
        raise ContinuationError(f"Hopf frequency {omega:.2e} too small to seed")
    q = spec.ritz_vectors[crit]
    direction = q.real if np.linalg.norm(q.real) > 0.3 * np.linalg.norm(q) else q.imag
    direction = direction / np.sqrt(
        float((direction * rec.point.u.grid.quad_weights) @ direction)
    )
    grid = rec.point.u.grid
    level = rec.point.u.values[grid.mid_index]
    P0 = 2.0 * np.pi / omega

    last_err = None
    for off in (nu_offset, 4 * nu_offset, 16 * nu_offset):
        for side in (-1.0, 1.0):
            nu_try = rec.nu_c + side * off
            if not 0.0 < nu_try <= 1.0:
                continue
            try:
                orb = _relax_onto_orbit(
                    rec.point, direction, eps, nu_try, P0, level, cfg
                )
            except (ContinuationError, NewtonError, FlowError) as exc:
                last_err = exc
                continue
            if orb is not None:
                return orb
    raise ContinuationError(f"Hopf orbit seeding failed (last error: {last_err})")


def _relax_onto_orbit(eq_point, direction, eps, nu, P0, level, cfg):
    """Find a stable orbit by time integration, then Newton-polish.

    A supercritical Hopf orbit attracts nearby states, so integrating a
    perturbed equilibrium rides the unstable spiral out onto the orbit; the
    period is read off the upward crossings of the midpoint section and the
    crossing state seeds the shooting solve.  Returns None if the
    oscillation dies out (wrong side of the Hopf point or subcritical)."""
    from .stepper import flow

    h = cfg.h
    grid = eq_point.u.grid
    mid_col = 1 + grid.mid_index
    u = Field(grid, eq_point.u.values + eps * direction)
    chunk = max(10.0, 12.0 * P0)
    grown = False
    prev_swing = None
    for _ in range(10):
        u, trace = flow(u, chunk, nu, h, snapshot_every=10)
        mid = trace[:, mid_col] - level
        swing = mid.max() - mid.min()
        if swing < 1e-7:
            return None  # spiraled back in: no attracting orbit here
        # settled when the swing stops changing from one chunk to the next
        if prev_swing is not None and swing > 1e-4:
            if abs(swing - prev_swing) < 0.02 * swing:
                grown = True
                break
        prev_swing = swing
    if not grown:
        return None

    _, trace = flow(u, 6.0 * P0, nu, h, snapshot_every=1)
    mid = trace[:, mid_col] - level
    up = np.nonzero((mid[:-1] < 0.0) & (mid[1:] >= 0.0))[0]
    if up.size < 3:
        return None
    crossings = []
    for i in up:
        f = mid[i] / (mid[i] - mid[i + 1])
        crossings.append(trace[i, 0] + f * (trace[i + 1, 0] - trace[i, 0]))
    periods = np.diff(crossings)
    P_emp = float(np.mean(periods[-min(3, periods.size):]))
    i0 = up[-1]
    f = mid[i0] / (mid[i0] - mid[i0 + 1])
    u0 = (1 - f) * trace[i0, 1:] + f * trace[i0 + 1, 1:]
    guess = ContinuationPoint(
        u=Field(grid, u0), P=P_emp, nu=nu, kind="orbit", section_level=level
    )
    orb, _ = newton_solve(guess, cfg.newton, cfg.h)
    if orbit_oscillation(orb, cfg.h) > 1e-5 * max(1.0, norm2(orb.u)):
        return orb
    return None


def kappa_mirror_branch(branch: Branch, cfg: ContinuationConfig) -> Branch:
    """The reflection image of a branch (valid by equivariance)."""
    mirror = Branch(label=branch.label + "m", kind=branch.kind, notes="kappa mirror")
    for p, t, spec, kc, sr, st in zip(
        branch.points, branch.tangents, branch.spectra, branch.kappa_classes,
        branch.sr_flags, branch.newton_stats,
    ):
        mp = replace(
            p,
            u=kappa(p.u),
            section_level=-p.section_level,
        )
        mirror.points.append(mp)
        mirror.tangents.append((-t[0][::-1], t[1], t[2]))
        mirror.spectra.append(spec)
        mirror.kappa_classes.append(kc)
        mirror.sr_flags.append(sr)
        mirror.newton_stats.append(st)
    return mirror


def coexistence_report(branches: list, nu: float, cfg: ContinuationConfig) -> list:
    """Stable attractors at a given nu, with kappa partners counted."""
    found = []
    for br in branches:
        for i in range(len(br) - 1):
            a, b = br.points[i], br.points[i + 1]
            if (a.nu - nu) * (b.nu - nu) > 0:
                continue
            if a.u.grid.order != b.u.grid.order:
                continue
            if not (br.spectra[i].stable and br.spectra[i + 1].stable):
                continue
            frac = 0.5 if b.nu == a.nu else (nu - a.nu) / (b.nu - a.nu)
            u = Field(a.u.grid, (1 - frac) * a.u.values + frac * b.u.values)
            P = (1 - frac) * a.P + frac * b.P
            kclass = classify_kappa(u)
            sr = br.sr_flags[i]
            multiplicity = 1
            if br.kind == "equilibrium" and kclass != "fixed":
                multiplicity = 2  # kappa partner exists by equivariance
            if br.kind == "orbit" and not sr:
                multiplicity = 2  # asymmetric orbit: partner is distinct
            entry = {
                "branch": br.label,
                "kind": br.kind,
                "nu": nu,
                "period": P if br.kind == "orbit" else None,
                "l2norm": norm2(u),
                "diagram_coord": diagram_coord(u),
                "kappa_class": kclass,
                "shift_reflect": sr,
                "multiplicity": multiplicity,
            }
            if not any(
                e["kind"] == entry["kind"]
                and abs(e["l2norm"] - entry["l2norm"]) < 1e-4
                and abs(abs(e["diagram_coord"]) - abs(entry["diagram_coord"])) < 1e-4
                for e in found
            ):
                found.append(entry)
    return found


# ---------------------------------------------------------------------------
# exports

def write_branch_csv(branch: Branch, out_dir: str, cfg: ContinuationConfig) -> str:
    """Branch CSV plus one solution-snapshot JSON per point."""
    os.makedirs(out_dir, exist_ok=True)
    sol_dir = os.path.join(out_dir, f"{branch.label}_solutions")
    os.makedirs(sol_dir, exist_ok=True)
    path = os.path.join(out_dir, f"branch_{branch.label}.csv")
    mu_cols = []
    for j in range(1, 6):
        mu_cols += [f"re_mu_{j}", f"im_mu_{j}"]
    header = (
        ["index", "nu", "period", "diagram_coord", "l2norm", "stable"]
        + mu_cols
        + ["symmetry_class", "solution_file"]
    )
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for idx, (p, spec, kc, sr) in enumerate(
            zip(branch.points, branch.spectra, branch.kappa_classes, branch.sr_flags)
        ):
            sol_file = os.path.join(sol_dir, f"point_{idx:04d}.json")
            with open(sol_file, "w") as sf:
                json.dump(
                    {
                        "kind": p.kind,
                        "nu": p.nu,
                        "period": p.P,
                        "grid_order": p.u.grid.order,
                        "values": list(p.u.values),
                    },
                    sf,
                )
            mus = list(spec.ritz_values[:5]) + [complex(np.nan)] * (
                5 - min(5, len(spec.ritz_values))
            )
            sym = kc if sr is None else f"{kc}{'+sr' if sr else '-sr'}"
            row = [
                str(idx),
                f"{p.nu:.17g}",
                f"{p.P:.17g}",
                f"{diagram_coord(p.u):.17g}",
                f"{norm2(p.u):.17g}",
                "1" if spec.stable else "0",
            ]
            for m in mus:
                row += [f"{m.real:.17g}", f"{m.imag:.17g}"]
            row += [sym, os.path.relpath(sol_file, out_dir)]
            fh.write(",".join(row) + "\n")
    return path


def write_bifurcation_log(records: list, path: str) -> None:
    data = []
    for r in records:
        data.append(
            {
                "type": r.type,
                "subtype": r.subtype,
                "nu_c": r.nu_c,
                "parent_label": r.parent_label,
                "child_labels": list(r.child_labels),
                "critical_rate_re": r.critical_rate.real,
                "critical_rate_im": r.critical_rate.imag,
                "test_value": r.test_value,
                "notes": r.notes,
            }
        )
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
