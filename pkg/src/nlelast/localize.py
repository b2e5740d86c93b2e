"""Localization studies: horizon limits and the fractional-order limit.

Each study solves a family of nonlocal problems along a monotone parameter
sequence and measures the L2 distance to a fixed reference solution: the
local elastic solution for the vanishing-horizon and s -> 1 regimes, a pure
power-kernel solve for the diverging horizon.  The reference never depends
on the member family.  Member and reference lattices are nested by
construction, so every comparison is a plain restriction to common nodes
with no interpolation step.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityError, ConfigError, QuadratureError, SolveError
from .grid import Domain, Field, build_domain
from .kernels import (
    Kernel,
    kernel_mass,
    limit_order,
    make_fractional,
    make_truncated_fractional,
    rescale,
)
from .solve import (
    SolveReport,
    solve_dirichlet,
    solve_local_oracle,
    solve_neumann,
)

HORIZON_TO_ZERO = "horizon_to_zero"
HORIZON_TO_INFINITY = "horizon_to_infinity"
S_TO_ONE = "s_to_one"
NEUMANN_HORIZON_TO_ZERO = "neumann_horizon_to_zero"

REGIMES = (
    HORIZON_TO_ZERO,
    HORIZON_TO_INFINITY,
    S_TO_ONE,
    NEUMANN_HORIZON_TO_ZERO,
)

# +1 where the parameter grows toward its limit, -1 where it shrinks
_DIRECTION = {
    HORIZON_TO_ZERO: -1,
    HORIZON_TO_INFINITY: +1,
    S_TO_ONE: +1,
    NEUMANN_HORIZON_TO_ZERO: -1,
}


@dataclass
class LimitStudy:
    """One convergence experiment: members along a parameter sequence
    against a fixed reference, with restricted L2 error norms."""

    regime: str
    parameters: np.ndarray
    member_reports: list
    reference_report: SolveReport
    errors: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError("unknown study regime %r" % (self.regime,))
        self.parameters = np.asarray(self.parameters, dtype=float)
        self.errors = np.asarray(self.errors, dtype=float)
        if not (self.parameters.size == self.errors.size
                == len(self.member_reports)):
            raise ConfigError("study table lengths disagree")
        _strictly_monotone(self.parameters, _DIRECTION[self.regime],
                           "study parameters")


def _strictly_monotone(vals, direction, what):
    d = np.diff(np.asarray(vals, dtype=float)) * direction
    if d.size and not np.all(d > 0.0):
        raise ConfigError("%s must be strictly monotone toward the limit"
                          % (what,))


def study_rows(study: LimitStudy) -> list:
    """Table rows (parameter, L2_error, energy, iterations) for emission."""
    rows = []
    for p, err, rep in zip(study.parameters, study.errors,
                           study.member_reports):
        row = {
            "parameter": float(p),
            "L2_error": float(err),
            "energy": float(rep.energy),
            "iterations": int(rep.iterations),
        }
        if study.regime == HORIZON_TO_INFINITY:
            row["truncation_gap"] = float(study.diagnostics["truncation_gap"])
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# canonical study loads
# ---------------------------------------------------------------------------


def smooth_sine_load(coords) -> np.ndarray:
    """10 sin(pi x1) in the first component, the canonical smooth load."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    out = np.zeros_like(coords)
    out[:, 0] = 10.0 * np.sin(np.pi * coords[:, 0])
    return out


def balanced_bump_load(coords) -> np.ndarray:
    """Zero-mean C1 bump on [0.3, 0.7] of the first axis, zero elsewhere.

    The profile (1 - cos(2 pi t)) sin(2 pi t) integrates to zero exactly,
    so the load is compatible with traction-free problems, and it vanishes
    with its derivative at the support endpoints.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    t = (coords[:, 0] - 0.3) / 0.4
    inside = (t >= 0.0) & (t <= 1.0)
    prof = (1.0 - np.cos(2.0 * np.pi * t)) * np.sin(2.0 * np.pi * t)
    out = np.zeros_like(coords)
    out[:, 0] = np.where(inside, prof, 0.0)
    return out


# ---------------------------------------------------------------------------
# restriction to common nodes
# ---------------------------------------------------------------------------


def _box_restriction(u: Field, lo, hi):
    """Values and lumped weights of a field on the closed box nodes.

    Nodes are selected by coordinate, so any two fields on nested lattices
    restrict to identical node sets in identical order.
    """
    dom = u.domain
    tol = 1e-6 * dom.h
    keep = np.ones(dom.nnodes, dtype=bool)
    w = np.ones(dom.nnodes)
    for ax in range(dom.dim):
        x = dom.coords[:, ax]
        keep &= (x >= lo[ax] - tol) & (x <= hi[ax] + tol)
        edge = (np.abs(x - lo[ax]) <= tol) | (np.abs(x - hi[ax]) <= tol)
        w *= dom.h * np.where(edge, 0.5, 1.0)
    sel = np.flatnonzero(keep)
    vals = u.values[sel]
    if vals.ndim == 1:
        vals = vals[:, None]
    return dom.coords[sel], vals, w[sel]


def restricted_l2_difference(u_a: Field, u_b: Field, lo, hi, *,
                             zero_mean: bool = False) -> float:
    """L2 norm of (u_a - u_b) over the closed box, by restriction.

    Both lattices must contain the box nodes exactly (nested grids).  With
    zero_mean=True each restriction is first shifted to weighted zero mean
    per component, the natural gauge for traction-free comparisons.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    ca, va, wa = _box_restriction(u_a, lo, hi)
    cb, vb, wb = _box_restriction(u_b, lo, hi)
    if ca.shape != cb.shape:
        raise ConfigError("lattices are not nested over the comparison box")
    step = min(u_a.domain.h, u_b.domain.h)
    if float(np.abs(ca - cb).max(initial=0.0)) > 1e-9 * step:
        raise ConfigError("lattices are not nested over the comparison box")
    if zero_mean:
        va = va - (wa @ va) / wa.sum()
        vb = vb - (wb @ vb) / wb.sum()
    diff = va - vb
    return math.sqrt(float(wa @ np.sum(diff * diff, axis=1)))


def _check_core(box, margin):
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    for lo, hi in box:
        if margin >= 0.5 * (hi - lo):
            raise ConfigError(
                "horizon %g leaves no retracted core in [%g, %g]"
                % (margin, lo, hi)
            )
    return box


def _load_on(dom: Domain, f) -> np.ndarray:
    vals = np.asarray(f(dom.coords), dtype=float)
    if vals.shape != (dom.nnodes, dom.dim):
        raise ConfigError("the study load must return stacked components")
    return vals


def _wide_collar_domain(box, width: float, h: float) -> Domain:
    """Lattice over a box with a collar wider than the box itself.

    Diverging horizons need constraint regions many times the box size;
    stacking the collar out of lattice-step layers sidesteps the usual
    requirement that the interaction width leave a retracted core.
    """
    steps = int(round(width / h))
    if steps < 1 or abs(width - steps * h) > 1e-9 * h:
        raise ConfigError(
            "collar width %g is not a positive multiple of the spacing %g"
            % (width, h)
        )
    return build_domain(box, h, h, collar_mult=steps)


def _run_members(tasks):
    # member solves are independent of one another; a small thread pool
    # keeps the aggregation order equal to the parameter order
    if len(tasks) == 1:
        return [tasks[0]()]
    workers = min(len(tasks), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: t(), tasks))


def _require_converged(rep: SolveReport, what, value):
    if not rep.converged:
        raise SolveError("%s solve at parameter %g did not converge"
                         % (what, value))


# ---------------------------------------------------------------------------
# the four studies
# ---------------------------------------------------------------------------


def run_horizon_to_zero(kernel: Kernel, tensor, f,
                        deltas=(0.4, 0.2, 0.1, 0.05), *,
                        box=((0.0, 1.0),), h: float = 1.0 / 80,
                        tol: float = 1e-10) -> LimitStudy:
    """Vanishing-horizon Dirichlet study against the local solution.

    The base kernel (unit support) is rescaled to each horizon with the
    mass-preserving normalization, the constrained problem pins the
    solution on a collar of width two horizons outside the core, and the
    reference is the classical elastic solution on the same lattice.
    """
    deltas = np.asarray(deltas, dtype=float)
    _strictly_monotone(deltas, -1, "horizons")
    box = _check_core(box, float(deltas.max()))

    def member(d):
        def task():
            kd = rescale(kernel, d, "vanishing")
            mass = kernel_mass(kd)
            dom = build_domain(box, d, h, collar_mult=2)
            u, rep = solve_dirichlet(tensor, kd, dom, _load_on(dom, f),
                                     tol=tol)
            return u, rep, mass
        return task

    results = _run_members([member(d) for d in deltas])
    ref_u, ref_rep = solve_local_oracle(tensor, box, h, f, bc="dirichlet")

    dim = len(box)
    masses = []
    reports = []
    errors = []
    lo = [b[0] for b in box]
    hi = [b[1] for b in box]
    for d, (u, rep, mass) in zip(deltas, results):
        _require_converged(rep, "member", d)
        if abs(mass - dim) > 1e-8:
            raise QuadratureError(
                "rescaled kernel mass %.12g drifted from %d at horizon %g"
                % (mass, dim, d)
            )
        masses.append(mass)
        reports.append(rep)
        errors.append(restricted_l2_difference(u, ref_u, lo, hi))

    return LimitStudy(
        regime=HORIZON_TO_ZERO,
        parameters=deltas,
        member_reports=reports,
        reference_report=ref_rep,
        errors=np.array(errors),
        diagnostics={"kernel_mass": np.array(masses)},
    )


def run_horizon_to_infinity(kernel: Kernel, tensor, f,
                            deltas=(1.0, 2.0, 4.0, 8.0), *,
                            box=((0.0, 1.0),), h: float = 1.0 / 16,
                            tol: float = 1e-10) -> LimitStudy:
    """Diverging-horizon Dirichlet study against a pure power kernel.

    Members use the blow-up normalization that fixes the profile at unit
    argument, so they converge to the unnormalized power kernel of the
    limit order.  The reference solves with that kernel on the widest
    member lattice; re-solving on a doubled lattice measures how much the
    bounded grid truncates the power tail (the truncation_gap diagnostic).
    """
    deltas = np.asarray(deltas, dtype=float)
    _strictly_monotone(deltas, +1, "horizons")
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    s_inf = limit_order(kernel)
    if not 0.0 < s_inf < 1.0:
        raise AdmissibilityError(
            "limit order %.6g is not a fractional order; the base profile "
            "has no power behavior near the origin" % s_inf
        )

    def collar(kd, d):
        # pin the whole interaction neighborhood, not just the rescale
        # parameter; an unbounded kernel falls back to the parameter
        return kd.support_radius if math.isfinite(kd.support_radius) else d

    def member(d):
        def task():
            kd = rescale(kernel, d, "diverging")
            dom = _wide_collar_domain(box, collar(kd, d), h)
            return solve_dirichlet(tensor, kd, dom, _load_on(dom, f), tol=tol)
        return task

    results = _run_members([member(d) for d in deltas])

    frac = make_fractional(len(box), s_inf, amplitude=1.0)
    d_top = float(deltas.max())
    c_top = collar(rescale(kernel, d_top, "diverging"), d_top)
    dom_ref = _wide_collar_domain(box, c_top, h)
    ref_u, ref_rep = solve_dirichlet(tensor, frac, dom_ref,
                                     _load_on(dom_ref, f), tol=tol)
    _require_converged(ref_rep, "reference", d_top)
    dom_wide = _wide_collar_domain(box, 2.0 * c_top, h)
    wide_u, wide_rep = solve_dirichlet(tensor, frac, dom_wide,
                                       _load_on(dom_wide, f), tol=tol)
    _require_converged(wide_rep, "reference", 2.0 * d_top)

    lo = [b[0] for b in box]
    hi = [b[1] for b in box]
    trunc = restricted_l2_difference(ref_u, wide_u, lo, hi)

    reports = []
    errors = []
    for d, (u, rep) in zip(deltas, results):
        _require_converged(rep, "member", d)
        reports.append(rep)
        errors.append(restricted_l2_difference(u, ref_u, lo, hi))

    return LimitStudy(
        regime=HORIZON_TO_INFINITY,
        parameters=deltas,
        member_reports=reports,
        reference_report=ref_rep,
        errors=np.array(errors),
        diagnostics={"limit_order": s_inf, "truncation_gap": trunc},
    )


def run_s_to_one(tensor, f, s_values=(0.6, 0.7, 0.8, 0.9, 0.95), *,
                 delta: float = 0.1, box=((0.0, 1.0),),
                 h: float = 1.0 / 160, tol: float = 1e-10) -> LimitStudy:
    """Fractional-order limit at fixed horizon against the local solution.

    The limit problem lives on the retracted core with its own pinned
    boundary, so the reference is the local solve there and errors are
    measured over the retracted core only.
    """
    s_values = np.asarray(s_values, dtype=float)
    _strictly_monotone(s_values, +1, "fractional orders")
    if np.any(s_values <= 0.0) or np.any(s_values >= 1.0):
        raise ConfigError("fractional orders must lie strictly inside (0, 1)")
    box = _check_core(box, delta)

    def member(s):
        def task():
            ks = make_truncated_fractional(len(box), s, delta)
            dom = build_domain(box, delta, h)
            return solve_dirichlet(tensor, ks, dom, _load_on(dom, f), tol=tol)
        return task

    results = _run_members([member(s) for s in s_values])

    inner = tuple((lo + delta, hi - delta) for lo, hi in box)
    ref_u, ref_rep = solve_local_oracle(tensor, inner, h, f, bc="dirichlet")

    lo = [b[0] for b in inner]
    hi = [b[1] for b in inner]
    reports = []
    errors = []
    for s, (u, rep) in zip(s_values, results):
        _require_converged(rep, "member", s)
        reports.append(rep)
        errors.append(restricted_l2_difference(u, ref_u, lo, hi))

    return LimitStudy(
        regime=S_TO_ONE,
        parameters=s_values,
        member_reports=reports,
        reference_report=ref_rep,
        errors=np.array(errors),
        diagnostics={"delta": delta},
    )


def run_neumann_horizon_to_zero(tensor, f, deltas=(0.3, 0.2, 0.1), *,
                                s: float = 0.5, box=((0.0, 1.0),),
                                h: float = 1.0 / 40,
                                tol: float = 1e-10) -> LimitStudy:
    """Vanishing-horizon traction-free study against the local solution.

    Loads must vanish outside the retracted core at every horizon; any
    component on the zero-energy modes is projected away before solving.
    Member and reference are compared after shifting both to weighted
    zero mean over the core, the shared gauge of the limit space.
    """
    deltas = np.asarray(deltas, dtype=float)
    _strictly_monotone(deltas, -1, "horizons")
    box = _check_core(box, float(deltas.max()))

    def member(d):
        def task():
            kd = make_truncated_fractional(len(box), s, d)
            dom = build_domain(box, d, h)
            fv = _load_on(dom, f)
            _require_core_support(dom, fv, d)
            u, rep = solve_neumann(tensor, kd, dom, fv,
                                   project_load=True, tol=tol)
            return u, rep
        return task

    results = _run_members([member(d) for d in deltas])
    ref_u, ref_rep = solve_local_oracle(tensor, box, h, f, bc="neumann")
    _require_converged(ref_rep, "reference", 0.0)

    lo = [b[0] for b in box]
    hi = [b[1] for b in box]
    reports = []
    errors = []
    defects = []
    for d, (u, rep) in zip(deltas, results):
        _require_converged(rep, "member", d)
        reports.append(rep)
        defects.append(rep.diagnostics["compatibility_defect"])
        errors.append(restricted_l2_difference(u, ref_u, lo, hi,
                                               zero_mean=True))

    return LimitStudy(
        regime=NEUMANN_HORIZON_TO_ZERO,
        parameters=deltas,
        member_reports=reports,
        reference_report=ref_rep,
        errors=np.array(errors),
        diagnostics={"compatibility_defect": np.array(defects)},
    )


def _require_core_support(dom: Domain, fvals: np.ndarray, margin: float):
    tol = 1e-6 * dom.h
    outside = np.zeros(dom.nnodes, dtype=bool)
    for ax in range(dom.dim):
        x = dom.coords[:, ax]
        outside |= (x < dom.lo[ax] + margin - tol) | \
            (x > dom.hi[ax] - margin + tol)
    scale = max(float(np.abs(fvals).max()), 1e-300)
    stray = float(np.abs(fvals[outside]).max()) if outside.any() else 0.0
    if stray > 1e-12 * scale:
        raise AdmissibilityError(
            "the load must vanish outside the retracted core (margin %g)"
            % margin
        )
