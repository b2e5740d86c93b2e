"""Variational solvers for the nonlocal elasticity system.

Dirichlet problems constrain the solution on the closure complement and
minimize the full-grid energy; the stiffness acting on free nodes is
symmetric positive definite, so conjugate gradients applies directly.

Neumann problems restrict the energy rows to the closed core region and
leave every node free.  That operator has a genuine nullspace (rigid
motions, plus any collar freedom the core rows cannot see), handled by an
explicit orthonormal basis: loads must be compatible, iterates live in
the orthogonal complement, and the returned solution has zero projection
onto the nullspace.

A classical local P1 finite element oracle on matching nodes is provided
for localization studies.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, cg, eigsh

from .elasticity import check_admissible
from .errors import AdmissibilityError, ConfigError, SolveError
from .grid import BOUNDARY, FREE, ZERO_COMPLEMENT, Domain, Field, build_domain
from .kernels import Kernel
from .operators import (
    boundary_flux,
    build_stencil,
    nonlocal_gradient,
    nonlocal_normal_derivative,
)

__all__ = [
    "NullspaceInfo",
    "SolveReport",
    "jacobi_diagonal",
    "neumann_nullspace",
    "project_out_nullspace",
    "solve_dirichlet",
    "solve_dirichlet_strongform",
    "solve_local_oracle",
    "solve_neumann",
]


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual: float
    energy: float
    ndof: int
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# stiffness actions
# ---------------------------------------------------------------------------


def _gradient_action(st, vals):
    """D v as (nnodes, n, n) for stacked component values (nnodes, n)."""
    n = vals.shape[1]
    out = np.empty(vals.shape + (n,))
    for a in range(n):
        for b in range(n):
            out[:, a, b] = st.mats[b] @ vals[:, a]
    return out


def _divergence_action(st, mats):
    """sum_b B_b^T applied to the second index of (nnodes, n, n) values."""
    n = mats.shape[1]
    out = np.empty(mats.shape[:2])
    for a in range(n):
        acc = st.mats[0].T @ mats[:, a, 0]
        for b in range(1, n):
            acc = acc + st.mats[b].T @ mats[:, a, b]
        out[:, a] = acc
    return out


def _stiffness_matvec(tensor, st, dom, vals, row_mask=None):
    stress = tensor.apply(_gradient_action(st, vals))
    if row_mask is not None:
        stress = stress * row_mask[:, None, None]
    return dom.node_volume * _divergence_action(st, stress)


def _dirichlet_operator(tensor, kernel, dom, free):
    st = build_stencil(kernel, dom)
    n = dom.dim
    nfree = free.size

    def matvec(x):
        vals = np.zeros((dom.nnodes, n))
        vals[free] = x.reshape(nfree, n)
        out = _stiffness_matvec(tensor, st, dom, vals)
        return out[free].ravel()

    return LinearOperator((nfree * n, nfree * n), matvec=matvec, dtype=float)


def _neumann_operator(tensor, kernel, dom):
    st = build_stencil(kernel, dom)
    n = dom.dim
    mask = np.zeros(dom.nnodes)
    mask[dom.omega_closed_index()] = 1.0

    def matvec(x):
        vals = x.reshape(dom.nnodes, n)
        return _stiffness_matvec(tensor, st, dom, vals, row_mask=mask).ravel()

    return LinearOperator((dom.nnodes * n, dom.nnodes * n), matvec=matvec, dtype=float)


def _dense_moduli(tensor) -> np.ndarray:
    if hasattr(tensor, "c"):
        return np.asarray(tensor.c, dtype=float)
    eye = np.eye(tensor.dim)
    return (tensor.mu * (np.einsum("pq,ab->paqb", eye, eye)
                         + np.einsum("pb,aq->paqb", eye, eye))
            + tensor.lam * np.einsum("pa,qb->paqb", eye, eye))


def jacobi_diagonal(tensor, kernel: Kernel, dom: Domain, *,
                    neumann: bool = False) -> np.ndarray:
    """Exact stiffness diagonal as (nnodes, n), for use as a preconditioner.

    Column dot products of the sparse gradient factors give the diagonal of
    B_a^T C B_b without assembling the stiffness.  Zero or negative entries
    (possible for masked Neumann rows at 2-D corners) are floored to the
    largest entry so the induced scaling is inert there.
    """
    st = build_stencil(kernel, dom)
    n = dom.dim
    left = st.mats
    if neumann:
        mask = np.zeros(dom.nnodes)
        mask[dom.omega_closed_index()] = 1.0
        left = [m.multiply(mask[:, None]).tocsr() for m in st.mats]
    pair = np.empty((n, n, dom.nnodes))
    for a in range(n):
        for b in range(n):
            pair[a, b] = np.asarray(
                left[a].multiply(st.mats[b]).sum(axis=0)).ravel()
    c = _dense_moduli(tensor)
    diag = dom.node_volume * np.stack(
        [np.einsum("ab,abi->i", c[p, :, p, :], pair) for p in range(n)],
        axis=-1,
    )
    top = diag.max()
    if top <= 0.0:
        raise SolveError("stiffness diagonal is not positive")
    return np.where(diag > 1e-12 * top, diag, top)


def _diag_operator(diag) -> LinearOperator:
    d = np.asarray(diag, dtype=float).ravel()
    if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
        raise ConfigError("preconditioner diagonal must be positive and finite")
    return LinearOperator((d.size, d.size), matvec=lambda r: r / d, dtype=float)


def _run_cg(op, rhs, tol, maxiter, x0=None, M=None):
    count = [0]

    def cb(_):
        count[0] += 1

    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros_like(rhs), 0, 0.0, True
    x, info = cg(op, rhs, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter,
                 callback=cb, M=M)
    res = float(np.linalg.norm(rhs - op @ x)) / bnorm
    if info != 0:
        raise SolveError(
            "conjugate gradients stalled after %d iterations "
            "(relative residual %.3g)" % (count[0], res)
        )
    if res > 1e3 * tol:
        raise SolveError(
            "recurrence converged but the true relative residual is %.3g; "
            "the system is too ill conditioned at this tolerance" % res
        )
    return x, count[0], res, True


# ---------------------------------------------------------------------------
# Dirichlet
# ---------------------------------------------------------------------------


def _as_load(dom, f):
    if isinstance(f, Field):
        if f.rank != "vector":
            raise ConfigError("the load must be a vector field")
        if f.domain is not dom:
            raise ConfigError("load and domain do not match")
        return f.values
    vals = np.asarray(f, dtype=float)
    if vals.shape != (dom.nnodes, dom.dim):
        raise ConfigError("the load must be a vector field")
    return vals


def solve_dirichlet(tensor, kernel: Kernel, dom: Domain, f, *, g=None,
                    tol: float = 1e-10, maxiter: int = None, x0=None,
                    precond=None):
    """Minimize the nonlocal energy over fields vanishing off the core.

    f is the volume load; g optionally prescribes values on the
    constrained nodes (zero by default).  precond optionally supplies a
    positive (nnodes, n) diagonal to scale the iteration with; see
    jacobi_diagonal.  Returns (Field, SolveReport).
    """
    check_admissible(tensor)
    fvals = _as_load(dom, f)
    free = dom.free_index(ZERO_COMPLEMENT)
    n = dom.dim
    st = build_stencil(kernel, dom)
    if maxiter is None:
        maxiter = max(2000, 10 * free.size)

    rhs = dom.node_volume * fvals[free]
    lift = None
    if g is not None:
        gvals = _as_load(dom, g)
        lift = np.zeros((dom.nnodes, n))
        pinned = dom.constrained_index(ZERO_COMPLEMENT)
        lift[pinned] = gvals[pinned]
        rhs = rhs - _stiffness_matvec(tensor, st, dom, lift)[free]

    op = _dirichlet_operator(tensor, kernel, dom, free)
    M = None
    if precond is not None:
        M = _diag_operator(np.asarray(precond, dtype=float)[free])
    x, iters, res, ok = _run_cg(op, rhs.ravel(), tol, maxiter,
                                x0=None if x0 is None else np.asarray(x0, float).ravel(),
                                M=M)

    vals = np.zeros((dom.nnodes, n))
    vals[free] = x.reshape(free.size, n)
    if lift is not None:
        vals = vals + lift
    u = Field(dom, vals, constraint=FREE if g is not None else ZERO_COMPLEMENT)

    energy = _energy_all_rows(tensor, kernel, dom, vals, fvals)
    return u, SolveReport(ok, iters, res, energy, free.size * n)


def _energy_all_rows(tensor, kernel, dom, vals, fvals, row_mask=None):
    st = build_stencil(kernel, dom)
    grad = _gradient_action(st, vals)
    dens = np.sum(tensor.apply(grad) * grad, axis=(-2, -1))
    if row_mask is not None:
        dens = dens * row_mask
    a = dom.node_volume * float(np.sum(dens))
    load = dom.node_volume * float(np.sum(fvals * vals))
    return 0.5 * a - load


def solve_dirichlet_strongform(tensor, kernel: Kernel, dom: Domain, f, *,
                               tol: float = 1e-10, maxiter: int = None):
    """Dirichlet solve through the composed operator -div(C[D u]).

    Needs a double collar so the intermediate stress field is faithful on
    an interaction neighborhood of the core.  As matrices the composed and
    variational operators coincide (the difference matrices are exactly
    antisymmetric); the report carries the measured agreement.
    """
    if dom.delta > 0.0 and dom.collar_mult < 2:
        raise ConfigError("the composed form needs collar_mult >= 2")
    check_admissible(tensor)
    fvals = _as_load(dom, f)
    free = dom.free_index(ZERO_COMPLEMENT)
    n = dom.dim
    st = build_stencil(kernel, dom)
    if maxiter is None:
        maxiter = max(2000, 10 * free.size)

    def strong_apply(vals):
        stress = tensor.apply(_gradient_action(st, vals))
        out = np.empty((dom.nnodes, n))
        for a in range(n):
            acc = st.mats[0] @ stress[:, a, 0]
            for b in range(1, n):
                acc = acc + st.mats[b] @ stress[:, a, b]
            out[:, a] = -acc
        return dom.node_volume * out

    def matvec(x):
        vals = np.zeros((dom.nnodes, n))
        vals[free] = x.reshape(free.size, n)
        return strong_apply(vals)[free].ravel()

    op = LinearOperator((free.size * n,) * 2, matvec=matvec, dtype=float)
    rhs = (dom.node_volume * fvals[free]).ravel()
    x, iters, res, ok = _run_cg(op, rhs, tol, maxiter)

    vals = np.zeros((dom.nnodes, n))
    vals[free] = x.reshape(free.size, n)
    u = Field(dom, vals, constraint=ZERO_COMPLEMENT)

    # measured agreement of the two stiffness actions on the iterate
    weak = _stiffness_matvec(tensor, st, dom, vals)[free]
    strong = strong_apply(vals)[free]
    scale = max(float(np.abs(weak).max()), 1e-300)
    agree = float(np.abs(weak - strong).max()) / scale
    energy = _energy_all_rows(tensor, kernel, dom, vals, fvals)
    rep = SolveReport(ok, iters, res, energy, free.size * n,
                      {"weak_strong_agreement": agree})
    return u, rep


# ---------------------------------------------------------------------------
# Neumann nullspace
# ---------------------------------------------------------------------------


@dataclass
class NullspaceInfo:
    """Orthonormal basis of the zero-energy fields.

    basis columns are Euclidean-orthonormal over stacked node values;
    mass_basis rescales them to unit mass norm.  sigma holds the full
    singular spectrum of the core-row symmetric gradient map.
    """

    dim: int
    basis: np.ndarray
    sigma: np.ndarray
    node_volume: float

    @property
    def mass_basis(self):
        return self.basis / np.sqrt(self.node_volume)

    def project(self, flat):
        return flat - self.basis @ (self.basis.T @ flat)

    def coefficients(self, flat):
        return self.basis.T @ flat


_NULLSPACE_DENSE_CAP = 8e7  # entries of the stacked gradient map


def neumann_nullspace(kernel: Kernel, dom: Domain) -> NullspaceInfo:
    """Kernel of v -> D_sym v restricted to closed-core rows, by SVD.

    Any admissible material tensor is definite on symmetric matrices, so
    the energy vanishes exactly on this subspace and on nothing else.
    """
    st = build_stencil(kernel, dom)
    rows = dom.omega_closed_index()
    n = dom.dim
    M = dom.nnodes
    nr = rows.size
    if nr * n * n * M * n > _NULLSPACE_DENSE_CAP:
        raise ConfigError(
            "nullspace factorization would need a dense map with more "
            "than %g entries; use a coarser grid" % _NULLSPACE_DENSE_CAP
        )
    Bd = [np.asarray(B.toarray()[rows]) for B in st.mats]
    A = np.zeros((nr, n, n, M, n))
    for a in range(n):
        for b in range(n):
            A[:, a, b, :, a] += 0.5 * Bd[b]
            A[:, a, b, :, b] += 0.5 * Bd[a]
    A = A.reshape(nr * n * n, M * n)
    _, s, Vh = np.linalg.svd(A, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > 1e-10 * smax))
    basis = Vh[rank:].T.copy()
    return NullspaceInfo(basis.shape[1], basis, s, dom.node_volume)


def project_out_nullspace(ns: NullspaceInfo, v: Field) -> Field:
    flat = v.values.reshape(-1)
    return Field(v.domain, ns.project(flat).reshape(v.values.shape))


# ---------------------------------------------------------------------------
# Neumann solve
# ---------------------------------------------------------------------------


def solve_neumann(tensor, kernel: Kernel, dom: Domain, f, *,
                  tol: float = 1e-10, maxiter: int = None,
                  project_load: bool = False, deflate_rtol: float = 1e-6,
                  x0=None, precond=None):
    """Minimize the core-row energy over unconstrained fields.

    The load must be orthogonal to every zero-energy mode; pass
    project_load=True to remove incompatible components instead of
    rejecting them.  The solution returned has zero projection onto the
    nullspace.  Nodal loads may take values anywhere on the grid; the
    physically meaningful configurations keep f supported away from the
    collars, and the command line front end enforces that.

    In one dimension every node interacts solidly with the core and
    projected conjugate gradients converges cleanly.  In two dimensions
    collar nodes near the corners are coupled only through slivers of the
    interaction disc, leaving energy eigenvalues many orders below the
    bulk: those directions are numerically indeterminate, so the solve
    runs through a dense eigendecomposition and drops modes below
    deflate_rtol times the largest eigenvalue, reporting how much load
    the dropped modes carried (``unresolved_load``).
    """
    check_admissible(tensor)
    fvals = _as_load(dom, f)
    n = dom.dim
    if maxiter is None:
        maxiter = max(2000, 10 * dom.nnodes * n)

    ns = neumann_nullspace(kernel, dom)
    rhs = (dom.node_volume * fvals).reshape(-1)
    coeff = ns.coefficients(rhs)
    defect = float(np.linalg.norm(coeff))
    rel_defect = defect / max(float(np.linalg.norm(rhs)), 1e-300)
    if rel_defect > 1e-10:
        if not project_load:
            raise AdmissibilityError(
                "load has a component on the zero-energy modes "
                "(relative size %.3g); project it or fix the data" % rel_defect
            )
        rhs = ns.project(rhs)

    base = _neumann_operator(tensor, kernel, dom)
    unresolved = 0.0
    deflated = 0
    if n == 1:
        def matvec(x):
            return ns.project(base @ ns.project(x))

        op = LinearOperator(base.shape, matvec=matvec, dtype=float)
        M = None
        if precond is not None:
            _diag_operator(precond)  # positivity gate
            d = np.asarray(precond, dtype=float).ravel()
            # keep the scaled residual inside the range of the projector
            M = LinearOperator(base.shape, matvec=lambda r: ns.project(r / d),
                               dtype=float)
        x, iters, res, ok = _run_cg(
            op, ns.project(rhs), tol, maxiter,
            x0=None if x0 is None else ns.project(np.asarray(x0, float).ravel()),
            M=M)
    else:
        m = base.shape[0]
        if m > 4200:
            raise ConfigError(
                "the dense Neumann factorization is capped at 4200 degrees "
                "of freedom; use a coarser grid"
            )
        K = np.column_stack([base @ e for e in np.eye(m)])
        K = 0.5 * (K + K.T)
        lam, Q = np.linalg.eigh(K)
        keep = lam > deflate_rtol * lam[-1]
        co = Q[:, keep].T @ rhs
        x = ns.project(Q[:, keep] @ (co / lam[keep]))
        deflated = int(m - keep.sum() - ns.dim)
        full = float(np.linalg.norm(rhs))
        unresolved = float(np.linalg.norm(rhs - K @ x)) / max(full, 1e-300)
        iters, res, ok = 0, unresolved, True
    x = ns.project(x)

    vals = x.reshape(dom.nnodes, n)
    u = Field(dom, vals)
    mask = np.zeros(dom.nnodes)
    mask[dom.omega_closed_index()] = 1.0
    energy = _energy_all_rows(tensor, kernel, dom, vals, fvals, row_mask=mask)

    # collar diagnostics at the discrete solution: the closing flux of the
    # stress nearly vanishes, the pointwise difference form does not
    st = build_stencil(kernel, dom)
    stress = Field(dom, tensor.apply(_gradient_action(st, vals)))
    flux = boundary_flux(kernel, stress).values
    diffform = nonlocal_normal_derivative(kernel, stress).values
    coll = dom.collar_index()
    diag = {
        "nullspace_dim": ns.dim,
        "compatibility_defect": rel_defect,
        "projected_load": bool(project_load),
        "collar_flux_sup": float(np.abs(flux[coll]).max()) if coll.size else 0.0,
        "collar_difference_sup": float(np.abs(diffform[coll]).max()) if coll.size else 0.0,
        "solution_nullspace_norm": float(np.linalg.norm(ns.coefficients(x))),
    }
    if n == 2:
        diag["deflated_modes"] = deflated
        diag["unresolved_load"] = unresolved
    return u, SolveReport(ok, iters, res, energy, dom.nnodes * n, diag)


# ---------------------------------------------------------------------------
# classical local oracle (P1 finite elements)
# ---------------------------------------------------------------------------


def _local_stiffness_1d(tensor, nnode, h):
    mod = tensor.apply(np.ones((1, 1)))[0, 0]  # 2 mu + lambda
    main = np.full(nnode, 2.0 * mod / h)
    main[0] = main[-1] = mod / h
    off = np.full(nnode - 1, -mod / h)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr")


def _triangles(shape):
    """Split every grid square into two triangles, consistent orientation."""
    sx, sy = shape
    idx = np.arange(sx * sy).reshape(sx, sy)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    return np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def _local_stiffness_2d(tensor, dom):
    coords = dom.coords
    tris = _triangles(dom.shape)
    cmat = tensor.as_general().c if hasattr(tensor, "as_general") else tensor.c
    rows, cols, data = [], [], []
    for tri in tris:
        p = coords[tri]
        J = np.stack([p[1] - p[0], p[2] - p[0]], axis=1)
        area = 0.5 * abs(np.linalg.det(J))
        Jinv = np.linalg.inv(J)
        g = np.vstack([-(Jinv[0] + Jinv[1]), Jinv[0], Jinv[1]])  # hat gradients
        # k[(i,a),(j,c)] = area * c_{a b c d} g_i[b] g_j[d]
        ke = area * np.einsum("abcd,ib,jd->iajc", cmat, g, g)
        for i in range(3):
            for a in range(2):
                for j in range(3):
                    for c in range(2):
                        rows.append(tri[i] * 2 + a)
                        cols.append(tri[j] * 2 + c)
                        data.append(ke[i, a, j, c])
    nd = dom.nnodes * 2
    return sparse.csr_matrix((data, (rows, cols)), shape=(nd, nd))


def _rigid_modes(dom):
    coords = dom.coords
    if dom.dim == 1:
        modes = [np.ones((dom.nnodes, 1))]
    else:
        e1 = np.zeros((dom.nnodes, 2)); e1[:, 0] = 1.0
        e2 = np.zeros((dom.nnodes, 2)); e2[:, 1] = 1.0
        rot = np.stack([-(coords[:, 1] - coords[:, 1].mean()),
                        coords[:, 0] - coords[:, 0].mean()], axis=1)
        modes = [e1, e2, rot]
    Q, _ = np.linalg.qr(np.stack([m.reshape(-1) for m in modes], axis=1))
    return Q


def solve_local_oracle(tensor, box, h, f, *, bc: str = "dirichlet",
                       tol: float = 1e-12):
    """Classical P1 finite element solution of the local elastic system.

    box and h follow the domain builder (interaction radius zero, so the
    grid is exactly the closed box).  f is a callable on node coordinates
    returning stacked components; the load is mass lumped.  bc chooses
    homogeneous Dirichlet (pinned boundary) or pure Neumann (rigid modes
    removed from the load and the solution).
    """
    dom = build_domain(box, 0.0, h)
    n = dom.dim
    fvals = np.asarray(f(dom.coords), dtype=float)
    if fvals.shape != (dom.nnodes, n):
        raise ConfigError("the oracle load must return stacked components")
    if bc not in ("dirichlet", "neumann"):
        raise ConfigError("bc must be 'dirichlet' or 'neumann'")

    K = _local_stiffness_1d(tensor, dom.nnodes, dom.h) if n == 1 \
        else _local_stiffness_2d(tensor, dom)
    lump = dom.node_volume * np.ones(dom.nnodes)
    if n == 2:
        # boundary nodes own half cells, corners a quarter
        edge = np.zeros(dom.nnodes)
        for ax in range(2):
            onedge = np.isclose(dom.coords[:, ax], dom.axes[ax][0]) | \
                np.isclose(dom.coords[:, ax], dom.axes[ax][-1])
            edge += onedge.astype(float)
        lump = lump * 0.5 ** edge
    else:
        lump[0] *= 0.5
        lump[-1] *= 0.5
    rhs = (lump[:, None] * fvals).reshape(-1)

    if bc == "dirichlet":
        inner = np.flatnonzero(dom.mask != BOUNDARY)
        free = np.repeat(inner * n, n) + np.tile(np.arange(n), inner.size)
        Kff = K[free][:, free]
        sol = np.zeros(dom.nnodes * n)
        sol[free] = sparse.linalg.spsolve(Kff.tocsc(), rhs[free])
        vals = sol.reshape(dom.nnodes, n)
        rep = SolveReport(True, 0, 0.0,
                          0.5 * float(sol @ (K @ sol)) - float(rhs @ sol),
                          free.size)
        return Field(dom, vals), rep

    Q = _rigid_modes(dom)
    rhs = rhs - Q @ (Q.T @ rhs)

    def matvec(x):
        y = K @ (x - Q @ (Q.T @ x))
        return y - Q @ (Q.T @ y)

    op = LinearOperator(K.shape, matvec=matvec, dtype=float)
    x, iters, res, ok = _run_cg(op, rhs, tol, 20 * K.shape[0])
    x = x - Q @ (Q.T @ x)
    rep = SolveReport(ok, iters, res,
                      0.5 * float(x @ (K @ x)) - float(rhs @ x),
                      K.shape[0], {"rigid_modes": Q.shape[1]})
    return Field(dom, x.reshape(dom.nnodes, n)), rep


# ---------------------------------------------------------------------------
# spectral bound helper (used by tests and the verification suite)
# ---------------------------------------------------------------------------


def min_ritz_value(tensor, kernel: Kernel, dom: Domain, *, neumann=False):
    """Smallest eigenvalue of the free-dof stiffness (dense below 1200 dofs)."""
    if neumann:
        op = _neumann_operator(tensor, kernel, dom)
        ns = neumann_nullspace(kernel, dom)
    else:
        free = dom.free_index(ZERO_COMPLEMENT)
        op = _dirichlet_operator(tensor, kernel, dom, free)
        ns = None
    m = op.shape[0]
    if m <= 1200:
        dense = np.column_stack([op @ e for e in np.eye(m)])
        dense = 0.5 * (dense + dense.T)
        vals = np.linalg.eigvalsh(dense)
        if ns is not None and ns.dim:
            return float(vals[ns.dim])  # skip the exact zeros
        return float(vals[0])
    which = eigsh(op, k=1 + (ns.dim if ns else 0), sigma=None, which="SA",
                  return_eigenvectors=False)
    vals = np.sort(which)
    return float(vals[ns.dim] if ns else vals[0])
