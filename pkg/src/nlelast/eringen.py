"""Double-integral form with the self-convolved potential.

The engineering strain-driven model pairs local symmetric gradients under
an attenuation kernel A(x, y).  For A(x, y) = (Q * Q)(x - y), with Q the
potential of the interaction kernel, that double integral equals the
nonlocal-gradient energy, because the nonlocal gradient of a compactly
supported field is Q convolved with its local gradient.  This module
tabulates the self-convolution, assembles the double-sum form with
cellwise local gradients, and measures the discrepancy against the
stencil form; the two discretizations are kept fully independent so the
comparison is not vacuous.

Tabulation works with cell averages of Q on a fine lattice (tau = h/32).
In one dimension the antiderivative of Q reduces in closed form,
int_0^x Q = x Q(x) + int_0^x rho_bar, so the averages need only cheap
radial quadratures of the profile; in two dimensions the potential is
sampled (and averaged near its singularity) on a fine grid and convolved
by FFT.  The tabulated attenuation function is then exactly the
self-convolution of that staircase: piecewise linear on the lattice in
1-D, piecewise bilinear in 2-D, with transform |s_hat|^2 >= 0.

The assembled Gram never reads point values of the attenuation function,
whose value at zero separation diverges in two dimensions.  Instead each
entry is the exact average over the grid-cell pair, obtained by one more
(box * box) convolution: a tent-mass stencil applied per axis, exact for
piecewise (bi)linear data.  Pairing those averages with cellwise
constant gradients integrates the double sum exactly for the discrete
fields, and positivity survives because the extra factor on the
transform side is an even power of sinc.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .elasticity import bilinear_form
from .errors import ConfigError, QuadratureError
from .grid import Domain, Field, ZERO_COMPLEMENT
from .kernels import Kernel, radial_quad

__all__ = [
    "EringenForm",
    "EringenKernel",
    "EringenReport",
    "assemble_eringen_form",
    "build_eringen_kernel",
    "compare_forms",
    "mercer_min",
    "scalar_identity_gap",
]

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(24)

_STRIDE = 32  # fine lattice steps per grid cell

# quadrature nodes handled with a materialized kernel matrix; larger sets
# stream row blocks, and beyond the hard cap the assembly refuses
_DENSE_CAP = 4096
_NODE_CAP = 16384


# ---------------------------------------------------------------------------
# kernel tabulation
# ---------------------------------------------------------------------------


def _cell_integrals(profile, edges, g, head_sing):
    """int of rho_bar(r) g(r) over each cell [edges[i], edges[i+1]].

    Cells away from breakpoints use fixed Gauss panels, vectorized; the
    first cell (touching zero) and any cell containing a profile
    breakpoint fall back to the adaptive radial rule.
    """
    lo = edges[:-1]
    hi = edges[1:]
    width = hi - lo
    out = np.zeros(lo.size)
    inner = [b for b in profile.breakpoints if edges[0] < b < edges[-1]]
    special = np.zeros(lo.size, dtype=bool)
    special[0] = edges[0] == 0.0
    for b in inner:
        j = np.searchsorted(edges, b, side="right") - 1
        if 0 <= j < lo.size and lo[j] < b < hi[j]:
            special[j] = True
    plain = np.flatnonzero(~special & (width > 0.0))
    if plain.size:
        r = lo[plain, None] + (_GAUSS_X[None, :] + 1.0) * 0.5 * width[plain, None]
        vals = profile.val(r.ravel()).reshape(r.shape) * g(r)
        out[plain] = 0.5 * width[plain] * (vals @ _GAUSS_W)
    for j in np.flatnonzero(special & (width > 0.0)):
        sing = head_sing if lo[j] == 0.0 else 0.0
        out[j] = radial_quad(profile, g, lo[j], hi[j], sing=sing)
    return out


def _pair_mass_stencil(stride):
    """Weights turning lattice samples into exact cell-pair averages.

    Correlating piecewise linear lattice data with these weights yields
    (data * box * box) at the lattice points, the average over two
    width-(stride*tau) cells at that separation: the tent from box * box
    is itself piecewise linear on the lattice, so the tridiagonal mass
    stencil integrates the product exactly.
    """
    j = np.arange(-stride, stride + 1)
    tent = (1.0 - np.abs(j) / stride) / stride
    mw = np.zeros(j.size + 2)
    mw[1:-1] = 4.0 * tent
    mw[:-2] += tent
    mw[2:] += tent
    return mw / 6.0


def _cell_pair_table(values, stride):
    """1-D cell-pair averaged table from the piecewise linear profile."""
    mw = _pair_mass_stencil(stride)
    pad = np.zeros(stride + 2)
    full = np.concatenate([pad, values[:0:-1], values, pad])
    center = pad.size + values.size - 1  # index of lag zero
    conv = signal.fftconvolve(full, mw)
    lo = center + stride + 1
    return conv[lo:lo + values.size + stride].copy()


def _radial_q_lookup(k: Kernel, tau: float):
    """Interpolants of Q and of int_0^r t rho_bar(t) dt on a shared table.

    Radii are geometric below 8 tau (the singular head, never queried
    under tau / 64) and tau/8-uniform out to the support.  Q values are
    reverse-accumulated segment integrals of rho_bar / r, so each node is
    exact up to quadrature and Q(R) = 0 exactly; the second lookup feeds
    the parts identity int_0^p r Q = p^2 Q(p) / 2 + (1/2) int_0^p r rho_bar.
    """
    R = k.support_radius
    head = np.geomspace(tau / 64.0, min(8.0 * tau, R), 257)
    radii = head
    if 8.0 * tau < R:
        radii = np.concatenate([head, np.arange(8.0 * tau, R, tau / 8.0)[1:], [R]])
    seg = _cell_integrals(k.profile, radii, lambda r: 1.0 / r, 0.0)
    qvals = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    rseg = _cell_integrals(k.profile, np.concatenate([[0.0], radii]),
                           lambda r: r, k.sing_sub)
    mvals = np.cumsum(rseg)

    def lookup_q(r):
        r = np.asarray(r, dtype=float)
        return np.where(r >= R, 0.0, np.interp(r, radii, qvals))

    def lookup_m(r):
        r = np.asarray(r, dtype=float)
        return np.interp(r, radii, mvals)

    return lookup_q, lookup_m


def _potential_cell_averages(k: Kernel, tau: float):
    """Cell averages of Q over [m tau, (m+1) tau], exact up to quadrature.

    Uses int_0^x Q = x Q(x) + M(x) with M the profile antiderivative, so
    the only integrals needed are of rho_bar and rho_bar / r over cells.
    """
    R = k.support_radius
    nf = int(np.ceil(R / tau - 1e-12))
    edges = np.minimum(np.arange(nf + 1) * tau, R)
    mass_cells = _cell_integrals(k.profile, edges, lambda r: 1.0, k.sing_sub)
    over_r = _cell_integrals(k.profile, edges[1:], lambda r: 1.0 / r, 0.0)
    # M and Q at the nodes tau, 2 tau, ..., nf tau (Q past the support is 0)
    M = np.cumsum(mass_cells)
    Q = np.concatenate([np.cumsum(over_r[::-1])[::-1], [0.0]])
    nodes = edges[1:]
    anti = nodes * Q + M  # int_0^{m tau} Q
    return np.diff(np.concatenate([[0.0], anti])) / tau


@dataclass(frozen=True)
class EringenKernel:
    """Tabulated attenuation function (Q * Q)(x - y).

    values[m] holds the radial profile at radius m * tau.  In 1-D the
    piecewise linear interpolant through them is exactly the
    self-convolution of the staircase representation of Q; cell_values
    additionally carries the exact average over width-h grid-cell pairs
    at lattice separations, the table the assembled Gram reads.  In 2-D
    values is a radial readout along a lattice axis (display only) and
    cell_grid carries the quarter-plane table of square-cell pair
    averages indexed by absolute lattice offsets.

    fine keeps the build's staircase data: the cell averages of Q in
    1-D (the scalar identity check replays the convolution from them),
    the line projection of the sampled potential in 2-D (the transform
    is evaluated from it).
    """

    dim: int
    tau: float
    values: np.ndarray
    support: float
    source: Kernel
    fine: np.ndarray = None
    cell_values: np.ndarray = None
    cell_grid: np.ndarray = None

    def profile(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        radii = np.arange(self.values.size) * self.tau
        out = np.interp(r, radii, self.values, right=0.0)
        return np.where(r >= self.support, 0.0, out)

    def transform(self, xi):
        """Fourier transform of the tabulated attenuation at xi >= 0.

        Exact transform of what the table represents: in 1-D the squared
        transform of the staircase potential (tent decomposition of the
        piecewise linear profile), in 2-D the squared transform of the
        sampled potential grid along a frequency axis, evaluated from
        its line projection.
        """
        xs = np.atleast_1d(np.asarray(xi, dtype=float))
        out = np.empty_like(xs)
        for i, x in enumerate(xs):
            if self.dim == 1:
                radii = np.arange(self.values.size) * self.tau
                if x == 0.0:
                    out[i] = self.tau * (self.values[0] + 2.0 * self.values[1:].sum())
                    continue
                z = np.pi * x * self.tau
                snc = (np.sin(z) / z) ** 2
                cosv = np.cos(2.0 * np.pi * x * radii[1:])
                out[i] = self.tau * snc * (self.values[0] + 2.0 * (self.values[1:] @ cosv))
            else:
                snc = 1.0
                if x != 0.0:
                    z = np.pi * x * self.tau
                    snc = np.sin(z) / z
                pos = np.arange(1, self.fine.size) * self.tau
                line = self.fine[0] + 2.0 * (
                    self.fine[1:] @ np.cos(2.0 * np.pi * x * pos)
                )
                out[i] = (self.tau * snc * line) ** 2
        return float(out[0]) if np.isscalar(xi) else out


def build_eringen_kernel(k: Kernel, h: float) -> EringenKernel:
    """Tabulate (Q * Q) for the kernel at lattice step h / 32."""
    if not np.isfinite(k.support_radius):
        raise QuadratureError("the self-convolution needs a compactly supported kernel")
    if h <= 0.0:
        raise ConfigError("grid resolution must be positive")
    tau = h / _STRIDE
    R = k.support_radius
    if k.dim == 1:
        fine = _potential_cell_averages(k, tau)
        sym = np.concatenate([fine[::-1], fine])
        conv = signal.fftconvolve(sym, sym) * tau
        values = conv[sym.size - 1:].copy()
        cell = _cell_pair_table(values, _STRIDE)
        return EringenKernel(1, tau, values, 2.0 * R, k, fine=fine,
                             cell_values=cell)

    m = int(np.ceil(R / tau - 1e-12))
    ax = np.arange(-m, m + 1) * tau
    rr = np.hypot(ax[:, None], ax[None, :])
    qp, mp = _radial_q_lookup(k, tau)
    grid = np.where(rr < R, qp(rr), 0.0)
    # cells near the origin see the potential singularity; center sampling
    # there loses an O(sqrt(tau)) share of the mass, so average instead
    near = np.argwhere((rr <= 24.0 * tau) & (rr > 0.0))
    u = 0.5 * tau * _GAUSS_X
    ux, uy = np.meshgrid(u, u, indexing="ij")
    ww = 0.25 * np.outer(_GAUSS_W, _GAUSS_W).ravel()
    centers = np.stack([ax[near[:, 0]], ax[near[:, 1]]], axis=1)
    rads = np.hypot(centers[:, 0, None] + ux.ravel()[None, :],
                    centers[:, 1, None] + uy.ravel()[None, :])
    cellavg = np.where(rads < R, qp(rads.ravel()).reshape(rads.shape), 0.0) @ ww
    grid[near[:, 0], near[:, 1]] = cellavg
    # the center cell contains the singularity itself; reduce the square
    # average to wedges, avg = (8 / tau^2) int_0^{pi/4} W(tau / (2 cos t)) dt
    # with W(p) = int_0^p r Q dr = p^2 Q(p) / 2 + (1/2) int_0^p r rho_bar
    theta = 0.125 * np.pi * (_GAUSS_X + 1.0)
    rho = 0.5 * tau / np.cos(theta)
    wedge = 0.5 * rho**2 * qp(rho) + 0.5 * mp(rho)
    grid[m, m] = 8.0 / tau**2 * 0.125 * np.pi * float(wedge @ _GAUSS_W)

    conv = signal.fftconvolve(grid, grid) * tau**2
    values = conv[2 * m, 2 * m:].copy()
    values[np.arange(values.size) * tau >= 2.0 * R] = 0.0
    # square-cell pair averages: the staircase self-convolution is
    # piecewise bilinear on the lattice, so the tent-mass stencil applied
    # per axis averages it exactly over width-h cell pairs
    mw = _pair_mass_stencil(_STRIDE)
    full = signal.fftconvolve(conv, np.outer(mw, mw))
    c0 = 2 * m + _STRIDE + 1
    cell_grid = full[c0:, c0:].copy()
    proj = grid.sum(axis=1) * tau
    return EringenKernel(2, tau, values, 2.0 * R, k, fine=proj[m:].copy(),
                         cell_grid=cell_grid)


# ---------------------------------------------------------------------------
# double-sum bilinear form
# ---------------------------------------------------------------------------


def _quad_nodes(dom: Domain):
    """Cell quadrature data: points, weight, lattice index, gradients.

    1-D: box cells with midpoint nodes, gradient (v[i+1] - v[i]) / h.
    2-D: box squares with center nodes and the mean local gradient of
    the bilinear interpolant (difference means along each axis).
    Returns (points, weight, lattice, take): lattice holds integer cell
    coordinates (pair separations are exact lattice multiples), and
    take(values) produces (nq, ncomp, dim) gradients from nodal stacks.
    """
    h = dom.h
    if dom.dim == 1:
        x = dom.axes[0]
        mids = 0.5 * (x[:-1] + x[1:])
        sel = np.flatnonzero((mids > dom.lo[0]) & (mids < dom.hi[0]))
        pts = mids[sel].reshape(-1, 1)
        latt = np.arange(sel.size)[:, None]

        def take(values):
            g = (values[sel + 1] - values[sel]) / h
            return g[:, :, None]

        return pts, h, latt, take

    sx, sy = dom.shape
    idx = np.arange(dom.nnodes).reshape(sx, sy)
    cx = 0.5 * (dom.axes[0][:-1] + dom.axes[0][1:])
    cy = 0.5 * (dom.axes[1][:-1] + dom.axes[1][1:])
    keep_x = (cx > dom.lo[0]) & (cx < dom.hi[0])
    keep_y = (cy > dom.lo[1]) & (cy < dom.hi[1])
    sq = np.argwhere(keep_x[:, None] & keep_y[None, :])
    a = idx[sq[:, 0], sq[:, 1]]
    b = idx[sq[:, 0] + 1, sq[:, 1]]
    c = idx[sq[:, 0] + 1, sq[:, 1] + 1]
    d = idx[sq[:, 0], sq[:, 1] + 1]
    pts = np.stack([cx[sq[:, 0]], cy[sq[:, 1]]], axis=1)
    latt = sq - sq.min(axis=0)

    def take(values):
        va, vb, vc, vd = values[a], values[b], values[c], values[d]
        gx = (vb - va + vc - vd) / (2.0 * h)
        gy = (vd - va + vc - vb) / (2.0 * h)
        return np.stack([gx, gy], axis=-1)

    return pts, h * h, latt, take


def _kernel_rows(ek: EringenKernel, latt: np.ndarray, rows: np.ndarray):
    """Cell-pair averaged kernel block for the given quadrature rows."""
    if ek.dim == 1:
        lags = np.abs(latt[rows, 0][:, None] - latt[:, 0][None, :]) * _STRIDE
        table = ek.cell_values
        need = int(lags.max()) + 1
        if need > table.size:
            table = np.concatenate([table, np.zeros(need - table.size)])
        return table[lags]
    di = np.abs(latt[rows, 0][:, None] - latt[:, 0][None, :]) * _STRIDE
    dj = np.abs(latt[rows, 1][:, None] - latt[:, 1][None, :]) * _STRIDE
    grid = ek.cell_grid
    nx = max(int(di.max()) + 1, grid.shape[0])
    ny = max(int(dj.max()) + 1, grid.shape[1])
    if (nx, ny) != grid.shape:
        padded = np.zeros((nx, ny))
        padded[:grid.shape[0], :grid.shape[1]] = grid
        grid = padded
    return grid[di, dj]


def _check_complement_zero(v: Field):
    dom = v.domain
    keep = np.zeros(dom.nnodes, dtype=bool)
    keep[dom.free_index(ZERO_COMPLEMENT)] = True
    vals = np.atleast_2d(v.values.reshape(dom.nnodes, -1))
    outside = np.abs(vals[~keep]).max() if (~keep).any() else 0.0
    scale = max(float(np.abs(vals).max()), 1.0)
    if outside > 1e-10 * scale:
        raise ConfigError(
            "the double-integral form needs fields vanishing outside the core"
        )


class EringenForm:
    """Dense (or row-streamed) evaluator of the double-sum energy pairing.

    a(v, w) = weight^2 * sum_{ij} A_ij C[sym G v]_i : sym G w_j over cell
    quadrature nodes with cellwise local gradients G, where A_ij is the
    exact average of the attenuation function over the cell pair.  Cell
    separations are exact lattice multiples of the tabulation step, so
    kernel entries are table lookups without interpolation.
    """

    def __init__(self, ek: EringenKernel, tensor, dom: Domain,
                 dense_cap: int = _DENSE_CAP):
        if ek.dim != dom.dim:
            raise ConfigError("kernel table and domain dimension differ")
        if tensor.dim != dom.dim:
            raise ConfigError("material tensor dimension does not match")
        stride = dom.h / ek.tau
        if abs(stride - _STRIDE) > 1e-9:
            raise ConfigError(
                "the kernel table step does not divide the grid spacing; "
                "build the table for this resolution"
            )
        self.ek = ek
        self.tensor = tensor
        self.dom = dom
        self.points, self.weight, self._latt, self._take = _quad_nodes(dom)
        nq = self.points.shape[0]
        if nq > _NODE_CAP:
            raise ConfigError(
                "double-sum assembly supports at most %d quadrature nodes" % _NODE_CAP
            )
        self._dense = nq <= dense_cap
        self._K = _kernel_rows(ek, self._latt, np.arange(nq)) if self._dense else None

    def _sym_grad(self, v: Field):
        _check_complement_zero(v)
        g = self._take(v.values.reshape(self.dom.nnodes, -1))
        return 0.5 * (g + np.swapaxes(g, 1, 2))

    def __call__(self, v: Field, w: Field) -> float:
        for f in (v, w):
            if f.rank != "vector":
                raise ConfigError("the energy pairing takes vector fields")
            if f.domain is not self.dom:
                raise ConfigError("field domain does not match the assembly")
        S = self.tensor.apply(self._sym_grad(v))
        S = 0.5 * (S + np.swapaxes(S, 1, 2))
        T = self._sym_grad(w)
        nq = S.shape[0]
        Sf = S.reshape(nq, -1)
        Tf = T.reshape(nq, -1)
        if self._dense:
            acc = float(np.sum(Sf * (self._K @ Tf)))
        else:
            acc = 0.0
            for i0 in range(0, nq, 1024):
                rows = np.arange(i0, min(i0 + 1024, nq))
                block = _kernel_rows(self.ek, self._latt, rows)
                acc += float(np.sum(Sf[rows] * (block @ Tf)))
        return self.weight**2 * acc

    def seminorm(self, v: Field) -> float:
        return self(v, v)

    def kernel_quadratic(self, phi: np.ndarray) -> float:
        """weight^2 * phi^T A phi for scalar data on the quadrature cells."""
        phi = np.asarray(phi, dtype=float)
        nq = self.points.shape[0]
        if phi.shape != (nq,):
            raise ConfigError("test function must live on the quadrature nodes")
        if self._dense:
            return self.weight**2 * float(phi @ (self._K @ phi))
        acc = 0.0
        for i0 in range(0, nq, 1024):
            rows = np.arange(i0, min(i0 + 1024, nq))
            acc += float(phi[rows] @ (_kernel_rows(self.ek, self._latt, rows) @ phi))
        return self.weight**2 * acc


def assemble_eringen_form(ek: EringenKernel, tensor, dom: Domain,
                          dense_cap: int = _DENSE_CAP) -> EringenForm:
    return EringenForm(ek, tensor, dom, dense_cap=dense_cap)


def mercer_min(ek: EringenKernel, dom: Domain, count: int = 20,
               seed: int = 0) -> float:
    """Smallest of count random quadratic-form values of the kernel Gram.

    The Gram is a lattice subsample of an autocorrelation mollified by an
    even sinc power on the transform side, so positivity is structural;
    this measures it anyway.
    """
    pts, weight, latt, _ = _quad_nodes(dom)
    nq = pts.shape[0]
    if nq > _NODE_CAP:
        raise ConfigError(
            "double-sum assembly supports at most %d quadrature nodes" % _NODE_CAP
        )
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(count):
        phi = rng.standard_normal(nq)
        acc = 0.0
        for i0 in range(0, nq, 2048):
            rows = np.arange(i0, min(i0 + 2048, nq))
            acc += float(phi[rows] @ (_kernel_rows(ek, latt, rows) @ phi))
        best = min(best, weight**2 * acc)
    return float(best)


# ---------------------------------------------------------------------------
# form comparison and the scalar identity
# ---------------------------------------------------------------------------


@dataclass
class EringenReport:
    h: float
    discrepancies: np.ndarray
    max_discrepancy: float
    seminorm_discrepancies: np.ndarray
    mercer_min: float


def _random_bump(dom: Domain, rng) -> Field:
    """Smooth random sine combination, zeroed outside the open box."""
    n = dom.dim
    vals = np.zeros((dom.nnodes, n))
    rel = np.empty_like(dom.coords)
    for ax in range(n):
        rel[:, ax] = (dom.coords[:, ax] - dom.lo[ax]) / (dom.hi[ax] - dom.lo[ax])
    for a in range(n):
        if n == 1:
            for m in range(1, 5):
                vals[:, a] += rng.standard_normal() * np.sin(m * np.pi * rel[:, 0])
        else:
            for m in range(1, 3):
                for l in range(1, 3):
                    vals[:, a] += rng.standard_normal() * np.sin(
                        m * np.pi * rel[:, 0]
                    ) * np.sin(l * np.pi * rel[:, 1])
    keep = np.zeros(dom.nnodes, dtype=bool)
    keep[dom.free_index(ZERO_COMPLEMENT)] = True
    vals[~keep] = 0.0
    return Field(dom, vals, constraint=ZERO_COMPLEMENT)


def compare_forms(k: Kernel, tensor, dom: Domain, trial_count: int = 8,
                  seed: int = 0) -> EringenReport:
    """Relative gap between the double-sum and nonlocal-gradient energies.

    Both sides discretize the same continuum pairing with independent
    quadratures (cellwise local gradients under the tabulated attenuation
    kernel against stencil nonlocal gradients), so the gap measures
    discretization error and must shrink under refinement.
    """
    ek = build_eringen_kernel(k, dom.h)
    form = assemble_eringen_form(ek, tensor, dom)
    rng = np.random.default_rng(seed)
    gaps = []
    semis = []
    for t in range(trial_count):
        v = _random_bump(dom, rng)
        w = _random_bump(dom, rng)
        a_double = form(v, w)
        a_grad = bilinear_form(tensor, k, v, w)
        gaps.append(abs(a_double - a_grad) / max(abs(a_grad), 1e-14))
        if t < 3:
            s_double = form.seminorm(v)
            s_grad = bilinear_form(tensor, k, v, v)
            semis.append(abs(s_double - s_grad) / max(abs(s_grad), 1e-14))
    gaps = np.array(gaps)
    return EringenReport(
        h=dom.h,
        discrepancies=gaps,
        max_discrepancy=float(gaps.max()),
        seminorm_discrepancies=np.array(semis),
        mercer_min=mercer_min(ek, dom),
    )


def scalar_identity_gap(k: Kernel, dom: Domain):
    """Check sum_xy (Q*Q)(x-y) u'(x) u'(y) = ||Q * u'||^2 on a scalar bump.

    The left side is the double sum with the cell-pair averaged table
    over cell gradients; the right side convolves the staircase potential
    with the staircase gradient and takes the exact L2 norm of the
    resulting piecewise linear function.  Because the pair averages
    integrate the tabulated attenuation exactly, the two sides agree to
    roundoff at every resolution; a build inconsistency would break the
    equality.  Returns (lhs, rhs, relative gap).
    """
    if dom.dim != 1:
        raise ConfigError("the scalar identity check is one-dimensional")
    ek = build_eringen_kernel(k, dom.h)
    lo, hi = float(dom.lo[0]), float(dom.hi[0])
    rel = (dom.coords[:, 0] - lo) / (hi - lo)
    u = np.sin(np.pi * np.clip(rel, 0.0, 1.0)) ** 2
    x = dom.axes[0]
    mids = 0.5 * (x[:-1] + x[1:])
    sel = np.flatnonzero((mids > lo) & (mids < hi))
    g = (u[sel + 1] - u[sel]) / dom.h

    lags = np.abs(np.arange(g.size)[:, None] - np.arange(g.size)[None, :]) * _STRIDE
    table = ek.cell_values
    need = int(lags.max()) + 1
    if need > table.size:
        table = np.concatenate([table, np.zeros(need - table.size)])
    lhs = dom.h**2 * float(g @ (table[lags] @ g))

    sym = np.concatenate([ek.fine[::-1], ek.fine])
    conv = signal.fftconvolve(sym, np.repeat(g, _STRIDE)) * ek.tau
    vals = np.concatenate([[0.0], conv, [0.0]])
    rhs = ek.tau / 3.0 * float(
        np.sum(vals[:-1] ** 2 + vals[:-1] * vals[1:] + vals[1:] ** 2)
    )
    gap = abs(lhs - rhs) / max(rhs, 1e-14)
    return lhs, rhs, gap
