"""Nonlocal gradient, divergence, and composition operators.

Two backends share one calculus.  On bounded domains the operators are
sparse collocation matrices: the kernel-weighted difference quotient is
integrated against the piecewise-multilinear hat functions of the node
lattice, giving one weight vector per integer offset,

    w_o = int N_o(z) z / |z|^2 rho(z) dz.

Because the hats reproduce affine functions, a normalized kernel yields a
gradient that is exact on affines up to the accuracy of the weight
quadrature, and because the weights are assembled from one octant and
mirrored, w_{-o} = -w_o holds exactly, so each component matrix is
antisymmetric and the divergence is the exact negative transpose of the
gradient.  Rows near the lattice edge silently treat missing neighbours as
zeros, which is exact for fields constrained to vanish there and is the
intended reading for free fields evaluated away from the edge.

On periodic grids the operators are Fourier multipliers 2 pi i xi_k
q_hat(|xi|), diagonal in the FFT basis.

The collar diagnostics at the bottom (normal derivative, closing flux, and
the partial-region identity checker) use plain node sums with the diagonal
excluded as the principal value; the checker's three terms share one pair
quadrature, so its residual is pure roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ConfigError, QuadratureError, SolveError
from .grid import INNER, Domain, Field, TorusGrid
from .kernels import Kernel, potential_mass, q_hat, radial_quad

_ACTIVE_TOL = 1e-12


# ---------------------------------------------------------------------------
# collocation weights
# ---------------------------------------------------------------------------


def _weights_1d(kernel: Kernel, h: float, radius: float) -> dict:
    """Positive-offset hat weights; the caller mirrors them."""
    prof = kernel.profile
    r_max = min(radius, prof.support)
    ncell = int(math.ceil(r_max / h - 1e-12))
    asc = np.zeros(ncell)  # weight toward node c+1 from cell c
    desc = np.zeros(ncell)  # weight toward node c from cell c
    for c in range(ncell):
        lo, hi = c * h, (c + 1) * h
        if c == 0:
            # (z/h) / z collapses to 1/h; the kernel mass over the first
            # cell absorbs the singularity
            asc[0] = radial_quad(prof, lambda r: 1.0 / h, 0.0, hi, sing=kernel.sing_sub)
        else:
            asc[c] = radial_quad(prof, lambda r: (r / h - c) / r, lo, hi)
            desc[c] = radial_quad(prof, lambda r: ((c + 1) - r / h) / r, lo, hi)
    out = {}
    for o in range(1, ncell + 1):
        w = asc[o - 1] + (desc[o] if o < ncell else 0.0)
        if w != 0.0:
            out[(o,)] = np.array([w])
    return out


def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


_GTH, _GTW = _gauss(12)
_GR, _GRW = _gauss(12)
_GR0, _GR0W = _gauss(24)


def _cell_angles(i, j, h, circles):
    """Sorted split angles for the polar sweep of lattice cell (i, j)."""
    x0, x1 = i * h, (i + 1) * h
    y0, y1 = j * h, (j + 1) * h
    th_lo = math.atan2(y0, x1)
    th_hi = math.atan2(y1, x0) if x0 > 0.0 else math.pi / 2.0
    cuts = {th_lo, th_hi}
    if x0 > 0.0 or y0 > 0.0:
        cuts.add(math.atan2(y0, x0))
    cuts.add(math.atan2(y1, x1))
    for rr in circles:
        if rr <= 0.0:
            continue
        for xx in (x0, x1):
            if 0.0 < xx < rr:
                cuts.add(math.acos(xx / rr))
        for yy in (y0, y1):
            if 0.0 < yy < rr:
                cuts.add(math.asin(yy / rr))
    return sorted(c for c in cuts if th_lo <= c <= th_hi)


def _weights_2d(kernel: Kernel, h: float, radius: float) -> dict:
    """Full-plane hat weights assembled from first-quadrant cells.

    Each cell is swept in polar coordinates; the angular range is split
    where the bounding edge or any profile breakpoint circle crosses the
    cell so every panel has a smooth integrand, then tensor Gauss rules are
    applied (with the r^{1-s} substitution on the cell at the origin).
    """
    prof = kernel.profile
    r_max = min(radius, prof.support)
    ncell = int(math.ceil(r_max / h - 1e-12))
    circles = [r_max] + [b for b in prof.breakpoints if b < r_max]
    sing = kernel.sing_sub
    acc = {}

    def add(node, vec):
        c1, c2 = node
        for s1 in (1, -1):
            for s2 in (1, -1):
                key = (s1 * c1, s2 * c2)
                cur = acc.get(key)
                w = np.array([s1 * vec[0], s2 * vec[1]])
                if cur is None:
                    acc[key] = w
                else:
                    cur += w

    for i in range(ncell):
        for j in range(ncell):
            if math.hypot(i * h, j * h) >= r_max:
                continue
            corner = _cell_weights_polar(
                prof, h, i, j, r_max, circles, sing
            )
            for node, vec in corner.items():
                add(node, vec)
    acc.pop((0, 0), None)
    return {o: w for o, w in acc.items() if w[0] != 0.0 or w[1] != 0.0}


def _cell_weights_polar(prof, h, i, j, r_max, circles, sing):
    """Integrals of hat * e * rho_bar over one first-quadrant cell.

    Returns {corner multi-index: weight 2-vector} for the cell's four
    corners.
    """
    x0, x1 = i * h, (i + 1) * h
    y0, y1 = j * h, (j + 1) * h
    angles = _cell_angles(i, j, h, circles)
    out = {
        (i, j): np.zeros(2),
        (i + 1, j): np.zeros(2),
        (i, j + 1): np.zeros(2),
        (i + 1, j + 1): np.zeros(2),
    }
    brks = sorted(b for b in circles if b <= r_max)
    for th_a, th_b in zip(angles[:-1], angles[1:]):
        if th_b - th_a < 1e-15:
            continue
        mid = 0.5 * (th_a + th_b)
        half = 0.5 * (th_b - th_a)
        th_nodes = mid + half * _GTH
        th_wts = half * _GTW
        for th, tw in zip(th_nodes, th_wts):
            ct, st = math.cos(th), math.sin(th)
            r_in = 0.0
            if x0 > 0.0:
                r_in = max(r_in, x0 / ct)
            if y0 > 0.0:
                r_in = max(r_in, y0 / st)
            r_out = r_max
            if ct > 1e-300:
                r_out = min(r_out, x1 / ct)
            if st > 1e-300:
                r_out = min(r_out, y1 / st)
            if r_out <= r_in:
                continue
            segs = [r_in] + [b for b in brks if r_in < b < r_out] + [r_out]
            for a, b in zip(segs[:-1], segs[1:]):
                if a == 0.0 and sing > 0.0:
                    p = 1.0 - sing
                    ua, ub = 0.0, b**p
                    u = 0.5 * (ua + ub) + 0.5 * (ub - ua) * _GR0
                    uw = 0.5 * (ub - ua) * _GR0W
                    r = u ** (1.0 / p)
                    jac = r**sing / p
                    rw = uw * jac
                else:
                    r = 0.5 * (a + b) + 0.5 * (b - a) * _GR
                    rw = 0.5 * (b - a) * _GRW
                rho = prof.val(r)
                fx, fy = r * ct, r * st
                # bilinear hats of the four corners at (fx, fy)
                ax = fx / h - i
                ay = fy / h - j
                base = rho * rw * tw
                e = np.array([ct, st])
                out[(i, j)] += e * np.sum(base * (1.0 - ax) * (1.0 - ay))
                out[(i + 1, j)] += e * np.sum(base * ax * (1.0 - ay))
                out[(i, j + 1)] += e * np.sum(base * (1.0 - ax) * ay)
                out[(i + 1, j + 1)] += e * np.sum(base * ax * ay)
    return out


@dataclass
class GradientStencil:
    """Offset weights and per-component sparse matrices on one Domain."""

    offsets: np.ndarray  # (K, n) integer offsets, zero offset excluded
    weights: np.ndarray  # (K, n) weight vectors
    mats: list  # csr matrix per component
    moment: np.ndarray  # sum_o w_o (o h)^T, the affine response matrix

    @property
    def max_offset(self) -> int:
        return int(np.max(np.abs(self.offsets)))


def _mirror_weights(pos: dict, dim: int) -> dict:
    if dim == 1:
        full = dict(pos)
        for o, w in pos.items():
            full[(-o[0],)] = -w
        return full
    return pos  # 2-D assembly already covers the full plane


def build_stencil(kernel: Kernel, dom: Domain, max_radius: float = None) -> GradientStencil:
    """Hat-collocation gradient stencil for a kernel on a Domain (cached).

    Kernels with unbounded support must either receive an explicit
    ``max_radius`` or accept the default truncation at the lattice extent.
    """
    if kernel.dim != dom.dim:
        raise ConfigError("kernel and domain dimensions disagree")
    if max_radius is None:
        if math.isfinite(kernel.support_radius):
            max_radius = kernel.support_radius
        else:
            max_radius = max(
                float(a[-1] - a[0]) for a in dom.axes
            ) + dom.h
    key = ("stencil", id(kernel), round(max_radius, 12))
    hit = dom._op_cache.get(key)
    if hit is not None:
        return hit[1]
    h = dom.h
    if dom.dim == 1:
        wdict = _mirror_weights(_weights_1d(kernel, h, max_radius), 1)
    else:
        wdict = _weights_2d(kernel, h, max_radius)
    if not wdict:
        raise QuadratureError("kernel support is too small for this lattice")
    offsets = np.array(sorted(wdict.keys()), dtype=int)
    weights = np.array([wdict[tuple(o)] for o in offsets])
    mats = _offset_matrices(dom, offsets, weights)
    moment = (h * offsets.astype(float)).T @ weights
    st = GradientStencil(offsets=offsets, weights=weights, mats=mats, moment=moment.T)
    dom._op_cache[key] = (kernel, st)
    return st


def _offset_matrices(dom: Domain, offsets, weights):
    shape = dom.shape
    M = dom.nnodes
    strides = np.array(
        [int(np.prod(shape[d + 1:])) for d in range(len(shape))], dtype=int
    )
    rows_all, cols_all, data_all = [], [], []
    for o, w in zip(offsets, weights):
        ranges = []
        for d, od in enumerate(o):
            lo = max(0, -od)
            hi = shape[d] - max(0, od)
            if hi <= lo:
                ranges = None
                break
            ranges.append(np.arange(lo, hi))
        if ranges is None:
            continue
        if len(shape) == 1:
            rows = ranges[0]
        else:
            rows = (
                ranges[0][:, None] * strides[0] + ranges[1][None, :]
            ).ravel()
        shift = int(np.dot(o, strides))
        rows_all.append(rows)
        cols_all.append(rows + shift)
        data_all.append(np.broadcast_to(w, (rows.size, len(o))))
    rows = np.concatenate(rows_all)
    cols = np.concatenate(cols_all)
    data = np.concatenate(data_all, axis=0)
    mats = []
    for k in range(len(dom.shape)):
        mats.append(
            sparse.coo_matrix((data[:, k], (rows, cols)), shape=(M, M)).tocsr()
        )
    return mats


# ---------------------------------------------------------------------------
# bounded-domain field operators
# ---------------------------------------------------------------------------


def nonlocal_gradient(kernel: Kernel, f: Field, max_radius: float = None) -> Field:
    """Apply the collocation gradient: scalar -> vector, vector -> matrix."""
    st = build_stencil(kernel, f.domain, max_radius)
    vals = f.values
    if f.rank == "scalar":
        out = np.stack([B @ vals for B in st.mats], axis=-1)
    elif f.rank == "vector":
        out = np.stack(
            [np.stack([B @ vals[:, a] for B in st.mats], axis=-1)
             for a in range(f.domain.dim)],
            axis=1,
        )
    else:
        raise ConfigError("gradient takes scalar or vector fields")
    return Field(f.domain, out)


def nonlocal_divergence(kernel: Kernel, f: Field, max_radius: float = None) -> Field:
    """Apply the collocation divergence: vector -> scalar, matrix -> vector.

    Matrix fields contract their second index against the direction vector,
    which makes the divergence the trace-compatible partner of the gradient.
    """
    st = build_stencil(kernel, f.domain, max_radius)
    n = f.domain.dim
    vals = f.values
    if f.rank == "vector":
        out = sum(st.mats[b] @ vals[:, b] for b in range(n))
    elif f.rank == "matrix":
        out = np.stack(
            [sum(st.mats[b] @ vals[:, a, b] for b in range(n))
             for a in range(n)],
            axis=-1,
        )
    else:
        raise ConfigError("divergence takes vector or matrix fields")
    return Field(f.domain, out)


def nonlocal_sym_gradient(kernel: Kernel, f: Field, max_radius: float = None) -> Field:
    if f.rank != "vector":
        raise ConfigError("symmetric gradient takes vector fields")
    g = nonlocal_gradient(kernel, f, max_radius)
    sym = 0.5 * (g.values + np.swapaxes(g.values, 1, 2))
    return Field(f.domain, sym)


def nonlocal_laplacian(kernel: Kernel, f: Field, max_radius: float = None) -> Field:
    """-div(grad .), computed as the matrix composition.

    The inner gradient spills one interaction radius past the box, so the
    lattice must carry at least a doubled collar for the values on the
    standard collar to be trustworthy.
    """
    if f.domain.delta > 0 and f.domain.collar_mult < 2:
        raise ConfigError(
            "composition needs a doubled collar: rebuild the domain with "
            "collar_mult >= 2"
        )
    st = build_stencil(kernel, f.domain, max_radius)
    n = f.domain.dim
    if f.rank == "scalar":
        out = -sum(B @ (B @ f.values) for B in st.mats)
    elif f.rank == "vector":
        out = np.stack(
            [-sum(B @ (B @ f.values[:, a]) for B in st.mats)
             for a in range(n)],
            axis=-1,
        )
    else:
        raise ConfigError("laplacian takes scalar or vector fields")
    return Field(f.domain, out)


def leibniz_remainder(kernel: Kernel, phi: Field, Phi: Field,
                      max_radius: float = None) -> Field:
    """K[phi, Phi](x) = int (phi(y) - phi(x)) Phi(y) F(x, y) dy.

    Discretized with the same hat weights as the divergence, so
    div(phi Phi) - phi div Phi - K vanishes identically row by row, and
    K[phi, I] reproduces the gradient of phi exactly.
    """
    if phi.rank != "scalar" or Phi.rank != "matrix":
        raise ConfigError("remainder takes a scalar and a matrix field")
    if phi.domain is not Phi.domain:
        raise ConfigError("fields live on different domains")
    dom = phi.domain
    st = build_stencil(kernel, dom, max_radius)
    shape = dom.shape
    n = dom.dim
    pv = phi.values.reshape(shape)
    Pv = Phi.values.reshape(shape + (n, n))
    out = np.zeros(shape + (n,))
    for o, w in zip(st.offsets, st.weights):
        src = tuple(
            slice(max(0, od), shape[d] + min(0, od))
            for d, od in enumerate(o)
        )
        dst = tuple(
            slice(max(0, -od), shape[d] - max(0, od))
            for d, od in enumerate(o)
        )
        dphi = pv[src] - pv[dst]
        contrib = np.einsum("...ab,b->...a", Pv[src], w)
        out[dst] += dphi[..., None] * contrib
    return Field(dom, out.reshape(dom.nnodes, n))


# ---------------------------------------------------------------------------
# spectral backend
# ---------------------------------------------------------------------------


def _spec_cache(grid: TorusGrid) -> dict:
    return grid.__dict__.setdefault("_spec_cache", {})


def qhat_on_grid(kernel: Kernel, grid: TorusGrid) -> np.ndarray:
    """q_hat evaluated at every lattice frequency magnitude (cached).

    Compact kernels are sampled on a dense logarithmic table and cubic
    splined in log-frequency; power kernels use their closed form.  The
    zero frequency gets the exact mean value int Q dx (infinite for
    unbounded kernels).
    """
    cache = _spec_cache(grid)
    key = ("qhat", id(kernel))
    hit = cache.get(key)
    if hit is not None:
        return hit[1]
    mag = grid.freq_magnitude()
    pos = mag[mag > 0.0]
    lo, hi = pos.min(), pos.max()
    if math.isfinite(kernel.support_radius):
        from scipy.interpolate import CubicSpline

        ngrid = 512
        xs = np.geomspace(lo, hi, ngrid)
        qs = q_hat(kernel, xs)
        spl = CubicSpline(np.log(xs), qs)
        out = np.empty_like(mag)
        zero = mag == 0.0
        out[zero] = potential_mass(kernel)
        out[~zero] = spl(np.log(mag[~zero]))
        # pin the endpoints to the directly computed values
        out[np.isclose(mag, lo)] = q_hat(kernel, float(lo))
        out[np.isclose(mag, hi)] = q_hat(kernel, float(hi))
    else:
        with np.errstate(divide="ignore"):
            out = np.asarray(q_hat(kernel, np.maximum(mag, 1e-300)))
        out = out.reshape(mag.shape)
        out[mag == 0.0] = np.inf
    cache[key] = (kernel, out)
    return out


def _nyquist_masks(grid: TorusGrid):
    """Per-axis masks marking the unpaired half-sampling frequency.

    A real field on an even grid carries a real amplitude at the Nyquist
    bin; a purely imaginary first-derivative multiplier there has no real
    counterpart, so odd operators act on the band-limited part only and
    must zero that bin (in every operator consistently, or compositions
    drift apart from their direct multipliers).
    """
    nyq = grid.freqs().min()
    masks = []
    for f in grid.freq_vectors():
        masks.append(np.broadcast_to(f == nyq, grid.shape))
    return masks


def _multipliers(kernel: Kernel, grid: TorusGrid):
    cache = _spec_cache(grid)
    key = ("mult", id(kernel))
    hit = cache.get(key)
    if hit is not None:
        return hit[1]
    qh = qhat_on_grid(kernel, grid)
    ms = []
    for f, nyq in zip(grid.freq_vectors(), _nyquist_masks(grid)):
        base = np.broadcast_to(f, grid.shape).astype(float)
        base = np.where(nyq, 0.0, base)
        m = 2.0j * math.pi * base * np.where(np.isfinite(qh), qh, 0.0)
        # xi_k q_hat -> 0 along xi = 0 even when q_hat diverges there
        if not np.all(np.isfinite(qh)):
            m = np.where(np.isfinite(qh) | (base == 0.0), m, np.nan)
            if np.any(np.isnan(m)):
                raise SolveError(
                    "kernel transform diverges at a nonzero lattice frequency"
                )
        ms.append(m)
    cache[key] = (kernel, ms)
    return ms


def _fft(vals, dim):
    return np.fft.fftn(vals, axes=tuple(range(dim)))


def _ifft(vals, dim):
    return np.real(np.fft.ifftn(vals, axes=tuple(range(dim))))


def spectral_gradient(kernel: Kernel, grid: TorusGrid, vals: np.ndarray) -> np.ndarray:
    """Fourier-multiplier gradient on the torus.

    Scalar input of shape grid.shape returns shape + (n,); vector input of
    shape grid.shape + (n,) returns shape + (n, n) with D[..., a, b] the
    b-derivative of component a.
    """
    ms = _multipliers(kernel, grid)
    n = grid.dim
    if vals.shape == grid.shape:
        hat = _fft(vals, n)
        return np.stack([_ifft(hat * m, n) for m in ms], axis=-1)
    if vals.shape == grid.shape + (n,):
        out = np.empty(grid.shape + (n, n))
        for a in range(n):
            hat = _fft(vals[..., a], n)
            for b in range(n):
                out[..., a, b] = _ifft(hat * ms[b], n)
        return out
    raise ConfigError("unexpected field shape for the spectral gradient")


def spectral_divergence(kernel: Kernel, grid: TorusGrid, vals: np.ndarray) -> np.ndarray:
    ms = _multipliers(kernel, grid)
    n = grid.dim
    if vals.shape == grid.shape + (n,):
        return sum(
            _ifft(_fft(vals[..., b], n) * ms[b], n) for b in range(n)
        )
    if vals.shape == grid.shape + (n, n):
        return np.stack(
            [
                sum(_ifft(_fft(vals[..., a, b], n) * ms[b], n) for b in range(n))
                for a in range(n)
            ],
            axis=-1,
        )
    raise ConfigError("unexpected field shape for the spectral divergence")


def spectral_sym_gradient(kernel: Kernel, grid: TorusGrid, vals: np.ndarray) -> np.ndarray:
    g = spectral_gradient(kernel, grid, vals)
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def spectral_laplacian(kernel: Kernel, grid: TorusGrid, vals: np.ndarray) -> np.ndarray:
    """-div(grad .) as a single real multiplier 4 pi^2 |xi|^2 q_hat^2.

    |xi|^2 is accumulated per axis with Nyquist bins dropped, so the
    multiplier agrees exactly with composing the first-order operators.
    """
    qh = qhat_on_grid(kernel, grid)
    mag2 = np.zeros(grid.shape)
    for f, nyq in zip(grid.freq_vectors(), _nyquist_masks(grid)):
        base = np.where(nyq, 0.0, np.broadcast_to(f, grid.shape).astype(float))
        mag2 = mag2 + base * base
    mult = np.where(
        mag2 > 0.0,
        (2.0 * math.pi) ** 2 * mag2 * np.where(np.isfinite(qh), qh, 0.0) ** 2,
        0.0,
    )
    n = grid.dim
    if vals.shape == grid.shape:
        return _ifft(_fft(vals, n) * mult, n)
    if vals.shape == grid.shape + (n,):
        return np.stack(
            [_ifft(_fft(vals[..., a], n) * mult, n) for a in range(n)], axis=-1
        )
    raise ConfigError("laplacian takes scalar or vector fields")


def q_translate(kernel: Kernel, grid: TorusGrid, vals: np.ndarray) -> np.ndarray:
    """Convolution with the kernel potential (multiply by q_hat)."""
    qh = qhat_on_grid(kernel, grid)
    if not np.all(np.isfinite(qh)):
        hat = _fft(vals, grid.dim)
        bad = ~np.isfinite(qh) & (np.abs(hat) > _ACTIVE_TOL * np.abs(hat).max())
        if np.any(bad):
            raise SolveError("potential convolution diverges at an active frequency")
        qh = np.where(np.isfinite(qh), qh, 0.0)
    return _ifft(_fft(vals, grid.dim) * qh, grid.dim)


def p_translate(kernel: Kernel, grid: TorusGrid, vals: np.ndarray) -> np.ndarray:
    """Deconvolution by the kernel potential (divide by q_hat).

    Frequencies carrying field content must have |q_hat| above 1e-12;
    anything smaller is reported as an error rather than regularized.
    """
    qh = qhat_on_grid(kernel, grid)
    hat = _fft(vals, grid.dim)
    active = np.abs(hat) > _ACTIVE_TOL * np.abs(hat).max()
    finite = np.isfinite(qh)
    small = active & (~finite | (np.abs(np.where(finite, qh, 0.0)) <= _ACTIVE_TOL))
    if np.any(small):
        raise SolveError(
            "potential deconvolution hit a near-zero multiplier at an "
            "active frequency"
        )
    safe = np.where(finite & (np.abs(qh) > _ACTIVE_TOL), qh, 1.0)
    out = np.where(np.abs(np.where(finite, qh, 0.0)) > _ACTIVE_TOL, hat / safe, 0.0)
    return _ifft(out, grid.dim)


# ---------------------------------------------------------------------------
# collar diagnostics (node-sum quadrature)
# ---------------------------------------------------------------------------


def _pair_blocks(kernel, dom, rows, cols, chunk=None):
    """Yield (row slice, F block) over node pairs.

    F[i, j] = rho(|x_i - x_j|) (x_i - x_j) / |x_i - x_j|^2 h^n for the
    paired nodes, with the diagonal pair zeroed (principal value) and the
    kernel support enforced.  Blocks keep memory bounded.
    """
    xi = dom.coords[rows]
    xj = dom.coords[cols]
    hsn = dom.node_volume
    sup = kernel.support_radius
    if chunk is None:
        chunk = max(1, int(2e6 // max(1, len(cols))))
    for a in range(0, len(rows), chunk):
        d = xi[a:a + chunk, None, :] - xj[None, :, :]
        r2 = np.sum(d * d, axis=-1)
        r = np.sqrt(r2)
        live = (r > 1e-12 * dom.h) & (r < sup)
        safe = np.where(live, r, 1.0)
        coef = np.where(live, kernel.rho(safe) / np.where(live, r2, 1.0), 0.0)
        yield slice(a, a + d.shape[0]), d * coef[..., None] * hsn


def _pair_reductions(kernel, dom, rows, cols, vecs=None, mats=None):
    """Accumulate G_i = sum_j F_ij and the contractions the collar
    operators need: H_i = sum_j vecs_j x F_ij and S_i = sum_j mats_j F_ij."""
    n = dom.dim
    G = np.zeros((len(rows), n))
    H = np.zeros((len(rows), n, n)) if vecs is not None else None
    S = np.zeros((len(rows), n)) if mats is not None else None
    for sl, F in _pair_blocks(kernel, dom, rows, cols):
        G[sl] = np.sum(F, axis=1)
        if vecs is not None:
            H[sl] = np.einsum("ja,ijb->iab", vecs, F)
        if mats is not None:
            S[sl] = np.einsum("jab,ijb->ia", mats, F)
    return G, H, S


def nonlocal_normal_derivative(kernel: Kernel, Phi: Field) -> Field:
    """Collar values of the difference-form normal derivative.

    N[Phi](z) = pv int_Omega (Phi(z) - Phi(y)) F(z, y) dy for z in the
    two-sided collar, by node sums with the diagonal excluded.  Vanishes
    identically for constant Phi.  Returns a vector field supported on the
    collar.
    """
    if Phi.rank != "matrix":
        raise ConfigError("normal derivative takes matrix fields")
    dom = Phi.domain
    collar = dom.collar_index()
    omega = dom.omega_index()
    G, _, S = _pair_reductions(
        kernel, dom, collar, omega, mats=Phi.values[omega]
    )
    vals = np.zeros((dom.nnodes, dom.dim))
    vals[collar] = np.einsum("cab,cb->ca", Phi.values[collar], G) - S
    return Field(dom, vals)


def boundary_flux(kernel: Kernel, Phi: Field) -> Field:
    """Collar values of the closing flux pv int_Omega Phi(y) F(z, y) dy.

    Equals Phi(z) G(z) minus the difference-form normal derivative, and is
    the collar operator whose pairing closes the partial-region identity.
    """
    if Phi.rank != "matrix":
        raise ConfigError("boundary flux takes matrix fields")
    dom = Phi.domain
    collar = dom.collar_index()
    omega = dom.omega_index()
    _, _, S = _pair_reductions(
        kernel, dom, collar, omega, mats=Phi.values[omega]
    )
    vals = np.zeros((dom.nnodes, dom.dim))
    vals[collar] = S
    return Field(dom, vals)


def boundary_identity_residual(kernel: Kernel, Phi: Field, v: Field,
                               collar_operator: str = "flux") -> dict:
    """Partial-region identity with all three terms on one pair quadrature.

    Checks

        int_Omega Phi : Dv + int_inner div Phi . v
            - int_collar flux[Phi] . v  =  0

    where D and div are node-sum operators, inner is the delta-shrunken
    box, and flux is the closing collar operator.  With
    collar_operator="flux" the three terms telescope over node pairs and
    the residual is roundoff; "difference" substitutes the difference-form
    normal derivative instead, which does not close the identity.
    """
    if Phi.rank != "matrix" or v.rank != "vector":
        raise ConfigError("identity checker takes a matrix and a vector field")
    if collar_operator not in ("flux", "difference"):
        raise ConfigError("collar_operator must be 'flux' or 'difference'")
    dom = Phi.domain
    omega = dom.omega_index()
    inner = dom.index(INNER)
    collar = dom.collar_index()
    everything = np.arange(dom.nnodes)
    hsn = dom.node_volume
    n = dom.dim

    # volume term: h^n sum_{i in Omega} Phi_i : [v_i x G_i - H_i]
    G, H, _ = _pair_reductions(
        kernel, dom, omega, everything, vecs=v.values
    )
    Pv = Phi.values[omega]
    outer = v.values[omega][:, :, None] * G[:, None, :]
    volume = hsn * float(np.sum(Pv * (outer - H)))

    # interior term: h^n sum_{i in inner} (Phi_i G_i - S_i) . v_i
    Gi, _, Si = _pair_reductions(
        kernel, dom, inner, omega, mats=Phi.values[omega]
    )
    divPhi = np.einsum("iab,ib->ia", Phi.values[inner], Gi) - Si
    interior = hsn * float(np.sum(divPhi * v.values[inner]))

    # collar term with the chosen collar operator
    Gc, _, Sc = _pair_reductions(
        kernel, dom, collar, omega, mats=Phi.values[omega]
    )
    if collar_operator == "flux":
        coll_vals = Sc
    else:
        coll_vals = np.einsum("cab,cb->ca", Phi.values[collar], Gc) - Sc
    collar_term = -hsn * float(np.sum(coll_vals * v.values[collar]))

    residual = volume + interior + collar_term
    scale = max(abs(volume), abs(interior), abs(collar_term), 1e-300)
    return {
        "volume_term": volume,
        "interior_term": interior,
        "collar_term": collar_term,
        "residual": residual,
        "relative": abs(residual) / scale,
    }


__all__ = [
    "GradientStencil",
    "build_stencil",
    "nonlocal_gradient",
    "nonlocal_divergence",
    "nonlocal_sym_gradient",
    "nonlocal_laplacian",
    "leibniz_remainder",
    "nonlocal_normal_derivative",
    "boundary_flux",
    "boundary_identity_residual",
    "qhat_on_grid",
    "spectral_gradient",
    "spectral_divergence",
    "spectral_sym_gradient",
    "spectral_laplacian",
    "q_translate",
    "p_translate",
]
