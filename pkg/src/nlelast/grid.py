"""Box domains with interaction collars, node labels, and periodic grids.

A bounded domain is an axis-aligned box discretized by a uniform tensor
lattice of spacing h.  The lattice extends past the box on every side by a
whole number of interaction widths delta, so that horizon-delta operators
can read values wherever they need them.  Every node carries one of four
labels derived from the inside depth sd (the distance to the box boundary,
positive inside, negative outside):

    INNER        sd > delta
    COLLAR_IN    0 < sd <= delta
    BOUNDARY     sd = 0
    COLLAR_OUT   sd < 0

Solver constraint sets are unions of these buckets: a field that vanishes
outside the open box is zero on BOUNDARY and COLLAR_OUT, and a field that
vanishes on the full two-sided collar is additionally zero on COLLAR_IN.

Nodal quadrature is mass lumping with uniform weight h^n.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import ConfigError

INNER = 0
COLLAR_IN = 1
BOUNDARY = 2
COLLAR_OUT = 3

LABEL_NAMES = {
    INNER: "inner",
    COLLAR_IN: "collar_in",
    BOUNDARY: "boundary",
    COLLAR_OUT: "collar_out",
}

# constraint tags for fields
FREE = "free"
ZERO_COMPLEMENT = "zero-on-complement"
ZERO_COLLAR = "zero-on-collar"
CONSTRAINTS = (FREE, ZERO_COMPLEMENT, ZERO_COLLAR)

_REL_TOL = 1e-9


def _ratio_is_integer(num: float, den: float) -> bool:
    m = num / den
    return abs(m - round(m)) <= _REL_TOL * max(1.0, abs(m))


@dataclass
class Domain:
    """Uniform node lattice over a box plus its collar extension.

    Nodes are ordered as the C-order flattening of the tensor product of the
    per-axis coordinate arrays, so neighbouring offsets translate to fixed
    strides in the flat index.
    """

    lo: np.ndarray
    hi: np.ndarray
    delta: float
    h: float
    collar_mult: int
    shape: tuple
    axes: tuple
    coords: np.ndarray
    mask: np.ndarray
    _index_cache: dict = dataclass_field(default_factory=dict, repr=False)
    _op_cache: dict = dataclass_field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def nnodes(self) -> int:
        return self.coords.shape[0]

    @property
    def node_volume(self) -> float:
        return self.h ** self.dim

    def index(self, *labels) -> np.ndarray:
        key = tuple(sorted(labels))
        if key not in self._index_cache:
            hit = np.isin(self.mask, np.asarray(key, dtype=self.mask.dtype))
            self._index_cache[key] = np.flatnonzero(hit)
        return self._index_cache[key]

    def counts(self) -> dict:
        return {
            name: int(np.count_nonzero(self.mask == lab))
            for lab, name in LABEL_NAMES.items()
        }

    # node sets the solvers care about
    def omega_index(self) -> np.ndarray:
        """Nodes strictly inside the box."""
        return self.index(INNER, COLLAR_IN)

    def omega_closed_index(self) -> np.ndarray:
        """Nodes inside or on the box boundary."""
        return self.index(INNER, COLLAR_IN, BOUNDARY)

    def collar_index(self) -> np.ndarray:
        """The closed two-sided collar around the box boundary."""
        return self.index(COLLAR_IN, BOUNDARY, COLLAR_OUT)

    def free_index(self, constraint: str) -> np.ndarray:
        if constraint == FREE:
            return np.arange(self.nnodes)
        if constraint == ZERO_COMPLEMENT:
            return self.omega_index()
        if constraint == ZERO_COLLAR:
            return self.index(INNER)
        raise ConfigError("unknown constraint tag %r" % (constraint,))

    def constrained_index(self, constraint: str) -> np.ndarray:
        free = set(self.free_index(constraint).tolist())
        return np.array(
            [i for i in range(self.nnodes) if i not in free], dtype=int
        )


def build_domain(box, delta: float, h: float, collar_mult: int = 1) -> Domain:
    """Discretize a box with a collar of width collar_mult * delta.

    delta and every side length must be whole multiples of h, and h must not
    exceed delta (a coarser lattice cannot resolve the collar).  delta = 0 is
    the degenerate local case: no collar nodes at all, used by the classical
    reference solver.
    """
    arr = np.asarray(box, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ConfigError("box must be (lo, hi) or a sequence of such pairs")
    dim = arr.shape[0]
    if dim not in (1, 2):
        raise ConfigError("only 1-D and 2-D boxes are supported")
    lo, hi = arr[:, 0].copy(), arr[:, 1].copy()
    sides = hi - lo
    if np.any(sides <= 0):
        raise ConfigError("box sides must have positive length")
    if h <= 0:
        raise ConfigError("lattice spacing must be positive")
    if delta < 0:
        raise ConfigError("interaction width must be nonnegative")
    if int(collar_mult) != collar_mult or collar_mult < 1:
        raise ConfigError("collar multiplier must be a positive integer")
    collar_mult = int(collar_mult)
    if delta > 0:
        if h > delta * (1.0 + 1e-12):
            raise ConfigError("lattice spacing h exceeds the collar width")
        if not _ratio_is_integer(delta, h):
            raise ConfigError("delta must be a whole multiple of h")
    for s in sides:
        if not _ratio_is_integer(s, h):
            raise ConfigError("box side lengths must be whole multiples of h")

    ext = collar_mult * delta
    axes = []
    for d in range(dim):
        count = int(round((sides[d] + 2.0 * ext) / h)) + 1
        axes.append(lo[d] - ext + h * np.arange(count))
    shape = tuple(len(a) for a in axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel(order="C") for m in mesh], axis=1)

    depth = np.min(
        np.minimum(coords - lo[None, :], hi[None, :] - coords), axis=1
    )
    eps = _REL_TOL * h
    mask = np.full(coords.shape[0], COLLAR_OUT, dtype=np.int8)
    mask[depth > -eps] = BOUNDARY
    mask[depth > eps] = COLLAR_IN
    mask[depth > delta + eps] = INNER

    dom = Domain(
        lo=lo,
        hi=hi,
        delta=float(delta),
        h=float(h),
        collar_mult=collar_mult,
        shape=shape,
        axes=tuple(axes),
        coords=coords,
        mask=mask,
    )
    if dom.index(INNER).size == 0:
        raise ConfigError(
            "no nodes remain inside the shrunken box; delta is too large "
            "for this box at this spacing"
        )
    return dom


_RANKS = {0: "scalar", 1: "vector", 2: "matrix"}


@dataclass
class Field:
    """Nodal values on a Domain plus a constraint tag.

    values has shape (M,), (M, n), or (M, n, n) for scalar, vector, and
    matrix fields.  The constraint tag records which nodes are pinned to
    zero; validate() enforces that the stored values honour it.
    """

    domain: Domain
    values: np.ndarray
    constraint: str = FREE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.constraint not in CONSTRAINTS:
            raise ConfigError("unknown constraint tag %r" % (self.constraint,))
        n = self.domain.dim
        shp = self.values.shape
        if shp[0] != self.domain.nnodes:
            raise ConfigError("field length does not match the node count")
        if shp[1:] not in ((), (n,), (n, n)):
            raise ConfigError("field must be scalar, vector, or matrix valued")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("field values must be finite")

    @property
    def rank(self) -> str:
        return _RANKS[self.values.ndim - 1]

    def constrained_nodes(self) -> np.ndarray:
        return self.domain.constrained_index(self.constraint)

    def validate(self) -> None:
        pinned = self.constrained_nodes()
        if pinned.size and np.any(self.values[pinned] != 0.0):
            raise ConfigError(
                "field carries nonzero values on constrained nodes"
            )


def interpolate(domain: Domain, fn, constraint: str = FREE) -> Field:
    """Sample a function at the nodes.

    fn receives the full (M, n) coordinate array and must return M values
    (scalars) or M x n / M x n x n stacks.  Nodes pinned by the constraint
    tag are forced to zero after sampling.
    """
    vals = np.asarray(fn(domain.coords), dtype=float)
    if vals.shape[0] != domain.nnodes:
        raise ConfigError("sampler returned the wrong number of values")
    if not np.all(np.isfinite(vals)):
        raise ConfigError("sampler produced non-finite values")
    f = Field(domain, vals, constraint)
    pinned = f.constrained_nodes()
    if pinned.size:
        f.values[pinned] = 0.0
    return f


@dataclass
class TorusGrid:
    """Uniform periodic lattice on [0, period)^n with 2^k points per axis."""

    dim: int
    npoints: int
    period: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError("only 1-D and 2-D periodic grids are supported")
        n = self.npoints
        if n < 4 or (n & (n - 1)) != 0:
            raise ConfigError("points per axis must be a power of two >= 4")
        if self.period <= 0:
            raise ConfigError("period must be positive")

    @property
    def h(self) -> float:
        return self.period / self.npoints

    @property
    def shape(self) -> tuple:
        return (self.npoints,) * self.dim

    def axis(self) -> np.ndarray:
        return self.h * np.arange(self.npoints)

    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.npoints, d=self.h)

    def freq_vectors(self) -> list:
        """Per-axis frequency arrays broadcast to the full grid shape."""
        f = self.freqs()
        out = []
        for d in range(self.dim):
            shape = [1] * self.dim
            shape[d] = self.npoints
            out.append(f.reshape(shape))
        return out

    def freq_magnitude(self) -> np.ndarray:
        mags = sum(f**2 for f in self.freq_vectors())
        return np.sqrt(mags)

    def sample(self, fn) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis()] * self.dim), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        vals = np.asarray(fn(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ConfigError("sampler produced non-finite values")
        return vals.reshape(self.shape + vals.shape[1:])

    @property
    def node_volume(self) -> float:
        return self.h ** self.dim


def field_to_csv(f: Field) -> str:
    """Node coordinates and components as CSV text with full precision."""
    dom = f.domain
    cols = [dom.coords[:, d] for d in range(dom.dim)]
    names = ["x%d" % (d + 1) for d in range(dom.dim)]
    flat = f.values.reshape(dom.nnodes, -1)
    if flat.shape[1] == 1:
        names.append("v")
    else:
        names.extend("v%d" % (j + 1) for j in range(flat.shape[1]))
    cols.extend(flat[:, j] for j in range(flat.shape[1]))
    buf = io.StringIO()
    buf.write(",".join(names) + "\n")
    data = np.column_stack(cols)
    for row in data:
        buf.write(",".join("%.17g" % v for v in row) + "\n")
    return buf.getvalue()


def field_meta(f: Field) -> dict:
    dom = f.domain
    return {
        "dim": dom.dim,
        "h": dom.h,
        "delta": dom.delta,
        "collar_mult": dom.collar_mult,
        "box": [[float(a), float(b)] for a, b in zip(dom.lo, dom.hi)],
        "rank": f.rank,
        "constraint": f.constraint,
        "node_counts": dom.counts(),
    }


__all__ = [
    "INNER",
    "COLLAR_IN",
    "BOUNDARY",
    "COLLAR_OUT",
    "FREE",
    "ZERO_COMPLEMENT",
    "ZERO_COLLAR",
    "Domain",
    "Field",
    "TorusGrid",
    "build_domain",
    "interpolate",
    "field_to_csv",
    "field_meta",
]
