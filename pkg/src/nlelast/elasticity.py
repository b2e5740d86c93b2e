"""Material tensors and energy forms for linearized nonlocal elasticity.

A material tensor is a constant-coefficient linear map on n x n matrices.
The isotropic family C[E] = 2 mu sym(E) + lambda tr(E) I is the workhorse;
a fully general fourth-order tensor with major symmetry is supported for
anisotropic problems.  Two scalar margins matter:

* positivity on symmetric matrices, min over unit symmetric E of C[E]:E,
  which is what the variational solvers need (min(2 mu, 2 mu + n lambda)
  in the isotropic case), and
* rank-one ellipticity, min over unit a, b of C[a ox b]:(a ox b)
  (min(mu, 2 mu + lambda) in the isotropic case).

The first is the solver gate; a tensor can be rank-one elliptic yet
indefinite on symmetric matrices, and such problems have no minimizer.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityError, ConfigError
from .grid import Field
from .kernels import Kernel
from .operators import nonlocal_gradient

__all__ = [
    "GeneralTensor",
    "IsoTensor",
    "bilinear_form",
    "check_admissible",
    "tensor_from_config",
    "total_energy",
]


@dataclass(frozen=True)
class IsoTensor:
    """Isotropic material: C[E] = 2 mu sym(E) + lambda tr(E) I."""

    dim: int
    mu: float
    lam: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError("material tensors support dim 1 or 2")
        if not (np.isfinite(self.mu) and np.isfinite(self.lam)):
            raise ConfigError("material moduli must be finite")

    def apply(self, E: np.ndarray) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        sym = 0.5 * (E + np.swapaxes(E, -1, -2))
        tr = np.trace(E, axis1=-2, axis2=-1)
        return 2.0 * self.mu * sym + self.lam * tr[..., None, None] * np.eye(self.dim)

    def contract(self, E: np.ndarray, F: np.ndarray) -> np.ndarray:
        """Pointwise C[E] : F."""
        return np.sum(self.apply(E) * np.asarray(F, dtype=float), axis=(-2, -1))

    def sym_positivity_margin(self) -> float:
        # eigenvalues of C on Sym(n): 2 mu on traceless parts,
        # 2 mu + n lambda on multiples of the identity
        return min(2.0 * self.mu, 2.0 * self.mu + self.dim * self.lam)

    def ellipticity_margin(self) -> float:
        if self.dim == 1:
            return 2.0 * self.mu + self.lam
        return min(self.mu, 2.0 * self.mu + self.lam)

    def as_general(self) -> "GeneralTensor":
        n = self.dim
        eye = np.eye(n)
        c = (
            self.mu * (np.einsum("ac,bd->abcd", eye, eye) + np.einsum("ad,bc->abcd", eye, eye))
            + self.lam * np.einsum("ab,cd->abcd", eye, eye)
        )
        return GeneralTensor(n, c)


def _mandel_basis(n: int):
    """Orthonormal basis of Sym(n) under the Frobenius inner product."""
    basis = []
    for a in range(n):
        e = np.zeros((n, n))
        e[a, a] = 1.0
        basis.append(e)
    for a in range(n):
        for b in range(a + 1, n):
            e = np.zeros((n, n))
            e[a, b] = e[b, a] = 1.0 / np.sqrt(2.0)
            basis.append(e)
    return basis


@dataclass(frozen=True)
class GeneralTensor:
    """Constant fourth-order tensor acting as E -> c_{abcd} E_{cd}.

    Major symmetry c_{abcd} = c_{cdab} is required so that the induced
    bilinear form is symmetric; minor symmetries are not (the tensor may
    act on full gradients, not just their symmetric parts).
    """

    dim: int
    c: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError("material tensors support dim 1 or 2")
        c = np.asarray(self.c, dtype=float)
        n = self.dim
        if c.shape != (n, n, n, n):
            raise ConfigError("general tensor must have shape (n, n, n, n)")
        if not np.all(np.isfinite(c)):
            raise ConfigError("general tensor entries must be finite")
        scale = max(np.abs(c).max(), 1.0)
        if np.abs(c - np.transpose(c, (2, 3, 0, 1))).max() > 1e-12 * scale:
            raise ConfigError("general tensor must have major symmetry")
        object.__setattr__(self, "c", c)

    def apply(self, E: np.ndarray) -> np.ndarray:
        return np.einsum("abcd,...cd->...ab", self.c, np.asarray(E, dtype=float))

    def contract(self, E: np.ndarray, F: np.ndarray) -> np.ndarray:
        return np.sum(self.apply(E) * np.asarray(F, dtype=float), axis=(-2, -1))

    def sym_positivity_margin(self) -> float:
        basis = _mandel_basis(self.dim)
        m = len(basis)
        Q = np.empty((m, m))
        for i, Si in enumerate(basis):
            for j, Sj in enumerate(basis):
                Q[i, j] = np.sum(Si * self.apply(Sj))
        Q = 0.5 * (Q + Q.T)
        return float(np.linalg.eigvalsh(Q)[0])

    def ellipticity_margin(self) -> float:
        if self.dim == 1:
            return float(self.c[0, 0, 0, 0])
        # acoustic tensor A(b)_{ac} = c_{abcd} b_b b_d, minimized over the
        # unit circle; the minimum eigenvalue is a smooth function of the
        # angle, so a fine sweep is reliable
        angles = np.linspace(0.0, np.pi, 1441)
        worst = np.inf
        for th in angles:
            b = np.array([np.cos(th), np.sin(th)])
            A = np.einsum("abcd,b,d->ac", self.c, b, b)
            worst = min(worst, np.linalg.eigvalsh(0.5 * (A + A.T))[0])
        return float(worst)


def check_admissible(tensor) -> float:
    """Gate for the variational solvers; returns the positivity margin."""
    margin = tensor.sym_positivity_margin()
    if margin <= 0.0:
        raise AdmissibilityError(
            "material tensor is not positive definite on symmetric "
            "matrices (margin %.6g); the energy has no minimizer" % margin
        )
    return margin


def tensor_from_config(dim: int, cfg: dict):
    """Build a material tensor from a config mapping.

    Isotropic: {"type": "isotropic", "mu": m, "lambda": l}.
    General:   {"type": "general", "c": nested (n, n, n, n) list}.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("material config must be a mapping")
    kind = cfg.get("type")
    if kind == "isotropic":
        extra = set(cfg) - {"type", "mu", "lambda"}
        if extra:
            raise ConfigError("unknown material keys: %s" % ", ".join(sorted(extra)))
        if "mu" not in cfg or "lambda" not in cfg:
            raise ConfigError("isotropic material needs mu and lambda")
        return IsoTensor(dim, float(cfg["mu"]), float(cfg["lambda"]))
    if kind == "general":
        extra = set(cfg) - {"type", "c"}
        if extra:
            raise ConfigError("unknown material keys: %s" % ", ".join(sorted(extra)))
        if "c" not in cfg:
            raise ConfigError("general material needs the entries c")
        return GeneralTensor(dim, np.asarray(cfg["c"], dtype=float))
    raise ConfigError("material type must be 'isotropic' or 'general'")


def _require_vector(v: Field, name: str):
    if v.rank != "vector":
        raise ConfigError("%s must be a vector field" % name)


def bilinear_form(tensor, kernel: Kernel, v: Field, w: Field) -> float:
    """Energy pairing a(v, w) = sum_x C[D v] : D w  * cell volume.

    The sum runs over every grid row; rows outside the interaction
    neighborhood of the data contribute zeros.
    """
    _require_vector(v, "v")
    _require_vector(w, "w")
    if v.domain is not w.domain:
        raise ConfigError("fields must share a domain")
    Dv = nonlocal_gradient(kernel, v).values
    Dw = nonlocal_gradient(kernel, w).values
    return float(v.domain.node_volume * np.sum(tensor.contract(Dv, Dw)))


def total_energy(tensor, kernel: Kernel, v: Field, f: Field) -> float:
    """E(v) = 0.5 a(v, v) - <f, v> with node-sum inner products."""
    _require_vector(v, "v")
    _require_vector(f, "f")
    load = v.domain.node_volume * np.sum(f.values * v.values)
    return 0.5 * bilinear_form(tensor, kernel, v, v) - float(load)
