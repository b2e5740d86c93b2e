"""Radial interaction kernels, their potentials, and Fourier transforms.

A kernel is a nonnegative radial function rho on R^n, n in {1, 2}, described
by its radial profile rho_bar (rho(x) = rho_bar(|x|)).  A kernel normalized so
that int rho dx = n makes the associated nonlocal gradient reproduce affine
fields exactly, which is the calibration used throughout the package.

Two derived objects drive everything else:

* the potential

      Q(r) = int_r^oo rho_bar(t) / t dt,

  which mediates between nonlocal and classical calculus (the nonlocal
  gradient of a smooth field equals Q convolved with its classical gradient);
  for normalized kernels int Q dx = 1;

* the Fourier transform of the potential,

      Q_hat(xi) = 1 / (2 pi |xi|) int rho(x) x_1 / |x|^2 sin(2 pi |xi| x_1) dx,

  evaluated here after integrating the angular variable exactly: in 1-D the
  formula reduces to (1 / (pi xi)) int_0^R rho_bar(r) sin(2 pi xi r) / r dr,
  in 2-D to (1 / xi) int_0^R rho_bar(r) J_1(2 pi xi r) dr.

The fractional kernel c_{n,s} |x|^{-(n+s-1)} has the closed forms
Q(r) = c_{n,s} r^{-(n+s-1)} / (n+s-1) and Q_hat(xi) = (2 pi |xi|)^(s-1),
with c_{n,s} = (n+s-1) / gamma_{1-s} and the Riesz constant
gamma_a = pi^{n/2} 2^a Gamma(a/2) / Gamma((n-a)/2).  These closed forms are
used whenever the profile is a pure power; everything else goes through
adaptive quadrature with an r^{1-s} substitution at the singular endpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import AdmissibilityError, ConfigError, QuadratureError

__all__ = [
    "Kernel",
    "PotentialProfile",
    "HypothesisReport",
    "sphere_area",
    "riesz_constant",
    "fractional_constant",
    "make_fractional",
    "make_truncated_fractional",
    "make_constant",
    "make_table_kernel",
    "rescale",
    "kernel_mass",
    "q_profile",
    "q_hat",
    "check_hypotheses",
]

_QUAD_OPTS = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} (2 for n=1, 2*pi for n=2)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def riesz_constant(n: int, alpha: float) -> float:
    """gamma_alpha = pi^{n/2} 2^alpha Gamma(alpha/2) / Gamma((n-alpha)/2)."""
    return (
        math.pi ** (n / 2.0)
        * 2.0**alpha
        * math.gamma(alpha / 2.0)
        / math.gamma((n - alpha) / 2.0)
    )


def fractional_constant(n: int, s: float) -> float:
    """Normalizing constant c_{n,s} = (n+s-1) / gamma_{1-s} of the fractional kernel."""
    return (n + s - 1.0) / riesz_constant(n, 1.0 - s)


# ---------------------------------------------------------------------------
# radial profiles
# ---------------------------------------------------------------------------


def _blend_down(t):
    """C^1 descent 1 -> 0 on [0, 1] with zero slope at both ends: 1 - t^2 (3 - 2t)."""
    return 1.0 - t * t * (3.0 - 2.0 * t)


class PowerProfile:
    """rho_bar(r) = coef * r^{-power}, unbounded support."""

    def __init__(self, coef: float, power: float):
        self.coef = float(coef)
        self.power = float(power)
        self.support = math.inf
        self.breakpoints: tuple = ()
        self.sing_power = self.power

    def val(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(r > 0.0, self.coef * r ** (-self.power), np.inf)


class TruncatedPowerProfile:
    """rho_bar(r) = coef * a0 * shape(r) * r^{-power} supported on [0, delta].

    shape is 1 on the plateau [0, b0*delta] and descends to 0 on
    (b0*delta, delta) through the C^1 polynomial blend 1 - t^2 (3 - 2t).
    """

    def __init__(self, coef, power, delta, b0, a0):
        self.coef = float(coef)
        self.power = float(power)
        self.delta = float(delta)
        self.b0 = float(b0)
        self.a0 = float(a0)
        self.support = self.delta
        self.breakpoints = (self.b0 * self.delta, self.delta)
        self.sing_power = self.power

    def shape(self, r):
        r = np.asarray(r, dtype=float)
        t = (r - self.b0 * self.delta) / ((1.0 - self.b0) * self.delta)
        t = np.clip(t, 0.0, 1.0)
        return _blend_down(t)

    def val(self, r):
        r = np.asarray(r, dtype=float)
        amp = self.coef * self.a0 * self.shape(r)
        with np.errstate(divide="ignore"):
            body = np.where(r > 0.0, r, 1.0) ** (-self.power)
        out = np.where(r > 0.0, amp * body, np.inf)
        return np.where(r >= self.delta, 0.0, out)


class ConstantProfile:
    """rho_bar(r) = value on [0, radius), 0 beyond."""

    def __init__(self, value, radius):
        self.value = float(value)
        self.radius = float(radius)
        self.support = self.radius
        self.breakpoints = (self.radius,)
        self.sing_power = 0.0

    def val(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.radius, self.value, 0.0)


class TableProfile:
    """Piecewise-linear profile through tabulated (r, rho) samples.

    Constant continuation below the first radius, zero beyond the last.
    """

    def __init__(self, r, rho):
        self.r = np.asarray(r, dtype=float)
        self.rho = np.asarray(rho, dtype=float)
        if self.r.ndim != 1 or self.r.size < 2 or self.r.shape != self.rho.shape:
            raise ConfigError("kernel table needs two equal-length columns (r, rho)")
        if not np.all(np.diff(self.r) > 0.0):
            raise ConfigError("kernel table radii must be strictly increasing")
        if self.r[0] <= 0.0:
            raise ConfigError("kernel table radii must be positive")
        self.support = float(self.r[-1])
        self.breakpoints = tuple(self.r[:-1][self.r[:-1] > 0.0])
        self.sing_power = 0.0

    def val(self, r):
        r = np.asarray(r, dtype=float)
        out = np.interp(r, self.r, self.rho, left=self.rho[0], right=0.0)
        return np.where(r >= self.support, 0.0, out)


class ScaledProfile:
    """rho_bar(r) = v_scale * base(r * r_scale); used by kernel rescaling."""

    def __init__(self, base, r_scale, v_scale):
        self.base = base
        self.r_scale = float(r_scale)
        self.v_scale = float(v_scale)
        self.support = base.support / self.r_scale
        self.breakpoints = tuple(b / self.r_scale for b in base.breakpoints)
        self.sing_power = base.sing_power

    def val(self, r):
        return self.v_scale * self.base.val(np.asarray(r, dtype=float) * self.r_scale)


# ---------------------------------------------------------------------------
# radial quadrature
# ---------------------------------------------------------------------------


def _segment_edges(profile, a, b):
    """Endpoints of smooth pieces of the profile inside [a, b]."""
    cuts = [a] + [c for c in profile.breakpoints if a < c < b] + [b]
    return cuts


def radial_quad(profile, g, a, b, sing=0.0):
    """Adaptive quadrature of int_a^b rho_bar(r) g(r) dr.

    ``sing`` states the net algebraic singularity at r = 0: the product
    rho_bar(r) g(r) r^sing must stay bounded as r -> 0.  When a == 0 and
    sing > 0 the first smooth piece is integrated after substituting
    u = r^{1-sing}, which removes the singular factor exactly.
    """
    b = min(b, profile.support)
    if b <= a:
        return 0.0
    total = 0.0
    edges = _segment_edges(profile, a, b)
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == 0.0 and sing > 0.0:
            p = 1.0 - sing
            top = hi**p

            def f(u):
                r = u ** (1.0 / p)
                return profile.val(r) * g(r) * r**sing / p

            val, _ = integrate.quad(f, 0.0, top, **_QUAD_OPTS)
        else:

            def f(r):
                return profile.val(r) * g(r)

            val, _ = integrate.quad(f, lo, hi, **_QUAD_OPTS)
        total += val
    return total


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Kernel:
    """A radial interaction kernel on R^n.

    Attributes
    ----------
    dim : spatial dimension n, 1 or 2.
    profile : radial profile object (exposes val, support, breakpoints).
    support_radius : radius of the support (may be inf).
    frac_lower : exponent t of the lower fractional comparison (r^{n+t-1}
        rho_bar almost increasing near the origin), or None.
    frac_upper : exponent s of the upper fractional comparison (r^{n+s-1}
        rho_bar almost decreasing near the origin), or None; also the
        exponent used for singular substitutions in quadrature.
    normalized : whether int rho dx = n (checked at construction to 1e-8).
    hyp_window : radius of the window (0, eps) on which the near-origin
        hypotheses are probed by default.
    """

    dim: int
    profile: object
    support_radius: float
    frac_lower: float | None = None
    frac_upper: float | None = None
    normalized: bool = False
    hyp_window: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"kernel dimension must be 1 or 2, got {self.dim}")
        if self.frac_lower is not None and self.frac_upper is not None:
            if self.frac_lower > self.frac_upper + 1e-12:
                raise AdmissibilityError(
                    "fractional comparison exponents out of order: "
                    f"t={self.frac_lower} > s={self.frac_upper}"
                )
        probes = np.geomspace(self.hyp_window * 1e-6, self.hyp_window, 64)
        vals = self.rho(probes)
        if np.any(vals < 0.0):
            raise AdmissibilityError("kernel profile is negative on probe radii")
        near = vals[probes <= self.hyp_window * 1e-2]
        if near.size and not np.all(near > 0.0):
            raise AdmissibilityError("kernel profile is not positive near the origin")
        if self.normalized:
            mass = kernel_mass(self)
            if not math.isfinite(mass) or abs(mass - self.dim) > 1e-8:
                raise AdmissibilityError(
                    f"kernel marked normalized but int rho = {mass!r}, expected {self.dim}"
                )
        object.__setattr__(self, "_cache", {})

    def rho(self, r):
        """Radial profile value rho_bar(r), vectorized."""
        return self.profile.val(r)

    def cache(self) -> dict:
        return self._cache

    @property
    def sing_sub(self) -> float:
        """Substitution exponent for singular radial quadrature."""
        return self.frac_upper if self.frac_upper is not None else 0.0


def kernel_mass(k: Kernel) -> float:
    """int_{R^n} rho dx = |S^{n-1}| int_0^R rho_bar(r) r^{n-1} dr."""
    if not math.isfinite(k.support_radius):
        if isinstance(k.profile, PowerProfile):
            return math.inf
        raise QuadratureError("kernel mass needs compact support or a power profile")
    n = k.dim
    return sphere_area(n) * radial_quad(
        k.profile, lambda r: r ** (n - 1), 0.0, k.support_radius, sing=k.sing_sub
    )


def make_fractional(n: int, s: float, amplitude: float | None = None) -> Kernel:
    """Fractional kernel amplitude * |x|^{-(n+s-1)}.

    The default amplitude is c_{n,s}, which gives the potential transform the
    closed form Q_hat(xi) = (2 pi |xi|)^{s-1}.  The kernel is not normalized:
    its mass diverges (the tail decays like r^{-s} in the radial measure).
    """
    if not 0.0 < s < 1.0:
        raise ConfigError(f"fractional order must lie in (0, 1), got {s}")
    if amplitude is None:
        amplitude = fractional_constant(n, s)
    profile = PowerProfile(amplitude, n + s - 1.0)
    return Kernel(
        dim=n,
        profile=profile,
        support_radius=math.inf,
        frac_lower=s,
        frac_upper=s,
        normalized=False,
        hyp_window=1.0,
    )


def make_truncated_fractional(n: int, s: float, delta: float, b0: float = 0.5) -> Kernel:
    """Truncated fractional kernel c_{n,s} w(x) / |x|^{n+s-1} supported in B(0, delta).

    The radial bump w equals a0 on [0, b0*delta] and descends to 0 at delta
    through the C^1 blend 1 - t^2(3 - 2t).  The plateau height a0 is fixed by
    the normalization int_B w(x) / |x|^{n+s-1} dx = n / c_{n,s}, i.e.
    int rho = n; the normalization enters linearly, so a0 comes from a single
    quadrature of the unit-plateau shape.
    """
    if not 0.0 < s < 1.0:
        raise ConfigError(f"fractional order must lie in (0, 1), got {s}")
    if not 0.0 < b0 < 1.0:
        raise ConfigError(f"plateau fraction must lie in (0, 1), got {b0}")
    if delta <= 0.0:
        raise ConfigError(f"support radius must be positive, got {delta}")
    c = fractional_constant(n, s)
    unit = TruncatedPowerProfile(coef=1.0, power=n + s - 1.0, delta=delta, b0=b0, a0=1.0)
    shape_int = sphere_area(n) * radial_quad(
        unit, lambda r: r ** (n - 1), 0.0, delta, sing=s
    )
    if not math.isfinite(shape_int) or shape_int <= 0.0:
        raise QuadratureError(
            f"normalization integral for the truncated kernel is {shape_int!r}"
        )
    a0 = n / (c * shape_int)
    profile = TruncatedPowerProfile(coef=c, power=n + s - 1.0, delta=delta, b0=b0, a0=a0)
    return Kernel(
        dim=n,
        profile=profile,
        support_radius=delta,
        frac_lower=s,
        frac_upper=s,
        normalized=True,
        hyp_window=b0 * delta,
    )


def make_constant(n: int, radius: float = 1.0) -> Kernel:
    """Constant kernel on B(0, radius), normalized to int rho = n."""
    if radius <= 0.0:
        raise ConfigError(f"support radius must be positive, got {radius}")
    value = n * n / (sphere_area(n) * radius**n)
    return Kernel(
        dim=n,
        profile=ConstantProfile(value, radius),
        support_radius=radius,
        frac_lower=None,
        frac_upper=None,
        normalized=True,
        hyp_window=radius,
    )


def make_table_kernel(
    r,
    rho,
    n: int,
    frac_lower: float | None = None,
    frac_upper: float | None = None,
) -> Kernel:
    """Kernel from tabulated (r, rho) samples; linear interpolation in between."""
    profile = TableProfile(r, rho)
    k = Kernel(
        dim=n,
        profile=profile,
        support_radius=profile.support,
        frac_lower=frac_lower,
        frac_upper=frac_upper,
        normalized=False,
        hyp_window=profile.support,
    )
    return k


def rescale(k: Kernel, delta: float, mode: str) -> Kernel:
    """Rescale a kernel to horizon delta.

    mode "vanishing" produces delta^{-n} rho(x / delta): mass, potential mass
    and affine calibration are all preserved, and the potential transform obeys
    Q_hat_delta(xi) = Q_hat(delta * xi).  It requires compact unit support.

    mode "diverging" produces rho_bar(|x| / delta) / rho_bar(1 / delta), the
    normalization under which profiles with fractional near-origin behavior
    converge pointwise to the unnormalized power kernel |x|^{-(n+s_oo-1)}.
    """
    if delta <= 0.0:
        raise ConfigError(f"rescaling horizon must be positive, got {delta}")
    if mode == "vanishing":
        if not math.isfinite(k.support_radius) or abs(k.support_radius - 1.0) > 1e-12:
            raise ConfigError("vanishing rescale requires compact unit support")
        profile = ScaledProfile(k.profile, r_scale=1.0 / delta, v_scale=delta ** (-k.dim))
        return Kernel(
            dim=k.dim,
            profile=profile,
            support_radius=delta,
            frac_lower=k.frac_lower,
            frac_upper=k.frac_upper,
            normalized=k.normalized,
            hyp_window=k.hyp_window * delta,
        )
    if mode == "diverging":
        ref = float(k.rho(1.0 / delta))
        if not math.isfinite(ref) or ref <= 0.0:
            raise ConfigError(
                f"diverging rescale needs rho_bar(1/delta) > 0, got {ref!r}"
            )
        profile = ScaledProfile(k.profile, r_scale=1.0 / delta, v_scale=1.0 / ref)
        return Kernel(
            dim=k.dim,
            profile=profile,
            support_radius=k.support_radius * delta,
            frac_lower=k.frac_lower,
            frac_upper=k.frac_upper,
            normalized=False,
            hyp_window=k.hyp_window * delta,
        )
    raise ConfigError(f"unknown rescale mode {mode!r}")


# ---------------------------------------------------------------------------
# potential and its transform
# ---------------------------------------------------------------------------


@dataclass
class PotentialProfile:
    """Tabulated potential Q(r) = int_r^oo rho_bar(t)/t dt.

    Values live on a geometric radius grid and interpolate linearly in log r;
    beyond the support the potential is zero, below the first radius the first
    segment's slope extrapolates.  Exact closed-form evaluation bypasses the
    table when available (pure power kernels).
    """

    radii: np.ndarray
    values: np.ndarray
    support_radius: float
    closed_form: object = None

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.closed_form is not None:
            return self.closed_form(r)
        logr = np.log(np.where(r > 0.0, r, self.radii[0]))
        out = np.interp(logr, np.log(self.radii), self.values)
        head = self.values[0] + (self.values[0] - self.values[1]) / (
            np.log(self.radii[0]) - np.log(self.radii[1])
        ) * (logr - np.log(self.radii[0]))
        out = np.where(r < self.radii[0], head, out)
        return np.where(r >= self.support_radius, 0.0, out)


def q_profile(k: Kernel, points: int = 512) -> PotentialProfile:
    """Tabulate the potential of a kernel on a geometric radius grid.

    The grid spans [R * 1e-6, R] with ``points`` nodes for support radius R.
    Values are accumulated from the support end inward, one adaptive
    quadrature per segment, so the table is exactly nonincreasing.
    """
    if isinstance(k.profile, PowerProfile):
        p = k.profile
        coef = p.coef / p.power  # Q(r) = coef * r^{-power}; power = n+s-1

        def closed(r):
            r = np.asarray(r, dtype=float)
            with np.errstate(divide="ignore"):
                return np.where(r > 0.0, coef * r ** (-p.power), np.inf)

        radii = np.geomspace(1e-6, 1e2, points)
        return PotentialProfile(radii, closed(radii), math.inf, closed_form=closed)
    if not math.isfinite(k.support_radius):
        raise QuadratureError("potential table needs compact support or a power profile")
    R = k.support_radius
    radii = np.geomspace(R * 1e-6, R, points)
    seg = np.zeros(points)
    for i in range(points - 1):
        seg[i] = radial_quad(k.profile, lambda r: 1.0 / r, radii[i], radii[i + 1])
    # Q(r_i) = sum of the segment integrals from i outward; Q(R) = 0 exactly
    values = np.cumsum(seg[::-1])[::-1]
    return PotentialProfile(radii, values, R)


def potential_mass(k: Kernel) -> float:
    """int_{R^n} Q(|x|) dx = (|S^{n-1}| / n) int rho_bar(t) t^{n-1} dt (= 1 if normalized)."""
    return kernel_mass(k) / k.dim


def q_hat(k: Kernel, xi, force_quadrature: bool = False) -> np.ndarray | float:
    """Fourier transform of the potential at radial frequency xi >= 0.

    Pure power kernels use the closed form (amplitude / c_{n,s}) *
    (2 pi |xi|)^{s-1}; at xi = 0 the value is int Q dx.  Everything else is
    adaptive quadrature of the angularly reduced sine formula (see module
    docstring), which requires compact support.

    ``force_quadrature`` integrates the sine formula numerically even when a
    closed form exists (1-D power kernels use an infinite-range oscillatory
    rule), so the closed form can be validated rather than assumed.
    """
    scalar = np.isscalar(xi)
    xs = np.atleast_1d(np.asarray(xi, dtype=float))
    if np.any(xs < 0.0):
        raise ConfigError("q_hat takes nonnegative radial frequencies")
    if isinstance(k.profile, PowerProfile):
        if force_quadrature:
            if k.dim != 1:
                raise QuadratureError(
                    "forced quadrature of the unbounded kernel is 1-D only"
                )
            s = k.profile.power  # = n + s - 1 = s in 1-D
            if np.any(xs == 0.0):
                raise QuadratureError("unbounded kernel has no zero-frequency value")
            out = np.array(
                [_qhat_power_tail(k.profile.coef, s, x) for x in xs]
            )
            return float(out[0]) if scalar else out
        s = k.profile.power - k.dim + 1.0
        amp = k.profile.coef / fractional_constant(k.dim, s)
        with np.errstate(divide="ignore"):
            out = np.where(
                xs > 0.0, amp * (2.0 * math.pi * xs) ** (s - 1.0), np.inf
            )
        return float(out[0]) if scalar else out
    if not math.isfinite(k.support_radius):
        raise QuadratureError("q_hat needs compact support or a power profile")
    R = k.support_radius
    sing = k.sing_sub
    out = np.empty_like(xs)
    for i, x in enumerate(xs):
        if x == 0.0:
            out[i] = potential_mass(k)
        elif k.dim == 1:
            out[i] = _qhat_sine(k.profile, R, sing, x)
        else:
            w = 2.0 * math.pi * x
            val = radial_quad(k.profile, lambda r: special.j1(w * r), 0.0, R, sing=sing)
            out[i] = val / x
    return float(out[0]) if scalar else out


def _qhat_power_tail(coef: float, s: float, x: float) -> float:
    """1-D sine-formula transform of coef * r^{-s} over (0, inf)."""
    w = 2.0 * math.pi * x
    head_end = min(1.0 / x, 1.0)
    p = 1.0 - s

    def head(u):
        r = u ** (1.0 / p)
        return coef * math.sin(w * r) / (r * p)

    val, _ = integrate.quad(head, 0.0, head_end**p, **_QUAD_OPTS)
    tail, _ = integrate.quad(
        lambda r: coef * r ** (-1.0 - s),
        head_end,
        np.inf,
        weight="sin",
        wvar=w,
        epsabs=1e-13,
        epsrel=1e-12,
        limit=200,
    )
    return (val + tail) / (math.pi * x)


def _qhat_sine(profile, R, sing, x):
    """1-D reduction (1 / (pi x)) int_0^R rho_bar(r) sin(2 pi x r) / r dr.

    The singular head (at most one oscillation long) is integrated after the
    r^{1-s} substitution; the remainder of each smooth piece goes through the
    oscillatory sine rule, whose cost does not grow with the frequency.
    """
    w = 2.0 * math.pi * x
    total = 0.0
    edges = _segment_edges(profile, 0.0, R)
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == 0.0:
            cut = min(hi, 2.0 * math.pi / w)
            if sing > 0.0:
                p = 1.0 - sing

                def f(u):
                    r = u ** (1.0 / p)
                    return profile.val(r) * np.sin(w * r) / r * r**sing / p

                val, _ = integrate.quad(f, 0.0, cut**p, **_QUAD_OPTS)
            else:
                val, _ = integrate.quad(
                    lambda r: profile.val(r) * np.sin(w * r) / r, 0.0, cut, **_QUAD_OPTS
                )
            total += val
            lo = cut
        if lo < hi:
            val, _ = integrate.quad(
                lambda r: profile.val(r) / r,
                lo,
                hi,
                weight="sin",
                wvar=w,
                epsabs=1e-13,
                epsrel=1e-12,
                limit=200,
            )
            total += val
    return total / (math.pi * x)


# ---------------------------------------------------------------------------
# hypothesis checks
# ---------------------------------------------------------------------------


@dataclass
class HypothesisReport:
    """Outcome of the admissibility probes on a kernel.

    h0: locally finite mass with the min(1, 1/|x|) tail weight, and strict
        positivity near the origin.
    h1: f(r) = r^{n-2} rho_bar(r) nonincreasing on the probe window, including
        the nu-weighted variant r^nu f(r).
    h2: finite difference bounds |f^(k)(r)| <= C(k) r^{-k} f(r) for k in {1, 2};
        the measured constants are reported.
    h3: r^{n+s-1} rho_bar almost decreasing (constant reported).
    h4: r^{n+t-1} rho_bar almost increasing (constant reported).
    """

    h0: bool
    h1: bool
    h2: bool
    h3: bool
    h4: bool
    weighted_mass: float
    h2_constants: tuple
    h3_constant: float
    h4_constant: float
    window: float
    notes: tuple

    @property
    def ok(self) -> bool:
        return self.h0 and self.h1 and self.h2 and self.h3 and self.h4

    def as_dict(self) -> dict:
        return {
            "h0": self.h0,
            "h1": self.h1,
            "h2": self.h2,
            "h3": self.h3,
            "h4": self.h4,
            "weighted_mass": self.weighted_mass,
            "h2_constants": list(self.h2_constants),
            "h3_constant": self.h3_constant,
            "h4_constant": self.h4_constant,
            "window": self.window,
            "ok": self.ok,
            "notes": list(self.notes),
        }


def _almost_decreasing_constant(u):
    """min over probe pairs t <= sigma of u(t) / u(sigma) (1.0 means monotone)."""
    suffix_max = np.maximum.accumulate(u[::-1])[::-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = u / suffix_max
    return float(np.nanmin(ratios))


def check_hypotheses(
    k: Kernel,
    eps: float | None = None,
    nu: float = 0.5,
    n_probe: int = 128,
) -> HypothesisReport:
    """Probe the admissibility hypotheses of a kernel near the origin.

    Monotonicity and almost-monotonicity are tested on a geometric probe grid
    in (0, eps]; eps defaults to the kernel's hypothesis window (the plateau
    radius for truncated kernels).  The report carries booleans plus the
    measured constants; it never raises, so callers can gate on ``ok``.
    """
    n = k.dim
    if eps is None:
        eps = k.hyp_window
    eps = min(eps, k.support_radius if math.isfinite(k.support_radius) else eps)
    r = np.geomspace(eps * 1e-3, eps, n_probe)
    rho = k.rho(r)
    notes = []

    # H0: weighted mass and positivity near zero
    inner = sphere_area(n) * radial_quad(
        k.profile, lambda t: t ** (n - 1), 0.0, min(1.0, k.support_radius), sing=k.sing_sub
    )
    if math.isfinite(k.support_radius):
        outer = sphere_area(n) * radial_quad(
            k.profile, lambda t: t ** (n - 2), 1.0, k.support_radius
        )
    elif isinstance(k.profile, PowerProfile):
        p = k.profile
        tail_pow = p.power - (n - 2.0)  # integrand decays like r^{-tail_pow}
        if tail_pow > 1.0:
            outer = sphere_area(n) * p.coef / (tail_pow - 1.0)
        else:
            outer = math.inf
    else:
        outer = math.inf
    weighted_mass = inner + outer
    # positivity is a near-origin requirement; the support endpoint itself may
    # carry a zero (truncated and table profiles vanish there)
    in_support = r < k.support_radius
    h0 = bool(math.isfinite(weighted_mass) and np.all(rho[in_support] > 0.0))
    if not h0:
        notes.append("h0: non-finite weighted mass or vanishing profile on window")

    # H1: f = r^{n-2} rho_bar nonincreasing, and the nu-weighted variant
    f = r ** (n - 2.0) * rho
    g = r**nu * f
    tol = 1e-10
    h1_plain = bool(np.all(np.diff(f) <= tol * np.maximum(np.abs(f[:-1]), 1e-300)))
    h1_weighted = bool(np.all(np.diff(g) <= tol * np.maximum(np.abs(g[:-1]), 1e-300)))
    h1 = h1_plain and h1_weighted
    if not h1:
        notes.append("h1: monotonicity failure" + ("" if h1_plain else " (plain)"))

    # H2: |f^(k)| <= C(k) r^{-k} f by centered differences, k = 1, 2
    h2_consts = []
    h2 = True
    dr = 1e-4
    fm = (r * (1.0 - dr)) ** (n - 2.0) * k.rho(r * (1.0 - dr))
    fp = (r * (1.0 + dr)) ** (n - 2.0) * k.rho(r * (1.0 + dr))
    d1 = (fp - fm) / (2.0 * dr * r)
    d2 = (fp - 2.0 * f + fm) / (dr * r) ** 2
    for kk, dk in ((1, d1), (2, d2)):
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.nanmax(np.abs(dk) * r**kk / np.where(f > 0.0, f, np.nan))
        c = float(c)
        h2_consts.append(c)
        if not math.isfinite(c):
            h2 = False
    if not h2:
        notes.append("h2: derivative bound constants not finite")

    # H3 / H4: almost-monotone fractional comparisons
    const_floor = 1e-3
    if k.frac_upper is not None:
        u3 = r ** (n + k.frac_upper - 1.0) * rho
        c3 = _almost_decreasing_constant(u3)
    else:
        c3 = 0.0
        notes.append("h3: no upper fractional exponent declared")
    if k.frac_lower is not None:
        u4 = r ** (n + k.frac_lower - 1.0) * rho
        c4 = _almost_decreasing_constant(u4[::-1])  # almost increasing
    else:
        c4 = 0.0
        notes.append("h4: no lower fractional exponent declared")
    h3 = bool(c3 >= const_floor)
    h4 = bool(c4 >= const_floor)

    return HypothesisReport(
        h0=h0,
        h1=h1,
        h2=h2,
        h3=h3,
        h4=h4,
        weighted_mass=float(weighted_mass),
        h2_constants=tuple(h2_consts),
        h3_constant=c3,
        h4_constant=c4,
        window=float(eps),
        notes=tuple(notes),
    )


def limit_order(k: Kernel, rtol: float = 1e-9, max_doublings: int = 60) -> float:
    """Fractional order s_oo of the diverging-rescale limit profile.

    Evaluates s_oo = log(rho_oo(1/e)) - n + 1 with
    rho_oo(r) = lim rho_bar(r/delta) / rho_bar(1/delta), doubling delta until
    the ratio stabilizes.  Raises if the limit does not settle or the order
    falls outside the kernel's declared fractional bracket.
    """
    n = k.dim
    prev = None
    delta = 4.0
    for _ in range(max_doublings):
        ref = float(k.rho(1.0 / delta))
        if not (math.isfinite(ref) and ref > 0.0):
            raise AdmissibilityError("profile vanishes on the rescale probe radii")
        val = float(k.rho(1.0 / (math.e * delta))) / ref
        if prev is not None and abs(val - prev) <= rtol * abs(val):
            s_inf = math.log(val) - n + 1.0
            lo = k.frac_lower if k.frac_lower is not None else 0.0
            hi = k.frac_upper if k.frac_upper is not None else 1.0
            if s_inf < lo - 1e-6 or s_inf > hi + 1e-6:
                raise AdmissibilityError(
                    f"limit order {s_inf} falls outside [{lo}, {hi}]"
                )
            return s_inf
        prev = val
        delta *= 2.0
    raise AdmissibilityError("diverging-rescale limit profile did not stabilize")
