"""Self-convolved kernel tabulation and the double-integral energy form."""

import numpy as np
import pytest

from nlelast.elasticity import GeneralTensor, IsoTensor, bilinear_form
from nlelast.eringen import (
    EringenForm,
    assemble_eringen_form,
    build_eringen_kernel,
    compare_forms,
    mercer_min,
    scalar_identity_gap,
)
from nlelast.errors import ConfigError, QuadratureError
from nlelast.grid import FREE, ZERO_COMPLEMENT, Field, build_domain
from nlelast.kernels import (
    make_constant,
    make_fractional,
    make_truncated_fractional,
    q_hat,
)

DELTA = 0.25


def unit_domain_1d(N, collar_mult=1):
    return build_domain([(0.0, 1.0)], DELTA, 1.0 / N, collar_mult=collar_mult)


def unit_domain_2d(N):
    return build_domain([(0.0, 1.0), (0.0, 1.0)], DELTA, 1.0 / N)


def bump(dom, rng):
    n = dom.dim
    vals = np.zeros((dom.nnodes, n))
    rel = (dom.coords - dom.lo) / (dom.hi - dom.lo)
    for a in range(n):
        prof = np.sin(np.pi * np.clip(rel[:, 0], 0.0, 1.0))
        for ax in range(1, n):
            prof = prof * np.sin(np.pi * np.clip(rel[:, ax], 0.0, 1.0))
        vals[:, a] = (1.0 + rng.standard_normal()) * prof
    keep = np.zeros(dom.nnodes, dtype=bool)
    keep[dom.free_index(ZERO_COMPLEMENT)] = True
    vals[~keep] = 0.0
    return Field(dom, vals, constraint=ZERO_COMPLEMENT)


class TestBuild:
    def test_support_doubles(self):
        k = make_truncated_fractional(1, 0.5, DELTA)
        ek = build_eringen_kernel(k, 1.0 / 64)
        assert ek.support == pytest.approx(2.0 * k.support_radius)
        assert ek.profile(ek.support) == 0.0
        assert ek.profile(1.01 * ek.support) == 0.0
        assert ek.values[0] > 0.0

    def test_profile_decreasing_tail(self):
        k = make_truncated_fractional(1, 0.7, DELTA)
        ek = build_eringen_kernel(k, 1.0 / 64)
        r = np.linspace(0.3, 0.55, 40)
        v = ek.profile(r)
        assert np.all(np.diff(v) <= 1e-12)

    def test_transform_matches_squared_potential_1d(self):
        # the tent transform of the table must reproduce q_hat^2, which
        # ties the tabulation to the independently validated potential
        for s in (0.3, 0.5, 0.7):
            k = make_truncated_fractional(1, s, DELTA)
            ek = build_eringen_kernel(k, 1.0 / 128)
            for xi in (0.5, 1.0, 2.0, 4.0):
                want = q_hat(k, xi) ** 2
                assert abs(ek.transform(xi) - want) <= 1e-4 * abs(want)

    def test_transform_matches_squared_potential_2d(self):
        k = make_truncated_fractional(2, 0.5, DELTA)
        ek = build_eringen_kernel(k, 1.0 / 16)
        for xi in (0.5, 1.0, 2.0):
            want = q_hat(k, xi) ** 2
            assert abs(ek.transform(xi) - want) <= 1e-4 * abs(want)

    def test_gram_positive_semidefinite_1d(self):
        k = make_truncated_fractional(1, 0.5, DELTA)
        dom = unit_domain_1d(64)
        form = assemble_eringen_form(build_eringen_kernel(k, dom.h),
                                     IsoTensor(1, 1.0, 0.0), dom)
        ev = np.linalg.eigvalsh(form._K)
        assert ev.min() >= -1e-12 * ev.max()

    def test_gram_positive_semidefinite_2d(self):
        k = make_truncated_fractional(2, 0.5, DELTA)
        dom = unit_domain_2d(8)
        form = assemble_eringen_form(build_eringen_kernel(k, dom.h),
                                     IsoTensor(2, 1.0, 0.5), dom)
        ev = np.linalg.eigvalsh(form._K)
        assert ev.min() >= -1e-12 * ev.max()

    def test_needs_compact_support(self):
        k = make_fractional(1, 0.5)
        with pytest.raises(QuadratureError):
            build_eringen_kernel(k, 1.0 / 64)

    def test_bad_resolution(self):
        k = make_truncated_fractional(1, 0.5, DELTA)
        with pytest.raises(ConfigError):
            build_eringen_kernel(k, 0.0)


class TestForm:
    def test_zero_field_zero_energy(self):
        k = make_truncated_fractional(1, 0.5, DELTA)
        dom = unit_domain_1d(64)
        form = assemble_eringen_form(build_eringen_kernel(k, dom.h),
                                     IsoTensor(1, 1.0, 0.3), dom)
        z = Field(dom, np.zeros((dom.nnodes, 1)), constraint=ZERO_COMPLEMENT)
        assert form(z, z) == 0.0

    def test_symmetric_and_positive(self):
        rng = np.random.default_rng(5)
        k = make_truncated_fractional(1, 0.5, DELTA)
        dom = unit_domain_1d(64)
        form = assemble_eringen_form(build_eringen_kernel(k, dom.h),
                                     IsoTensor(1, 1.0, 0.3), dom)
        v, w = bump(dom, rng), bump(dom, rng)
        a_vw, a_wv = form(v, w), form(w, v)
        assert abs(a_vw - a_wv) <= 1e-12 * abs(a_vw)
        assert form.seminorm(v) > 0.0

    def test_streamed_matches_dense(self):
        rng = np.random.default_rng(9)
        k = make_truncated_fractional(1, 0.5, DELTA)
        dom = unit_domain_1d(64)
        ek = build_eringen_kernel(k, dom.h)
        dense = assemble_eringen_form(ek, IsoTensor(1, 1.0, 0.3), dom)
        streamed = EringenForm(ek, IsoTensor(1, 1.0, 0.3), dom, dense_cap=16)
        assert streamed._K is None
        v, w = bump(dom, rng), bump(dom, rng)
        a, b = dense(v, w), streamed(v, w)
        assert abs(a - b) <= 1e-13 * abs(a)

    def test_general_tensor_matches_isotropic(self):
        rng = np.random.default_rng(11)
        mu, lam = 1.0, 0.6
        eye = np.eye(2)
        c = (mu * (np.einsum("ac,bd->abcd", eye, eye)
                   + np.einsum("ad,bc->abcd", eye, eye))
             + lam * np.einsum("ab,cd->abcd", eye, eye))
        k = make_truncated_fractional(2, 0.5, DELTA)
        dom = unit_domain_2d(8)
        ek = build_eringen_kernel(k, dom.h)
        iso = assemble_eringen_form(ek, IsoTensor(2, mu, lam), dom)
        gen = assemble_eringen_form(ek, GeneralTensor(2, c), dom)
        v, w = bump(dom, rng), bump(dom, rng)
        assert abs(iso(v, w) - gen(v, w)) <= 1e-12 * abs(iso(v, w))

    def test_rejects_scalar_field(self):
        k = make_truncated_fractional(1, 0.5, DELTA)
        dom = unit_domain_1d(64)
        form = assemble_eringen_form(build_eringen_kernel(k, dom.h),
                                     IsoTensor(1, 1.0, 0.3), dom)
        u = Field(dom, np.zeros(dom.nnodes), constraint=ZERO_COMPLEMENT)
        with pytest.raises(ConfigError):
            form(u, u)

    def test_rejects_collar_support(self):
        k = make_truncated_fractional(1, 0.5, DELTA)
        dom = unit_domain_1d(64)
        form = assemble_eringen_form(build_eringen_kernel(k, dom.h),
                                     IsoTensor(1, 1.0, 0.3), dom)
        vals = np.ones((dom.nnodes, 1))
        with pytest.raises(ConfigError):
            form(Field(dom, vals, constraint=FREE),
                 Field(dom, vals, constraint=FREE))

    def test_rejects_mismatched_resolution(self):
        k = make_truncated_fractional(1, 0.5, DELTA)
        ek = build_eringen_kernel(k, 1.0 / 32)
        with pytest.raises(ConfigError):
            assemble_eringen_form(ek, IsoTensor(1, 1.0, 0.3), unit_domain_1d(64))

    def test_rejects_dimension_mismatch(self):
        k = make_truncated_fractional(1, 0.5, DELTA)
        ek = build_eringen_kernel(k, 1.0 / 16)
        with pytest.raises(ConfigError):
            assemble_eringen_form(ek, IsoTensor(2, 1.0, 0.5), unit_domain_2d(16))


class TestAgreement:
    def test_matches_gradient_form_under_refinement_1d(self):
        # the two discretizations are independent, so their gap is pure
        # discretization error: small at N = 512 and at least halving
        # with each grid refinement
        k = make_truncated_fractional(1, 0.5, DELTA)
        C = IsoTensor(1, 1.0, 0.3)
        maxima = []
        for N in (128, 256, 512):
            rep = compare_forms(k, C, unit_domain_1d(N), trial_count=8, seed=7)
            assert rep.mercer_min > 0.0
            assert rep.seminorm_discrepancies.max() <= 2.0 * rep.max_discrepancy
            maxima.append(rep.max_discrepancy)
        assert maxima[-1] <= 1e-2
        assert maxima[0] >= 2.0 * maxima[1]
        assert maxima[1] >= 2.0 * maxima[2]

    def test_matches_gradient_form_under_refinement_2d(self):
        k = make_truncated_fractional(2, 0.5, DELTA)
        C = IsoTensor(2, 1.0, 0.5)
        maxima = []
        for N in (8, 16):
            rep = compare_forms(k, C, unit_domain_2d(N), trial_count=5, seed=3)
            assert rep.mercer_min > 0.0
            maxima.append(rep.max_discrepancy)
        assert maxima[0] >= 2.0 * maxima[1]
        assert maxima[-1] <= 5e-2

    def test_constant_kernel_agreement(self):
        k = make_constant(1, DELTA)
        rep = compare_forms(k, IsoTensor(1, 1.0, 0.3), unit_domain_1d(128),
                            trial_count=5, seed=1)
        assert rep.max_discrepancy <= 1e-2
        assert rep.mercer_min > 0.0

    def test_mercer_positive_many_samples(self):
        k = make_truncated_fractional(1, 0.3, DELTA)
        dom = unit_domain_1d(128)
        ek = build_eringen_kernel(k, dom.h)
        assert mercer_min(ek, dom, count=20, seed=0) > 0.0
        assert mercer_min(ek, dom, count=20, seed=123) > 0.0


class TestScalarIdentity:
    def test_exact_at_each_resolution(self):
        # cell-pair averaging makes the double sum equal the convolution
        # norm identically; any tabulation inconsistency breaks this
        k = make_truncated_fractional(1, 0.5, DELTA)
        for N in (128, 256):
            lhs, rhs, gap = scalar_identity_gap(k, unit_domain_1d(N))
            assert lhs > 0.0 and rhs > 0.0
            assert gap <= 1e-12

    def test_one_dimensional_only(self):
        k = make_truncated_fractional(2, 0.5, DELTA)
        with pytest.raises(ConfigError):
            scalar_identity_gap(k, unit_domain_2d(8))
