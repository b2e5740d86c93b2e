"""Dirichlet and Neumann solvers, the nullspace machinery, and the local oracle."""

import numpy as np
import pytest

from nlelast.elasticity import IsoTensor, bilinear_form, total_energy
from nlelast.errors import AdmissibilityError, ConfigError
from nlelast.grid import BOUNDARY, Field, build_domain
from nlelast.kernels import make_truncated_fractional
from nlelast.operators import (
    nonlocal_divergence,
    nonlocal_gradient,
    nonlocal_laplacian,
)
from nlelast.solve import (
    min_ritz_value,
    neumann_nullspace,
    project_out_nullspace,
    solve_dirichlet,
    solve_dirichlet_strongform,
    solve_local_oracle,
    solve_neumann,
)


def unit_domain(dim, delta, h, collar_mult=1):
    box = (0.0, 1.0) if dim == 1 else ((0.0, 1.0), (0.0, 1.0))
    return build_domain(box, delta, h, collar_mult=collar_mult)


def stiffness_apply(tensor, kernel, dom, vals, rows=None):
    """Energy gradient through the public operators.

    The difference matrices are exactly antisymmetric, so the transpose in
    the assembled stiffness equals minus the collocation divergence.  rows
    restricts the energy to a row subset (the Neumann convention).
    """
    grad = nonlocal_gradient(kernel, Field(dom, vals)).values
    stress = tensor.apply(grad)
    if rows is not None:
        keep = np.zeros(dom.nnodes, dtype=bool)
        keep[rows] = True
        stress[~keep] = 0.0
    div = nonlocal_divergence(kernel, Field(dom, stress)).values
    return -dom.node_volume * div


def free_support_field(dom, rng):
    vals = rng.standard_normal((dom.nnodes, dom.dim))
    keep = np.zeros(dom.nnodes, dtype=bool)
    keep[dom.free_index("zero-on-complement")] = True
    vals[~keep] = 0.0
    return vals


DIRICHLET_CASES = [
    (1, 0.25, 1.0 / 64, IsoTensor(1, 1.0, 0.3)),
    (2, 0.25, 1.0 / 8, IsoTensor(2, 1.0, 0.5)),
]


class TestDirichlet:
    @pytest.mark.parametrize("dim,delta,h,ten", DIRICHLET_CASES)
    def test_manufactured_solution_recovered(self, dim, delta, h, ten):
        # load manufactured from a known constrained field; the solver must
        # reproduce it to well below the 1e-8 acceptance tolerance
        k = make_truncated_fractional(dim, 0.5, delta)
        dom = unit_domain(dim, delta, h)
        rng = np.random.default_rng(7 + dim)
        vtrue = free_support_field(dom, rng)
        f = stiffness_apply(ten, k, dom, vtrue) / dom.node_volume
        u, rep = solve_dirichlet(ten, k, dom, f, tol=1e-12)
        assert rep.converged
        err = np.abs(u.values - vtrue).max() / np.abs(vtrue).max()
        assert err < 1e-8

    def test_zero_load_returns_zero(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        ten = IsoTensor(1, 1.0, 0.3)
        u, rep = solve_dirichlet(ten, k, dom, np.zeros((dom.nnodes, 1)))
        assert np.abs(u.values).max() == 0.0
        assert rep.iterations == 0
        assert rep.energy == 0.0

    def test_energy_minimality(self):
        # the returned field beats 50 random admissible perturbations
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        ten = IsoTensor(1, 1.0, 0.3)
        rng = np.random.default_rng(11)
        fv = rng.standard_normal((dom.nnodes, 1))
        f = Field(dom, fv)
        u, rep = solve_dirichlet(ten, k, dom, f, tol=1e-12)
        e0 = total_energy(ten, k, u, f)
        assert abs(e0 - rep.energy) < 1e-12 * max(1.0, abs(e0))
        for _ in range(50):
            w = free_support_field(dom, rng) * 1e-2
            e1 = total_energy(ten, k, Field(dom, u.values + w), f)
            assert e1 > e0

    def test_two_initial_guesses_agree(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        ten = IsoTensor(1, 1.0, 0.3)
        rng = np.random.default_rng(13)
        f = rng.standard_normal((dom.nnodes, 1))
        nfree = dom.free_index("zero-on-complement").size
        u0, _ = solve_dirichlet(ten, k, dom, f)
        u1, _ = solve_dirichlet(ten, k, dom, f,
                                x0=rng.standard_normal((nfree, 1)))
        gap = np.abs(u0.values - u1.values).max() / np.abs(u0.values).max()
        assert gap < 1e-8

    @pytest.mark.parametrize("dim,delta,h,ten", DIRICHLET_CASES)
    def test_stiffness_positive_definite(self, dim, delta, h, ten):
        k = make_truncated_fractional(dim, 0.5, delta)
        dom = unit_domain(dim, delta, h)
        rng = np.random.default_rng(17)
        for _ in range(50):
            w = free_support_field(dom, rng)
            quad = bilinear_form(ten, k, Field(dom, w), Field(dom, w))
            assert quad > 0.0
        assert min_ritz_value(ten, k, dom) > 0.0

    def test_galerkin_orthogonality(self):
        # K u* - F vanishes on the free rows within the CG tolerance
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        ten = IsoTensor(1, 1.0, 0.3)
        rng = np.random.default_rng(19)
        f = rng.standard_normal((dom.nnodes, 1))
        u, _ = solve_dirichlet(ten, k, dom, f, tol=1e-10)
        free = dom.free_index("zero-on-complement")
        resid = dom.node_volume * f - stiffness_apply(ten, k, dom, u.values)
        rel = np.linalg.norm(resid[free]) / np.linalg.norm(dom.node_volume * f[free])
        assert rel < 1e-7

    def test_prescribed_complement_values_recovered(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        ten = IsoTensor(1, 1.0, 0.3)
        rng = np.random.default_rng(23)
        vtrue = rng.standard_normal((dom.nnodes, 1))
        f = stiffness_apply(ten, k, dom, vtrue) / dom.node_volume
        u, rep = solve_dirichlet(ten, k, dom, f, g=Field(dom, vtrue), tol=1e-12)
        assert rep.converged
        err = np.abs(u.values - vtrue).max() / np.abs(vtrue).max()
        assert err < 1e-8

    def test_indefinite_tensor_rejected(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        bad = IsoTensor(1, 1.0, -2.0)
        with pytest.raises(AdmissibilityError):
            solve_dirichlet(bad, k, dom, np.zeros((dom.nnodes, 1)))
        with pytest.raises(AdmissibilityError):
            solve_neumann(bad, k, dom, np.zeros((dom.nnodes, 1)))

    def test_load_shape_rejected(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        ten = IsoTensor(1, 1.0, 0.3)
        with pytest.raises(ConfigError):
            solve_dirichlet(ten, k, dom, np.zeros(dom.nnodes))
        with pytest.raises(ConfigError):
            solve_dirichlet(ten, k, dom, Field(dom, np.zeros(dom.nnodes)))


class TestStrongForm:
    def test_single_collar_rejected(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        ten = IsoTensor(1, 1.0, 0.3)
        with pytest.raises(ConfigError):
            solve_dirichlet_strongform(ten, k, dom, np.zeros((dom.nnodes, 1)))

    def test_matches_variational_solver(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32, collar_mult=2)
        ten = IsoTensor(1, 1.0, 0.3)
        rng = np.random.default_rng(29)
        f = rng.standard_normal((dom.nnodes, 1))
        uw, _ = solve_dirichlet(ten, k, dom, f, tol=1e-12)
        us, reps = solve_dirichlet_strongform(ten, k, dom, f, tol=1e-12)
        gap = np.abs(uw.values - us.values).max() / np.abs(uw.values).max()
        assert gap < 1e-8
        assert reps.diagnostics["weak_strong_agreement"] < 1e-12

    def test_null_lame_reduces_to_laplacian(self):
        # mu = 1, lambda = -1 in one dimension leaves C[E] = E, so the
        # composed operator is the plain nonlocal Laplacian
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32, collar_mult=2)
        ten = IsoTensor(1, 1.0, -1.0)
        rng = np.random.default_rng(31)
        vtrue = free_support_field(dom, rng)
        f = nonlocal_laplacian(k, Field(dom, vtrue)).values
        u, rep = solve_dirichlet_strongform(ten, k, dom, f, tol=1e-12)
        assert rep.converged
        err = np.abs(u.values - vtrue).max() / np.abs(vtrue).max()
        assert err < 1e-8


class TestNullspace:
    def test_dimension_and_members_1d(self):
        # at 128 cells across the box the numerical kernel holds far more
        # than the single rigid translation: one mode per unseen collar dof
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 128)
        ns = neumann_nullspace(k, dom)
        closed = dom.omega_closed_index().size
        assert ns.dim == dom.nnodes - closed
        assert ns.dim >= dom.dim + 1
        const = np.ones(dom.nnodes) / np.sqrt(dom.nnodes)
        resid = const - ns.basis @ (ns.basis.T @ const)
        assert np.linalg.norm(resid) < 1e-10
        # membership is not exhausted by constants
        offconst = ns.basis - np.outer(const, const @ ns.basis)
        assert np.linalg.norm(offconst) > 1.0

    def test_members_have_zero_energy(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 64)
        ten = IsoTensor(1, 1.0, 0.3)
        ns = neumann_nullspace(k, dom)
        rows = dom.omega_closed_index()
        for j in range(ns.dim):
            member = ns.basis[:, j].reshape(dom.nnodes, 1)
            resid = stiffness_apply(ten, k, dom, member, rows=rows)
            assert np.abs(resid).max() < 1e-8

    def test_mass_orthonormal_basis(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 64)
        ns = neumann_nullspace(k, dom)
        gram = dom.node_volume * ns.mass_basis.T @ ns.mass_basis
        assert np.abs(gram - np.eye(ns.dim)).max() < 1e-12

    def test_projector_idempotent(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 64)
        ns = neumann_nullspace(k, dom)
        rng = np.random.default_rng(37)
        v = rng.standard_normal(dom.nnodes)
        once = ns.project(v)
        assert np.abs(ns.project(once) - once).max() < 1e-13
        member = Field(dom, ns.basis[:, 2].reshape(dom.nnodes, 1))
        assert np.abs(project_out_nullspace(ns, member).values).max() < 1e-12

    def test_rigid_motions_in_span_2d(self):
        k = make_truncated_fractional(2, 0.5, 0.25)
        dom = unit_domain(2, 0.25, 1.0 / 8)
        ns = neumann_nullspace(k, dom)
        assert ns.dim >= 3
        # near-null corner directions sit against the 1e-10 SVD cutoff, so
        # membership resolves to ~1e-9 for translations and worse for the
        # rotation; both stay far below any energy scale
        for mode in (np.tile([1.0, 0.0], dom.nnodes),
                     np.tile([0.0, 1.0], dom.nnodes)):
            unit = mode / np.linalg.norm(mode)
            assert np.linalg.norm(unit - ns.basis @ (ns.basis.T @ unit)) < 1e-8
        c = dom.coords - dom.coords.mean(axis=0)
        rot = np.stack([-c[:, 1], c[:, 0]], axis=1).reshape(-1)
        rot /= np.linalg.norm(rot)
        assert np.linalg.norm(rot - ns.basis @ (ns.basis.T @ rot)) < 1e-6

    def test_poincare_ratio_stable_across_horizons(self):
        # the constrained-complement constant 1/sigma_min moves by less
        # than a factor two over a fourfold horizon sweep
        consts = []
        for delta in (0.1, 0.2, 0.4):
            k = make_truncated_fractional(1, 0.5, delta)
            dom = unit_domain(1, delta, 1.0 / 40)
            ns = neumann_nullspace(k, dom)
            s = ns.sigma
            rank = int(np.sum(s > 1e-10 * s[0]))
            consts.append(1.0 / s[rank - 1])
        assert min(consts) > 0.0
        assert max(consts) / min(consts) < 2.0


class TestNeumann:
    def test_zero_load_zero_solution(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        ten = IsoTensor(1, 1.0, 0.3)
        u, rep = solve_neumann(ten, k, dom, np.zeros((dom.nnodes, 1)))
        assert np.abs(u.values).max() == 0.0
        assert rep.iterations == 0

    def test_manufactured_complement_recovery(self):
        # u-dagger lives in the orthogonal complement; feeding its own
        # energy gradient back must return it within 1e-8
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 64)
        ten = IsoTensor(1, 1.0, 0.3)
        ns = neumann_nullspace(k, dom)
        rng = np.random.default_rng(41)
        udag = project_out_nullspace(ns, Field(dom, rng.standard_normal((dom.nnodes, 1))))
        rows = dom.omega_closed_index()
        f = stiffness_apply(ten, k, dom, udag.values, rows=rows) / dom.node_volume
        u, rep = solve_neumann(ten, k, dom, f, tol=1e-12, project_load=True)
        assert rep.converged
        err = np.abs(u.values - udag.values).max() / np.abs(udag.values).max()
        assert err < 1e-8
        assert rep.diagnostics["solution_nullspace_norm"] < 1e-10

    def test_energy_minimality_in_complement(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        ten = IsoTensor(1, 1.0, 0.3)
        ns = neumann_nullspace(k, dom)
        rng = np.random.default_rng(43)
        f = ns.project(rng.standard_normal(dom.nnodes)).reshape(dom.nnodes, 1)
        u, rep = solve_neumann(ten, k, dom, f, tol=1e-12)
        rows = dom.omega_closed_index()

        def core_energy(vals):
            grad = nonlocal_gradient(k, Field(dom, vals)).values
            dens = np.sum(ten.apply(grad) * grad, axis=(-2, -1))
            a = dom.node_volume * float(dens[rows].sum())
            return 0.5 * a - dom.node_volume * float(np.sum(f * vals))

        e0 = core_energy(u.values)
        assert abs(e0 - rep.energy) < 1e-12 * max(1.0, abs(e0))
        for _ in range(20):
            w = ns.project(rng.standard_normal(dom.nnodes)) * 1e-2
            e1 = core_energy(u.values + w.reshape(dom.nnodes, 1))
            assert e1 > e0

    def test_null_member_in_guess_is_inert(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        ten = IsoTensor(1, 1.0, 0.3)
        ns = neumann_nullspace(k, dom)
        rng = np.random.default_rng(47)
        f = ns.project(rng.standard_normal(dom.nnodes)).reshape(dom.nnodes, 1)
        x0 = rng.standard_normal((dom.nnodes, 1))
        shift = 5.0 * ns.basis[:, :3].sum(axis=1).reshape(dom.nnodes, 1)
        u0, _ = solve_neumann(ten, k, dom, f, x0=x0)
        u1, _ = solve_neumann(ten, k, dom, f, x0=x0 + shift)
        gap = np.abs(u0.values - u1.values).max() / np.abs(u0.values).max()
        assert gap < 1e-8

    def test_incompatible_load_needs_projection(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        ten = IsoTensor(1, 1.0, 0.3)
        f = np.ones((dom.nnodes, 1))  # constants are zero-energy
        with pytest.raises(AdmissibilityError):
            solve_neumann(ten, k, dom, f)
        u, rep = solve_neumann(ten, k, dom, f, project_load=True)
        assert rep.converged
        assert rep.diagnostics["projected_load"]
        assert rep.diagnostics["compatibility_defect"] > 1e-10

    def test_collar_diagnostics_reported(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 32)
        ten = IsoTensor(1, 1.0, 0.3)
        ns = neumann_nullspace(k, dom)
        rng = np.random.default_rng(53)
        f = ns.project(rng.standard_normal(dom.nnodes)).reshape(dom.nnodes, 1)
        _, rep = solve_neumann(ten, k, dom, f)
        for key in ("collar_flux_sup", "collar_difference_sup", "nullspace_dim"):
            assert key in rep.diagnostics
        assert np.isfinite(rep.diagnostics["collar_flux_sup"])
        assert np.isfinite(rep.diagnostics["collar_difference_sup"])
        assert rep.diagnostics["nullspace_dim"] == ns.dim

    def test_complement_operator_positive(self):
        k = make_truncated_fractional(1, 0.5, 0.25)
        dom = unit_domain(1, 0.25, 1.0 / 16)
        ten = IsoTensor(1, 1.0, 0.3)
        assert min_ritz_value(ten, k, dom, neumann=True) > 0.0

    def test_2d_deflation_reported(self):
        # corner collar modes fall many orders below the bulk spectrum;
        # the dense path drops them and reports the unresolved share
        k = make_truncated_fractional(2, 0.5, 0.25)
        dom = unit_domain(2, 0.25, 1.0 / 8)
        ten = IsoTensor(2, 1.0, 0.5)
        rng = np.random.default_rng(59)
        f = rng.standard_normal((dom.nnodes, 2))
        u, rep = solve_neumann(ten, k, dom, f, project_load=True)
        assert rep.converged
        assert rep.diagnostics["deflated_modes"] > 0
        assert 0.0 <= rep.diagnostics["unresolved_load"] < 1.0
        assert rep.diagnostics["solution_nullspace_norm"] < 1e-10
        assert np.abs(u.values).max() < 1e3


class TestLocalOracle:
    def test_zero_load(self):
        ten = IsoTensor(1, 1.0, 0.3)
        u, rep = solve_local_oracle(ten, (0.0, 1.0), 1.0 / 32,
                                    lambda c: np.zeros((c.shape[0], 1)))
        assert np.abs(u.values).max() == 0.0
        assert rep.converged

    def test_unit_load_closed_form(self):
        # -(2 mu + lambda) v'' = 1 on (0,1), pinned ends; linear elements
        # with a lumped constant load are nodally exact
        mu, lam = 1.0, 0.3
        ten = IsoTensor(1, mu, lam)
        u, _ = solve_local_oracle(ten, (0.0, 1.0), 1.0 / 32,
                                  lambda c: np.ones((c.shape[0], 1)))
        x = u.domain.coords[:, 0]
        exact = x * (1.0 - x) / (2.0 * (2.0 * mu + lam))
        assert np.abs(u.values[:, 0] - exact).max() < 1e-10

    def test_convergence_order_2d(self):
        mu, lam = 1.0, 0.5
        ten = IsoTensor(2, mu, lam)

        def exact(c):
            s = np.sin(np.pi * c)
            return np.stack([s[:, 0] * s[:, 1], s[:, 0] * s[:, 1]], axis=1)

        def load(c):
            s = np.sin(np.pi * c[:, 0]) * np.sin(np.pi * c[:, 1])
            co = np.cos(np.pi * c[:, 0]) * np.cos(np.pi * c[:, 1])
            comp = np.pi ** 2 * ((3.0 * mu + lam) * s - (mu + lam) * co)
            return np.stack([comp, comp], axis=1)

        errs = []
        for h in (1.0 / 8, 1.0 / 16, 1.0 / 32):
            u, _ = solve_local_oracle(ten, ((0.0, 1.0), (0.0, 1.0)), h, load)
            diff = u.values - exact(u.domain.coords)
            errs.append(np.sqrt(u.domain.node_volume * np.sum(diff ** 2)))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert (orders > 1.9).all()

    def test_neumann_rigid_modes_removed(self):
        ten = IsoTensor(2, 1.0, 0.5)

        def load(c):
            # gradient of a bump, orthogonal to translations after lumping
            s = np.sin(2.0 * np.pi * c)
            return np.stack([s[:, 0] * 0.0 + s[:, 1] * s[:, 0],
                             s[:, 0] * s[:, 1]], axis=1)

        u, rep = solve_local_oracle(ten, ((0.0, 1.0), (0.0, 1.0)), 1.0 / 16,
                                    load, bc="neumann")
        assert rep.converged
        assert rep.diagnostics["rigid_modes"] == 3
        vals = u.values.reshape(-1)
        for mode in (np.tile([1.0, 0.0], u.domain.nnodes),
                     np.tile([0.0, 1.0], u.domain.nnodes)):
            assert abs(vals @ mode) / np.linalg.norm(vals) / np.linalg.norm(mode) < 1e-8

    def test_bad_arguments_rejected(self):
        ten = IsoTensor(1, 1.0, 0.3)
        with pytest.raises(ConfigError):
            solve_local_oracle(ten, (0.0, 1.0), 1.0 / 8,
                               lambda c: np.zeros((c.shape[0], 1)), bc="mixed")
        with pytest.raises(ConfigError):
            solve_local_oracle(ten, (0.0, 1.0), 1.0 / 8,
                               lambda c: np.zeros(c.shape[0]))
