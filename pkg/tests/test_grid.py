"""Domain lattice, node labelling, field, and periodic grid tests."""

import numpy as np
import pytest

from nlelast.errors import ConfigError
from nlelast.grid import (
    BOUNDARY,
    COLLAR_IN,
    COLLAR_OUT,
    FREE,
    INNER,
    ZERO_COLLAR,
    ZERO_COMPLEMENT,
    TorusGrid,
    build_domain,
    field_to_csv,
    interpolate,
)


class TestNodeLabels:
    def test_unit_interval_counts(self):
        # direct count: 31 lattice points on [-0.25, 1.25] at h = 0.05,
        # of which 9 lie deeper than 0.25, 5 per side in each collar,
        # and 2 sit exactly on the interval endpoints
        dom = build_domain((0.0, 1.0), 0.25, 0.05)
        assert dom.nnodes == 31
        c = dom.counts()
        assert c == {
            "inner": 9,
            "collar_in": 10,
            "boundary": 2,
            "collar_out": 10,
        }

    def test_outer_collar_positions(self):
        dom = build_domain((0.0, 1.0), 0.25, 0.05)
        left = np.sort(dom.coords[dom.mask == COLLAR_OUT, 0])
        np.testing.assert_allclose(
            left[:5], [-0.25, -0.2, -0.15, -0.1, -0.05], atol=1e-12
        )
        np.testing.assert_allclose(
            left[5:], [1.05, 1.1, 1.15, 1.2, 1.25], atol=1e-12
        )

    def test_single_layer_collar(self):
        dom = build_domain((0.0, 1.0), 0.1, 0.1)
        c = dom.counts()
        assert c["collar_in"] == 2
        assert c["collar_out"] == 2
        assert c["boundary"] == 2

    def test_labels_partition_nodes(self):
        dom = build_domain(((0, 1), (0, 2)), 0.2, 0.1)
        c = dom.counts()
        assert sum(c.values()) == dom.nnodes

    def test_inner_nodes_avoid_the_collar_2d(self):
        dom = build_domain(((0, 1), (0, 1)), 0.2, 0.05)
        inner = dom.coords[dom.mask == INNER]
        depth = np.min(np.minimum(inner, 1.0 - inner), axis=1)
        assert np.all(depth > 0.2 + 1e-12)
        near = dom.coords[dom.mask == COLLAR_IN]
        depth = np.min(np.minimum(near, 1.0 - near), axis=1)
        assert np.all(depth <= 0.2 + 1e-12)
        assert np.all(depth > -1e-12)

    def test_refinement_keeps_labels_at_shared_nodes(self):
        coarse = build_domain((0.0, 1.0), 0.2, 0.05)
        fine = build_domain((0.0, 1.0), 0.2, 0.025)
        pos = {round(x, 9): m for x, m in zip(fine.coords[:, 0], fine.mask)}
        for x, m in zip(coarse.coords[:, 0], coarse.mask):
            assert pos[round(x, 9)] == m

    def test_reflection_symmetry(self):
        dom = build_domain((0.0, 1.0), 0.25, 0.05)
        xs = dom.coords[:, 0]
        mirrored = {round(1.0 - x, 9): m for x, m in zip(xs, dom.mask)}
        for x, m in zip(xs, dom.mask):
            assert mirrored[round(x, 9)] == m

    def test_collar_multiplier_widens_outer_collar(self):
        dom = build_domain((0.0, 1.0), 0.25, 0.05, collar_mult=2)
        c = dom.counts()
        assert c["collar_out"] == 20
        assert c["inner"] == 9
        assert c["collar_in"] == 10
        assert np.isclose(dom.coords[:, 0].min(), -0.5)

    def test_delta_zero_has_no_collar(self):
        dom = build_domain((0.0, 1.0), 0.0, 0.1)
        c = dom.counts()
        assert c["collar_in"] == 0
        assert c["collar_out"] == 0
        assert c["boundary"] == 2
        assert c["inner"] == 9


class TestDomainValidation:
    def test_spacing_must_divide_delta(self):
        with pytest.raises(ConfigError):
            build_domain((0.0, 1.0), 0.25, 0.04)

    def test_spacing_must_divide_sides(self):
        with pytest.raises(ConfigError):
            build_domain((0.0, 1.05), 0.25, 0.1)

    def test_spacing_cannot_exceed_delta(self):
        with pytest.raises(ConfigError):
            build_domain((0.0, 1.0), 0.1, 0.2)

    def test_collar_cannot_swallow_the_box(self):
        with pytest.raises(ConfigError):
            build_domain((0.0, 1.0), 0.5, 0.1)

    def test_degenerate_box(self):
        with pytest.raises(ConfigError):
            build_domain((1.0, 1.0), 0.1, 0.1)

    def test_three_dimensional_box_rejected(self):
        with pytest.raises(ConfigError):
            build_domain(((0, 1), (0, 1), (0, 1)), 0.2, 0.1)


class TestConstraintSets:
    def test_free_index_sizes(self):
        dom = build_domain((0.0, 1.0), 0.25, 0.05)
        assert dom.free_index(FREE).size == 31
        assert dom.free_index(ZERO_COMPLEMENT).size == 19  # open interval
        assert dom.free_index(ZERO_COLLAR).size == 9
        assert dom.collar_index().size == 22

    def test_constrained_complement(self):
        dom = build_domain((0.0, 1.0), 0.25, 0.05)
        pinned = dom.constrained_index(ZERO_COMPLEMENT)
        assert pinned.size == 12
        assert set(dom.mask[pinned]) == {BOUNDARY, COLLAR_OUT}


class TestFields:
    def test_affine_sampling_is_nodal_exact(self):
        dom = build_domain(((0, 1), (0, 1)), 0.2, 0.1)
        f = interpolate(dom, lambda x: 2.0 * x[:, 0] - 3.0 * x[:, 1] + 1.0)
        expect = 2.0 * dom.coords[:, 0] - 3.0 * dom.coords[:, 1] + 1.0
        np.testing.assert_array_equal(f.values, expect)
        assert f.rank == "scalar"

    def test_constraint_zeroes_pinned_nodes(self):
        dom = build_domain((0.0, 1.0), 0.25, 0.05)
        f = interpolate(dom, lambda x: np.ones(len(x)), ZERO_COMPLEMENT)
        assert np.all(f.values[dom.constrained_index(ZERO_COMPLEMENT)] == 0.0)
        assert np.all(f.values[dom.free_index(ZERO_COMPLEMENT)] == 1.0)
        f.validate()

    def test_vector_and_matrix_ranks(self):
        dom = build_domain(((0, 1), (0, 1)), 0.2, 0.1)
        v = interpolate(dom, lambda x: np.stack([x[:, 0], x[:, 1]], axis=1))
        assert v.rank == "vector"
        m = interpolate(
            dom, lambda x: np.tile(np.eye(2), (len(x), 1, 1))
        )
        assert m.rank == "matrix"

    def test_non_finite_sample_rejected(self):
        dom = build_domain((0.0, 1.0), 0.25, 0.05)
        with np.errstate(divide="ignore"):
            with pytest.raises(ConfigError):
                interpolate(dom, lambda x: 1.0 / x[:, 0])

    def test_csv_round_trip(self):
        dom = build_domain((0.0, 1.0), 0.25, 0.25)
        f = interpolate(dom, lambda x: x[:, 0] ** 2)
        text = field_to_csv(f)
        lines = text.strip().split("\n")
        assert lines[0] == "x1,v"
        assert len(lines) == dom.nnodes + 1
        back = np.loadtxt(lines[1:], delimiter=",")
        np.testing.assert_array_equal(back[:, 0], dom.coords[:, 0])
        np.testing.assert_array_equal(back[:, 1], f.values)


class TestTorusGrid:
    def test_points_must_be_power_of_two(self):
        with pytest.raises(ConfigError):
            TorusGrid(1, 48)
        with pytest.raises(ConfigError):
            TorusGrid(1, 2)

    def test_frequencies(self):
        g = TorusGrid(1, 8, period=2.0)
        got = np.sort(g.freqs())
        np.testing.assert_allclose(
            got, np.arange(-4, 4) / 2.0, atol=1e-15
        )

    def test_single_mode_is_spectrally_pure(self):
        g = TorusGrid(1, 64)
        u = g.sample(lambda x: np.sin(2.0 * np.pi * x[:, 0]))
        hat = np.fft.fft(u)
        mag = np.abs(hat)
        live = np.flatnonzero(mag > 1e-10 * mag.max())
        assert set(live.tolist()) == {1, 63}

    def test_freq_magnitude_2d(self):
        g = TorusGrid(2, 8)
        mag = g.freq_magnitude()
        assert mag.shape == (8, 8)
        assert mag[0, 0] == 0.0
        assert np.isclose(mag[4, 4], np.hypot(4.0, 4.0))
