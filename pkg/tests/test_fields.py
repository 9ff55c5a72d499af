import numpy as np
import pytest

from flowreg.fields import (
    Grid,
    ScalarField,
    TimeSeriesField,
    VectorField,
    l2_inner,
    mesh_coordinates,
    set_sequential_reduction,
    time_integral,
)

from conftest import coords


class TestGrid:
    def test_spacing_times_count_is_two_pi(self):
        g = Grid((16, 24))
        for h, n in zip(g.h, g.n):
            assert h * n == pytest.approx(2 * np.pi, rel=1e-15)

    def test_rejects_odd_or_small_counts(self):
        with pytest.raises(ValueError):
            Grid((7, 16))
        with pytest.raises(ValueError):
            Grid((16, 17))
        with pytest.raises(ValueError):
            Grid((16, 16), n_t=0)

    def test_axis_coords_descend_from_pi_minus_h(self):
        g = Grid((8, 8))
        x = g.axis_coords(0)
        assert x[0] == pytest.approx(np.pi - g.h[0])
        assert x[-1] == pytest.approx(-np.pi)
        assert np.all(np.diff(x) < 0)


class TestMeshCoordinates:
    def test_center_index(self):
        g = Grid((4, 4)) if False else Grid((8, 8))
        assert np.allclose(mesh_coordinates(g, (4, 4)), (0.0, 0.0))

    def test_boundary_index_hits_minus_pi(self):
        g = Grid((8, 8))
        assert np.allclose(mesh_coordinates(g, (8, 8)), (-np.pi, -np.pi))

    def test_hand_evaluated_3d_point(self):
        g = Grid((8, 8, 8))
        got = mesh_coordinates(g, (3, 4, 5))
        assert np.allclose(got, (np.pi / 4, 0.0, -np.pi / 4))

    def test_out_of_range_raises(self):
        g = Grid((8, 8))
        with pytest.raises(IndexError):
            mesh_coordinates(g, (0, 3))
        with pytest.raises(IndexError):
            mesh_coordinates(g, (3, 9))

    def test_injective_and_tiles_the_box(self):
        g = Grid((8, 10))
        pts = set()
        for l0 in range(1, 9):
            for l1 in range(1, 11):
                raw = mesh_coordinates(g, (l0, l1))
                assert -np.pi <= raw[0] < np.pi and -np.pi <= raw[1] < np.pi
                pts.add(tuple(np.round(raw, 12)))
        assert len(pts) == 80
        # uniform tiling: first-axis coordinates form an arithmetic sequence
        xs = sorted({p[0] for p in pts})
        assert np.allclose(np.diff(xs), g.h[0])


class TestL2Inner:
    def test_constant_field_measures_the_box(self):
        g = Grid((16, 16))
        one = ScalarField.full(g, 1.0)
        assert l2_inner(one, one) == pytest.approx((2 * np.pi) ** 2, rel=1e-14)

    def test_orthogonal_modes(self):
        g = Grid((32, 32))
        x = coords(g)
        a = ScalarField(g, np.sin(x[0]))
        b = ScalarField(g, np.cos(x[0]))
        assert abs(l2_inner(a, b)) < 1e-12

    def test_matches_bruteforce_sum_bitwise(self, rng):
        g = Grid((8, 12))
        a = ScalarField(g, rng.standard_normal(g.n))
        b = ScalarField(g, rng.standard_normal(g.n))
        set_sequential_reduction(True)
        try:
            got = l2_inner(a, b)
        finally:
            set_sequential_reduction(False)
        acc = 0.0
        for x, y in zip(a.values.ravel(), b.values.ravel()):
            acc = acc + float(x) * float(y)
        assert got == acc * g.cell_volume

    def test_symmetric_bilinear_positive(self, rng):
        g = Grid((8, 8))
        for _ in range(5):
            a = ScalarField(g, rng.standard_normal(g.n))
            b = ScalarField(g, rng.standard_normal(g.n))
            c = ScalarField(g, rng.standard_normal(g.n))
            assert l2_inner(a, b) == pytest.approx(l2_inner(b, a), rel=1e-14, abs=1e-14)
            lhs = l2_inner(ScalarField(g, 2.0 * a.values + c.values), b)
            assert lhs == pytest.approx(2 * l2_inner(a, b) + l2_inner(c, b), rel=1e-12, abs=1e-12)
            assert l2_inner(a, a) > 0.0

    def test_grid_mismatch_raises(self):
        a = ScalarField.full(Grid((8, 8)), 1.0)
        b = ScalarField.full(Grid((16, 16)), 1.0)
        with pytest.raises(ValueError):
            l2_inner(a, b)


class TestTimeIntegral:
    def test_exact_for_constants(self):
        g = Grid((8, 8), n_t=4)
        series = TimeSeriesField(g, np.full((5, 8, 8), 3.25))
        out = time_integral(series)
        assert np.allclose(out.values, 3.25, rtol=1e-15)

    def test_exact_for_linear_slices(self):
        g = Grid((8, 8), n_t=4)
        data = np.stack([np.full((8, 8), j / 4) for j in range(5)])
        out = time_integral(TimeSeriesField(g, data))
        assert np.allclose(out.values, 0.5, rtol=1e-15)

    def test_quadratic_error_matches_trapezoid_formula(self):
        g = Grid((8, 8), n_t=4)
        data = np.stack([np.full((8, 8), (j / 4) ** 2) for j in range(5)])
        out = time_integral(TimeSeriesField(g, data))
        h_t = 0.25
        assert np.allclose(out.values - 1.0 / 3.0, h_t**2 / 6.0, rtol=1e-12)

    def test_vector_slices(self):
        g = Grid((8, 8), n_t=2)
        slices = [VectorField.constant(g, (j, -j)) for j in range(3)]
        out = time_integral(slices)
        assert np.allclose(out.data[0], 1.0)
        assert np.allclose(out.data[1], -1.0)

    def test_too_few_slices_raises(self):
        g = Grid((8, 8), n_t=1)
        with pytest.raises(ValueError):
            time_integral([ScalarField.zeros(g)])


class TestContainers:
    def test_non_finite_rejected(self):
        g = Grid((8, 8))
        bad = np.zeros(g.n)
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            ScalarField(g, bad)

    def test_shape_mismatch_rejected(self):
        g = Grid((8, 8))
        with pytest.raises(ValueError):
            ScalarField(g, np.zeros((8, 9)))

    def test_time_series_value_semantics(self):
        g = Grid((8, 8), n_t=2)
        s = ScalarField.zeros(g)
        tsf = TimeSeriesField.from_slices(g, [s, s, s])
        tsf.slice(0).values[0, 0] = 99.0
        assert tsf.data[0, 0, 0] == 0.0
        s.values[0, 0] = 7.0
        assert tsf.data[0, 0, 0] == 0.0

    def test_vector_components_share_grid(self):
        a = ScalarField.zeros(Grid((8, 8)))
        b = ScalarField.zeros(Grid((16, 16)))
        with pytest.raises(ValueError):
            VectorField.from_components([a, b])
