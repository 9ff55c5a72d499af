import numpy as np
import pytest

from flowreg.distance import (
    ZeroNormError,
    adjoint_final,
    dist_value,
    incremental_final_gn,
)
from flowreg.fields import Grid, ScalarField

from conftest import bump_image


def random_image(grid, rng, offset=0.5):
    return ScalarField(grid, offset + 0.3 * rng.standard_normal(grid.n))


class TestDistValue:
    @pytest.mark.parametrize("kind", ["ssd", "ncc"])
    def test_zero_for_identical_images(self, kind, rng):
        g = Grid((8, 8))
        m = random_image(g, rng)
        assert dist_value(m, m, kind) == pytest.approx(0.0, abs=1e-12)

    def test_ncc_scale_invariant(self, rng):
        g = Grid((8, 8))
        m = random_image(g, rng)
        scaled = ScalarField(g, 3.7 * m.values)
        assert dist_value(m, scaled, "ncc") == pytest.approx(0.0, abs=1e-12)
        assert dist_value(scaled, m, "ncc") == pytest.approx(0.0, abs=1e-12)

    def test_ssd_not_scale_invariant(self, rng):
        g = Grid((8, 8))
        m = random_image(g, rng)
        scaled = ScalarField(g, 2.0 * m.values)
        assert dist_value(m, scaled, "ssd") > 1e-3

    def test_ssd_constant_mismatch_measures_box(self):
        g = Grid((16, 16))
        zero = ScalarField.zeros(g)
        one = ScalarField.full(g, 1.0)
        assert dist_value(zero, one, "ssd") == pytest.approx(0.5 * (2 * np.pi) ** 2, rel=1e-13)

    def test_ncc_range_and_zero_norm_error(self, rng):
        g = Grid((8, 8))
        m = random_image(g, rng)
        w = random_image(g, rng)
        val = dist_value(m, w, "ncc")
        assert 0.0 <= val <= 1.0
        with pytest.raises(ZeroNormError):
            dist_value(ScalarField.zeros(g), m, "ncc")


class TestAdjointFinal:
    @pytest.mark.parametrize("kind", ["ssd", "ncc"])
    def test_zero_at_perfect_match(self, kind, rng):
        g = Grid((8, 8))
        m = random_image(g, rng)
        out = adjoint_final(m, m, kind)
        assert np.max(np.abs(out.values)) < 1e-12

    def test_ssd_linearity_in_perturbation(self, rng):
        g = Grid((8, 8))
        m1 = random_image(g, rng)
        bump = bump_image(g, kappa=1.0).values
        delta = 1e-3
        out = adjoint_final(ScalarField(g, m1.values + delta * bump), m1, "ssd")
        assert np.max(np.abs(out.values + delta * bump)) < 1e-15

    @pytest.mark.parametrize("kind", ["ssd", "ncc"])
    def test_matches_per_voxel_fd_gradient(self, kind, rng):
        g = Grid((8, 8))
        m = random_image(g, rng)
        m1 = random_image(g, rng)
        eps = 1e-6
        fd = np.zeros(g.n)
        for i in range(8):
            for j in range(8):
                up = m.values.copy()
                up[i, j] += eps
                dn = m.values.copy()
                dn[i, j] -= eps
                fd[i, j] = (
                    dist_value(ScalarField(g, up), m1, kind)
                    - dist_value(ScalarField(g, dn), m1, kind)
                ) / (2 * eps)
        lam = adjoint_final(m, m1, kind)
        # the distance differentiates against the weighted inner product
        rel = np.max(np.abs(-lam.values * g.cell_volume - fd)) / np.max(np.abs(fd))
        assert rel < 1e-4


class TestIncrementalFinal:
    @pytest.mark.parametrize("kind", ["ssd", "ncc"])
    def test_zero_perturbation_gives_zero(self, kind, rng):
        g = Grid((8, 8))
        m = random_image(g, rng)
        m1 = random_image(g, rng)
        out = incremental_final_gn(ScalarField.zeros(g), m, m1, kind)
        assert np.max(np.abs(out.values)) < 1e-14

    def test_ssd_scales_linearly(self, rng):
        g = Grid((8, 8))
        m = random_image(g, rng)
        m1 = random_image(g, rng)
        mt = random_image(g, rng, offset=0.0)
        one = incremental_final_gn(mt, m, m1, "ssd")
        two = incremental_final_gn(ScalarField(g, 2 * mt.values), m, m1, "ssd")
        assert np.max(np.abs(two.values - 2 * one.values)) == 0.0

    def test_ncc_linear_in_perturbation(self, rng):
        g = Grid((8, 8))
        m = random_image(g, rng)
        m1 = random_image(g, rng)
        a = random_image(g, rng, offset=0.0)
        b = random_image(g, rng, offset=0.0)
        lhs = incremental_final_gn(ScalarField(g, 2 * a.values - b.values), m, m1, "ncc")
        rhs = (
            2 * incremental_final_gn(a, m, m1, "ncc").values
            - incremental_final_gn(b, m, m1, "ncc").values
        )
        assert np.max(np.abs(lhs.values - rhs)) < 1e-12

    def test_ncc_matches_fd_hessian_action(self, rng):
        g = Grid((8, 8))
        m = random_image(g, rng)
        m1 = random_image(g, rng)
        mt = random_image(g, rng, offset=0.0)

        def grad(mvals):
            return -adjoint_final(ScalarField(g, mvals), m1, "ncc").values

        h = 1e-5
        fd = (grad(m.values + h * mt.values) - grad(m.values - h * mt.values)) / (2 * h)
        out = incremental_final_gn(mt, m, m1, "ncc")
        rel = np.max(np.abs(-out.values - fd)) / np.max(np.abs(fd))
        assert rel < 1e-3
