import numpy as np
import pytest

from flowreg.diffops import (
    IncompressibilityMode,
    RegOperatorSpec,
    apply_inv_reg_operator,
    apply_inv_sqrt_reg_operator,
    apply_reg_operator,
    divergence,
    fd8_gradient,
    high_pass,
    incompressibility_multiplier,
    laplacian,
    low_pass,
    low_pass_mask,
    project_body_force,
    prolong,
    restrict,
    spectral_gradient,
)
from flowreg.fields import Grid, ScalarField, VectorField, l2_inner

from conftest import bandlimited_vector, coords, vortex_velocity


def _mode_field(grid, k, phase=0.3):
    x = coords(grid)
    arg = sum(ki * xi for ki, xi in zip(k, x)) + phase
    return ScalarField(grid, np.cos(arg))


class TestSpectralGradient:
    def test_single_mode(self):
        g = Grid((32, 32))
        x = coords(g)
        u = ScalarField(g, np.sin(x[0]))
        out = spectral_gradient(u)
        assert np.max(np.abs(out.data[0] - np.cos(x[0]))) < 1e-12
        assert np.max(np.abs(out.data[1])) < 1e-12

    def test_constant_maps_to_zero(self):
        g = Grid((16, 16, 16))
        out = spectral_gradient(ScalarField.full(g, 4.2))
        assert np.max(np.abs(out.data)) < 1e-13

    def test_product_mode_matches_analytic(self):
        g = Grid((64, 64))
        x = coords(g)
        u = ScalarField(g, np.sin(3 * x[0]) * np.cos(2 * x[1]))
        out = spectral_gradient(u)
        g0 = 3 * np.cos(3 * x[0]) * np.cos(2 * x[1])
        g1 = -2 * np.sin(3 * x[0]) * np.sin(2 * x[1])
        scale = np.max(np.abs(g0))
        assert np.max(np.abs(out.data[0] - g0)) / scale < 1e-10
        assert np.max(np.abs(out.data[1] - g1)) / scale < 1e-10

    def test_linearity(self, rng):
        g = Grid((16, 16))
        u = ScalarField(g, rng.standard_normal(g.n))
        w = ScalarField(g, rng.standard_normal(g.n))
        lhs = spectral_gradient(ScalarField(g, 2.0 * u.values - 3.0 * w.values))
        rhs = 2.0 * spectral_gradient(u).data - 3.0 * spectral_gradient(w).data
        denom = np.max(np.abs(rhs)) + 1e-30
        assert np.max(np.abs(lhs.data - rhs)) / denom < 1e-12


class TestFd8Gradient:
    def test_constant_is_exactly_zero(self):
        g = Grid((16, 16))
        out = fd8_gradient(ScalarField.full(g, 1.7))
        assert np.max(np.abs(out.data)) == 0.0

    def test_observed_order_at_least_seven(self):
        errs = {}
        for n in (32, 64):
            g = Grid((n, n))
            x = coords(g)
            u = ScalarField(g, np.sin(x[0]))
            out = fd8_gradient(u)
            errs[n] = np.max(np.abs(out.data[0] - np.cos(x[0])))
        assert errs[32] / errs[64] >= 2**7

    def test_axis_independence(self):
        g = Grid((16, 24))
        x = coords(g)
        u = ScalarField(g, np.sin(2 * x[0]))
        out = fd8_gradient(u)
        assert np.max(np.abs(out.data[1])) == 0.0

    def test_small_grid_rejected(self):
        g = Grid((8, 16))
        with pytest.raises(ValueError):
            fd8_gradient(ScalarField.zeros(g))


class TestDivergence:
    def test_div_of_gradient_is_laplacian_on_one_mode(self):
        g = Grid((32, 32))
        x = coords(g)
        u = ScalarField(g, np.sin(x[0]))
        out = divergence(spectral_gradient(u), scheme="spectral")
        assert np.max(np.abs(out.values + np.sin(x[0]))) < 1e-11

    def test_divergence_free_field(self):
        g = Grid((32, 32))
        v = vortex_velocity(g, amp=1.3)
        out = divergence(v, scheme="spectral")
        assert np.max(np.abs(out.values)) < 1e-10

    def test_zero_field(self):
        g = Grid((16, 16))
        out = divergence(VectorField.zeros(g), scheme="fd8")
        assert np.max(np.abs(out.values)) == 0.0

    def test_adjoint_of_spectral_gradient(self, rng):
        g = Grid((16, 16))
        u = ScalarField(g, rng.standard_normal(g.n))
        w = VectorField(g, rng.standard_normal((2, *g.n)))
        lhs = l2_inner(spectral_gradient(u), w)
        rhs = -l2_inner(u, divergence(w, scheme="spectral"))
        assert abs(lhs - rhs) / max(abs(rhs), 1e-30) < 1e-10


class TestRegOperator:
    def test_unit_mode_is_fixed_point(self):
        g = Grid((16, 16))
        x = coords(g)
        data = np.zeros((2, *g.n))
        data[0] = np.sin(x[0])
        v = VectorField(g, data)
        out = apply_reg_operator(v, RegOperatorSpec(), alpha=1.0)
        assert np.max(np.abs(out.data - v.data)) < 1e-12

    def test_seminorm_kills_constants(self):
        g = Grid((16, 16))
        v = VectorField.constant(g, (2.0, -1.0))
        out = apply_reg_operator(v, RegOperatorSpec(), alpha=3.0)
        assert np.max(np.abs(out.data)) < 1e-13

    def test_biharmonic_symbol_on_mixed_mode(self):
        g = Grid((32, 32))
        u = _mode_field(g, (2, 1))
        v = VectorField(g, np.stack([u.values, np.zeros(g.n)]))
        out = apply_reg_operator(v, RegOperatorSpec(order=2), alpha=1.0)
        assert np.max(np.abs(out.data[0] - 25.0 * u.values)) < 1e-10

    def test_inverse_pair_off_kernel(self, rng):
        g = Grid((16, 16))
        v = bandlimited_vector(g, rng, amp=1.0)
        # remove the mean so v avoids the seminorm kernel
        data = v.data - v.data.mean(axis=(1, 2), keepdims=True)
        v = VectorField(g, data)
        back = apply_inv_reg_operator(apply_reg_operator(v, RegOperatorSpec(), 0.37),
                                      RegOperatorSpec(), 0.37)
        assert np.max(np.abs(back.data - v.data)) < 1e-11

    def test_kernel_rule_divides_constants_by_alpha(self):
        g = Grid((16, 16))
        b = VectorField.constant(g, (1.0, 2.0))
        out = apply_inv_reg_operator(b, RegOperatorSpec(), alpha=0.25)
        assert np.allclose(out.data[0], 4.0, rtol=1e-13)
        assert np.allclose(out.data[1], 8.0, rtol=1e-13)

    def test_inverse_scales_single_mode(self):
        g = Grid((16, 16))
        u = _mode_field(g, (2, 0), phase=0.0)
        v = VectorField(g, np.stack([u.values, np.zeros(g.n)]))
        out = apply_inv_reg_operator(v, RegOperatorSpec(), alpha=0.1)
        assert np.max(np.abs(out.data[0] - u.values / 0.4)) < 1e-12

    def test_self_adjoint_positive(self, rng):
        g = Grid((16, 16))
        spec = RegOperatorSpec()
        v = VectorField(g, rng.standard_normal((2, *g.n)))
        w = VectorField(g, rng.standard_normal((2, *g.n)))
        lv = apply_reg_operator(v, spec, 1.0)
        lw = apply_reg_operator(w, spec, 1.0)
        assert l2_inner(lv, w) == pytest.approx(l2_inner(v, lw), rel=1e-11, abs=1e-11)
        assert l2_inner(lv, v) >= -1e-12

    def test_inv_sqrt_squares_to_inverse(self, rng):
        g = Grid((16, 16))
        spec = RegOperatorSpec()
        v = VectorField(g, rng.standard_normal((2, *g.n)))
        once = apply_inv_sqrt_reg_operator(apply_inv_sqrt_reg_operator(v, spec, 0.5), spec, 0.5)
        direct = apply_inv_reg_operator(v, spec, 0.5)
        assert np.max(np.abs(once.data - direct.data)) < 1e-11


class TestProjection:
    def test_divergence_free_untouched(self):
        g = Grid((32, 32))
        v = vortex_velocity(g, amp=0.8)
        for mode in (IncompressibilityMode("incompressible"),
                     IncompressibilityMode("near-incompressible", 1e-3)):
            out = project_body_force(v, mode, alpha=1e-2)
            assert np.max(np.abs(out.data - v.data)) < 1e-10

    def test_leray_kills_pure_gradients(self):
        g = Grid((32, 32))
        x = coords(g)
        p = np.cos(2 * x[0] + x[1])
        b = spectral_gradient(ScalarField(g, p))
        out = project_body_force(b, IncompressibilityMode("incompressible"), alpha=1.0)
        assert np.max(np.abs(out.data)) < 1e-12

    def test_leray_output_is_divergence_free_and_idempotent(self, rng):
        g = Grid((32, 32))
        b = VectorField(g, rng.standard_normal((2, *g.n)))
        mode = IncompressibilityMode("incompressible")
        out = project_body_force(b, mode, alpha=1.0)
        div = divergence(out, scheme="spectral")
        rel = np.max(np.abs(div.values)) / np.max(np.abs(out.data))
        assert rel < 1e-10
        again = project_body_force(out, mode, alpha=1.0)
        assert np.max(np.abs(again.data - out.data)) < 1e-11

    def test_relaxed_mode_matches_scalar_chain_on_one_wavenumber(self):
        g = Grid((32, 32))
        x = coords(g)
        k = (2, 1)
        alpha, beta = 1e-2, 1e-4
        p = np.cos(k[0] * x[0] + k[1] * x[1])
        b = spectral_gradient(ScalarField(g, p))  # purely longitudinal mode
        out = project_body_force(b, IncompressibilityMode("near-incompressible", beta), alpha)
        # operator chain on one wavenumber, plain scalar arithmetic:
        ksq = float(k[0] ** 2 + k[1] ** 2)
        inv_neg_lap = 1.0 / ksq
        inner = beta * (inv_neg_lap + 1.0)
        outer = alpha * (1.0 / inner) + 1.0
        mult = 1.0 / outer
        expected = (1.0 - mult) * b.data
        assert np.max(np.abs(out.data - expected)) < 1e-12 * max(1.0, np.max(np.abs(expected)))

    def test_multiplier_limits(self):
        mode = IncompressibilityMode("near-incompressible", 1e-4)
        m_small = incompressibility_multiplier(1.0, mode, alpha=1e-2)
        assert 0.0 < m_small < 1.0
        # heavy divergence penalty approaches the hard constraint
        heavy = IncompressibilityMode("near-incompressible", 1e6)
        assert incompressibility_multiplier(4.0, heavy, alpha=1e-2) == pytest.approx(1.0, abs=1e-6)


class TestFiltersAndGridTransfer:
    def test_masks_are_complementary_bitwise(self, rng):
        g = Grid((16, 16))
        u = ScalarField(g, rng.standard_normal(g.n))
        mask = low_pass_mask(g)
        uh = np.fft.fftn(u.values)
        assert np.array_equal(uh * mask + uh * ~mask, uh)

    def test_low_mode_field_has_no_high_band(self):
        g = Grid((32, 32))
        u = _mode_field(g, (1, 1))
        assert np.max(np.abs(high_pass(u).values)) < 1e-12

    def test_mask_cutoff_enumeration(self):
        g = Grid((16, 16))
        mask = low_pass_mask(g)
        freqs = np.fft.fftfreq(16, d=1 / 16)
        for i, ki in enumerate(freqs):
            for j, kj in enumerate(freqs):
                assert mask[i, j] == (abs(ki) < 4 and abs(kj) < 4)

    def test_prolong_restrict_reproduces_bandlimited(self, rng):
        g = Grid((32, 32))
        v = bandlimited_vector(g, rng, amp=1.0, kmax=3)
        u = ScalarField(g, v.data[0])
        back = prolong(restrict(u), g)
        assert np.max(np.abs(back.values - u.values)) < 1e-10

    def test_nyquist_band_mode_restricts_to_zero(self):
        g = Grid((32, 32))
        u = _mode_field(g, (8, 0), phase=0.0)  # k = n/4
        out = restrict(u)
        assert np.max(np.abs(out.values)) < 1e-12

    def test_restrict_matches_lowpass_subsample_oracle(self, rng):
        g = Grid((16, 16))
        u = ScalarField(g, rng.standard_normal(g.n))
        out = restrict(u)
        # oracle: mask the fine spectrum, gather retained bins, inverse FFT
        uh = np.fft.fftn(u.values) * low_pass_mask(g)
        coarse = np.zeros((8, 8), dtype=complex)
        for i in range(16):
            for j in range(16):
                ki = i if i < 8 else i - 16
                kj = j if j < 8 else j - 16
                if abs(ki) < 4 and abs(kj) < 4:
                    coarse[ki % 8, kj % 8] = uh[i, j]
        expected = np.fft.ifftn(coarse * (64 / 256)).real
        assert np.max(np.abs(out.values - expected)) < 1e-12

    def test_restriction_prolongation_adjoint_pair(self, rng):
        g = Grid((16, 16))
        gc = g.coarsen()
        u = ScalarField(g, rng.standard_normal(g.n))
        w = ScalarField(gc, rng.standard_normal(gc.n))
        lhs = l2_inner(restrict(u), w)
        rhs = l2_inner(u, prolong(w, g))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


class TestThreeDimensional:
    def test_projection_kills_gradients_and_preserves_curls(self, rng):
        g = Grid((16, 16, 16))
        x = coords(g)
        p = np.cos(x[0] + 2 * x[1]) * np.cos(x[2])
        b = spectral_gradient(ScalarField(g, p))
        out = project_body_force(b, IncompressibilityMode("incompressible"), alpha=1.0)
        assert np.max(np.abs(out.data)) < 1e-12
        # divergence-free field: curl of a vector potential
        a2 = np.cos(x[0]) * np.sin(x[1])
        curl = np.zeros((3, *g.n))
        curl[0] = np.cos(x[0]) * np.cos(x[1])  # d a2 / d x1
        curl[1] = -(-np.sin(x[0]) * np.sin(x[1]))  # -d a2 / d x0
        w = VectorField(g, curl)
        assert np.max(np.abs(divergence(w, scheme="spectral").values)) < 1e-12
        out2 = project_body_force(w, IncompressibilityMode("incompressible"), alpha=1.0)
        assert np.max(np.abs(out2.data - w.data)) < 1e-11

    def test_restrict_prolong_roundtrip(self, rng):
        g = Grid((16, 16, 16))
        v = bandlimited_vector(g, rng, amp=1.0, kmax=3)
        u = ScalarField(g, v.data[0])
        back = prolong(restrict(u), g)
        assert np.max(np.abs(back.values - u.values)) < 1e-10

    def test_filters_partition_spectrum(self, rng):
        g = Grid((16, 16, 16))
        u = ScalarField(g, rng.standard_normal(g.n))
        total = low_pass(u).values + high_pass(u).values
        assert np.max(np.abs(total - u.values)) < 1e-12


class TestSpectralLinearity:
    def test_reg_operator_and_projection_linear(self, rng):
        g = Grid((16, 16))
        mode = IncompressibilityMode("near-incompressible", 1e-3)
        a = VectorField(g, rng.standard_normal((2, *g.n)))
        b = VectorField(g, rng.standard_normal((2, *g.n)))
        combo = VectorField(g, 1.5 * a.data - 0.5 * b.data)
        for op in (
            lambda v: apply_reg_operator(v, RegOperatorSpec(), 0.3),
            lambda v: apply_inv_reg_operator(v, RegOperatorSpec(), 0.3),
            lambda v: project_body_force(v, mode, alpha=1e-2),
        ):
            lhs = op(combo).data
            rhs = 1.5 * op(a).data - 0.5 * op(b).data
            denom = np.max(np.abs(rhs)) + 1e-30
            assert np.max(np.abs(lhs - rhs)) / denom < 1e-12
