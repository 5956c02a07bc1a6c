import numpy as np
import pytest

from anosovlab import xray
from anosovlab import smfourier as sf
from anosovlab.flow import find_closed_geodesics

TWO_PI = 2.0 * np.pi


@pytest.fixture(scope="module")
def small_pool(octagon):
    return xray.octagon_geodesic_pool(octagon, max_len=4, max_count=64,
                                      n_samples=512)


class TestModes:
    def test_windowed_mode_derivatives_match_fd(self):
        mode = xray.windowed_trig_mode((2, -1))
        z = 0.11 + 0.07j
        eps = 1e-6
        fx = (mode.val(z.real + eps, z.imag) - mode.val(z.real - eps, z.imag)) / (2 * eps)
        fy = (mode.val(z.real, z.imag + eps) - mode.val(z.real, z.imag - eps)) / (2 * eps)
        assert abs(mode.dz(z.real, z.imag) - 0.5 * (fx - 1j * fy)) < 1e-6
        assert abs(mode.dbar(z.real, z.imag) - 0.5 * (fx + 1j * fy)) < 1e-6

    def test_window_vanishes_outside_support(self):
        mode = xray.windowed_trig_mode((1, 0), r0=0.5)
        assert mode.val(0.6, 0.0) == 0.0
        assert mode.dz(0.0, 0.7) == 0.0

    def test_band_validation(self, octagon):
        good = xray.windowed_trig_mode((1, 1))
        with pytest.raises(ValueError):
            xray.SymTensorField(octagon, 2, {1: good})


class TestRayTransform:
    def test_linearity(self, octagon, small_pool):
        geo = small_pool[0]
        a = xray.SymTensorField(octagon, 0,
                                {0: xray._real_scalar_modes(1, 0.57)[0]})
        b = xray.SymTensorField(octagon, 0,
                                {0: xray._real_scalar_modes(2, 0.57)[1]})
        both = xray.SymTensorField(
            octagon, 0, {0: xray.Mode(
                lambda x, y: a.modes[0].val(x, y) + 2.0 * b.modes[0].val(x, y))})
        Ia = xray.ray_transform(a, geo)
        Ib = xray.ray_transform(b, geo)
        Iboth = xray.ray_transform(both, geo)
        assert abs(Iboth - (Ia + 2.0 * Ib)) < 1e-10

    def test_quadrature_converged(self, octagon, small_pool):
        f = xray._nonpotential_basis(octagon, 2, 1, 0.57)[0]
        geo = small_pool[2]
        v1 = xray.ray_transform(f, geo, n_samples=1024)
        v2 = xray.ray_transform(f, geo, n_samples=2048)
        assert abs(v1 - v2) <= 1e-10 * max(1.0, xray.abs_ray_mass(f, geo))

    def test_flat_torus_cosine_oracle(self, flat_torus):
        ch = sf.Chart.from_torus(flat_torus)
        xs = np.arange(ch.nx) * (ch.Lx / ch.nx)
        X, _ = np.meshgrid(xs, xs, indexing="ij")
        u = sf.SMField(ch, {0: np.cos(X)})
        f = xray.SymTensorField.from_smfield(flat_torus, 0, u)
        geo = find_closed_geodesics(flat_torus, (0, 1))
        x0 = geo.samples[0][0]
        val = xray.ray_transform(f, geo)
        assert abs(val - geo.period * np.cos(x0)) < 1e-8

    def test_potential_tensors_integrate_to_zero(self, octagon, small_pool):
        # I_m(dh) = 0 on closed geodesics: the integrand is an exact
        # derivative of h along the orbit
        for m in (1, 2):
            dh = xray._potential_basis(octagon, m, 3, 0.57)[2]
            for geo in small_pool[:10]:
                mass = xray.abs_ray_mass(dh, geo, n_samples=1024)
                if mass < 1e-12:
                    continue
                val = xray.ray_transform(dh, geo, n_samples=1024)
                assert abs(val) <= 1e-8 * mass

    def test_model_mismatch_raises(self, flat_torus, small_pool):
        ch = sf.Chart.from_torus(flat_torus)
        u = sf.SMField(ch, {0: np.ones((ch.nx, ch.ny))})
        f = xray.SymTensorField.from_smfield(flat_torus, 0, u)
        with pytest.raises(ValueError):
            xray.ray_transform(f, small_pool[0])


class TestSolenoidal:
    def test_coordinate_gradient_not_solenoidal(self, octagon):
        h = xray.SymTensorField(octagon, 0,
                                {0: xray._real_scalar_modes(2, 0.57)[1]})
        A = xray.potential_tensor(h, octagon)
        ch = sf.Chart.disk_patch(octagon, half_width=0.6, n=64)
        assert xray.solenoidal_check(A, ch) > 1e-3

    def test_degree_check(self, octagon):
        f = xray.SymTensorField(octagon, 0,
                                {0: xray._real_scalar_modes(1, 0.57)[0]})
        ch = sf.Chart.disk_patch(octagon, half_width=0.6, n=32)
        with pytest.raises(ValueError):
            xray.solenoidal_check(f, ch)


class TestGeodesicPool:
    def test_pool_properties(self, octagon, small_pool):
        assert 0 < len(small_pool) <= 64
        # shortest class first: the single-generator axis
        assert abs(small_pool[0].period - octagon.translation_length) < 1e-8
        periods = [g.period for g in small_pool]
        assert all(p > 0 for p in periods)
        # conjugacy dedup: no repeated lengths
        assert len(set(np.round(periods, 8))) == len(periods)

    def test_no_immediate_cancellation(self, small_pool):
        for geo in small_pool:
            w = geo.word
            for a, b in zip(w, w[1:]):
                assert (a - b) % 8 != 4


class TestSInjectivity:
    def test_scalar_transform_injective_on_basis(self, octagon, small_pool):
        rep = xray.sinjectivity_experiment(octagon, 0, small_pool,
                                           n_basis=10, n_samples=512)
        assert rep["kernel_dim"] == 0
        assert rep["sigma_min"] > 1e-6 * rep["sigma_max"]

    def test_pool_too_small_flag(self, octagon, small_pool):
        rep = xray.sinjectivity_experiment(octagon, 0, small_pool[:3],
                                           n_basis=10)
        assert "flag" in rep and "pool" in rep["flag"]
