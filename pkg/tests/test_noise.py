import numpy as np
import pytest

from k41lab.errors import ConfigError
from k41lab.noise import (NoiseSpec, RecordedNoise, make_isotropic_spec, orbit_of,
                          rescale_brownian_path, sample_increment, shell_profile,
                          validate_spec)
from k41lab.rng import stream
from k41lab.spectral import build_lattice
from k41lab.stokes import mode_moments

from conftest import single_shell_spec


def checks_by_name(spec):
    return {c.name: c for c in validate_spec(spec)}


class TestConstruction:
    def test_isotropic_spec_passes_all_checks(self, lat2):
        spec = make_isotropic_spec(lat2, lambda k: np.exp(-k), amp=2.0)
        assert all(c.passed for c in validate_spec(spec))

    def test_single_shell_support_count(self):
        for d in (2, 3):
            lat = build_lattice(d, 1.0, 2)
            spec = single_shell_spec(lat)
            nonzero_half = int(np.sum(spec.frob_sq_half > 0))
            assert 2 * nonzero_half == 2 * d  # 2d full modes on the first shell

    def test_frobenius_sum_oracle(self, lat2):
        intensity = 1.7
        spec = make_isotropic_spec(lat2, shell_profile(lat2, k_f=1, intensity=intensity))
        # per mode |sigma_k|^2 = intensity^2 (d-1); 4 full modes on shell one
        direct = sum(np.sum(np.abs(spec.sigma_at(m)) ** 2)
                     for m in map(tuple, lat2.modes))
        assert np.isclose(spec.sum_sigma_sq, direct, rtol=1e-13)
        assert np.isclose(spec.sum_sigma_sq, 4 * intensity**2 * (lat2.d - 1), rtol=1e-13)

    def test_incompressibility_violation_reported(self, lat2):
        spec = single_shell_spec(lat2)
        bad = NoiseSpec(lat2, spec.sigma + 0.05 * lat2.k_half[:, :, None], amp=1.0)
        checks = checks_by_name(bad)
        assert not checks["incompressibility"].passed
        assert checks["incompressibility"].worst > 1e-6

    def test_isotropy_violation_reported(self, lat2):
        spec = single_shell_spec(lat2)
        sigma = spec.sigma.copy()
        i0, _ = lat2.index_of((1, 0))
        sigma[i0] *= 2.0
        checks = checks_by_name(NoiseSpec(lat2, sigma, amp=1.0))
        assert not checks["isotropy"].passed

    def test_orbit_enumeration(self):
        assert orbit_of((1, 0)) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
        assert len(orbit_of((1, 2, 3))) == 48


class TestSampling:
    def test_zero_dt(self, lat2):
        spec = single_shell_spec(lat2)
        inc = sample_increment(spec, 0.0, stream(0, "x"))
        assert np.max(np.abs(inc)) == 0.0

    def test_per_mode_variance(self, lat2):
        spec = single_shell_spec(lat2, amp=1.3)
        dt = 0.21
        rng = stream(7, "var")
        n_draws = 20000
        acc = np.zeros(lat2.n_half)
        acc_sq = np.zeros(lat2.n_half)
        for _ in range(n_draws):
            inc = sample_increment(spec, dt, rng)
            q = np.sum(np.abs(inc) ** 2, axis=1)
            acc += q
            acc_sq += q * q
        emp = acc / n_draws
        se = np.sqrt(np.maximum(acc_sq / n_draws - emp**2, 0.0) / n_draws)
        theo = spec.amp**2 * spec.frob_sq_half * dt
        forced = theo > 0
        assert np.all(np.abs(emp[forced] - theo[forced]) <= 3.0 * se[forced])
        assert np.max(emp[~forced]) == 0.0

    def test_synthesized_increment_is_real(self, lat2):
        from k41lab.spectral import SpectralField, synthesize_on_grid
        spec = single_shell_spec(lat2)
        inc = sample_increment(spec, 0.5, stream(3, "real"))
        # synthesize_on_grid checks the imaginary residual internally
        grid = synthesize_on_grid(SpectralField(lat2, inc))
        assert np.all(np.isfinite(grid))


class TestFieldIsotropy:
    def test_stokes_directional_moments_equal(self):
        # sum_k k_j^2 E|u_hat|^2 identical across j for an isotropic spec
        for d in (2, 3):
            lat = build_lattice(d, 1.0, 3)
            spec = make_isotropic_spec(lat, lambda k: 1.0 / (1.0 + k**2))
            m2 = mode_moments(spec, nu=0.7)
            g = [2.0 * float(np.sum(lat.k_half[:, j] ** 2 * m2)) for j in range(d)]
            assert np.allclose(g, g[0], rtol=1e-12)


class TestRescaling:
    def make_recorded(self, lat, steps=6, dt=0.05, seed=0):
        rng = np.random.default_rng(seed)
        vals = (rng.standard_normal((steps, lat.n_half, lat.d))
                + 1j * rng.standard_normal((steps, lat.n_half, lat.d))) * np.sqrt(dt / 2)
        return RecordedNoise(lat, dt, vals)

    def test_identity_at_lambda_one(self, lat2):
        rec = self.make_recorded(lat2)
        out = rescale_brownian_path(rec, 1.0, -1.0 / 3.0)
        assert np.array_equal(out.values, rec.values)
        assert out.dt == rec.dt
        assert out.lattice.L == lat2.L

    def test_quadratic_variation_scaling(self, lat2):
        rec = self.make_recorded(lat2)
        lam, beta = 2.0, 0.7
        out = rescale_brownian_path(rec, lam, beta)
        assert np.isclose(out.quadratic_variation(),
                          lam ** (-(1 + beta)) * rec.quadratic_variation(), rtol=1e-13)
        assert np.isclose(out.dt, rec.dt * lam ** (-(1 + beta)), rtol=1e-15)

    def test_group_property(self, lat2):
        rec = self.make_recorded(lat2)
        beta = -1.0 / 3.0
        a = rescale_brownian_path(rescale_brownian_path(rec, 2.0, beta), 1.5, beta)
        b = rescale_brownian_path(rec, 3.0, beta)
        assert np.allclose(a.values, b.values, rtol=1e-14)
        assert np.isclose(a.dt, b.dt, rtol=1e-14)
        assert np.isclose(a.lattice.L, b.lattice.L, rtol=1e-14)

    def test_sigma_convention_under_box_change(self, lat2):
        spec = single_shell_spec(lat2)
        lat_small = build_lattice(lat2.d, lat2.L / 2.0, lat2.n)
        moved = spec.with_lattice(lat_small)
        # sigma^{L/lam}_{lam k} = sigma^L_k: identical table at integer modes
        for m in map(tuple, lat2.half_modes):
            assert np.array_equal(moved.sigma_at(m), spec.sigma_at(m))

    def test_mismatched_lattice_rejected(self, lat2):
        rec = self.make_recorded(lat2)
        with pytest.raises(ConfigError):
            RecordedNoise(build_lattice(2, 1.0, 3), rec.dt, rec.values)
        with pytest.raises(ConfigError):
            spec = single_shell_spec(lat2)
            spec.with_lattice(build_lattice(2, 1.0, 3))
