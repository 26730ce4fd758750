import numpy as np
import pytest

from k41lab.errors import ConfigError
from k41lab.galerkin import SimulationConfig
from k41lab.noise import make_isotropic_spec, shell_profile
from k41lab.scaling import (AdmissibleRegion, K41WindowSpec, MonotoneTable,
                            ScaleParams, derive_window_functions, domain_membership,
                            map_K, map_K_inv, pathwise_scaling_verify, rescale_field,
                            table_from_function, transform_params)
from k41lab.spectral import build_lattice, evaluate, random_divergence_free

from conftest import single_shell_spec


class TestRescaleField:
    def test_identity_at_lambda_one(self, field3):
        for beta in (-1.0 / 3.0, 0.7):
            out = rescale_field(field3, 1.0, beta)
            assert np.array_equal(out.coeffs, field3.coeffs)
            assert out.lattice.L == field3.lattice.L

    def test_composition_group_law(self, field3):
        beta = -1.0 / 3.0
        a = rescale_field(rescale_field(field3, 2.0, beta), 1.5, beta)
        b = rescale_field(field3, 3.0, beta)
        assert np.allclose(a.coeffs, b.coeffs, rtol=1e-14)
        assert np.isclose(a.lattice.L, b.lattice.L, rtol=1e-15)

    def test_pointwise_contract(self, field3, rng):
        lam, beta = 2.0, -1.0 / 3.0
        out = rescale_field(field3, lam, beta)
        for _ in range(100):
            x = rng.uniform(0.0, out.lattice.L, 3)
            lhs = evaluate(out, x)
            rhs = lam**beta * evaluate(field3, lam * x)
            assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(np.max(np.abs(rhs)), 1e-3)

    def test_lattice_scaling_relation(self, field3):
        out = rescale_field(field3, 2.0, 0.0)
        assert np.allclose(out.lattice.k_half, 2.0 * field3.lattice.k_half)


class TestTransformParams:
    def test_identity(self):
        assert transform_params(0.3, 1.0, 1.2, 1.0, 0.9) == (0.3, 1.0, 1.2)

    def test_reference_value(self):
        nu_t, L_t, amp_t = transform_params(0.01, 1.0, 1.0, 0.5, -1.0 / 3.0)
        assert nu_t == pytest.approx(0.01 * 2 ** (4.0 / 3.0), rel=1e-14)
        assert nu_t == pytest.approx(0.0251984, rel=1e-5)
        assert L_t == 2.0
        assert amp_t == pytest.approx(1.0, rel=1e-14)
        # consistency with the nu~ = nu L^{4/3} display at L~ = 2
        assert nu_t == pytest.approx(0.01 * L_t ** (4.0 / 3.0), rel=1e-14)

    def test_k41_exponent_fixes_amplitude(self):
        for lam in (0.25, 0.5, 2.0, 7.0):
            _, _, amp_t = transform_params(1.0, 1.0, 3.3, lam, -1.0 / 3.0)
            assert amp_t == pytest.approx(3.3, rel=1e-14)

    def test_scale_params_validation(self):
        with pytest.raises(ConfigError):
            ScaleParams(lam=0.0, beta=0.0)


class TestMapK:
    def test_fixed_point(self):
        assert map_K(1.0, 1.0) == (1.0, 1.0)

    def test_reference_value(self):
        nut, rt = map_K(1e-4, 1e-3)
        assert nut == pytest.approx(1.0, rel=1e-12)
        assert rt == pytest.approx(1e3, rel=1e-15)

    def test_kolmogorov_scale_maps_to_unit_viscosity(self):
        for nu in (1e-2, 1e-5):
            nut, rt = map_K(nu, nu**0.75)
            assert nut == pytest.approx(1.0, rel=1e-12)
            assert rt == pytest.approx(nu**-0.75, rel=1e-12)

    def test_round_trip(self, rng):
        worst = 0.0
        for _ in range(10000):
            nu = 10 ** rng.uniform(-6, 1)
            r = 10 ** rng.uniform(-4, 2)
            nu2, r2 = map_K_inv(*map_K(nu, r))
            worst = max(worst, abs(nu2 - nu) / nu, abs(r2 - r) / r)
        assert worst <= 1e-14


class TestWindowFunctions:
    def region_inverse_power(self, nu0=1.0):
        return AdmissibleRegion(nu0=nu0,
                                Rt0=table_from_function(lambda x: 1.0 / x, 1e-6, nu0))

    def test_closed_form_composition(self):
        # Rt0(x) = 1/x: F = x^{-7/4}, R0 = x^{-9/28}
        win = derive_window_functions(self.region_inverse_power(), "A->K41")
        assert win.C0 == pytest.approx(1.0, rel=1e-12)
        for x in np.geomspace(win.R0.x_min * 1.01, win.R0.x_max * 0.99, 11):
            assert win.R0(x) == pytest.approx(x ** (-9.0 / 28.0), rel=1e-8)

    def test_round_trip_recovers_rt0(self):
        region = self.region_inverse_power()
        win = derive_window_functions(region, "A->K41")
        back = derive_window_functions(win, "K41->A")
        for x in np.geomspace(back.Rt0.x_min * 2, back.nu0 * 0.5, 15):
            assert back.Rt0(x) == pytest.approx(1.0 / x, rel=1e-8)

    def test_derived_r0_monotone_divergent(self):
        win = derive_window_functions(self.region_inverse_power(), "A->K41")
        xs = win.R0.xs
        vals = np.array([win.R0(x) for x in xs])
        assert np.all(np.diff(vals) < 0)  # decreasing in nu
        assert vals[0] > 100 * vals[-1]   # grows toward nu -> 0

    def test_c0_from_nu0(self):
        region = AdmissibleRegion(nu0=16.0,
                                  Rt0=table_from_function(lambda x: 16.0 / x, 1e-4, 16.0))
        win = derive_window_functions(region, "A->K41")
        assert win.C0 == pytest.approx(16.0 ** -0.75, rel=1e-13)
        assert win.C0 == pytest.approx(0.125, rel=1e-13)

    def test_random_monotone_table_round_trip(self, rng):
        xs = np.geomspace(1e-5, 1.0, 40)
        # random strictly decreasing table with Rt0 >= 1
        incr = np.cumsum(rng.uniform(0.05, 0.4, len(xs)))
        ys = 1.0 + incr[::-1]
        region = AdmissibleRegion(nu0=1.0, Rt0=MonotoneTable(xs, ys))
        win = derive_window_functions(region, "A->K41")
        back = derive_window_functions(win, "K41->A")
        for x in np.geomspace(back.Rt0.x_min * 1.5, back.nu0 * 0.7, 9):
            assert back.Rt0(x) == pytest.approx(region.Rt0(x), rel=1e-6)

    def test_non_monotone_rejected(self):
        with pytest.raises(ConfigError):
            MonotoneTable([1.0, 2.0, 3.0], [3.0, 3.5, 1.0])


class TestMembership:
    def test_threshold_exclusion(self):
        region = AdmissibleRegion(nu0=0.5,
                                  Rt0=table_from_function(lambda x: 2.0 / x, 1e-6, 0.5))
        assert domain_membership((0.7, 100.0), "condA", region) is False

    def test_closed_lower_window_endpoint(self):
        win = K41WindowSpec(nu0=1.0, C0=0.5,
                            R0=table_from_function(lambda x: x ** -0.25, 1e-6, 1.0))
        nu = 1e-3
        r = win.C0 * nu**0.75
        assert domain_membership((nu, r), "k41", win) is True
        assert domain_membership((nu, r * 0.999), "k41", win) is False

    def test_indeterminate_outside_table(self):
        win = K41WindowSpec(nu0=1.0, C0=0.5,
                            R0=table_from_function(lambda x: x ** -0.25, 1e-3, 1.0))
        assert domain_membership((1e-5, 1e-4), "k41", win) is None

    def test_equivalence_under_K(self, rng):
        region = AdmissibleRegion(nu0=1.0,
                                  Rt0=table_from_function(lambda x: 1.0 / x, 1e-6, 1.0))
        win = derive_window_functions(region, "A->K41")
        agree = total = 0
        for _ in range(2000):
            nu = 10 ** rng.uniform(np.log10(win.R0.x_min * 1.01),
                                   np.log10(win.nu0 * 0.99))
            r = win.C0 * nu**0.75 * 10 ** rng.uniform(-0.4,
                                                      np.log10(win.R0(nu) / win.C0) + 0.4)
            m_win = domain_membership((nu, r), "k41", win)
            m_reg = domain_membership(map_K(nu, r), "condA", region)
            if m_win is None or m_reg is None:
                continue
            total += 1
            agree += m_win == m_reg
        assert total > 1000
        assert agree == total


class TestPathwise:
    def make_config(self, amp=1.0, d=3, n=4, nu=0.1, dt=2e-4, seed=9):
        lat = build_lattice(d, 1.0, n)
        spec = make_isotropic_spec(lat, shell_profile(lat, k_f=1), amp=amp)
        return SimulationConfig(d=d, L=1.0, n=n, nu=nu, noise=spec, dt=dt,
                                t_burn=0.0, t_avg=dt * 250, seed=seed,
                                stepper="euler_maruyama", nonlinearity="direct")

    def test_lambda_one_is_exact(self):
        disc = pathwise_scaling_verify(self.make_config(), 1.0, -1.0 / 3.0, n_steps=40)
        assert disc == 0.0

    def test_k41_exponent(self):
        disc = pathwise_scaling_verify(self.make_config(), 2.0, -1.0 / 3.0, n_steps=60)
        assert disc <= 1e-10

    def test_generic_exponent(self):
        disc = pathwise_scaling_verify(self.make_config(), 1.5, 0.7, n_steps=60)
        assert disc <= 1e-10

    def test_deterministic_nonlinear_case(self, rng):
        cfg = self.make_config(amp=0.0)
        lat = cfg.lattice
        u0 = random_divergence_free(lat, rng) * 3.0
        disc = pathwise_scaling_verify(cfg, 2.0, 0.8, n_steps=60, initial=u0)
        assert 0 < disc <= 1e-10

    def test_exponential_stepper_rejected(self):
        cfg = self.make_config()
        object.__setattr__(cfg, "stepper", "exponential_euler")
        with pytest.raises(ConfigError):
            pathwise_scaling_verify(cfg, 2.0, -1.0 / 3.0, n_steps=5)

    def test_statistical_mode_moment_scaling(self):
        # Theorem-level ensemble check at modest size: m2~ = lam^{2 beta} m2
        from k41lab.galerkin import run_trajectory, time_average_stats
        from k41lab.noise import NoiseSpec
        lam, beta = 2.0, -1.0 / 3.0
        d, n, L, nu = 2, 4, 1.0, 0.4
        lat = build_lattice(d, L, n)
        spec = make_isotropic_spec(lat, shell_profile(lat, k_f=1))
        nu_t, L_t, amp_t = transform_params(nu, L, spec.amp, lam, beta)
        lat_t = build_lattice(d, L_t, n)
        spec_t = NoiseSpec(lat_t, spec.sigma, amp_t)
        dt = 2e-3
        cfg = SimulationConfig(d=d, L=L, n=n, nu=nu, noise=spec, dt=dt,
                               t_burn=4.0, t_avg=60.0, seed=5, n_batches=30)
        scale_t = lam ** (-(1 + beta))
        cfg_t = SimulationConfig(d=d, L=L_t, n=n, nu=nu_t, noise=spec_t,
                                 dt=dt * scale_t, t_burn=4.0 * scale_t,
                                 t_avg=60.0 * scale_t, seed=6, n_batches=30)
        st = time_average_stats(run_trajectory(cfg))
        st_t = time_average_stats(run_trajectory(cfg_t))
        target = lam ** (2 * beta) * st.mode_m2
        err = np.hypot(lam ** (2 * beta) * st.mode_m2_stderr, st_t.mode_m2_stderr)
        z = np.abs(st_t.mode_m2 - target) / np.maximum(err, 1e-300)
        assert np.max(z) < 3.0
