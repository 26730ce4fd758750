import math

import numpy as np
import pytest
from scipy import integrate, stats as sps

from k41lab.eddy import (EddyConfig, FilamentDraw, canonical_constant,
                         default_profile, filament_contribution, kernel_eval,
                         kernel_quadrature, mc_moment, occupation_time_exact,
                         occupation_time_mc, path_steps_for, reduced_moment,
                         sample_filament, slope_fit, x0_weight, _radial_cdf_unnorm,
                         _sample_ell, _sample_radial)
from k41lab.errors import ConfigError
from k41lab.rng import stream


@pytest.fixture(scope="module")
def profile():
    return default_profile()


class TestProfile:
    def test_mass_normalized(self, profile):
        assert profile.mass(np.array([1.0]))[0] == pytest.approx(1.0, abs=1e-12)
        assert profile.mass(np.array([2.0]))[0] == 1.0

    def test_mass_monotone_from_zero(self, profile):
        rs = np.linspace(0, 1, 200)
        m = profile.mass(rs)
        assert m[0] == pytest.approx(0.0, abs=1e-14)
        assert np.all(np.diff(m) >= -1e-12)  # spline rounding where rho ~ 0

    def test_mass_quadrature_accuracy(self, profile):
        for r in (0.2, 0.5, 0.8):
            val, _ = integrate.quad(lambda s: profile.rho(np.array([s]))[0] * s * s,
                                    0.0, r, epsabs=1e-14, epsrel=1e-13)
            assert profile.mass(np.array([r]))[0] == pytest.approx(4 * np.pi * val,
                                                                   abs=1e-10)

    def test_rho_properties(self, profile):
        rs = np.linspace(0, 2, 100)
        rho = profile.rho(rs)
        assert np.all(rho >= 0)
        assert np.all(rho[rs >= 1.0] == 0.0)


class TestKernel:
    def test_shell_theorem_outside_support(self, profile):
        val = kernel_eval(np.array([2.0, 0.0, 0.0]), "K")
        assert val[0] == pytest.approx(1.0 / (16 * np.pi), rel=1e-12)
        assert val[0] == pytest.approx(0.0198944, rel=1e-5)
        assert val[1] == val[2] == 0.0

    def test_zero_at_origin(self):
        assert np.all(kernel_eval(np.zeros(3), "K") == 0.0)

    def test_matches_direct_quadrature(self, profile):
        rng = np.random.default_rng(8)
        for _ in range(100):
            x = rng.uniform(-1.4, 1.4, 3)
            assert np.max(np.abs(kernel_eval(x, "K") - kernel_quadrature(x))) <= 1e-6

    def test_derivatives_match_finite_differences(self, profile):
        rng = np.random.default_rng(2)
        h = 1e-5
        for _ in range(100):
            x = rng.uniform(0.05, 1.5, 3) * rng.choice([-1.0, 1.0], 3)
            dk = kernel_eval(x, "DK")
            d2k = kernel_eval(x, "D2K")
            for j in range(3):
                e = np.zeros(3)
                e[j] = h
                fd1 = (kernel_eval(x + e, "K") - kernel_eval(x - e, "K")) / (2 * h)
                assert np.max(np.abs(dk[:, j] - fd1)) <= 1e-6
                fd2 = (kernel_eval(x + e, "DK") - kernel_eval(x - e, "DK")) / (2 * h)
                assert np.max(np.abs(d2k[:, :, j] - fd2)) <= 1e-6

    def test_origin_limits_finite(self, profile):
        dk0 = kernel_eval(np.zeros(3), "DK")
        assert np.allclose(dk0, (profile.rho0 / 3.0) * np.eye(3))
        assert np.all(kernel_eval(np.zeros(3), "D2K") == 0.0)

    def test_tail_bounds_with_measured_constants(self, profile):
        rs = np.geomspace(1.001, 30.0, 200)
        c_dk = np.max(np.sqrt(profile.grad_norm_sq(rs)) * rs**2)
        c_d2k = np.max(np.sqrt(profile.hess_norm_sq(rs)) * rs**3)
        assert 0 < c_dk < 1.0      # |DK_1(x)| <= C |x|^-2 outside B(0,1)
        assert 0 < c_d2k < 1.0     # |D2K_1(x)| <= C |x|^-3 outside B(0,1)

    def test_lower_bound_region_nondegenerate(self, profile):
        # a ball on which |DK_1| is bounded below (kernel lower-bound hypothesis)
        rs = np.linspace(0.0, 0.9, 200)
        vals = np.sqrt(profile.grad_norm_sq(rs))
        assert np.min(vals) > 1e-3


class TestSampling:
    def test_path_increment_variance(self):
        cfg = EddyConfig(eta=0.05, samples=1, seed=3)
        rng = stream(3, "paths")
        ell = 0.3
        draws = [sample_filament(ell, cfg, rng) for _ in range(300)]
        incs = np.concatenate([np.diff(d.path, axis=0) for d in draws])
        dt = ell**2 / cfg.path_steps
        emp = np.var(incs, axis=0)
        se = np.sqrt(2.0 / len(incs)) * dt  # var of variance estimate, gaussian
        assert np.all(np.abs(emp - dt) <= 4 * se)

    def test_ell_marginal_kolmogorov_smirnov(self):
        eta = 0.1
        rng = stream(5, "ks")
        ells = _sample_ell(rng, 20000, eta)
        cdf = lambda l: (eta**-3 - l**-3.0) / (eta**-3 - 1.0)
        stat, pvalue = sps.kstest(ells, cdf)
        assert pvalue > 0.01

    def test_x0_volume_self_normalization(self):
        rng = stream(9, "vol")
        r_max = 50.0
        s = _sample_radial(rng, 400000, r_max)
        w = x0_weight(s, 1.0, r_max)
        vol = 4.0 / 3.0 * np.pi * r_max**3
        est = float(np.mean(w))
        assert abs(est - vol) / vol <= 0.01

    def test_radial_cdf_closed_form(self):
        for s in (0.3, 2.0, 17.0):
            val, _ = integrate.quad(lambda t: t * t / (1 + t) ** 4, 0, s)
            assert _radial_cdf_unnorm(s) == pytest.approx(val, rel=1e-10)

    def test_thickness_bounds_enforced(self):
        cfg = EddyConfig(eta=0.2, samples=1, seed=0)
        with pytest.raises(ConfigError):
            sample_filament(0.1, cfg, stream(0, "x"))

    def test_path_steps_formula(self):
        assert path_steps_for(T=0.04, ell=0.2) == 200
        assert path_steps_for(T=1.0, ell=0.1) == 20000


class TestContribution:
    def test_frozen_path_exact(self, profile):
        ell, N = 0.3, 250
        path = np.zeros((N + 1, 3))
        draw = FilamentDraw(ell=ell, U=ell ** (1 / 3), T=ell**2, x0=np.zeros(3),
                            path=path, weight=1.0)
        expect = (draw.U**2 / ell**4) * draw.T * profile.grad_norm_sq(np.zeros(1))[0]
        assert filament_contribution(draw, "grad") == pytest.approx(expect, rel=1e-12)
        expect_h = (draw.U**2 / ell**6) * draw.T * profile.hess_norm_sq(np.zeros(1))[0]
        assert filament_contribution(draw, "hess") == pytest.approx(expect_h, rel=1e-12)

    def test_far_path_negligible(self, profile):
        ell = 0.2
        path = np.full((201, 3), 40.0 * ell)
        draw = FilamentDraw(ell=ell, U=ell ** (1 / 3), T=ell**2, x0=path[0],
                            path=path, weight=1.0)
        near = (ell ** (2 / 3) / ell**4) * ell**2 * profile.grad_norm_sq(np.zeros(1))[0]
        assert filament_contribution(draw, "grad") <= 1e-6 * near

    def test_refinement_first_order(self):
        # trapezoid over the path time converges at first order in 1/N; compare
        # the same Brownian paths subsampled at strides 4 / 2 / 1
        cfg = EddyConfig(eta=0.05, samples=1, path_steps=400, seed=7)
        ell = 0.4
        rng = stream(11, "refine")
        diffs_coarse, diffs_fine = [], []
        for _ in range(400):
            draw = sample_filament(ell, cfg, rng)
            outs = []
            for stride in (4, 2, 1):
                sub = FilamentDraw(ell=draw.ell, U=draw.U, T=draw.T, x0=draw.x0,
                                   path=draw.path[::stride], weight=draw.weight)
                outs.append(filament_contribution(sub, "grad"))
            diffs_coarse.append(outs[1] - outs[0])
            diffs_fine.append(outs[2] - outs[1])
        d1 = abs(np.mean(diffs_coarse))
        d2 = abs(np.mean(diffs_fine))
        assert d2 < d1


class TestEstimators:
    def test_eta_near_one_vanishes(self):
        # the thickness support (eta, 1) shrinks to empty: estimate -> 0
        import warnings
        ests = []
        for eta in (0.5, 0.99, 0.999):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est, _ = mc_moment(EddyConfig(eta=eta, samples=4000, seed=1))
            ests.append(est)
        assert ests[0] > ests[1] > ests[2]
        assert ests[2] <= 2e-3 * ests[0]
        # and the vanishing rate tracks the reduced closed form
        assert ests[2] <= 10 * reduced_moment("grad", 0.999, 1.0)

    def test_reduced_moment_quadrature_oracle(self):
        for eta in (0.05, 0.2):
            grad_integral, _ = integrate.quad(lambda l: l ** (5.0 / 3.0) * l**-4.0,
                                              eta, 1.0)
            hess_integral, _ = integrate.quad(lambda l: l ** (-1.0 / 3.0) * l**-4.0,
                                              eta, 1.0)
            assert reduced_moment("grad", eta, 1.0) == pytest.approx(grad_integral,
                                                                     rel=1e-10)
            assert reduced_moment("hess", eta, 1.0) == pytest.approx(hess_integral,
                                                                     rel=1e-10)

    def test_reduced_moment_at_unit_eta(self):
        assert reduced_moment("grad", 1.0, 2.0) == 0.0
        with pytest.raises(ConfigError):
            reduced_moment("grad", 1.5, 1.0)

    def test_reduced_ratio_limit(self):
        # (grad/hess) / eta^2 -> (5/2)(J1/J2) as eta -> 0, hence theta_eddy ~ eta
        J1, J2 = 0.5, 6.0
        vals = [reduced_moment("grad", eta, J1) / reduced_moment("hess", eta, J2)
                / eta**2 for eta in (1e-2, 1e-3, 1e-4)]
        assert vals[-1] == pytest.approx(2.5 * J1 / J2, rel=1e-3)

    def test_mc_agrees_with_reduced(self):
        eta = 0.1
        cfg = EddyConfig(eta=eta, samples=30000, seed=13, order="both")
        out = mc_moment(cfg)
        for order, jseed in (("grad", 20), ("hess", 21)):
            J, Je = canonical_constant(order, 30000, seed=jseed)
            est, se = out[order]
            red = reduced_moment(order, eta, J)
            red_e = reduced_moment(order, eta, Je)
            assert abs(est - red) <= 3.0 * math.hypot(se, red_e)

    def test_j_constants_positive_and_seed_stable(self):
        a, ae = canonical_constant("grad", 20000, seed=1)
        b, be = canonical_constant("grad", 20000, seed=2)
        assert a > 5 * ae
        assert abs(a - b) <= 3.0 * math.hypot(ae, be)

    def test_j_truncation_stability(self):
        a, ae = canonical_constant("grad", 30000, seed=4, r_max=25.0)
        b, be = canonical_constant("grad", 30000, seed=5, r_max=50.0)
        # tail bound: integrand ~ r^-6 beyond r_max; difference within noise
        assert abs(a - b) <= 3.0 * math.hypot(ae, be) + 1e-3 * a

    def test_determinism(self):
        cfg = EddyConfig(eta=0.2, samples=5000, seed=33)
        assert mc_moment(cfg) == mc_moment(cfg)


class TestOccupation:
    def test_matches_exact_value(self):
        for ell in (0.1, 0.4):
            est, se = occupation_time_mc(ell, 30000, seed=6)
            exact = occupation_time_exact(ell)
            assert abs(est - exact) <= 3.0 * se

    def test_fixed_T_ratio_cubic(self):
        T = 0.04
        a, ae = occupation_time_mc(0.1, 60000, seed=7, T=T)
        b, be = occupation_time_mc(0.2, 60000, seed=8, T=T)
        ratio = a / b
        err = ratio * math.hypot(ae / a, be / b)
        assert abs(ratio - (0.1 / 0.2) ** 3) <= 3.0 * err

    def test_small_ell_at_fixed_T_vanishes(self):
        est, _ = occupation_time_mc(0.02, 5000, seed=9, T=0.25)
        assert est <= occupation_time_exact(0.02, T=0.25) * 3 + 1e-6


class TestSlopeFit:
    def test_exact_power_law(self):
        xs = np.array([1.0, 2.0, 4.0, 8.0])
        fit = slope_fit(xs, xs**3)
        assert fit.slope == pytest.approx(3.0, abs=1e-12)
        assert fit.ci95 == pytest.approx(0.0, abs=1e-10)

    def test_constant_data(self):
        fit = slope_fit([1.0, 2.0, 4.0], [5.0, 5.0, 5.0])
        assert fit.slope == pytest.approx(0.0, abs=1e-12)

    def test_calibration_coverage(self):
        # known slope recovered within the 95% CI in >= 90% of repetitions
        rng = np.random.default_rng(17)
        xs = np.geomspace(0.02, 0.16, 4)
        true_slope = -4.0 / 3.0
        hits = 0
        reps = 100
        for _ in range(reps):
            y_true = xs**true_slope
            sigma = 0.03 * y_true
            ys = y_true + rng.normal(0, sigma)
            fit = slope_fit(xs, ys, sigma)
            hits += abs(fit.slope - true_slope) <= fit.ci95
        assert hits >= 90

    def test_domain_errors(self):
        with pytest.raises(ConfigError):
            slope_fit([1.0, 2.0], [1.0, 2.0])
        with pytest.raises(ConfigError):
            slope_fit([1.0, -2.0, 3.0], [1.0, 2.0, 3.0])
        with pytest.raises(ConfigError):
            slope_fit([1.0, 2.0, 3.0], [1.0, 0.0, 3.0])
