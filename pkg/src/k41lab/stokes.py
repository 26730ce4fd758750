"""Closed-form stationary statistics of the linear (Stokes) system.

Each Fourier mode of the forced Stokes equation is an Ornstein-Uhlenbeck
process; its stationary second moment is amp^2 |sigma_k|^2 / (2 nu |k|^2).
These moments are the analytic ground truth for every statistical estimator
and carry the "theta is constant in nu" 2D/linear no-K41 result.
"""

import numpy as np

from .errors import ConfigError, DegenerateStatsError


def stokes_mode_moment(k, sigma_k, nu, amp=1.0):
    """Stationary E|u_hat(k)|^2 = amp^2 |sigma_k|^2 / (2 nu |k|^2)."""
    if nu <= 0:
        raise ConfigError("viscosity must be positive")
    k = np.asarray(k, dtype=float)
    ksq = float(np.sum(k * k))
    if ksq <= 0:
        raise ConfigError("mode k must be nonzero")
    frob_sq = float(np.sum(np.abs(np.asarray(sigma_k)) ** 2))
    return amp**2 * frob_sq / (2.0 * nu * ksq)


def mode_moments(spec, nu):
    """Canonical-half array of stationary mode moments for a noise spec."""
    lat = spec.lattice
    return spec.amp**2 * spec.frob_sq_half / (2.0 * nu * lat.k_sq_half)


def stokes_summary(spec, nu, r_grid=None):
    """Analytic {epsilon, theta_diss, s2} of the stationary Stokes field.

    epsilon      = nu sum |k|^2 E|u_hat|^2 = amp^2/2 sum |sigma_k|^2   (nu-free)
    theta_diss^2 = sum |sigma_k|^2 / sum |k|^2 |sigma_k|^2             (nu-free)
    s2(r)        = sum |e^{-i k.r e} - 1|^2 E|u_hat(k)|^2, averaged over e
    """
    if spec.sum_sigma_sq <= 0:
        raise DegenerateStatsError("noise spec carries no energy; theta undefined")
    lat = spec.lattice
    m2 = mode_moments(spec, nu)
    epsilon = 0.5 * spec.amp**2 * spec.sum_sigma_sq
    theta = float(np.sqrt(spec.sum_sigma_sq / spec.sum_k2_sigma_sq))

    def s2(r):
        vals = [2.0 * np.sum(4.0 * np.sin(0.5 * lat.k_half[:, j] * r) ** 2 * m2)
                for j in range(lat.d)]
        return float(np.mean(vals))

    out = {"epsilon": float(epsilon), "theta_diss": theta, "s2": s2}
    if r_grid is not None:
        out["s2_profile"] = [(float(r), s2(r)) for r in r_grid]
    return out
