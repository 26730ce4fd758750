"""Random vortex-filament eddy model: kernel closed forms and Monte-Carlo moments.

A filament of thickness l has core speed U = l^{1/3}, parameter length
T = l^2, and a Brownian backbone; thicknesses carry density proportional to
l^{-4} on (eta, 1).  The mollified Biot-Savart kernel of a radial profile rho
reduces by the shell theorem to K_1(x) = m(|x|) x / (4 pi |x|^3) with m the
cumulative mass, and scales as K_l(x) = l K_1(x/l), DK_l(x) = DK_1(x/l),
D2K_l(x) = l^{-1} D2K_1(x/l).

Gradient moments reduce under Brownian scaling to exact l-integrals:

    E|Du(0)|^2  = J1 * (3/4) (eta^{-4/3} - 1),
    E|D2u(0)|^2 = J2 * (3/10)(eta^{-10/3} - 1),

with J the unit-scale constants estimated once by the same MC machinery.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, interpolate

from .errors import ConfigError, UnsupportedDimensionError
from .rng import stream

FOUR_PI = 4.0 * math.pi


# ---------------------------------------------------------------------------
# radial profile and kernel closed forms

class RadialProfile:
    """Smooth compactly supported radial profile and its kernel derivatives.

    Default rho(x) = c exp(-1/(1 - |x|^2)) on |x| < 1, normalized so the ball
    integral is one.  Radial reductions:

        g(r)  = m(r) / (4 pi r^3),   m(r) = 4 pi int_0^r rho(s) s^2 ds,
        K_1(x) = g(r) x,
        DK_1[i,j]   = g d_ij + g' x_i x_j / r,
        D2K_1[i,j,k] = (g'/r)(d_ij x_k + d_ik x_j + d_jk x_i)
                       + (g'' - g'/r) x_i x_j x_k / r^2,
        |DK_1|_F^2  = 3 g^2 + 2 g g' r + (g' r)^2,
        |D2K_1|_F^2 = 10 g'^2 + 4 g' g'' r + (g'' r)^2.
    """

    def __init__(self, table_points=2049):
        quad_x, quad_w = np.polynomial.legendre.leggauss(64)
        t = 0.5 * (quad_x + 1.0)
        wt = 0.5 * quad_w
        ball = FOUR_PI * np.sum(wt * np.exp(-1.0 / (1.0 - t**2), where=t < 1.0,
                                            out=np.zeros_like(t)) * t**2)
        self.c = 1.0 / ball
        # h(r) = m(r)/r^3 = 4 pi int_0^1 rho(r t) t^2 dt, uniformly accurate near 0
        rs = np.linspace(0.0, 1.0, table_points)
        rt = rs[:, None] * t[None, :]
        vals = FOUR_PI * np.sum(wt * self._rho_raw(rt) * t**2, axis=1)
        dvals = FOUR_PI * np.sum(wt * self._rho_prime_raw(rt) * t**3, axis=1)
        self._h = interpolate.CubicSpline(rs, vals,
                                          bc_type=((1, dvals[0]), (1, dvals[-1])))
        self.rho0 = float(self.c * math.exp(-1.0))

    def _rho_raw(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r < 1.0
        out[inside] = self.c * np.exp(-1.0 / (1.0 - r[inside] ** 2))
        return out

    def _rho_prime_raw(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r < 1.0
        ri = r[inside]
        out[inside] = (self.c * np.exp(-1.0 / (1.0 - ri**2))
                       * (-2.0 * ri / (1.0 - ri**2) ** 2))
        return out

    rho = _rho_raw
    rho_prime = _rho_prime_raw

    def mass(self, r):
        """Cumulative mass m(r); m(1) = 1 and constant beyond the support."""
        r = np.asarray(r, dtype=float)
        out = np.ones_like(r)
        inside = r < 1.0
        out[inside] = self._h(r[inside]) * r[inside] ** 3
        return out

    def _g123(self, r):
        """(g, g', g'') at radii r, guarded at the origin."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        g = np.empty_like(r)
        inside = r < 1.0
        g[inside] = self._h(r[inside]) / FOUR_PI
        g[~inside] = 1.0 / (FOUR_PI * r[~inside] ** 3)
        rho = self._rho_raw(r)
        rhop = self._rho_prime_raw(r)
        tiny = r < 1e-8
        rsafe = np.where(tiny, 1.0, r)
        g1 = (rho - 3.0 * g) / rsafe
        g2 = rhop / rsafe - 4.0 * rho / rsafe**2 + 12.0 * g / rsafe**2
        g1[tiny] = 0.0
        g2[tiny] = -0.4 * self.rho0  # 2 rho_2 / 5 with rho_2 = -rho_0 for the bump
        return g, g1, g2

    def kernel(self, x):
        """K_1(x) = m(|x|) x / (4 pi |x|^3); K_1(0) = 0 by symmetry."""
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        if r == 0.0:
            return np.zeros(3)
        g, _, _ = self._g123(r)
        return float(g[0]) * x

    def kernel_grad(self, x):
        """DK_1, a 3x3 matrix; finite limit g(0) I at the origin."""
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        if r < 1e-12:
            return (self.rho0 / 3.0) * np.eye(3)
        g, g1, _ = self._g123(r)
        return float(g[0]) * np.eye(3) + float(g1[0]) * np.outer(x, x) / r

    def kernel_hess(self, x):
        """D2K_1, a 3x3x3 tensor; zero limit at the origin."""
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        if r < 1e-12:
            return np.zeros((3, 3, 3))
        g, g1, g2 = self._g123(r)
        g1, g2 = float(g1[0]), float(g2[0])
        eye = np.eye(3)
        sym = (np.einsum("ij,k->ijk", eye, x) + np.einsum("ik,j->ijk", eye, x)
               + np.einsum("jk,i->ijk", eye, x))
        return (g1 / r) * sym + (g2 - g1 / r) * np.einsum("i,j,k->ijk", x, x, x) / r**2

    def grad_norm_sq(self, r):
        """|DK_1|_F^2 as a function of radius (vectorized)."""
        r = np.asarray(r, dtype=float)
        g, g1, _ = self._g123(r)
        return 3.0 * g**2 + 2.0 * g * g1 * r + (g1 * r) ** 2

    def hess_norm_sq(self, r):
        """|D2K_1|_F^2 as a function of radius (vectorized)."""
        r = np.asarray(r, dtype=float)
        _, g1, g2 = self._g123(r)
        return 10.0 * g1**2 + 4.0 * g1 * g2 * r + (g2 * r) ** 2


_DEFAULT_PROFILE = None


def default_profile():
    global _DEFAULT_PROFILE
    if _DEFAULT_PROFILE is None:
        _DEFAULT_PROFILE = RadialProfile()
    return _DEFAULT_PROFILE


def kernel_eval(x, which="K", profile=None):
    """K_1 / DK_1 / D2K_1 at a point (closed forms via the shell reduction)."""
    profile = profile or default_profile()
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise UnsupportedDimensionError("eddy kernel is three-dimensional")
    if which == "K":
        return profile.kernel(x)
    if which == "DK":
        return profile.kernel_grad(x)
    if which == "D2K":
        return profile.kernel_hess(x)
    raise ConfigError(f"unknown kernel selector {which!r}")


def kernel_quadrature(x, profile=None, n_rad=160, n_theta=64, n_phi=128):
    """Direct quadrature of (1/4pi) int rho(y) (x-y)/|x-y|^3 dy (oracle).

    Substituting y = x - z removes the singularity entirely:
    K(x) = (1/4pi) int_0^inf int_{S^2} rho(x - r w) w dOmega dr.
    """
    profile = profile or default_profile()
    x = np.asarray(x, dtype=float)
    xr = float(np.linalg.norm(x))
    ct, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - ct**2)
    dirs = np.stack([np.outer(st, np.cos(phi)).ravel(),
                     np.outer(st, np.sin(phi)).ravel(),
                     np.outer(ct, np.ones(n_phi)).ravel()], axis=1)
    w_sph = np.repeat(wt, n_phi) * (2.0 * np.pi / n_phi)
    r_lo, r_hi = max(0.0, xr - 1.0), xr + 1.0
    qr, wr = np.polynomial.legendre.leggauss(n_rad)
    rs = 0.5 * (r_hi - r_lo) * qr + 0.5 * (r_hi + r_lo)
    wr = 0.5 * (r_hi - r_lo) * wr
    total = np.zeros(3)
    for r, w in zip(rs, wr):
        rho = profile.rho(np.linalg.norm(x[None, :] - r * dirs, axis=1))
        total += w * (w_sph * rho) @ dirs
    return total / FOUR_PI


# ---------------------------------------------------------------------------
# sampling

@dataclass
class EddyConfig:
    eta: float
    samples: int
    path_steps: int = 200
    r_max: float = 50.0
    seed: int = 0
    order: str = "grad"
    chunk_size: int = 4096

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ConfigError("UV cutoff eta must lie in (0, 1)")
        if self.path_steps < 100:
            raise ConfigError("path_steps must be >= 100")
        if self.order not in ("grad", "hess", "both"):
            raise ConfigError("order must be grad, hess, or both")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")


def path_steps_for(T, ell, floor=200):
    """N = max(floor, ceil(50 T / l^2) * 4): resolve each filament's diffusive scale."""
    return max(floor, int(math.ceil(50.0 * T / ell**2)) * 4)


@dataclass
class FilamentDraw:
    ell: float
    U: float
    T: float
    x0: np.ndarray
    path: np.ndarray
    weight: float


def _radial_cdf_unnorm(s):
    """int_0^s t^2 (1+t)^-4 dt, closed form."""
    w = 1.0 + np.asarray(s, dtype=float)
    return 1.0 / 3.0 - (1.0 / w - 1.0 / w**2 + 1.0 / (3.0 * w**3))


def _sample_radial(rng, n, r_max):
    """Draw s with density prop. to s^2 (1+s)^-4 on [0, r_max] (exact inverse CDF)."""
    total = _radial_cdf_unnorm(r_max)
    target = rng.random(n) * total
    lo = np.zeros(n)
    hi = np.full(n, float(r_max))
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        go_hi = _radial_cdf_unnorm(mid) < target
        lo = np.where(go_hi, mid, lo)
        hi = np.where(go_hi, hi, mid)
    return 0.5 * (lo + hi)


def _sample_ell(rng, n, eta):
    """Thickness draws with density prop. to l^-4 on (eta, 1) (inverse CDF)."""
    u = rng.random(n)
    return (eta**-3 - u * (eta**-3 - 1.0)) ** (-1.0 / 3.0)


def _uniform_directions(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def x0_weight(s, scale, r_max):
    """1 / p3(x0) for the radial importance law at start radius s * scale.

    p3 is the 3D density of x0 = (s scale) * uniform direction with s drawn
    prop. to s^2 (1+s)^-4 on [0, r_max]; the weight integrates to the
    truncation volume (4 pi / 3)(scale r_max)^3.
    """
    return FOUR_PI * scale**3 * _radial_cdf_unnorm(r_max) * (1.0 + np.asarray(s)) ** 4


def sample_filament(ell, config, rng, profile=None):
    """One filament draw: x0 from the radial importance law, Brownian core, weight."""
    if not config.eta < ell < 1.0:
        raise ConfigError("thickness must lie in (eta, 1)")
    T = ell**2
    N = config.path_steps
    s = _sample_radial(rng, 1, config.r_max)[0]
    x0 = ell * s * _uniform_directions(rng, 1)[0]
    steps = rng.standard_normal((N, 3)) * math.sqrt(T / N)
    path = np.vstack([x0, x0 + np.cumsum(steps, axis=0)])
    z_ell = (config.eta**-3 - 1.0) / 3.0
    weight = z_ell * x0_weight(s, ell, config.r_max)
    return FilamentDraw(ell=float(ell), U=float(ell ** (1.0 / 3.0)), T=float(T),
                        x0=x0, path=path, weight=float(weight))


def filament_contribution(draw, order, profile=None):
    """(U^2/l^4) * trapezoid_t |D^order K_l(X_t)|_F^2 for one draw."""
    profile = profile or default_profile()
    radii = np.linalg.norm(draw.path, axis=1) / draw.ell
    if order == "grad":
        f = profile.grad_norm_sq(radii)
        scale = draw.U**2 / draw.ell**4
    elif order == "hess":
        f = profile.hess_norm_sq(radii)
        scale = draw.U**2 / draw.ell**6
    else:
        raise ConfigError("order must be grad or hess")
    dt = draw.T / (len(draw.path) - 1)
    return float(scale * np.trapezoid(f, dx=dt))


# ---------------------------------------------------------------------------
# Monte-Carlo estimators

def _trapz_weights(N, dt):
    w = np.full(N + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def _mc_pass(config, profile):
    """Chunked, seed-keyed accumulation of the weighted grad/hess contributions."""
    n_total = config.samples
    z_ell = (config.eta**-3 - 1.0) / 3.0
    sums = {"grad": 0.0, "hess": 0.0}
    sq_sums = {"grad": 0.0, "hess": 0.0}
    w_sum = 0.0
    w_sq_sum = 0.0
    done = 0
    chunk_idx = 0
    while done < n_total:
        n = min(config.chunk_size, n_total - done)
        rng = stream(config.seed, "eddy", chunk_idx)
        ell = _sample_ell(rng, n, config.eta)
        s = _sample_radial(rng, n, config.r_max)
        x0 = (ell * s)[:, None] * _uniform_directions(rng, n)
        T = ell**2
        N = config.path_steps
        dt = T / N
        steps = rng.standard_normal((n, N, 3)) * np.sqrt(dt)[:, None, None]
        pos = np.concatenate([x0[:, None, :], x0[:, None, :] + np.cumsum(steps, axis=1)],
                             axis=1)
        radii = np.linalg.norm(pos, axis=2) / ell[:, None]
        tw = _trapz_weights(N, 1.0)  # dt applied per filament below
        weights = z_ell * x0_weight(s, ell, config.r_max)
        fg = profile.grad_norm_sq(radii.ravel()).reshape(radii.shape)
        grad_vals = weights * ell ** (2.0 / 3.0 - 4.0) * (fg @ tw) * dt
        fh = profile.hess_norm_sq(radii.ravel()).reshape(radii.shape)
        hess_vals = weights * ell ** (2.0 / 3.0 - 6.0) * (fh @ tw) * dt
        sums["grad"] += float(np.sum(grad_vals))
        sq_sums["grad"] += float(np.sum(grad_vals**2))
        sums["hess"] += float(np.sum(hess_vals))
        sq_sums["hess"] += float(np.sum(hess_vals**2))
        w_sum += float(np.sum(np.abs(grad_vals)))
        w_sq_sum += float(np.sum(grad_vals**2))
        done += n
        chunk_idx += 1
    out = {}
    for key in ("grad", "hess"):
        mean = sums[key] / n_total
        var = max(sq_sums[key] / n_total - mean**2, 0.0)
        out[key] = (mean, math.sqrt(var / n_total))
    ess = w_sum**2 / w_sq_sum if w_sq_sum > 0 else 0.0
    return out, ess


def mc_moment(config, profile=None):
    """Weighted MC estimate of E|D^order u(0)|^2 at UV cutoff eta.

    Returns (estimate, stderr) for config.order, or {"grad": .., "hess": ..}
    for order "both".  Deterministic in (seed, samples, chunk_size); the
    chunk reduction order is fixed, so results are worker-independent.
    """
    profile = profile or default_profile()
    out, ess = _mc_pass(config, profile)
    if ess < 100:
        warnings.warn(f"low statistics: effective sample size {ess:.1f} < 100")
    if config.order == "both":
        return out
    return out[config.order]


def canonical_constant(order, samples, seed=0, r_max=50.0, path_steps=200,
                       chunk_size=4096, profile=None):
    """Unit-scale constant J = int dz E int_0^1 |D^order K_1(z + B_s)|_F^2 ds.

    Estimated by the same machinery as mc_moment at l = 1, T = 1.
    """
    if order not in ("grad", "hess"):
        raise ConfigError("order must be grad or hess")
    profile = profile or default_profile()
    norm_fn = profile.grad_norm_sq if order == "grad" else profile.hess_norm_sq
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk_idx = 0
    N = path_steps
    dt = 1.0 / N
    tw = _trapz_weights(N, dt)
    while done < samples:
        n = min(chunk_size, samples - done)
        rng = stream(seed, "eddyJ", order, chunk_idx)
        s = _sample_radial(rng, n, r_max)
        x0 = s[:, None] * _uniform_directions(rng, n)
        steps = rng.standard_normal((n, N, 3)) * math.sqrt(dt)
        pos = np.concatenate([x0[:, None, :], x0[:, None, :] + np.cumsum(steps, axis=1)],
                             axis=1)
        radii = np.linalg.norm(pos, axis=2)
        f = norm_fn(radii.ravel()).reshape(radii.shape)
        vals = x0_weight(s, 1.0, r_max) * (f @ tw)
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals**2))
        done += n
        chunk_idx += 1
    mean = total / samples
    var = max(total_sq / samples - mean**2, 0.0)
    return mean, math.sqrt(var / samples)


def reduced_moment(order, eta, J):
    """Exact l-integral under the Brownian-scaling reduction.

    grad: J * (3/4)(eta^{-4/3} - 1);  hess: J * (3/10)(eta^{-10/3} - 1).
    """
    if not 0.0 < eta <= 1.0:
        raise ConfigError("eta must lie in (0, 1]")
    if order == "grad":
        return J * 0.75 * (eta ** (-4.0 / 3.0) - 1.0)
    if order == "hess":
        return J * 0.3 * (eta ** (-10.0 / 3.0) - 1.0)
    raise ConfigError("order must be grad or hess")


def occupation_time_mc(ell, samples, seed=0, T=None, r_max=50.0, path_steps=200,
                       chunk_size=8192):
    """MC estimate of W[int_0^T 1_{X_t in B(0, l)} dt] (x0-integrated over space).

    T defaults to the gamma-locked value l^2.  The exact value is
    (4 pi / 3) l^3 T by Fubini over the uniform start point.
    """
    if not 0.0 < ell <= 1.0:
        raise ConfigError("l must lie in (0, 1]")
    T = ell**2 if T is None else float(T)
    scale = max(ell, math.sqrt(T))
    N = path_steps
    dt = T / N
    tw = _trapz_weights(N, dt)
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk_idx = 0
    while done < samples:
        n = min(chunk_size, samples - done)
        rng = stream(seed, "occup", chunk_idx)
        s = _sample_radial(rng, n, r_max)
        x0 = (scale * s)[:, None] * _uniform_directions(rng, n)
        steps = rng.standard_normal((n, N, 3)) * math.sqrt(dt)
        pos = np.concatenate([x0[:, None, :], x0[:, None, :] + np.cumsum(steps, axis=1)],
                             axis=1)
        inside = (np.linalg.norm(pos, axis=2) <= ell).astype(float)
        vals = x0_weight(s, scale, r_max) * (inside @ tw)
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals**2))
        done += n
        chunk_idx += 1
    mean = total / samples
    var = max(total_sq / samples - mean**2, 0.0)
    return mean, math.sqrt(var / samples)


def occupation_time_exact(ell, T=None):
    T = ell**2 if T is None else T
    return (FOUR_PI / 3.0) * ell**3 * T


# ---------------------------------------------------------------------------
# slope fitting

@dataclass
class SlopeFit:
    slope: float
    intercept: float
    slope_stderr: float
    ci95: float


def slope_fit(xs, ys, errs=None):
    """Weighted least squares in log-log coordinates; 95% normal CI on the slope."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 3:
        raise ConfigError("slope fit needs at least 3 points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ConfigError("slope fit needs positive values")
    X = np.log(xs)
    Y = np.log(ys)
    if errs is not None:
        errs = np.asarray(errs, dtype=float)
        if np.any(errs < 0) or np.any(~np.isfinite(errs)):
            raise ConfigError("errors must be finite and >= 0")
        sig = np.maximum(errs / ys, 1e-15)
        w = 1.0 / sig**2
    else:
        w = np.ones_like(X)
    W = np.sum(w)
    xbar = np.sum(w * X) / W
    ybar = np.sum(w * Y) / W
    sxx = np.sum(w * (X - xbar) ** 2)
    slope = np.sum(w * (X - xbar) * (Y - ybar)) / sxx
    intercept = ybar - slope * xbar
    if errs is not None:
        se = math.sqrt(1.0 / sxx)
    else:
        resid = Y - (intercept + slope * X)
        dof = max(len(X) - 2, 1)
        se = math.sqrt(np.sum(resid**2) / dof / sxx)
    return SlopeFit(slope=float(slope), intercept=float(intercept),
                    slope_stderr=float(se), ci95=float(1.96 * se))
