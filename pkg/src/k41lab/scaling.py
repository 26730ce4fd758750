"""Exact scaling transformations, window-function calculus, and the pathwise verifier.

The core transformation is u~(t, x) = lam^beta u(lam^{1+beta} t, lam x), which
maps solutions on the box [0, L]^d to solutions on [0, L/lam]^d with
parameters (nu lam^{beta-1}, L/lam, lam^{(1+3 beta)/2} amp).  In integer mode
labels the lattice is unchanged and coefficients simply pick up lam^beta, so
the Euler-Maruyama recursion commutes with the transformation exactly; the
verifier checks this at machine precision.

The K41-window calculus follows the equivalence proof: with the map
K(nu, r) = (nu r^{-4/3}, 1/r), a Condition-A admissible region corresponds to
a K41 window C0 nu^{3/4} < r < nu^{3/4} R0(nu) via F(x) = x^{-3/4} Rt0(x),
R0(x) = (F^{-1}(x^{-3/4}))^{-3/4}, and back via G(x) = R0(x)^{-4/3},
Rt0(nu~) = (nu~ / G^{-1}(nu~))^{3/4}.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, VerificationError
from .noise import NoiseSpec, rescale_brownian_path
from .spectral import SpectralField, build_lattice


@dataclass(frozen=True)
class ScaleParams:
    lam: float
    beta: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigError("scale factor lambda must be positive")

    @property
    def amp_factor(self):
        """lam^{(1+3 beta)/2}; equals 1 at the K41 exponent beta = -1/3."""
        return self.lam ** ((1.0 + 3.0 * self.beta) / 2.0)


def rescale_field(u, lam, beta):
    """Field scaling: same integer modes on box L/lam, coefficients * lam^beta.

    Pointwise contract: evaluate(out, x) = lam^beta * evaluate(in, lam x).
    """
    ScaleParams(lam, beta)
    lat = u.lattice
    new_lat = build_lattice(lat.d, lat.L / lam, lat.n)
    return SpectralField(new_lat, (lam**beta) * u.coeffs)


def transform_params(nu, L, amp, lam, beta):
    """(nu, L, amp) -> (nu lam^{beta-1}, L/lam, lam^{(1+3beta)/2} amp)."""
    if min(nu, L, amp) < 0 or nu <= 0 or L <= 0:
        raise ConfigError("nu, L must be positive and amp >= 0")
    p = ScaleParams(lam, beta)
    return (nu * lam ** (beta - 1.0), L / lam, p.amp_factor * amp)


def map_K(nu, r):
    """(nu, r) -> (nu r^{-4/3}, r^{-1})."""
    if nu <= 0 or r <= 0:
        raise ConfigError("map K needs positive nu, r")
    return (nu * r ** (-4.0 / 3.0), 1.0 / r)


def map_K_inv(nu_t, r_t):
    """Exact inverse of map_K."""
    if nu_t <= 0 or r_t <= 0:
        raise ConfigError("map K^-1 needs positive arguments")
    r = 1.0 / r_t
    return (nu_t * r ** (4.0 / 3.0), r)


# ---------------------------------------------------------------------------
# monotone tables and admissible regions

class MonotoneTable:
    """Strictly decreasing positive function as a log-log interpolated table."""

    def __init__(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if len(xs) < 2 or np.any(xs <= 0) or np.any(ys <= 0):
            raise ConfigError("table needs >= 2 strictly positive points")
        order = np.argsort(xs)
        xs, ys = xs[order], ys[order]
        if np.any(np.diff(xs) <= 0):
            raise ConfigError("table abscissae must be distinct")
        if np.any(np.diff(ys) >= 0):
            raise ConfigError("table must be strictly decreasing")
        self.xs, self.ys = xs, ys
        self.log_xs, self.log_ys = np.log(xs), np.log(ys)

    @property
    def x_min(self):
        return float(self.xs[0])

    @property
    def x_max(self):
        return float(self.xs[-1])

    def contains(self, x):
        return self.x_min <= x <= self.x_max

    def __call__(self, x):
        if not self.contains(x):
            raise ConfigError(f"argument {x} outside table domain "
                              f"[{self.x_min}, {self.x_max}]")
        return float(np.exp(np.interp(np.log(x), self.log_xs, self.log_ys)))

    def inverse(self, y, tol=1e-14):
        """Monotone bisection on the table (y decreasing in x)."""
        if not (self.ys[-1] <= y <= self.ys[0]):
            raise ConfigError(f"value {y} outside table range")
        lo, hi = self.log_xs[0], self.log_xs[-1]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.exp(np.interp(mid, self.log_xs, self.log_ys)) > y:
                lo = mid
            else:
                hi = mid
            if hi - lo < tol * max(1.0, abs(hi)):
                break
        return float(np.exp(0.5 * (lo + hi)))

    def transform(self, fx, fy):
        """New table with xs -> fx(xs), ys -> fy applied pointwise (order fixed up)."""
        return MonotoneTable(fx(self.xs), fy(self.xs, self.ys))


def table_from_function(fn, x_min, x_max, points=257):
    xs = np.geomspace(x_min, x_max, points)
    return MonotoneTable(xs, np.array([fn(x) for x in xs]))


@dataclass
class AdmissibleRegion:
    """Condition-A region: nu~ in (0, nu0], L > Rt0(nu~), Rt0 decreasing >= 1."""

    nu0: float
    Rt0: MonotoneTable

    def __post_init__(self):
        if self.nu0 <= 0:
            raise ConfigError("nu0 must be positive")
        if np.any(self.Rt0.ys < 1.0):
            raise ConfigError("Rt0 must map into [1, infinity)")
        if self.Rt0.x_max < self.nu0:
            raise ConfigError("Rt0 table must cover (x_min, nu0]")


@dataclass
class K41WindowSpec:
    """K41 window: nu <= nu0 and r / nu^{3/4} in [C0, R0(nu)]."""

    nu0: float
    C0: float
    R0: MonotoneTable


def derive_window_functions(spec, direction):
    """Proposition calculus between Condition-A regions and K41 windows.

    direction "A->K41": AdmissibleRegion -> K41WindowSpec with
        C0 = nu0~^{-3/4},  nu0 = F(nu0~)^{-4/3},  R0(x) = (F^{-1}(x^{-3/4}))^{-3/4},
        F(x) = x^{-3/4} Rt0(x).
    direction "K41->A": K41WindowSpec -> (AdmissibleRegion, nu0~ shrink applied) with
        nu0~ = C0^{-4/3},  G(x) = R0(x)^{-4/3},  Rt0(nu~) = (nu~ / G^{-1}(nu~))^{3/4};
        the returned region's nu0 is additionally shrunk to the largest table
        value with nu~ * Rt0(nu~)^{-4/3} <= nu0 so the leftover domain
        constraint of the proposition holds (reported via region.nu0).
    """
    # Both derived functions are piecewise log-log linear with knots at the
    # images of the input knots, so building the output tables at exactly
    # those image knots represents them with no interpolation error (and makes
    # the A->K41->A round trip exact to rounding).
    if direction == "A->K41":
        region = spec
        keep = region.Rt0.xs <= region.nu0 * (1 + 1e-12)
        xs = region.Rt0.xs[keep]
        rt0 = region.Rt0.ys[keep]
        if region.nu0 < region.Rt0.x_max * (1 - 1e-12) and xs[-1] < region.nu0:
            xs = np.append(xs, region.nu0)
            rt0 = np.append(rt0, region.Rt0(region.nu0))
        if len(xs) < 2:
            raise ConfigError("Rt0 table too short below nu0")
        F = xs ** (-0.75) * rt0                      # decreasing
        knots = F ** (-4.0 / 3.0)                    # increasing in x order
        r0_vals = xs ** (-0.75)                      # R0 at those knots
        C0 = region.nu0 ** (-0.75)
        return K41WindowSpec(nu0=float(knots[-1]), C0=float(C0),
                             R0=MonotoneTable(knots, r0_vals))
    if direction == "K41->A":
        window = spec
        nu0_t = window.C0 ** (-4.0 / 3.0)
        xs = window.R0.xs
        r0 = window.R0.ys
        knots = r0 ** (-4.0 / 3.0)                   # nu~ = G(x), increasing
        rt0 = (knots / xs) ** 0.75                   # Rt0 at those knots
        if np.any(np.diff(rt0) >= 0):
            raise ConfigError("derived Rt0 not strictly decreasing; "
                              "input R0 is not an admissible window function")
        # AdmissibleRegion requires Rt0 >= 1; restrict the domain rather than clip
        keep = rt0 >= 1.0
        if np.sum(keep) < 2:
            raise ConfigError("derived Rt0 falls below 1 everywhere on the table")
        knots, rt0 = knots[keep], rt0[keep]
        nu0 = float(min(nu0_t, knots[-1]))
        # leftover constraint nu = nu~ r~^{-4/3} <= nu0: h(nu~) = nu~ Rt0(nu~)^{-4/3}
        h = knots * rt0 ** (-4.0 / 3.0)
        ok = knots[h <= window.nu0 * (1 + 1e-12)]
        if len(ok) == 0:
            raise ConfigError("no admissible nu~ satisfies the leftover constraint")
        return AdmissibleRegion(nu0=float(min(nu0, ok[-1])),
                                Rt0=MonotoneTable(knots, rt0))
    raise ConfigError(f"unknown direction {direction!r}")


def domain_membership(point, which, spec):
    """Exact membership test; None when the point is outside table domains.

    which = "k41": point = (nu, r) against a K41WindowSpec (closed endpoints).
    which = "condA": point = (nu~, r~) against an AdmissibleRegion.
    """
    a, b = point
    if which == "k41":
        if a > spec.nu0:
            return False
        if not spec.R0.contains(a):
            return None
        x = b / a**0.75
        return bool(spec.C0 <= x <= spec.R0(a))
    if which == "condA":
        if a > spec.nu0:
            return False
        if not spec.Rt0.contains(a):
            return None
        return bool(b >= spec.Rt0(a))
    raise ConfigError(f"unknown membership domain {which!r}")


# ---------------------------------------------------------------------------
# pathwise verifier

def pathwise_scaling_verify(config, lam, beta, n_steps=200, return_series=False,
                            initial=None):
    """Machine-precision check that Euler-Maruyama commutes with the rescaling.

    Runs a trajectory of `config` recording its Brownian increments; runs the
    transformed system (nu lam^{beta-1}, L/lam, lam^{(1+3beta)/2} amp) at step
    dt lam^{-(1+beta)} driven by the rescaled increments; and returns the max
    over steps of |u~ - lam^beta u|_inf / |lam^beta u|_inf on coefficients.
    An `initial` field makes the amp = 0 deterministic case nontrivial.
    """
    from .galerkin import SimulationConfig, Trajectory

    if config.stepper != "euler_maruyama":
        raise ConfigError("pathwise verification requires the euler_maruyama stepper "
                          "(the exponential integrator does not commute exactly)")
    if config.nonlinearity != "direct" and not config.linear_only:
        raise ConfigError("pathwise verification requires the direct convolution")
    ScaleParams(lam, beta)

    orig = Trajectory(config, record_noise=True, initial=initial)
    states = []
    for i, coeffs in orig.steps(n_steps):
        states.append(coeffs.copy())
    rec = orig.recorded

    rec_t = rescale_brownian_path(rec, lam, beta)
    nu_t, L_t, amp_t = transform_params(config.nu, config.L, config.noise.amp, lam, beta)
    spec_t = NoiseSpec(rec_t.lattice, config.noise.sigma, amp_t)
    cfg_t = SimulationConfig(
        d=config.d, L=L_t, n=config.n, nu=nu_t, noise=spec_t, dt=rec_t.dt,
        t_burn=0.0, t_avg=max(rec_t.dt * n_steps, rec_t.dt), seed=config.seed,
        stepper="euler_maruyama", nonlinearity=config.nonlinearity,
        linear_only=config.linear_only)

    factor = lam**beta
    worst = 0.0
    series = []
    initial_t = rescale_field(initial, lam, beta) if initial is not None else None
    traj_t = Trajectory(cfg_t, driven_by=rec_t, initial=initial_t)
    for i, coeffs_t in traj_t.steps(n_steps):
        ref = factor * states[i]
        scale = np.max(np.abs(ref))
        disc = np.max(np.abs(coeffs_t - ref)) / max(scale, 1e-300) if scale > 0 else \
            float(np.max(np.abs(coeffs_t)))
        worst = max(worst, disc)
        if return_series:
            series.append(disc)
    return (worst, series) if return_series else worst


def assert_pathwise_scaling(config, lam, beta, n_steps=200, tol=1e-10):
    disc = pathwise_scaling_verify(config, lam, beta, n_steps)
    if disc > tol:
        raise VerificationError(
            f"pathwise scaling discrepancy {disc:.3e} exceeds {tol:.1e}")
    return disc
