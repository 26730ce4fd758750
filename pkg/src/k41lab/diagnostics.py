"""Measure-level diagnostics: S2 profiles, dissipation scales, K41 windows,
condition sums, isotropy and balance checks, and the closed-form example.

Everything here is a pure function of EnsembleStats (empirical or analytic)
plus noise/viscosity parameters.  K41 verdicts are emitted as window ratio
tables, never booleans: the definitions quantify over families and all small
nu, which no finite sweep can decide.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ConfigError, DegenerateStatsError

TWO_PI = 2.0 * math.pi


def default_r_grid(lattice, points=64):
    """Logarithmic separations spanning [L/(2 pi n), L/2]."""
    lo = lattice.L / (TWO_PI * lattice.n)
    hi = lattice.L / 2.0
    return np.geomspace(lo, hi, points)


def dissipation_summary(stats, nu):
    """epsilon = nu * grad_sq, eta = nu^{3/4} eps^{-1/4}, theta = sqrt(grad/hess)."""
    grad = stats.scalar("grad_sq")
    hess = stats.scalar("hess_sq")
    if grad <= 0 or hess <= 0:
        raise DegenerateStatsError(
            "zero-field statistics: dissipation scales undefined (the delta_0 "
            "convention theta = 1 is documented but not encoded)")
    epsilon = nu * grad
    return {
        "epsilon": float(epsilon),
        "eta": float(nu ** 0.75 * epsilon ** -0.25),
        "theta_diss": float(math.sqrt(grad / hess)),
    }


def estimate_s2_profile(stats, r_grid):
    """(r, value, stderr) rows; value is the coordinate-direction mean of
    sum_k |e^{-i k . r e} - 1|^2 m2(k).

    stderr propagates canonical-mode moment errors as independent; direction
    spread is reported separately by isotropy_directional_check.
    """
    lat = stats.lattice
    rows = []
    for r in np.asarray(r_grid, dtype=float):
        vals, errs = [], []
        for j in range(lat.d):
            kern = 4.0 * np.sin(0.5 * lat.k_half[:, j] * r) ** 2
            vals.append(2.0 * float(np.sum(kern * stats.mode_m2)))
            errs.append(2.0 * float(np.sqrt(np.sum((kern * stats.mode_m2_stderr) ** 2))))
        rows.append((float(r), float(np.mean(vals)), float(np.mean(errs))))
    return rows


def taylor_check(s2_profile, grad_sq, theta_diss, d):
    """Two-sided Taylor bounds on the structure function.

    Upper: S2(r) <= r^2 grad_sq for every grid r (pure kernel inequality).
    Lower: S2(r) >= r^2 grad_sq / (4d) for grid r <= theta_diss / (4d).
    Returns pass/fail with worst margins (margin > 0 means satisfied).
    """
    upper_margin = math.inf
    lower_margin = math.inf
    r_cut = theta_diss / (4.0 * d)
    for r, value, _ in s2_profile:
        if r <= 0:
            continue
        bound = r * r * grad_sq
        upper_margin = min(upper_margin, (bound - value) / bound)
        if r <= r_cut:
            low = bound / (4.0 * d)
            lower_margin = min(lower_margin, (value - low) / low)
    return {
        "upper_ok": upper_margin >= -1e-12,
        "lower_ok": lower_margin == math.inf or lower_margin >= -1e-12,
        "upper_margin": float(upper_margin),
        "lower_margin": None if lower_margin == math.inf else float(lower_margin),
        "lower_points_checked": sum(1 for r, _, _ in s2_profile if 0 < r <= r_cut),
    }


# ---------------------------------------------------------------------------
# K41 windows

def k41_window_scan(reports, C0, R0):
    """Per-nu window ratio table over a sweep.

    reports: list of dicts with keys nu, eta, theta_diss, s2_profile.
    R0: callable nu -> scalar, monotone increasing as nu decreases.
    Scans both windows: (C0 eta, eta R0(nu)) of the eta-based definition and
    (C0 nu^{3/4}, nu^{3/4} R0(nu)) of the simplified one.  Emits data only.
    """
    out = []
    for rep in reports:
        nu, eta = rep["nu"], rep["eta"]
        row = {"nu": nu, "eta": eta,
               "theta_diss": rep["theta_diss"],
               "theta_over_eta": rep["theta_diss"] / eta,
               "windows": {}}
        for name, scale in (("eta", eta), ("nu34", nu ** 0.75)):
            lo, hi = C0 * scale, scale * R0(nu)
            ratios = [v / r ** (2.0 / 3.0)
                      for r, v, _ in rep["s2_profile"] if lo <= r <= hi and v > 0]
            row["windows"][name] = {
                "lo": float(lo), "hi": float(hi), "n_points": len(ratios),
                "empty": len(ratios) == 0,
                "ratio_min": float(min(ratios)) if ratios else None,
                "ratio_max": float(max(ratios)) if ratios else None,
            }
        out.append(row)
    return out


def theta_eta_trend(scan_rows):
    """True when theta/eta increases as nu decreases (the no-K41 signature)."""
    rows = sorted(scan_rows, key=lambda r: -r["nu"])
    vals = [r["theta_over_eta"] for r in rows]
    return all(b > a for a, b in zip(vals, vals[1:])), vals


# ---------------------------------------------------------------------------
# closed-form example of the compatible S2

def example_s2_quadrature(nu, r):
    """Defining integral int_eta^1 l^{2/3} ((l ^ r)/l)^2 dl/l with eta = nu^{3/4}."""
    if not 0 < nu < 1:
        raise ConfigError("example S2 requires nu in (0, 1)")
    if r <= 0:
        raise ConfigError("example S2 requires r > 0")
    eta = nu ** 0.75

    def integrand(l):
        frac = min(l, r) / l
        return l ** (2.0 / 3.0) * frac * frac / l

    pieces = [eta, 1.0]
    if eta < r < 1.0:
        pieces = [eta, r, 1.0]
    total = 0.0
    for a, b in zip(pieces, pieces[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=1e-14, epsrel=1e-13)
        total += val
    return total


def example_s2_closed_form(nu, r):
    """Closed-form branches of the example; the r > 1 branch falls back to quadrature."""
    if not 0 < nu < 1:
        raise ConfigError("example S2 requires nu in (0, 1)")
    if r <= 0:
        raise ConfigError("example S2 requires r > 0")
    eta = nu ** 0.75
    if r <= eta:
        return 0.75 * r * r * (1.0 / nu - 1.0)
    if r <= 1.0:
        return 2.25 * r ** (2.0 / 3.0) - 1.5 * math.sqrt(nu) - 0.75 * r * r
    return example_s2_quadrature(nu, r)


def local_property_counterexample_s2(nu, r):
    """The negative example S2 = nu^{-1} r^2 (local alpha property, no true scaling)."""
    return r * r / nu


# ---------------------------------------------------------------------------
# condition calculus

_W_SERIES = (13.0 / 12.0, -121.0 / 960.0, 1093.0 / 161280.0)


def _w_term(kappa):
    """2 - (2/kappa)(sin(3 kappa/2) - sin(kappa/2)), stable near kappa = 0."""
    kappa = np.asarray(kappa, dtype=float)
    out = np.empty_like(kappa)
    small = np.abs(kappa) < 1e-3
    ks = kappa[small] ** 2
    out[small] = ks * (_W_SERIES[0] + ks * (_W_SERIES[1] + ks * _W_SERIES[2]))
    kb = kappa[~small]
    out[~small] = 2.0 - (2.0 / kb) * (np.sin(1.5 * kb) - np.sin(0.5 * kb))
    return out


def condition_kernel_w(k):
    """Lambda-averaged increment kernel sum_e int_{1/2}^{3/2} |e^{i k.lambda e}-1|^2 dlambda."""
    k = np.atleast_2d(np.asarray(k, dtype=float))
    return float(np.sum(_w_term(k))) if k.shape[0] == 1 else np.sum(_w_term(k), axis=1)


def condition_kernel_w_quad(k):
    """Adaptive-quadrature oracle for the kernel."""
    total = 0.0
    for kappa in np.asarray(k, dtype=float):
        val, _ = integrate.quad(lambda lam: 2.0 * (1.0 - math.cos(kappa * lam)),
                                0.5, 1.5, epsabs=1e-14, epsrel=1e-13)
        total += val
    return total


def sandwich_constants(lattice):
    """Extremes of w(k)/(|k|^2 ^ 1) over the lattice: the equivalence constants."""
    k = lattice.k_half
    w = np.sum(_w_term(k), axis=1)
    denom = np.minimum(lattice.k_sq_half, 1.0)
    ratios = w / denom
    return float(np.min(ratios)), float(np.max(ratios))


def condition_sums(stats):
    """Condition A / A' / B / C sums from mode moments (absolute wavenumbers).

    Thresholds |k| <= 1, |k| > 1, |k| <= 1/2 are evaluated on physical
    wavevectors 2 pi m / L, so low-mode sums are empty (flagged) when L <= 2 pi.
    """
    lat = stats.lattice
    m2 = stats.mode_m2
    knorm = np.sqrt(lat.k_sq_half)
    a_val = np.mean([2.0 * np.sum(4.0 * np.sin(0.5 * lat.k_half[:, j]) ** 2 * m2)
                     for j in range(lat.d)])
    w = np.sum(_w_term(lat.k_half), axis=1)
    low = knorm <= 1.0
    lowhalf = knorm <= 0.5
    return {
        "A_value": float(a_val),
        "Aprime_value": 2.0 * float(np.sum(w * m2)),
        "B_low_enstrophy": 2.0 * float(np.sum(lat.k_sq_half[low] * m2[low])),
        "B_high_energy": 2.0 * float(np.sum(m2[~low])),
        "C_low_enstrophy_half": 2.0 * float(np.sum(lat.k_sq_half[lowhalf] * m2[lowhalf])),
        "no_low_modes": bool(lat.L <= TWO_PI),
    }


def isotropy_directional_check(stats, n_sigma=3.0):
    """Per-direction gradient moments g_j = sum_k k_j^2 m2(k) and spread verdict."""
    lat = stats.lattice
    g = np.array([2.0 * np.sum(lat.k_half[:, j] ** 2 * stats.mode_m2)
                  for j in range(lat.d)])
    gerr = np.array([2.0 * np.sqrt(np.sum((lat.k_half[:, j] ** 2 * stats.mode_m2_stderr) ** 2))
                     for j in range(lat.d)])
    spread = float(np.max(g) - np.min(g))
    tol = n_sigma * float(np.sqrt(gerr[np.argmax(g)] ** 2 + gerr[np.argmin(g)] ** 2))
    grad = stats.scalar("grad_sq")
    partition_rel = abs(float(np.sum(g)) - grad) / grad if grad > 0 else 0.0
    return {
        "g": [float(x) for x in g],
        "g_stderr": [float(x) for x in gerr],
        "spread": spread,
        "tolerance": tol,
        "isotropic": bool(spread <= max(tol, 1e-12 * max(np.max(g), 1e-300))),
        "partition_rel_err": float(partition_rel),
    }


def balance_checks(stats, spec, nu):
    """Stationary balance identities; lhs/rhs/rel_err per identity.

    (i)   nu <grad_sq>       vs amp^2/2 sum |sigma_k|^2           (identity)
    (ii)  nu <curl_grad_sq>  vs amp^2/2 sum |k|^2 |sigma_k|^2 in 2D,
          or mean_stretch + amp^2/2 sum |k|^2 |sigma_k|^2 in 3D   (equality for
          the Galerkin system; inequality direction also flagged)
    (iii) Hoelder pair (grad_sq)^{1/2} vs (stretch_l2_sq)^{1/3}   (reported only;
          the bound holds only under K41 hypotheses)
    """
    amp2 = spec.amp ** 2
    out = []

    lhs = nu * stats.scalar("grad_sq")
    rhs = 0.5 * amp2 * spec.sum_sigma_sq
    out.append(_balance_row("energy_balance", lhs, rhs,
                            nu * stats.stderr("grad_sq"), kind="identity"))

    lhs = nu * stats.scalar("curl_grad_sq")
    err = nu * stats.stderr("curl_grad_sq")
    if stats.lattice.d == 2:
        rhs = 0.5 * amp2 * spec.sum_k2_sigma_sq
        out.append(_balance_row("enstrophy_balance", lhs, rhs, err, kind="identity"))
    else:
        rhs = stats.scalar("mean_stretch") + 0.5 * amp2 * spec.sum_k2_sigma_sq
        err = math.hypot(err, stats.stderr("mean_stretch"))
        row = _balance_row("enstrophy_balance", lhs, rhs, err, kind="equality")
        row["inequality_holds"] = bool(lhs <= rhs + 3.0 * max(err, 1e-300))
        out.append(row)
        if "stretch_l2_sq" in stats.scalars:
            h_l = stats.scalar("grad_sq") ** 0.5
            h_r = stats.scalar("stretch_l2_sq") ** (1.0 / 3.0)
            out.append(_balance_row("hoelder_pair", h_l, h_r, None, kind="reported"))
    return out


def _balance_row(name, lhs, rhs, stderr, kind):
    rel = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    return {"name": name, "lhs": float(lhs), "rhs": float(rhs),
            "rel_err": float(rel),
            "stderr": None if stderr is None else float(stderr),
            "kind": kind}


# ---------------------------------------------------------------------------
# report assembly

@dataclass
class DiagnosticsReport:
    nu: float
    epsilon: float
    eta: float
    theta_diss: float
    s2_profile: list
    taylor: dict
    conditions: dict
    isotropy: dict
    stretching: dict = field(default_factory=dict)
    balance: list = field(default_factory=list)
    window: dict = field(default_factory=dict)

    def __post_init__(self):
        # invariant: eta recomputes exactly from stored fields
        assert abs(self.eta - self.nu ** 0.75 * self.epsilon ** -0.25) <= 1e-12 * self.eta

    def to_dict(self):
        return {
            "nu": self.nu,
            "epsilon": self.epsilon,
            "eta": self.eta,
            "theta_diss": self.theta_diss,
            "s2": [{"r": r, "value": v, "stderr": e} for r, v, e in self.s2_profile],
            "taylor": self.taylor,
            "conditions": self.conditions,
            "isotropy": self.isotropy,
            "stretching": self.stretching,
            "balance": self.balance,
            "window": self.window,
        }


def build_report(stats, nu=None, spec=None, r_grid=None):
    """Full diagnostics of one stats object (nu defaults to the stats' own)."""
    nu = stats.nu if nu is None else nu
    lat = stats.lattice
    summary = dissipation_summary(stats, nu)
    if summary["theta_diss"] > lat.L / TWO_PI * (1 + 1e-12):
        raise ConfigError("theta_diss exceeds the lattice Poincare bound")
    grid = default_r_grid(lat) if r_grid is None else r_grid
    s2 = estimate_s2_profile(stats, grid)
    taylor = taylor_check(s2, stats.scalar("grad_sq"), summary["theta_diss"], lat.d)
    stretching = {}
    if "mean_stretch" in stats.scalars:
        stretching = {
            "mean": stats.scalar("mean_stretch"),
            "mean_stderr": stats.stderr("mean_stretch"),
        }
        if "stretch_l2_sq" in stats.scalars:
            stretching["l2_sq"] = stats.scalar("stretch_l2_sq")
            stretching["hoelder_lhs"] = stats.scalar("grad_sq") ** 0.5
            stretching["hoelder_rhs"] = stats.scalar("stretch_l2_sq") ** (1.0 / 3.0)
    balance = balance_checks(stats, spec, nu) if spec is not None else []
    return DiagnosticsReport(
        nu=float(nu),
        epsilon=summary["epsilon"],
        eta=summary["eta"],
        theta_diss=summary["theta_diss"],
        s2_profile=s2,
        taylor=taylor,
        conditions=condition_sums(stats),
        isotropy=isotropy_directional_check(stats),
        stretching=stretching,
        balance=balance,
    )
