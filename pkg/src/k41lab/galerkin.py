"""Galerkin-truncated stochastic Navier-Stokes integration and time-averaged statistics.

The truncated system for the canonical-half coefficient array C is

    dC_k = (-nu |k|^2 C_k - B_hat_k(C)) dt + amp sigma_k dbeta_k,

with B(u,u) the Leray-projected Fourier transform of (u . grad) u.  Two
steppers are provided: an exponential (exact OU) integrator, which is the
production default, and Euler-Maruyama, retained because it commutes exactly
with the discrete scaling transformation used by the pathwise verifier.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalBlowupError
from .noise import NoiseSpec, apply_sigma, sample_scaled, standard_complex_normal
from .rng import stream
from .spectral import (SpectralField, analyze_from_grid, build_lattice, leray_project,
                       stretching_integrals, synthesize_gradient_on_grid,
                       synthesize_on_grid, _curl_mag_sq)


# ---------------------------------------------------------------------------
# nonlinear term

def _direct_plan(lat):
    """Pair tables for the O(N^2) convolution, cached on the lattice."""
    if "direct" in lat._caches:
        return lat._caches["direct"]
    n, d = lat.n, lat.d
    full = np.vstack([lat.half_modes, -lat.half_modes])
    dense = -np.ones((2 * n + 1,) * d, dtype=np.int64)
    dense[tuple((lat.half_modes + n).T)] = np.arange(lat.n_half)
    pairs = []
    nsq = n * n
    for a in range(len(full)):
        s = full[a] + full
        inside = np.all(np.abs(s) <= n, axis=1) & (np.sum(s * s, axis=1) <= nsq)
        l_idx = np.nonzero(inside)[0]
        k_idx = dense[tuple((s[l_idx] + n).T)]
        keep = k_idx >= 0
        pairs.append((l_idx[keep].astype(np.int32), k_idx[keep].astype(np.int32)))
    lat._caches["direct"] = (full, pairs)
    return lat._caches["direct"]


def nonlinear_direct(u):
    """pi^(n) B(u,u) by explicit convolution over mode pairs (oracle route).

    Coefficient of (u.grad)u at canonical k:  -i sum_{h+l=k} (l . u_hat(h)) u_hat(l),
    h, l on the truncated lattice; then Leray-projected.
    """
    lat = u.lattice
    full, pairs = _direct_plan(lat)
    cf = np.vstack([u.coeffs, np.conj(u.coeffs)])
    kfull = (2.0 * np.pi / lat.L) * full.astype(float)
    out = np.zeros((lat.n_half, lat.d), dtype=complex)
    for a in range(len(full)):
        l_idx, k_idx = pairs[a]
        if len(l_idx) == 0:
            continue
        scal = kfull[l_idx] @ cf[a]
        out[k_idx] += scal[:, None] * cf[l_idx]
    return leray_project(SpectralField(lat, -1j * out))


def nonlinear_fft(u):
    """pi^(n) B(u,u) pseudo-spectrally on a 3n+1 grid (alias-free for |m| <= n)."""
    lat = u.lattice
    M = 3 * lat.n + 1
    ug = synthesize_on_grid(u, M)
    dug = synthesize_gradient_on_grid(u, M)
    w = np.einsum("i...,ij...->j...", ug, dug)
    coeffs = analyze_from_grid(lat, w)
    return leray_project(SpectralField(lat, coeffs))


def nonlinear_term(u, method="pseudospectral"):
    if method == "pseudospectral":
        return nonlinear_fft(u)
    if method == "direct":
        return nonlinear_direct(u)
    raise ConfigError(f"unknown nonlinearity method {method!r}")


# ---------------------------------------------------------------------------
# configuration

STEPPERS = ("exponential_euler", "euler_maruyama")
NONLINEARITIES = ("pseudospectral", "direct")


@dataclass
class SimulationConfig:
    d: int
    L: float
    n: int
    nu: float
    noise: NoiseSpec
    dt: float
    t_burn: float
    t_avg: float
    seed: int = 0
    stepper: str = "exponential_euler"
    nonlinearity: str = "pseudospectral"
    n_batches: int = 20
    stretch_every: int = 1
    linear_only: bool = False

    def __post_init__(self):
        if self.nu <= 0:
            raise ConfigError("nu must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.t_avg <= 0:
            raise ConfigError("t_avg must be positive")
        if self.t_burn < 0:
            raise ConfigError("t_burn must be >= 0")
        if self.stepper not in STEPPERS:
            raise ConfigError(f"stepper must be one of {STEPPERS}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError(f"nonlinearity must be one of {NONLINEARITIES}")
        lat = self.noise.lattice
        if (lat.d, lat.L, lat.n) != (self.d, self.L, self.n):
            raise ConfigError("noise spec lattice does not match (d, L, n)")
        if self.stepper == "euler_maruyama":
            kmax_sq = (2.0 * np.pi * self.n / self.L) ** 2
            if self.dt * self.nu * kmax_sq > 2.0:
                raise ConfigError(
                    f"euler_maruyama stability: dt*nu*(2 pi n / L)^2 = "
                    f"{self.dt * self.nu * kmax_sq:.3g} > 2")

    @property
    def lattice(self):
        return self.noise.lattice

    @property
    def n_steps(self):
        return int(round((self.t_burn + self.t_avg) / self.dt))

    @property
    def n_burn(self):
        return int(round(self.t_burn / self.dt))


def default_dt(d, L, n, nu, spec):
    """Stability-guard heuristic: 0.1 / (nu (2 pi n/L)^2 + n * u_rms-estimate)."""
    visc = nu * (2.0 * np.pi * n / L) ** 2
    energy = 2.0 * np.sum(spec.amp**2 * spec.frob_sq_half
                          / (2.0 * nu * spec.lattice.k_sq_half))
    u_rms = float(np.sqrt(energy))
    return 0.1 / (visc + n * u_rms)


# ---------------------------------------------------------------------------
# steppers

class GalerkinIntegrator:
    """Advances the canonical-half coefficient array one step at a time."""

    def __init__(self, config):
        self.config = config
        lat = config.lattice
        self.lattice = lat
        ksq = lat.k_sq_half
        dt, nu = config.dt, config.nu
        self.decay = np.exp(-nu * ksq * dt)
        self.phi1dt = (1.0 - self.decay) / (nu * ksq)
        self.ou_scale = np.sqrt((1.0 - self.decay**2) / (2.0 * nu * ksq))
        if config.linear_only:
            self._nonlin = None
        else:
            self._nonlin = (nonlinear_fft if config.nonlinearity == "pseudospectral"
                            else nonlinear_direct)

    def noise_scale(self):
        """Per-mode scale replacing sqrt(dt) in the increment draw."""
        if self.config.stepper == "euler_maruyama":
            return np.sqrt(self.config.dt)
        return self.ou_scale

    def bhat(self, coeffs):
        if self._nonlin is None:
            return 0.0
        return self._nonlin(SpectralField(self.lattice, coeffs)).coeffs

    def step(self, coeffs, applied_noise, step_index=0):
        """One step; applied_noise is amp * sigma_k (scaled complex Gaussian)."""
        cfg = self.config
        b = self.bhat(coeffs)
        if cfg.stepper == "euler_maruyama":
            new = coeffs + cfg.dt * (-cfg.nu * self.lattice.k_sq_half[:, None] * coeffs - b) \
                + applied_noise
        else:
            nl = self.phi1dt[:, None] * b if self._nonlin is not None else 0.0
            new = self.decay[:, None] * coeffs - nl + applied_noise
        # threshold keeps downstream |.|^2 accumulators finite too
        if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > 1e150:
            raise NumericalBlowupError(step_index)
        return new


class Trajectory:
    """Lazy single pass over one trajectory from u(0) = 0.

    steps() yields (step_index, coeffs) starting at (0, zeros); the yielded
    array is live scratch space, so consumers must reduce immediately.
    """

    def __init__(self, config, driven_by=None, record_noise=False,
                 trajectory_index=0, initial=None):
        if driven_by is not None and config.stepper != "euler_maruyama":
            raise ConfigError("recorded-increment driving requires euler_maruyama "
                              "(the exponential integrator's noise is not a function "
                              "of the plain Brownian increments)")
        self.config = config
        self.integrator = GalerkinIntegrator(config)
        self.driven_by = driven_by
        self.record_noise = record_noise
        self.trajectory_index = trajectory_index
        self.initial = initial
        self.recorded = None
        self.final = None

    def steps(self, n_steps=None):
        cfg = self.config
        lat = cfg.lattice
        total = cfg.n_steps if n_steps is None else n_steps
        if self.initial is not None:
            coeffs = np.array(self.initial.coeffs, dtype=complex)
        else:
            coeffs = np.zeros((lat.n_half, lat.d), dtype=complex)
        rng = stream(cfg.seed, "traj", self.trajectory_index)
        scale = self.integrator.noise_scale()
        rec = [] if self.record_noise else None
        yield 0, coeffs
        for i in range(total):
            if self.driven_by is not None:
                raw = self.driven_by.values[i]
                applied = apply_sigma(cfg.noise, raw)
            elif self.record_noise:
                z = standard_complex_normal(rng, (lat.n_half, lat.d))
                raw = np.sqrt(cfg.dt) * z
                rec.append(raw)
                applied = apply_sigma(cfg.noise, raw)
            else:
                applied = sample_scaled(cfg.noise, scale, rng)
            coeffs = self.integrator.step(coeffs, applied, step_index=i + 1)
            yield i + 1, coeffs
        if self.record_noise:
            from .noise import RecordedNoise
            self.recorded = RecordedNoise(lat, cfg.dt, np.array(rec))
        self.final = SpectralField(lat, coeffs.copy())


def run_trajectory(config, driven_by=None, record_noise=False, trajectory_index=0,
                   initial=None):
    """Trajectory handle from u(0) = 0 over t_burn + t_avg; deterministic in seed."""
    return Trajectory(config, driven_by=driven_by, record_noise=record_noise,
                      trajectory_index=trajectory_index, initial=initial)


# ---------------------------------------------------------------------------
# time-averaged statistics (Krylov-Bogoliubov)

@dataclass
class EnsembleStats:
    """Time-averaged second moments per mode plus scalar functionals.

    mode_m2[i] estimates E|u_hat(k_i)|^2 at canonical half mode i; moments at
    mirrored modes are equal by reality.  Scalars carry (mean, stderr) pairs
    from batch means.
    """

    lattice: object
    nu: float
    amp: float
    mode_m2: np.ndarray
    mode_m2_stderr: np.ndarray
    scalars: dict
    n_samples: int
    n_batches: int
    provenance: dict = field(default_factory=dict)

    def m2(self, m):
        i, _ = self.lattice.index_of(m)
        return float(self.mode_m2[i])

    def scalar(self, name):
        return self.scalars[name][0]

    def stderr(self, name):
        return self.scalars[name][1]

    def to_dict(self):
        lat = self.lattice
        return {
            "lattice": {"d": lat.d, "L": lat.L, "n": lat.n},
            "nu": self.nu,
            "amp": self.amp,
            "modes": [list(map(int, m)) for m in lat.half_modes],
            "mode_m2": list(map(float, self.mode_m2)),
            "mode_m2_stderr": list(map(float, self.mode_m2_stderr)),
            "scalars": {k: [v[0], v[1]] for k, v in self.scalars.items()},
            "n_samples": self.n_samples,
            "n_batches": self.n_batches,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data):
        latd = data["lattice"]
        lat = build_lattice(latd["d"], latd["L"], latd["n"])
        want = [list(map(int, m)) for m in lat.half_modes]
        if data["modes"] != want:
            raise ConfigError("stats file mode list does not match lattice order")
        scalars = {k: (float(v[0]), float(v[1])) for k, v in data["scalars"].items()}
        return cls(lattice=lat, nu=float(data["nu"]), amp=float(data["amp"]),
                   mode_m2=np.array(data["mode_m2"], dtype=float),
                   mode_m2_stderr=np.array(data["mode_m2_stderr"], dtype=float),
                   scalars=scalars, n_samples=int(data["n_samples"]),
                   n_batches=int(data["n_batches"]),
                   provenance=data.get("provenance", {}))


_SCALARS_2D = ("energy", "grad_sq", "hess_sq", "curl_grad_sq")
_SCALARS_3D = _SCALARS_2D + ("mean_stretch", "stretch_l2_sq")


def time_average_stats(trajectory, progress=None):
    """Consume a trajectory and average over (t_burn, t_burn + t_avg].

    Batch-means standard errors over config.n_batches contiguous batches; the
    reduction order is the step order, independent of worker scheduling.
    """
    cfg = trajectory.config
    lat = cfg.lattice
    n_burn, n_steps = cfg.n_burn, cfg.n_steps
    n_avg = n_steps - n_burn
    nb = min(cfg.n_batches, n_avg)
    do_stretch = lat.d == 3 and not cfg.linear_only

    m2_sum = np.zeros((nb, lat.n_half))
    sc_sum = {name: np.zeros(nb) for name in _SCALARS_2D}
    st_sum = {name: np.zeros(nb) for name in ("mean_stretch", "stretch_l2_sq")}
    counts = np.zeros(nb, dtype=np.int64)
    st_counts = np.zeros(nb, dtype=np.int64)
    ksq = lat.k_sq_half

    for i, coeffs in trajectory.steps():
        if i <= n_burn:
            continue
        b = min((i - n_burn - 1) * nb // n_avg, nb - 1)
        mag = np.sum(np.abs(coeffs) ** 2, axis=1)
        m2_sum[b] += mag
        sc_sum["energy"][b] += 2.0 * np.sum(mag)
        sc_sum["grad_sq"][b] += 2.0 * np.sum(ksq * mag)
        sc_sum["hess_sq"][b] += 2.0 * np.sum(ksq**2 * mag)
        sc_sum["curl_grad_sq"][b] += 2.0 * np.sum(ksq * _curl_mag_sq(lat, coeffs))
        counts[b] += 1
        if do_stretch and (i - n_burn - 1) % cfg.stretch_every == 0:
            st = stretching_integrals(SpectralField(lat, coeffs))
            st_sum["mean_stretch"][b] += st["mean_stretch"]
            st_sum["stretch_l2_sq"][b] += st["stretch_l2_sq"]
            st_counts[b] += 1
        if progress is not None and i % 2000 == 0:
            progress(i, n_steps)

    def reduce(batch_sums, batch_counts):
        means = batch_sums / np.maximum(batch_counts, 1)
        mean = float(np.mean(means)) if means.ndim == 1 else np.mean(means, axis=0)
        if len(batch_counts) > 1:
            err = np.std(means, axis=0, ddof=1) / np.sqrt(len(batch_counts))
        else:
            err = np.zeros_like(mean) if np.ndim(mean) else 0.0
        return mean, err

    mode_m2, mode_err = reduce(m2_sum, counts[:, None])
    scalars = {}
    for name in _SCALARS_2D:
        m, e = reduce(sc_sum[name], counts)
        scalars[name] = (float(m), float(e))
    if do_stretch:
        for name in ("mean_stretch", "stretch_l2_sq"):
            m, e = reduce(st_sum[name], st_counts)
            scalars[name] = (float(m), float(e))

    return EnsembleStats(
        lattice=lat, nu=cfg.nu, amp=cfg.noise.amp,
        mode_m2=mode_m2, mode_m2_stderr=mode_err, scalars=scalars,
        n_samples=int(np.sum(counts)), n_batches=nb,
        provenance={
            "d": lat.d, "L": lat.L, "n": lat.n, "nu": cfg.nu, "amp": cfg.noise.amp,
            "dt": cfg.dt, "t_burn": cfg.t_burn, "t_avg": cfg.t_avg,
            "seed": cfg.seed, "stepper": cfg.stepper,
            "sum_sigma_sq": cfg.noise.sum_sigma_sq,
            "sum_k2_sigma_sq": cfg.noise.sum_k2_sigma_sq,
        })


def stokes_stats(spec, nu):
    """Analytic EnsembleStats of the stationary Stokes field (zero stderr).

    mean_stretch is exactly zero in 3D: the integrand is cubic in a centered
    Gaussian field.  stretch_l2_sq (a sixth moment) is not modeled.
    """
    from .stokes import mode_moments
    lat = spec.lattice
    m2 = mode_moments(spec, nu)
    ksq = lat.k_sq_half
    scalars = {
        "energy": (2.0 * float(np.sum(m2)), 0.0),
        "grad_sq": (2.0 * float(np.sum(ksq * m2)), 0.0),
        "hess_sq": (2.0 * float(np.sum(ksq**2 * m2)), 0.0),
        "curl_grad_sq": (2.0 * float(np.sum(ksq**2 * m2)), 0.0),
    }
    if lat.d == 3:
        scalars["mean_stretch"] = (0.0, 0.0)
    return EnsembleStats(
        lattice=lat, nu=nu, amp=spec.amp, mode_m2=m2,
        mode_m2_stderr=np.zeros_like(m2), scalars=scalars,
        n_samples=0, n_batches=0,
        provenance={"d": lat.d, "L": lat.L, "n": lat.n, "nu": nu, "amp": spec.amp,
                    "analytic": "stokes",
                    "sum_sigma_sq": spec.sum_sigma_sq,
                    "sum_k2_sigma_sq": spec.sum_k2_sigma_sq})
