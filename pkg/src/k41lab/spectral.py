"""Wavenumber lattices, spectral velocity fields, and exact spectral functionals.

Convention: a real, zero-mean, periodic velocity field on the box [0, L]^d is

    u(x) = sum_k u_hat(k) exp(-i k . x),    k = (2 pi / L) m,  m integer, 0 < |m| <= n,

with u_hat(-k) = conj(u_hat(k)).  Differentiation multiplies coefficients by
-i k.  Only canonical representatives (first nonzero integer coordinate
positive) are stored; the mirrored half is synthesized on demand.  All
per-volume integrals use the normalized L^{-d} * integral convention, so
Parseval reads  L^{-d} int |u|^2 dx = sum_k |u_hat(k)|^2.
"""

import itertools

import numpy as np

from .errors import ConfigError, UnsupportedDimensionError

TWO_PI = 2.0 * np.pi


def _enumerate_modes(d, n):
    """All integer vectors m with 0 < |m| <= n, lexicographic order."""
    out = []
    for m in itertools.product(range(-n, n + 1), repeat=d):
        s = sum(c * c for c in m)
        if 0 < s <= n * n:
            out.append(m)
    return np.array(out, dtype=np.int64)


def _is_canonical(modes):
    """True where the first nonzero coordinate of each row is positive."""
    flags = np.zeros(len(modes), dtype=bool)
    decided = np.zeros(len(modes), dtype=bool)
    for j in range(modes.shape[1]):
        col = modes[:, j]
        flags |= (~decided) & (col > 0)
        decided |= col != 0
    return flags


class WaveLattice:
    """Truncated wavenumber lattice of the periodic box [0, L]^d.

    modes      -- full lattice, lexicographic on integer coordinates m
    half_modes -- canonical representatives only (first nonzero coord > 0)
    """

    def __init__(self, d, L, n):
        if d not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {d}")
        if not (L > 0):
            raise ConfigError(f"box size L must be positive, got {L}")
        if not (isinstance(n, (int, np.integer)) and n >= 1):
            raise ConfigError(f"truncation index n must be an integer >= 1, got {n}")
        self.d = int(d)
        self.L = float(L)
        self.n = int(n)
        self.modes = _enumerate_modes(self.d, self.n)
        self.half_modes = self.modes[_is_canonical(self.modes)]
        self.k_half = (TWO_PI / self.L) * self.half_modes.astype(float)
        self.k_sq_half = np.sum(self.k_half**2, axis=1)
        self._index = {tuple(m): i for i, m in enumerate(self.half_modes)}
        self._caches = {}

    @property
    def n_half(self):
        return len(self.half_modes)

    @property
    def n_modes(self):
        return len(self.modes)

    def index_of(self, m):
        """(half-index, conjugate flag) of integer mode m."""
        t = tuple(int(c) for c in m)
        if t in self._index:
            return self._index[t], False
        tneg = tuple(-c for c in t)
        if tneg in self._index:
            return self._index[tneg], True
        raise KeyError(f"mode {t} not on lattice")

    def same_modes(self, other):
        return self.d == other.d and self.n == other.n

    def __eq__(self, other):
        return (isinstance(other, WaveLattice) and self.same_modes(other)
                and self.L == other.L)

    def __hash__(self):
        return hash((self.d, self.L, self.n))

    def __repr__(self):
        return f"WaveLattice(d={self.d}, L={self.L}, n={self.n}, modes={self.n_modes})"


def build_lattice(d, L, n):
    """Lattice of all wavevectors k = (2 pi / L) m with 0 < |m| <= n."""
    return WaveLattice(d, L, n)


class SpectralField:
    """Divergence-free-capable spectral field: canonical-half coefficients.

    coeffs has shape (n_half, d), complex; row i is u_hat at half_modes[i].
    Values are immutable by convention: operations return new fields.
    """

    def __init__(self, lattice, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (lattice.n_half, lattice.d):
            raise ConfigError(
                f"coefficient array shape {coeffs.shape} does not match lattice "
                f"({lattice.n_half}, {lattice.d})")
        self.lattice = lattice
        self.coeffs = coeffs

    @classmethod
    def zero(cls, lattice):
        return cls(lattice, np.zeros((lattice.n_half, lattice.d), dtype=complex))

    def copy(self):
        return SpectralField(self.lattice, self.coeffs.copy())

    def coeff(self, m):
        """u_hat at integer mode m (conjugated when m is non-canonical)."""
        i, conj = self.lattice.index_of(m)
        c = self.coeffs[i]
        return np.conj(c) if conj else c.copy()

    def max_divergence(self):
        """Relative incompressibility residual.

        Per-mode |k . u_hat| / (|k| |u_hat|) over modes carrying at least
        1e-9 of the peak modal amplitude, combined with the field-level ratio
        max_k |k . u_hat| / max_k (|k| |u_hat|).  Modes at rounding-dust
        amplitude are excluded from the per-mode test, where the relative
        measure is meaningless.
        """
        lat = self.lattice
        dots = np.abs(np.sum(lat.k_half * self.coeffs, axis=1))
        amps = np.linalg.norm(self.coeffs, axis=1)
        scale = np.sqrt(lat.k_sq_half) * amps
        top = float(np.max(scale)) if len(scale) else 0.0
        if top == 0.0:
            return 0.0
        significant = amps > 1e-9 * float(np.max(amps))
        per_mode = float(np.max(dots[significant] / scale[significant])) \
            if np.any(significant) else 0.0
        return max(per_mode, float(np.max(dots)) / top)

    def __add__(self, other):
        return SpectralField(self.lattice, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralField(self.lattice, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.lattice, self.coeffs * scalar)

    __rmul__ = __mul__


class SpectralScalar:
    """Scalar spectral function on a lattice (the 2D curl lives here)."""

    def __init__(self, lattice, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (lattice.n_half,):
            raise ConfigError("scalar coefficient array does not match lattice")
        self.lattice = lattice
        self.coeffs = coeffs


def leray_project(u):
    """Per-mode orthogonal projection u_hat <- (I - k k^T/|k|^2) u_hat."""
    lat = u.lattice
    dots = np.sum(lat.k_half * u.coeffs, axis=1)
    new = u.coeffs - lat.k_half * (dots / lat.k_sq_half)[:, None]
    return SpectralField(lat, new)


def evaluate(u, x):
    """Pointwise value u(x); x is wrapped periodically."""
    lat = u.lattice
    x = np.asarray(x, dtype=float) % lat.L
    phase = np.exp(-1j * (lat.k_half @ x))
    total = phase @ u.coeffs
    # mirrored half contributes the conjugate, so the sum is 2 Re(.) exactly
    return 2.0 * np.real(total)


def field_norms(u):
    """Quadratic spectral functionals of a single field (normalized integrals).

    energy       = sum |u_hat|^2            = L^-d int |u|^2
    grad_sq      = sum |k|^2 |u_hat|^2      = L^-d int |Du|^2
    hess_sq      = sum |k|^4 |u_hat|^2      = L^-d int |D^2 u|^2
    curl_sq      = sum |k x u_hat|^2 (3D) or scalar-curl analog (2D)
    curl_grad_sq = sum |k|^2 |k x u_hat|^2
    """
    lat = u.lattice
    mag = np.sum(np.abs(u.coeffs) ** 2, axis=1)
    curl_mag = _curl_mag_sq(lat, u.coeffs)
    return {
        "energy": 2.0 * float(np.sum(mag)),
        "grad_sq": 2.0 * float(np.sum(lat.k_sq_half * mag)),
        "hess_sq": 2.0 * float(np.sum(lat.k_sq_half**2 * mag)),
        "curl_sq": 2.0 * float(np.sum(curl_mag)),
        "curl_grad_sq": 2.0 * float(np.sum(lat.k_sq_half * curl_mag)),
    }


def _curl_mag_sq(lat, coeffs):
    """|k x u_hat|^2 per canonical mode (scalar-curl modulus squared in 2D)."""
    k = lat.k_half
    if lat.d == 3:
        cr = np.cross(k, coeffs)
        return np.sum(np.abs(cr) ** 2, axis=1)
    w = k[:, 0] * coeffs[:, 1] - k[:, 1] * coeffs[:, 0]
    return np.abs(w) ** 2


def curl(u):
    """curl u: vector field (d=3) or scalar spectral function (d=2)."""
    lat = u.lattice
    if lat.d == 3:
        return SpectralField(lat, -1j * np.cross(lat.k_half, u.coeffs))
    w = -1j * (lat.k_half[:, 0] * u.coeffs[:, 1] - lat.k_half[:, 1] * u.coeffs[:, 0])
    return SpectralScalar(lat, w)


def mollify(u, eps):
    """Gaussian spectral mollifier: u_hat <- exp(-|eps k|^2 / 2) u_hat."""
    if eps < 0:
        raise ConfigError("mollification scale must be >= 0")
    if eps == 0.0:
        return u.copy()
    mult = np.exp(-0.5 * (eps**2) * u.lattice.k_sq_half)
    return SpectralField(u.lattice, u.coeffs * mult[:, None])


def s2_spectral(u, r, e):
    """Squared increment L^-d int |u(x + r e) - u(x)|^2 dx for coordinate direction e."""
    lat = u.lattice
    if r < 0:
        raise ConfigError("separation r must be >= 0")
    axis = _direction_axis(e, lat.d)
    mag = np.sum(np.abs(u.coeffs) ** 2, axis=1)
    kern = 4.0 * np.sin(0.5 * lat.k_half[:, axis] * r) ** 2
    return 2.0 * float(np.sum(kern * mag))


def _direction_axis(e, d):
    if isinstance(e, (int, np.integer)):
        axis = int(e)
    else:
        vec = np.asarray(e, dtype=float)
        nz = np.nonzero(vec)[0]
        if len(nz) != 1 or not np.isclose(abs(vec[nz[0]]), 1.0):
            raise ConfigError("direction must be a coordinate unit vector")
        axis = int(nz[0])
    if not 0 <= axis < d:
        raise ConfigError(f"direction index {axis} out of range for d={d}")
    return axis


# ---------------------------------------------------------------------------
# grid synthesis / analysis

def grid_size(lattice, product_order=1):
    """Smallest grid rendering quadratures of `product_order`-fold products exact."""
    return product_order * 2 * lattice.n + 1


def _embed_full(lattice, coeffs, grid_n):
    """Scatter canonical + mirrored coefficients into a d-dim FFT array per component."""
    d = lattice.d
    shape = (grid_n,) * d
    out = np.zeros((d,) + shape, dtype=complex)
    idx_pos = tuple(lattice.half_modes[:, j] % grid_n for j in range(d))
    idx_neg = tuple((-lattice.half_modes[:, j]) % grid_n for j in range(d))
    for comp in range(d):
        out[comp][idx_pos] = coeffs[:, comp]
        out[comp][idx_neg] = np.conj(coeffs[:, comp])
    return out


def synthesize_on_grid(u, grid_n=None):
    """Real grid values of u on the uniform grid x_j = j L / M, shape (d, M, ..., M).

    Exact synthesis: grid values equal evaluate(u, x_j) to rounding.
    """
    lat = u.lattice
    M = grid_n or grid_size(lat)
    if M < 2 * lat.n + 1:
        raise ConfigError("grid too coarse for exact synthesis")
    spec = _embed_full(lat, u.coeffs, M)
    axes = tuple(range(1, lat.d + 1))
    vals = np.fft.fftn(spec, axes=axes)
    icap = float(np.max(np.abs(vals.imag)))
    rcap = float(np.max(np.abs(vals.real)))
    if icap > 1e-10 * rcap + 1e-14:
        raise ValueError(f"synthesis imaginary residual {icap} exceeds contract")
    return vals.real


def synthesize_gradient_on_grid(u, grid_n=None):
    """Grid values of du_j/dx_i, shape (d, d, M, ..., M) indexed [i, j]."""
    lat = u.lattice
    M = grid_n or grid_size(lat)
    d = lat.d
    shape = (M,) * d
    out = np.empty((d, d) + shape, dtype=float)
    axes = tuple(range(len(shape)))
    for i in range(d):
        mult = -1j * lat.k_half[:, i]
        spec = _embed_full(lat, u.coeffs * mult[:, None], M)
        for j in range(d):
            out[i, j] = np.fft.fftn(spec[j], axes=axes).real
    return out


def analyze_from_grid(lattice, grid_vals):
    """Canonical-half coefficients of real grid data (exact for band-limited input)."""
    d = lattice.d
    vals = np.asarray(grid_vals)
    M = vals.shape[-1]
    axes = tuple(range(vals.ndim - d, vals.ndim))
    spec = np.fft.ifftn(vals, axes=axes)
    idx = tuple(lattice.half_modes[:, j] % M for j in range(d))
    if vals.ndim == d:
        return spec[idx]
    return np.stack([spec[comp][idx] for comp in range(vals.shape[0])], axis=1)


def stretching_integrals(u):
    """Vortex-stretching functionals of a 3D field, pseudo-spectrally.

    mean_stretch  = L^-d int <S_u curl u, curl u> dx,  S_u = (Du + Du^T)/2
    stretch_l2_sq = L^-d int <S_u curl u, curl u>^2 dx

    The cubic integrand has modes up to 3n and its square up to 6n, so a
    (6n+1)-point grid makes both quadratures exact for band-limited input.
    """
    lat = u.lattice
    if lat.d != 3:
        raise UnsupportedDimensionError(
            "vortex stretching vanishes identically in 2D (curl u is aligned with "
            "the zero eigenvector of S_u); only d=3 is supported")
    M = grid_size(lat, product_order=3)
    du = synthesize_gradient_on_grid(u, M)          # du[i, j] = d u_j / d x_i
    xi = np.stack([du[1, 2] - du[2, 1],
                   du[2, 0] - du[0, 2],
                   du[0, 1] - du[1, 0]])
    s = np.zeros_like(xi[0])
    for i in range(3):
        for j in range(3):
            s += 0.5 * (du[i, j] + du[j, i]) * xi[j] * xi[i]
    return {
        "mean_stretch": float(np.mean(s)),
        "stretch_l2_sq": float(np.mean(s**2)),
    }


# ---------------------------------------------------------------------------
# inner products and field constructors

def inner_h(u, v):
    """<u, v>_H = L^-d int u . v dx = sum_k u_hat(k) . conj(v_hat(k))."""
    return 2.0 * float(np.real(np.sum(u.coeffs * np.conj(v.coeffs))))


def inner_a(u, v):
    """<A u, v>_H = sum_k |k|^2 u_hat(k) . conj(v_hat(k))."""
    lat = u.lattice
    per_mode = np.real(np.sum(u.coeffs * np.conj(v.coeffs), axis=1))
    return 2.0 * float(np.sum(lat.k_sq_half * per_mode))


def inner_curl(u, v):
    """<curl u, curl v>_H for fields of the same lattice."""
    lat = u.lattice
    if lat.d == 3:
        cu = np.cross(lat.k_half, u.coeffs)
        cv = np.cross(lat.k_half, v.coeffs)
        per_mode = np.real(np.sum(cu * np.conj(cv), axis=1))
    else:
        wu = lat.k_half[:, 0] * u.coeffs[:, 1] - lat.k_half[:, 1] * u.coeffs[:, 0]
        wv = lat.k_half[:, 0] * v.coeffs[:, 1] - lat.k_half[:, 1] * v.coeffs[:, 0]
        per_mode = np.real(wu * np.conj(wv))
    return 2.0 * float(np.sum(per_mode))


def random_divergence_free(lattice, rng, spectrum=None):
    """Random divergence-free field; |u_hat(k)| ~ spectrum(|k|) (default |k|^-2)."""
    if spectrum is None:
        spectrum = lambda k: k**-2.0
    amp = spectrum(np.sqrt(lattice.k_sq_half))
    raw = (rng.standard_normal((lattice.n_half, lattice.d))
           + 1j * rng.standard_normal((lattice.n_half, lattice.d)))
    return leray_project(SpectralField(lattice, raw * amp[:, None]))
