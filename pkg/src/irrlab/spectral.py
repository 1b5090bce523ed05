"""Oscillatory integrals Phi, occupation densities and Fourier-Lebesgue norms.

Phi^w_{s,t}(xi) = int_s^t exp(i xi . w_r) dr is evaluated exactly for the
piecewise-linear interpolant of the samples: on a segment the phase is linear,
so the integral has a closed form. The only error left is the interpolation of
w itself.
"""
import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as Gamma

from .errors import InputError, ResourceError


# --- frequency sets and interval families ---------------------------------

def fibonacci_sphere(m):
    k = np.arange(m) + 0.5
    z = 1 - 2 * k / m
    r = np.sqrt(1 - z * z)
    phi = np.pi * (3 - np.sqrt(5)) * k
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def default_directions(d):
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        a = 2 * np.pi * np.arange(16) / 16
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    if d == 3:
        return fibonacci_sphere(32)
    raise InputError("dimension must be 1..3")


@dataclass(frozen=True)
class FrequencySet:
    magnitudes: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.magnitudes, float)
        u = np.atleast_2d(np.asarray(self.directions, float))
        if q.ndim != 1 or q.size == 0 or np.any(np.diff(q) <= 0) or q[0] <= 0:
            raise InputError("magnitudes must be positive and strictly increasing")
        if np.max(np.abs(np.linalg.norm(u, axis=1) - 1)) > 1e-12:
            raise InputError("directions must be unit vectors")
        object.__setattr__(self, "magnitudes", q)
        object.__setattr__(self, "directions", u)

    @property
    def dim(self):
        return self.directions.shape[1]

    def vector(self, j, k):
        return self.magnitudes[j] * self.directions[k]


def frequency_set(d, q_min=1.0, J=18, random_directions=0, seed=None, directions=None):
    """Half-octave ladder q_j = q_min 2^{j/2}, j = 0..J, with the fixed direction set.

    ``random_directions`` > 0 appends that many uniformly random unit vectors
    (d >= 2), drawn from ``seed`` for auditing isotropy.
    """
    q = q_min * 2.0 ** (np.arange(J + 1) / 2)
    u = default_directions(d) if directions is None else np.atleast_2d(directions)
    if random_directions and d > 1:
        from .rng import Seed, stream
        g = stream(seed or Seed(), 0xD1)
        extra = g.standard_normal((random_directions, d))
        u = np.concatenate([u, extra / np.linalg.norm(extra, axis=1, keepdims=True)])
    return FrequencySet(q, u)


@dataclass(frozen=True)
class IntervalFamily:
    L: int = 8

    def check(self, path):
        if self.L < 0 or path.n % (1 << self.L):
            raise InputError(f"n = {path.n} is not divisible by 2^L = {1 << self.L}")

    def lengths(self, T):
        return T / 2.0 ** np.arange(self.L + 1)


# --- the exact segment quadrature ------------------------------------------

def _phase(values, xi):
    p = values[:, 0] * xi[0]
    for c in range(1, values.shape[1]):
        p = p + values[:, c] * xi[c]
    return p


def _segments(phase, dt):
    """Exact integrals of exp(i(a + b r)) over each segment of length dt."""
    e = np.exp(1j * phase)
    db = phase[1:] - phase[:-1]
    ad = np.abs(db)
    out = np.empty(db.size, complex)
    big = ad >= 0.1
    out[big] = (e[1:][big] - e[:-1][big]) / (1j * db[big]) * dt
    mid = (ad >= 1e-8) & ~big
    if mid.any():
        x = db[mid]
        h = np.sin(0.5 * x)
        out[mid] = e[:-1][mid] * ((-2 * h * h + 1j * np.sin(x)) / (1j * x)) * dt
    tiny = ad < 1e-8
    if tiny.any():
        out[tiny] = dt * e[:-1][tiny] * (1 + 0.5j * db[tiny])
    return out


def _prefix(path, xi):
    """Phi_{0,t_k}(xi) for every node k (length n+1)."""
    seg = _segments(_phase(path.values, xi), path.dt)
    out = np.empty(seg.size + 1, complex)
    out[0] = 0.0
    np.cumsum(seg, out=out[1:])
    return out


def _err_estimate(path, xi, s, t):
    inc = np.linalg.norm(np.diff(path.values[s: t + 1], axis=0), axis=1)
    return min(2.0 * (t - s) * path.dt, float(np.linalg.norm(xi)) * float(inc.sum()) * path.dt)


@dataclass(frozen=True)
class PhiValue:
    value: complex
    error: float

    def __complex__(self):
        return complex(self.value)

    def __abs__(self):
        return abs(self.value)


def phi(path, s, t, xi):
    """Phi^w_{s,t}(xi) between grid nodes s < t, with an interpolation-error estimate.

    The estimate |xi| * sum_k |w_{k+1} - w_k| * dt bounds the effect of replacing w by
    its linear interpolant when the within-segment oscillation is of the order of
    the sampled increment.
    """
    if not (0 <= s < t <= path.n):
        raise InputError(f"need grid nodes 0 <= s < t <= n, got ({s}, {t})")
    xi = np.asarray(xi, float).reshape(-1)
    if xi.size != path.dim or not np.all(np.isfinite(xi)):
        raise InputError("frequency must be a finite d-vector")
    P = _prefix(path, xi)
    return PhiValue(complex(P[t] - P[s]), _err_estimate(path, xi, s, t))


def phi_many(path, s, t, xis):
    """Vector of Phi_{s,t}(xi) for an (K, d) array of frequencies."""
    xis = np.atleast_2d(np.asarray(xis, float))
    return np.array([_diff(path, x, s, t) for x in xis])


def _diff(path, xi, s, t):
    P = _prefix(path, xi)
    return P[t] - P[s]


# --- Phi tables ---------------------------------------------------------------

DEFAULT_CAP = 2 ** 30  # bytes


@dataclass(frozen=True)
class PhiTable:
    """Phi_{0,t}(xi) at the level-L endpoints for every (magnitude, direction)."""
    base: np.ndarray            # complex, shape (Q, D, 2^L + 1)
    freqs: FrequencySet
    intervals: IntervalFamily
    horizon: float

    @property
    def L(self):
        return self.intervals.L

    def level(self, l):
        """Phi over the 2^l intervals of level l: shape (Q, D, 2^l)."""
        if not 0 <= l <= self.L:
            raise InputError("level out of range")
        st = 1 << (self.L - l)
        b = self.base
        return b[..., st::st] - b[..., : b.shape[-1] - 1: st]

    def interval(self, l, k):
        st = 1 << (self.L - l)
        return self.base[..., (k + 1) * st] - self.base[..., k * st]

    def lengths(self):
        return self.intervals.lengths(self.horizon)

    def export_csv(self, fname):
        q = self.freqs.magnitudes
        with open(fname, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["level", "k", "|xi|", "dir_index", "re", "im"])
            for l in range(self.L + 1):
                V = self.level(l)
                for k in range(V.shape[2]):
                    for j in range(V.shape[0]):
                        for u in range(V.shape[1]):
                            z = V[j, u, k]
                            wr.writerow([l, k, f"{q[j]:.17g}", u, f"{z.real:.17g}", f"{z.imag:.17g}"])


def phi_table(path, freqs=None, intervals=None, cap_bytes=DEFAULT_CAP, threads=1):
    """One left-to-right pass per frequency; derived intervals come from differences."""
    freqs = frequency_set(path.dim) if freqs is None else freqs
    intervals = IntervalFamily() if intervals is None else intervals
    if freqs.dim != path.dim:
        raise InputError("frequency set dimension does not match the path")
    intervals.check(path)
    Q, D = len(freqs.magnitudes), len(freqs.directions)
    need = Q * D * ((1 << intervals.L) + 1) * 16 + (path.n + 1) * 16 * 4 * max(1, threads)
    if need > cap_bytes:
        raise ResourceError(f"phi_table needs ~{need} bytes, cap is {cap_bytes}")
    step = path.n >> intervals.L
    jobs = [(j, k) for j in range(Q) for k in range(D)]

    def one(jk):
        j, k = jk
        return _prefix(path, freqs.vector(j, k))[::step]

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, jobs))
    else:
        rows = [one(jk) for jk in jobs]
    base = np.array(rows).reshape(Q, D, -1)
    base.setflags(write=False)
    return PhiTable(base, freqs, intervals, path.horizon)


# --- occupation densities ------------------------------------------------------

@dataclass(frozen=True)
class OccupationDensity:
    lo: np.ndarray
    hi: np.ndarray
    m: int
    values: np.ndarray          # density, shape (m,)*d
    s: float
    t: float

    @property
    def dim(self):
        return self.lo.size

    @property
    def h(self):
        return (self.hi - self.lo) / self.m

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def mass(self):
        return float(self.values.sum() * self.cell_volume)

    def masses(self):
        return self.values * self.cell_volume

    def centers(self, axis):
        return self.lo[axis] + (np.arange(self.m) + 0.5) * self.h[axis]

    def fourier(self, xi, corrected=True):
        """sum_b mass_b exp(-i xi.x_b), optionally divided by the CIC transfer function."""
        xi = np.atleast_2d(np.asarray(xi, float))
        out = np.empty(len(xi), complex)
        M = self.masses()
        for i, x in enumerate(xi):
            F = M.astype(complex)
            for ax in range(self.dim):
                shape = [1] * self.dim
                shape[ax] = self.m
                F = F * np.exp(-1j * x[ax] * self.centers(ax)).reshape(shape)
            val = F.sum()
            if corrected:
                val /= cic_transfer(x, self.h)
            out[i] = val
        return out

    def export(self, csv_name, json_name=None):
        with open(csv_name, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"x{i + 1}" for i in range(self.dim)] + ["density"])
            grids = np.meshgrid(*[self.centers(a) for a in range(self.dim)], indexing="ij")
            for idx in np.ndindex(*self.values.shape):
                wr.writerow([f"{g[idx]:.17g}" for g in grids] + [f"{self.values[idx]:.17g}"])
        if json_name:
            meta = {"box": [self.lo.tolist(), self.hi.tolist()], "h": self.h.tolist(),
                    "m": self.m, "mass": self.mass(), "interval": [self.s, self.t]}
            with open(json_name, "w") as fh:
                json.dump(meta, fh, sort_keys=True, indent=1)


def cic_transfer(xi, h):
    xi = np.asarray(xi, float)
    return float(np.prod(np.sinc(xi * h / (2 * np.pi)) ** 2))


def occupation_density(path, s=0, t=None, box=None, m=256, refine=8):
    """Cloud-in-cell deposit of the time spent by the interpolated path in each bin.

    Each segment is represented by ``refine`` midpoint samples of weight dt/refine,
    so the deposit integrates the same interpolant that ``phi`` integrates.
    """
    t = path.n if t is None else t
    if not (0 <= s < t <= path.n):
        raise InputError("need grid nodes 0 <= s < t <= n")
    if not 8 <= int(m) <= 4096:
        raise InputError("bins per axis must lie in [8, 4096]")
    m = int(m)
    w = path.values[s: t + 1]
    d = path.dim
    frac = (np.arange(refine) + 0.5) / refine
    pts = (w[:-1, None, :] + frac[None, :, None] * (w[1:] - w[:-1])[:, None, :]).reshape(-1, d)
    weight = path.dt / refine
    pmin, pmax = w.min(axis=0), w.max(axis=0)
    if box is None:
        lo, hi = pmin.copy(), pmax.copy()
        need = True
    else:
        lo = np.broadcast_to(np.asarray(box[0], float), (d,)).copy()
        hi = np.broadcast_to(np.asarray(box[1], float), (d,)).copy()
        if np.any(hi <= lo):
            raise InputError("empty box")
        need = np.any(pmin < lo) or np.any(pmax > hi)
        if need:
            lo, hi = np.minimum(lo, pmin), np.maximum(hi, pmax)
    if need:
        span = np.maximum(hi - lo, 1e-9 * max(1.0, float(np.abs(w).max())))
        mid = 0.5 * (hi + lo)
        # margin of 2 bins on each side, with the bin width of the final box
        h = span / (m - 4)
        lo, hi = mid - 0.5 * span - 2 * h, mid + 0.5 * span + 2 * h
    h = (hi - lo) / m
    u = (pts - lo) / h - 0.5
    i0 = np.floor(u).astype(np.int64)
    f = u - i0
    values = np.zeros(m ** d)
    for corner in range(1 << d):
        idx = np.zeros(len(pts), np.int64)
        wt = np.full(len(pts), weight)
        for ax in range(d):
            bit = (corner >> ax) & 1
            ii = i0[:, ax] + bit
            wt = wt * (f[:, ax] if bit else 1 - f[:, ax])
            # points within half a bin of the box edge fold their weight onto the edge bin
            ii = np.clip(ii, 0, m - 1)
            idx = idx * m + ii
        values += np.bincount(idx, weights=wt, minlength=m ** d)
    values = values.reshape((m,) * d) / float(np.prod(h))
    values.setflags(write=False)
    return OccupationDensity(lo, hi, m, values, s * path.dt, t * path.dt)


# --- spectral fields and Fourier-Lebesgue norms ------------------------------

@dataclass(frozen=True)
class SpectralField:
    """b(x) = sum_j c_j exp(i xi_j . x)."""
    xi: np.ndarray              # (K, d)
    coef: np.ndarray            # (K,) complex
    hermitian: bool = False

    def __post_init__(self):
        xi = np.atleast_2d(np.asarray(self.xi, float))
        c = np.asarray(self.coef, complex).reshape(-1)
        if xi.shape[0] != c.size:
            raise InputError("one coefficient per frequency")
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(c))):
            raise InputError("spectral field entries must be finite")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "coef", c)
        if self.hermitian and not self._is_hermitian():
            raise InputError("hermitian flag set but (-xi, conj c) partners are missing")

    def _is_hermitian(self, tol=1e-12):
        key = {tuple(np.round(x, 12)): c for x, c in zip(self.xi, self.coef)}
        for x, c in zip(self.xi, self.coef):
            p = key.get(tuple(np.round(-x, 12) + 0.0))
            if p is None or abs(p - np.conj(c)) > tol * max(1.0, abs(c)):
                return False
        return True

    @property
    def dim(self):
        return self.xi.shape[1]

    def __len__(self):
        return self.coef.size

    def __call__(self, x):
        """Evaluate at points x of shape (..., d); real part only when Hermitian."""
        x = np.asarray(x, float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        ph = np.tensordot(x, self.xi.T, axes=1)
        v = np.exp(1j * ph) @ self.coef
        return v.real if self.hermitian else v

    def gradient(self, x):
        x = np.asarray(x, float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        e = np.exp(1j * np.tensordot(x, self.xi.T, axes=1)) * self.coef
        g = (1j * e) @ self.xi
        return g.real if self.hermitian else g

    def scaled(self, factors):
        return SpectralField(self.xi, self.coef * factors, self.hermitian)

    @classmethod
    def from_modes(cls, xi_pos, c_pos, dc=None):
        """Hermitian field from positive-side modes; adds the conjugate partners."""
        xi_pos = np.atleast_2d(np.asarray(xi_pos, float))
        c_pos = np.asarray(c_pos, complex).reshape(-1)
        xs = [xi_pos, -xi_pos]
        cs = [c_pos, np.conj(c_pos)]
        if dc is not None:
            xs.append(np.zeros((1, xi_pos.shape[1])))
            cs.append(np.array([complex(float(np.real(dc)))]))
        return cls(np.concatenate(xs), np.concatenate(cs), True)


def bracket(xi):
    xi = np.atleast_2d(np.asarray(xi, float))
    return np.sqrt(1.0 + np.sum(xi * xi, axis=-1))


def _lp(vals, p, weight=1.0):
    if p == np.inf:
        return float(np.max(vals)) if vals.size else 0.0
    return float((np.sum(vals ** p) * weight) ** (1.0 / p))


def density_spectrum(dens, pad=1):
    """|mu-hat| on the (padded) box DFT lattice and the lattice frequencies."""
    M = dens.masses()
    shape = tuple(pad * dens.m for _ in range(dens.dim))
    F = np.abs(np.fft.fftn(M, s=shape, axes=tuple(range(dens.dim))))
    L = pad * (dens.hi - dens.lo)
    axes = [2 * np.pi * np.fft.fftfreq(s, d=1.0 / s) / L[a] for a, s in enumerate(shape)]
    grids = np.meshgrid(*axes, indexing="ij")
    return F, np.stack(grids, axis=-1), np.prod(2 * np.pi / L)


def fl_norm(obj, alpha, p):
    """Discrete FL^{alpha,p} norm (<xi> = (1+|xi|^2)^{1/2}).

    Spectral fields use the exact finite sum. Densities use their DFT on the box
    lattice 2 pi k/(hi-lo), weighted by the lattice cell volume so the sum is a
    quadrature of the continuum norm (aliasing above the bin Nyquist ignored).
    """
    if not p >= 1:
        raise InputError("p must be >= 1")
    if isinstance(obj, SpectralField):
        return _lp(bracket(obj.xi) ** alpha * np.abs(obj.coef), p)
    if isinstance(obj, OccupationDensity):
        F, X, dV = density_spectrum(obj)
        return _lp((bracket(X.reshape(-1, obj.dim)) ** alpha * F.reshape(-1)), p, dV)
    raise InputError("fl_norm expects a SpectralField or OccupationDensity")


def riesz_constant(alpha, d):
    """c_{alpha,d} with int int |x-y|^{-alpha} = c int |xi|^{alpha-d} |mu-hat|^2 (0 < alpha < d).

    For d < alpha < d+2 the absolute value is used (homogeneous Sobolev form).
    """
    c = 2 ** (d - alpha) * np.pi ** (d / 2) * Gamma((d - alpha) / 2) / Gamma(alpha / 2) / (2 * np.pi) ** d
    return abs(float(c))


def energy_integral(dens, alpha, pad=8, dc="cell"):
    """c_{alpha,d} sum |xi|^{alpha-d} |mu-hat(xi)|^2 dV over the padded DFT lattice.

    ``dc="cell"`` integrates the kernel over the lattice cell at the origin with
    mu-hat frozen at the total mass; ``dc="drop"`` omits it (principal-value 0).
    """
    d = dens.dim
    if not 0 < alpha < d + 2:
        raise InputError("need 0 < alpha < d + 2")
    if abs(alpha - d) < 1e-12:
        raise InputError("alpha = d is the logarithmic case; not supported")
    F, X, dV = density_spectrum(dens, pad)
    r = np.linalg.norm(X, axis=-1)
    nz = r > 0
    total = float(np.sum(r[nz] ** (alpha - d) * F[nz] ** 2) * dV)
    if dc == "cell":
        # ball with the cell's volume: int_{|xi|<R} |xi|^{alpha-d} = S_{d-1} R^alpha / alpha
        vol_ball = np.pi ** (d / 2) / Gamma(d / 2 + 1)
        R = (dV / vol_ball) ** (1 / d)
        S = 2 * np.pi ** (d / 2) / Gamma(d / 2)
        total += S * R ** alpha / alpha * dens.mass() ** 2
    elif dc != "drop":
        raise InputError("dc must be 'cell' or 'drop'")
    return riesz_constant(alpha, d) * total
