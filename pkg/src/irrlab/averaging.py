"""Averaging operator T^w_{s,t} b = int_s^t b(. + w_r) dr, spectral and gridded forms."""
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .core_path import SampledPath
from .errors import InputError
from .rng import Seed, stream
from . import spectral as sp
from .young_ode import Germ, SewingWarning, sew


@dataclass(frozen=True)
class GriddedField:
    """Real field sampled at the points lo + i*h (i = 0..shape-1 per axis)."""
    lo: np.ndarray
    h: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, float)
        lo = np.atleast_1d(np.asarray(self.lo, float))
        h = np.broadcast_to(np.asarray(self.h, float), lo.shape).copy()
        if v.ndim != lo.size or np.any(h <= 0):
            raise InputError("gridded field needs one origin and a positive spacing per axis")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "h", h)

    @property
    def dim(self):
        return self.lo.size

    def points(self, axis):
        return self.lo[axis] + np.arange(self.values.shape[axis]) * self.h[axis]

    @classmethod
    def sample(cls, f, lo, h, shape):
        lo = np.atleast_1d(np.asarray(lo, float))
        h = np.broadcast_to(np.asarray(h, float), lo.shape)
        shape = tuple(np.broadcast_to(shape, lo.shape))
        axes = [lo[a] + np.arange(shape[a]) * h[a] for a in range(lo.size)]
        X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return cls(lo, h, np.asarray(f(X), float).reshape(shape))


@dataclass(frozen=True)
class AveragedField:
    s: float
    t: float
    spectral: sp.SpectralField = None
    grid: GriddedField = None
    provenance: dict = field(default_factory=dict)

    def __call__(self, x):
        if self.spectral is not None:
            return self.spectral(x)
        raise InputError("gridded averaged fields are read through .grid")

    def to_json(self):
        doc = {"interval": [self.s, self.t], "provenance": self.provenance}
        if self.spectral is not None:
            f = self.spectral
            doc["terms"] = [{"xi": x.tolist(), "re": float(c.real), "im": float(c.imag)}
                            for x, c in zip(f.xi, f.coef)]
            doc["hermitian"] = bool(f.hermitian)
        if self.grid is not None:
            doc["grid"] = {"lo": self.grid.lo.tolist(), "h": self.grid.h.tolist(),
                           "shape": list(self.grid.values.shape)}
        return json.dumps(doc, sort_keys=True)


@dataclass(frozen=True)
class TimeDependentDrift:
    """b(t, x) = sum_j c_j(t) exp(i xi_j . x) with c_j sampled on the path grid."""
    xi: np.ndarray              # (K, d)
    coef_paths: np.ndarray      # (n+1, K) complex
    beta: float                 # declared Hölder exponent in time
    horizon: float = 1.0
    hermitian: bool = False

    def __post_init__(self):
        xi = np.atleast_2d(np.asarray(self.xi, float))
        c = np.asarray(self.coef_paths, complex)
        if c.ndim == 1:
            c = c[:, None]
        if c.shape[1] != xi.shape[0]:
            raise InputError("one coefficient path per frequency")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(xi))):
            raise InputError("drift coefficients must be finite")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "coef_paths", c)

    @classmethod
    def from_functions(cls, xi, funcs, n, T=1.0, beta=1.0, hermitian=False):
        t = np.arange(n + 1) * (T / n)
        c = np.stack([np.asarray(f(t), complex) * np.ones(n + 1) for f in funcs], axis=1)
        return cls(xi, c, beta, T, hermitian)

    def at(self, k):
        return sp.SpectralField(self.xi, self.coef_paths[k], self.hermitian)


# --- spectral route -----------------------------------------------------------

def _table_lookup(table, xi, s, t):
    """Phi_{s,t}(xi) read from a table, or None when xi or (s, t) is not stored."""
    q = np.linalg.norm(xi)
    js = np.flatnonzero(table.freqs.magnitudes == q)
    if js.size == 0:
        return None
    j = int(js[0])
    for k in range(len(table.freqs.directions)):
        if np.array_equal(table.freqs.vector(j, k), xi):
            break
    else:
        return None
    dtl = table.horizon / (table.base.shape[-1] - 1)
    a, b = s / dtl, t / dtl
    if abs(a - round(a)) > 1e-9 or abs(b - round(b)) > 1e-9:
        return None
    return complex(table.base[j, k, int(round(b))] - table.base[j, k, int(round(a))])


def average_spectral(source, b, s, t, path=None):
    """Exact T^w_{s,t} b for a finite Fourier drift: c_j -> c_j Phi_{s,t}(xi_j).

    ``source`` is a SampledPath or a PhiTable; s, t are times. Frequencies or
    endpoints missing from a table are computed from ``path``.
    """
    if isinstance(source, SampledPath):
        path, table = source, None
    else:
        table = source
    if not s < t:
        raise InputError("need s < t")
    vals = np.empty(len(b), complex)
    hits = 0
    for i, x in enumerate(b.xi):
        v = _table_lookup(table, x, s, t) if table is not None else None
        if v is None:
            if path is None:
                raise InputError("frequency not in the table and no path for fallback")
            v = sp._diff(path, x, path.node(s), path.node(t))
        else:
            hits += 1
        vals[i] = v
    out = sp.SpectralField(b.xi, b.coef * vals, b.hermitian)
    prov = {"route": "spectral", "table_hits": hits, "terms": len(b)}
    return AveragedField(float(s), float(t), out, None, prov)


# --- gridded route ------------------------------------------------------------

def average_grid(density, b, mode="full"):
    """(T b)(x) = sum_y mass_y b(x + y): correlation of b with the occupation masses.

    The output lives on the points b.lo - c_0 + m h where c_0 is the first density
    bin center. ``mode="full"`` treats b as zero outside its grid (compact support);
    ``mode="valid"`` keeps only points whose whole shift range lies inside b's grid.
    """
    if b.dim != density.dim:
        raise InputError("field and density dimensions differ")
    if not np.allclose(b.h, density.h, rtol=1e-9, atol=0):
        raise InputError("grid mismatch: field spacing must equal the density bin width")
    if mode not in ("full", "valid"):
        raise InputError("mode must be 'full' or 'valid'")
    M = density.masses()
    if mode == "valid" and any(sb < density.m for sb in b.values.shape):
        raise InputError("valid mode needs a field grid at least as large as the density grid")
    rev = M[(slice(None, None, -1),) * density.dim]
    out = fftconvolve(b.values, rev, mode=mode)
    c0 = density.lo + 0.5 * density.h
    lo = b.lo - c0
    if mode == "full":
        lo = lo - (density.m - 1) * density.h
    return GriddedField(lo, density.h, out)


def cic_tolerance(b, density):
    """Bound on |grid route - spectral route| for a band-limited field b.

    Per mode the deposit multiplies the transform by the CIC transfer function; the
    discrepancy is at most |c_j| (t - s) (1 - transfer(xi_j)) plus the neglected
    aliases, bounded by the same amount again.
    """
    tr = np.array([sp.cic_transfer(x, density.h) for x in b.xi])
    return float(2 * np.sum(np.abs(b.coef) * density.mass() * (1 - tr)))


def averaged_grid_field(density, b, mode="full"):
    g = average_grid(density, b, mode)
    return AveragedField(density.s, density.t, None, g, {"route": "grid", "mode": mode})


# --- regularity gain -------------------------------------------------------------

KAPPA = 0.51


@dataclass
class GainEstimate:
    ratios: np.ndarray          # (M_b, intervals)
    lengths: np.ndarray         # length of each probed interval
    alpha: float
    gamma: float
    rho_gain: float
    p: float

    @property
    def max(self):
        return float(np.max(self.ratios))

    @property
    def median(self):
        return float(np.median(self.ratios))

    @property
    def spread(self):
        return self.max / self.median

    lower_estimate = True       # a probe max never certifies an operator norm


def regularity_gain(source, alpha, p, M_b, gamma, seed=None, rho_gain=0.0, kappa=KAPPA,
                    support=None, levels=None, density=0.5):
    """Probe ||T_{s,t} b||_{FL^{alpha+rho',p}} / (|t-s|^gamma ||b||_{FL^{alpha,p}}).

    Drifts live on the table lattice with |c_j| = <xi_j>^{-alpha-kappa} and random
    phases. FL norms ignore phases, so each probe also draws a random support
    (each lattice frequency kept with probability ``density``); ``support`` fixes
    a common list of flat lattice indices instead.
    """
    table = sp.phi_table(source) if isinstance(source, SampledPath) else source
    if not p >= 1 or M_b < 1:
        raise InputError("need p >= 1 and at least one drift")
    Q, D = table.base.shape[:2]
    xi = np.array([table.freqs.vector(j, k) for j in range(Q) for k in range(D)])
    br = sp.bracket(xi)
    amp = br ** (-alpha - kappa)
    levels = range(table.L + 1) if levels is None else levels
    absPhi = np.concatenate([np.abs(table.level(l)).reshape(Q * D, -1) for l in levels], axis=1)
    lens = np.concatenate([np.full(1 << l, table.horizon / (1 << l)) for l in levels])
    g = stream(seed or Seed(), 0x6A1)
    ratios = np.empty((M_b, absPhi.shape[1]))
    for i in range(M_b):
        if support is not None:
            mask = np.zeros(Q * D, bool)
            mask[np.asarray(support)] = True
        else:
            mask = g.random(Q * D) < density
            if not mask.any():
                mask[g.integers(Q * D)] = True
        g.random(Q * D)  # phases: irrelevant to the norms, drawn for replayable drifts
        a = amp * mask
        den = sp._lp(br ** alpha * a, p)
        num = ((br ** (alpha + rho_gain) * a)[:, None] * absPhi)
        num = np.max(num, axis=0) if p == np.inf else np.sum(num ** p, axis=0) ** (1 / p)
        ratios[i] = num / (lens ** gamma * den)
    return GainEstimate(ratios, lens, alpha, gamma, rho_gain, p)


def random_drift(table, alpha, seed=None, kappa=KAPPA, dc=None):
    """Hermitian drift on the table lattice with |c_j| = <xi_j>^{-alpha-kappa}."""
    Q, D = table.base.shape[:2]
    xi = np.array([table.freqs.vector(j, k) for j in range(Q) for k in range(D)])
    g = stream(seed or Seed(), 0x6A2)
    c = sp.bracket(xi) ** (-alpha - kappa) * np.exp(2j * np.pi * g.random(len(xi)))
    return sp.SpectralField.from_modes(xi, c, dc)


# --- time-dependent drifts --------------------------------------------------------

def average_time_dependent(path, b, gamma, s, t, level=None):
    """Per term, the sewing of Gamma_{u,v} = c_j(u) Phi_{u,v}(xi_j) over [s, t]."""
    if b.coef_paths.shape[0] != path.n + 1:
        raise InputError("coefficient paths must live on the path grid")
    i0, i1 = path.node(s), path.node(t)
    if not i0 < i1:
        raise InputError("need s < t")
    span = i1 - i0
    if level is None:
        level = min(10, (span & -span).bit_length() - 1)
    if span % (1 << level):
        raise InputError("2^level must divide the number of grid steps in [s, t]")
    young = b.beta + gamma > 1
    if not young:
        warnings.warn(f"beta + gamma = {b.beta + gamma:.3f} <= 1: Young sums may diverge",
                      SewingWarning)
    dt = path.dt
    vals = np.empty(len(b.xi), complex)
    orders, diverged = [], False
    for j, x in enumerate(b.xi):
        P = sp._prefix(path, x)
        c = b.coef_paths[:, j]

        def ev(u, v, P=P, c=c):
            iu = np.rint(u / dt).astype(int)
            iv = np.rint(v / dt).astype(int)
            return c[iu] * (P[iv] - P[iu])

        germ = Germ(ev, 1, path.horizon, beta=(b.beta + gamma) if young else None)
        r = sew(germ, level, t0=i0 * dt, t1=i1 * dt)
        vals[j] = r.values[-1, 0]
        orders.append(r.order)
        diverged |= r.divergent
    out = sp.SpectralField(b.xi, vals, b.hermitian and _hermitian_ok(b.xi, vals))
    prov = {"route": "time-dependent", "level": int(level), "young": bool(young),
            "orders": [float(o) for o in orders], "divergent": bool(diverged)}
    return AveragedField(float(s), float(t), out, None, prov)


def _hermitian_ok(xi, c):
    try:
        sp.SpectralField(xi, c, True)
        return True
    except InputError:
        return False
