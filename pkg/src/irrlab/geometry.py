"""Roughness and dimension measurements on sampled paths."""
import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d
from scipy.spatial import cKDTree

from .errors import InputError
from . import spectral as sp


def _write_rows(fname, header, rows):
    with open(fname, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in r])


def _linfit(x, y):
    """Least-squares line with R^2 (R^2 = 1 for an exact fit, including flat data)."""
    a, b = np.polyfit(x, y, 1)
    res = y - (a * x + b)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(res ** 2))
    if ss_tot <= 1e-30 * max(1.0, float(np.sum(y ** 2))):
        r2 = 1.0 if ss_res <= 1e-24 * max(1.0, float(np.sum(y ** 2))) else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(a), float(b), float(r2)


# --- nowhere-Hölder density ------------------------------------------------------

@dataclass
class DensityCurve:
    center: float
    delta: float
    M: float
    eps: np.ndarray
    fraction: np.ndarray

    def to_csv(self, fname):
        _write_rows(fname, ["epsilon", "fraction"],
                    [(float(e), float(f)) for e, f in zip(self.eps, self.fraction)])


def holder_density(path, s, delta, M, eps):
    """Fraction of grid nodes t with |t - s| <= eps obeying |w_t - w_s| <= M |t - s|^delta.

    The center node itself is counted (it always satisfies the condition).
    """
    eps = np.asarray(eps, float)
    if eps.ndim != 1 or eps.size == 0:
        raise InputError("need a list of scales")
    if np.any(eps < 4 * path.dt * (1 - 1e-12)):
        raise InputError("scales must be at least 4 grid steps")
    if np.any(np.diff(eps) >= 0):
        raise InputError("scales must be strictly decreasing")
    w, dt = path.values, path.dt
    fr = np.empty(eps.size)
    for i, e in enumerate(eps):
        K = int(np.floor(e / dt + 1e-9))
        lo, hi = max(0, s - K), min(path.n, s + K)
        idx = np.arange(lo, hi + 1)
        lag = np.abs(idx - s) * dt
        inc = np.linalg.norm(w[idx] - w[s], axis=1)
        fr[i] = np.mean(inc <= M * lag ** delta)
    return DensityCurve(path.time_of(s), float(delta), float(M), eps, fr)


# --- roughness modulus ------------------------------------------------------------

@dataclass
class RoughnessModulus:
    theta: float
    eps: np.ndarray
    values: np.ndarray
    witnesses: list             # (s node, direction index) attaining each minimum

    def to_csv(self, fname):
        _write_rows(fname, ["epsilon", "L_theta"],
                    [(float(e), float(v)) for e, v in zip(self.eps, self.values)])


def roughness_modulus(path, theta, eps, directions=None):
    """min over nodes s and directions v of max_{|t-s| < eps} |v . w_{s,t}| / eps^theta."""
    U = sp.default_directions(path.dim) if directions is None else np.atleast_2d(directions)
    if U.shape[1] != path.dim:
        raise InputError("direction set dimension does not match the path")
    eps = np.asarray(eps, float)
    out, wit = np.empty(eps.size), []
    proj = path.values @ U.T                      # (n+1, D)
    for i, e in enumerate(eps):
        K = int(np.ceil(e / path.dt - 1e-9)) - 1  # strict |t - s| < eps
        if K < 1:
            raise InputError("scale below one grid step")
        best, arg = np.inf, (0, 0)
        for v in range(U.shape[0]):
            x = proj[:, v]
            hi = maximum_filter1d(x, 2 * K + 1, mode="nearest")
            lo = minimum_filter1d(x, 2 * K + 1, mode="nearest")
            m = np.maximum(hi - x, x - lo)
            j = int(np.argmin(m))
            if m[j] < best:
                best, arg = float(m[j]), (j, v)
        out[i] = best / e ** theta
        wit.append(arg)
    return RoughnessModulus(float(theta), eps, out, wit)


# --- p-variation --------------------------------------------------------------------

@dataclass
class PVariation:
    value: float
    p: float
    stride: int
    nodes: int


def p_variation(path, p, max_nodes=4096, stride=None):
    """Exact sup of sum |w_{t_i, t_{i+1}}|^p over partitions of a uniform subsample."""
    if not p > 0:
        raise InputError("p must be positive")
    if stride is None:
        stride = max(1, -(-path.n // max_nodes))
    x = path.values[::stride]
    if path.n % stride:
        x = np.vstack([x, path.values[-1:]])
    k = len(x)
    if k - 1 > max_nodes:
        raise InputError(f"{k} subsample nodes exceed max_nodes = {max_nodes}")
    V = np.zeros(k)
    for j in range(1, k):
        inc = np.linalg.norm(x[:j] - x[j], axis=1) ** p
        V[j] = np.max(V[:j] + inc)
    return PVariation(float(V[-1]), float(p), int(stride), int(k))


# --- Fourier and box dimension -----------------------------------------------------

@dataclass
class DimensionEstimate:
    estimate: float
    decay: float
    r2: float
    inconclusive: bool
    shells: np.ndarray = None
    sups: np.ndarray = None
    energy_estimate: float = None
    disagreement: bool = False
    extra: dict = field(default_factory=dict)

    def to_json(self):
        d = {"estimate": self.estimate, "decay": self.decay, "r2": self.r2,
             "inconclusive": self.inconclusive, "energy_estimate": self.energy_estimate,
             "disagreement": self.disagreement}
        if self.shells is not None:
            d["shells"] = self.shells.tolist()
            d["sups"] = self.sups.tolist()
        d.update(self.extra)
        return json.dumps(d, sort_keys=True)

    def to_csv(self, fname):
        _write_rows(fname, ["q", "sup_abs_phi"],
                    [(float(q), float(v)) for q, v in zip(self.shells, self.sups)])


def fourier_dimension(path, s=0, t=None, q_range=(8.0, 512.0), sub=8, directions=None,
                      energy=True, energy_grid=None, min_r2=0.7):
    """min(d, 2 e) from the decay |Phi_{s,t}| ~ q^{-e} of per-shell sups.

    Each half-octave shell [q, 2^{1/2} q) is probed at ``sub`` magnitudes along every
    direction; the shell value is the largest |Phi| seen in the annulus.
    """
    t = path.n if t is None else t
    U = sp.default_directions(path.dim) if directions is None else np.atleast_2d(directions)
    q0, q1 = q_range
    J = int(round(2 * np.log2(q1 / q0)))
    shells = q0 * 2.0 ** (np.arange(J + 1) / 2)
    sups = np.empty(J + 1)
    for j, q in enumerate(shells):
        mags = q * 2.0 ** (np.arange(sub) / (2 * sub))
        sups[j] = max(abs(sp._diff(path, m * u, s, t)) for m in mags for u in U)
    lq = np.log(shells)
    ly = np.log(np.maximum(sups, 1e-300))
    a, _, r2 = _linfit(lq, ly)
    decay = max(0.0, -a)
    est = float(min(path.dim, 2 * decay))
    out = DimensionEstimate(est, float(-a), r2, bool(r2 < min_r2), shells, sups)
    if energy:
        e_est = energy_dimension(path, s, t, energy_grid)
        out.energy_estimate = e_est
        out.disagreement = bool(abs(e_est - est) > 0.5)
    return out


def energy_dimension(path, s=0, t=None, grid=None, m=64, ratio=1.5):
    """Largest alpha whose energy integral stays stable when the bin count doubles."""
    t = path.n if t is None else t
    grid = np.arange(1, 10 * path.dim) / 10 if grid is None else np.asarray(grid)
    m = min(m, 256 if path.dim == 1 else (64 if path.dim == 2 else 24))
    d1 = sp.occupation_density(path, s, t, m=m)
    d2 = sp.occupation_density(path, s, t, m=2 * m)
    pad = 2 if path.dim < 3 else 1
    best = 0.0
    for a in grid:
        e1 = sp.energy_integral(d1, a, pad=pad)
        e2 = sp.energy_integral(d2, a, pad=pad)
        if np.isfinite(e1) and np.isfinite(e2) and e2 <= ratio * e1:
            best = float(a)
        else:
            break
    return best


def box_dimension(path, s=0, t=None, levels=range(3, 10)):
    """Box counting of the image of the linear interpolant at meshes D 2^{-k}."""
    t = path.n if t is None else t
    levels = np.asarray(list(levels))
    if levels.size < 4:
        raise InputError("need at least 4 scale levels")
    x = path.values[s: t + 1]
    lo = x.min(axis=0)
    D = float(np.max(x.max(axis=0) - lo))
    if D == 0:
        return DimensionEstimate(0.0, 0.0, 1.0, True, extra={"degenerate": True})
    emin = D * 2.0 ** -levels.max()
    seg = np.linalg.norm(np.diff(x, axis=0), axis=1)
    sub = np.maximum(1, np.ceil(seg / (0.25 * emin)).astype(int))
    counts = []
    for k in levels:
        e = D * 2.0 ** -k
        boxes = set()
        # densify each segment enough that consecutive points sit in adjacent boxes
        for lo_i in range(0, len(seg), 4096):
            hi_i = min(len(seg), lo_i + 4096)
            r = int(sub[lo_i:hi_i].max())
            f = (np.arange(r) / r)[None, :, None]
            pts = x[lo_i:hi_i, None] + f * (x[lo_i + 1:hi_i + 1] - x[lo_i:hi_i])[:, None]
            keys = np.floor((pts.reshape(-1, path.dim) - lo) / e).astype(np.int64)
            boxes.update(map(tuple, np.unique(keys, axis=0)))
        last = np.floor((x[-1] - lo) / e).astype(np.int64)
        boxes.add(tuple(last))
        counts.append(len(boxes))
    counts = np.array(counts, float)
    a, _, r2 = _linfit(levels * np.log(2.0), np.log(counts))
    degenerate = counts.max() <= 1
    return DimensionEstimate(float(a), float(a), r2, bool(degenerate),
                             shells=D * 2.0 ** -levels, sups=counts)


# --- occupation window --------------------------------------------------------------

@dataclass
class WindowReport:
    r: np.ndarray
    W: np.ndarray
    horizon: float
    constant: float             # median of W / 2r
    spread: float               # max/min of W / 2r
    linear: bool

    def to_csv(self, fname):
        _write_rows(fname, ["r", "W"], [(float(a), float(b)) for a, b in zip(self.r, self.W)])


def occupation_window(path, r, T=None, factor=2.0):
    """W(r, T) = max over grid t <= T of dt * #{grid s < T : |w_t - w_s| < r}."""
    r = np.asarray(r, float)
    T = path.horizon if T is None else T
    k = path.node(T)
    w = path.values[: k + 1]
    src = w[:-1]
    W = np.empty(r.size)
    if path.dim == 1:
        srt = np.sort(src[:, 0])
        for i, rr in enumerate(r):
            c = (np.searchsorted(srt, w[:, 0] + rr, side="left")
                 - np.searchsorted(srt, w[:, 0] - rr, side="right"))
            W[i] = path.dt * c.max()
    else:
        tree = cKDTree(src)
        for i, rr in enumerate(r):
            c = tree.query_ball_point(w, np.nextafter(rr, 0), return_length=True)
            W[i] = path.dt * np.max(c)
    q = W / (2 * r)
    spread = float(q.max() / q.min()) if q.min() > 0 else float("inf")
    return WindowReport(r, W, float(T), float(np.median(q)), spread, bool(spread <= factor))
