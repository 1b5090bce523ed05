"""Uniform-grid paths, exact transforms, Hölder measurements and path I/O."""
import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InputError

MAGIC = b"IRRLABPATHv1\0\0\0\0"


class SampledPath:
    """Samples of w : [0, T] -> R^d on the grid t_k = kT/n, k = 0..n.

    ``values`` has shape (n+1, d). The array is copied and frozen, so paths can
    be shared freely between workers.
    """

    __slots__ = ("values", "horizon")

    def __init__(self, values, horizon=1.0):
        v = np.array(values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise InputError("path values must be a (n+1) x d array")
        if not 1 <= v.shape[1] <= 3:
            raise InputError(f"dimension must be 1..3, got {v.shape[1]}")
        if v.shape[0] < 3:
            raise InputError("need n >= 2 steps")
        if not np.all(np.isfinite(v)):
            raise InputError("path values must be finite")
        horizon = float(horizon)
        if not (horizon > 0 and np.isfinite(horizon)):
            raise InputError("horizon must be a positive real")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "horizon", horizon)

    def __setattr__(self, name, value):
        raise AttributeError("SampledPath is immutable")

    @property
    def n(self):
        return self.values.shape[0] - 1

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def dt(self):
        return self.horizon / self.n

    def times(self):
        return np.arange(self.n + 1) * self.dt

    def time_of(self, k):
        return k * self.horizon / self.n

    def node(self, t):
        """Grid index of time t; raises if t is not (numerically) a node."""
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * self.horizon or not 0 <= k <= self.n:
            raise InputError(f"time {t} is not a grid node")
        return k

    @classmethod
    def from_function(cls, f, n, T=1.0):
        t = np.arange(n + 1) * (T / n)
        return cls(np.asarray(f(t), dtype=float).reshape(n + 1, -1), T)

    def __repr__(self):
        return f"SampledPath(d={self.dim}, n={self.n}, T={self.horizon})"

    def __eq__(self, other):
        return (isinstance(other, SampledPath) and self.horizon == other.horizon
                and self.values.shape == other.values.shape
                and np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True)
class HolderEstimate:
    exponent: float
    seminorm: float
    max_lag: float
    pair: tuple  # attaining grid nodes (j, k); (0, 0) when the path is constant


def _check_finite(path):
    if not np.all(np.isfinite(path.values)):
        raise InputError("non-finite path values")


def holder_seminorm(path, delta, max_lag=None):
    """sup |w_t - w_s| / (t-s)^delta over grid pairs with 0 < t-s <= max_lag."""
    _check_finite(path)
    if not delta > 0:
        raise InputError("delta must be positive")
    if max_lag is None:
        max_lag = path.horizon
    if not 0 < max_lag <= path.horizon * (1 + 1e-12):
        raise InputError("need 0 < max_lag <= T")
    K = min(path.n, int(np.floor(max_lag / path.dt + 1e-9)))
    w = path.values
    best, pair = 0.0, (0, 0)
    for k in range(1, K + 1):
        inc = np.sqrt(np.sum((w[k:] - w[:-k]) ** 2, axis=1))
        j = int(np.argmax(inc))
        val = inc[j] / (k * path.dt) ** delta
        if val > best:
            best, pair = float(val), (j, j + k)
    return HolderEstimate(float(delta), best, float(max_lag), pair)


def rescale(path, lam, gamma, rho):
    """Scaled path t -> lam^{-(1-gamma)/rho} w(lam t) on the same horizon.

    The result uses the lam*n input nodes covering [0, lam T] as its grid, so no
    interpolation happens and the scaling identity stays exact.
    """
    if not 0 < lam <= 1:
        raise InputError("lambda must lie in (0, 1]")
    m = lam * path.n
    if abs(m - round(m)) > 1e-9 or round(m) < 2:
        raise InputError("lambda * n must be an integer >= 2")
    m = int(round(m))
    factor = lam ** (-(1.0 - gamma) / rho)
    return SampledPath(factor * path.values[: m + 1], path.horizon)


def transform(path, A=None, shift=None):
    """Node-wise affine map w_t -> A w_t + shift."""
    d = path.dim
    A = np.eye(d) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=float).reshape(-1)
    if A.shape != (d, d) or shift.shape != (d,):
        raise InputError(f"transform expects a {d}x{d} matrix and a length-{d} shift")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(shift))):
        raise InputError("transform parameters must be finite")
    return SampledPath(path.values @ A.T + shift, path.horizon)


def restrict(path, j0, j1):
    """Sub-path on nodes j0..j1, re-indexed to start at time 0."""
    if not (0 <= j0 < j1 <= path.n):
        raise InputError(f"invalid node range [{j0}, {j1}]")
    if j1 - j0 < 2:
        raise InputError("restricted path needs at least 2 steps")
    return SampledPath(path.values[j0: j1 + 1], (j1 - j0) * path.dt)


# --- I/O -------------------------------------------------------------------

def write_binary(path, fname):
    with open(fname, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQd", path.dim, path.n, path.horizon))
        fh.write(np.ascontiguousarray(path.values, dtype="<f8").tobytes())


def read_binary(fname):
    with open(fname, "rb") as fh:
        raw = fh.read()
    if raw[:16] != MAGIC:
        raise InputError("bad magic: not a path file")
    d, n, T = struct.unpack("<IQd", raw[16:36])
    body = raw[36:]
    if len(body) != 8 * (n + 1) * d:
        raise InputError("truncated or oversized path file")
    vals = np.frombuffer(body, dtype="<f8").reshape(n + 1, d)
    return SampledPath(vals, T)


def write_csv(path, fname):
    t = path.times()
    with open(fname, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t"] + [f"x{i + 1}" for i in range(path.dim)])
        for k in range(path.n + 1):
            wr.writerow([repr(float(t[k]))] + [repr(float(x)) for x in path.values[k]])


def read_csv(fname):
    with open(fname, newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    d = len(head) - 1
    if head != ["t"] + [f"x{i + 1}" for i in range(d)] or not 1 <= d <= 3:
        raise InputError(f"unexpected CSV header {head}")
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    t = data[:, 0]
    n = len(t) - 1
    if n < 2 or t[0] != 0.0:
        raise InputError("CSV grid must start at t=0 with at least 3 rows")
    T = t[-1]
    if np.max(np.abs(t - np.arange(n + 1) * (T / n))) > 1e-9 * T:
        raise InputError("CSV times are not a uniform grid")
    return SampledPath(data[:, 1:], T)
