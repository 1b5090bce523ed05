"""Seeded generators for the Gaussian and stable process classes, plus
analytic and empirical conditional variances.

Every path is drawn from its own label-addressed stream (see ``rng``), so a
batch is bit-identical whether it is produced serially or by several workers.
"""
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg
from scipy.special import gamma as Gamma

from .core_path import SampledPath
from .errors import InputError, UnsupportedError
from .rng import Seed, stream


class SimulationWarning(UserWarning):
    """Recorded fallbacks (circulant -> Cholesky, regularized solves, ...)."""


VARIANTS = ("brownian", "fbm", "integrated_fbm", "ornstein_uhlenbeck",
            "moving_average", "log_bm", "fbm_sum")


@dataclass(frozen=True)
class GaussianModel:
    variant: str
    dim: int = 1
    H: float = 0.5
    order: int = 1                # integrated_fbm: number of integrations
    A: tuple = None               # OU mean-reversion matrix
    drift: tuple = ()             # OU polynomial f_t = sum_k drift[k] t^k (each a d-vector)
    sigma: float = 1.0
    x0: tuple = None
    beta: float = None            # moving_average power exponent, log_bm exponent
    kernel: object = None         # moving_average tabulated kernel: callable or ((r...), (K...))
    components: tuple = ()        # fbm_sum: ((H_k, lambda_k), ...)

    def __post_init__(self):
        v = self.variant
        if v not in VARIANTS:
            raise InputError(f"unknown Gaussian variant {v!r}")
        if not 1 <= int(self.dim) <= 3:
            raise InputError("dim must be 1..3")
        if v in ("fbm", "integrated_fbm") and not 0 < self.H < 1:
            raise InputError("H must lie in (0, 1)")
        if v == "integrated_fbm" and int(self.order) < 1:
            raise InputError("integration order must be >= 1")
        if v == "log_bm" and not (self.beta is not None and self.beta > 0):
            raise InputError("log_bm needs beta > 0")
        if v == "moving_average" and self.kernel is None and not (self.beta is not None and self.beta > 0):
            raise InputError("moving_average needs beta > 0 or a tabulated kernel")
        if v == "ornstein_uhlenbeck":
            if not self.sigma > 0:
                raise InputError("sigma must be positive")
            if self.A is not None and np.asarray(self.A, float).reshape(-1).size != self.dim ** 2:
                raise InputError("A must be d x d")
        if v == "fbm_sum":
            if not self.components:
                raise InputError("fbm_sum needs at least one component")
            Hs = [c[0] for c in self.components]
            if any(not 0 < h < 1 for h in Hs) or any(c[1] <= 0 for c in self.components):
                raise InputError("fbm_sum components need H in (0,1) and lambda > 0")
            if any(b >= a for a, b in zip(Hs, Hs[1:])):
                raise InputError("fbm_sum Hurst indices must be strictly decreasing")

    # convenience constructors
    @classmethod
    def brownian(cls, dim=1):
        return cls("brownian", dim)

    @classmethod
    def fbm(cls, H, dim=1):
        return cls("fbm", dim, H=H)

    @classmethod
    def integrated_fbm(cls, H, order=1, dim=1):
        return cls("integrated_fbm", dim, H=H, order=order)

    @classmethod
    def ornstein_uhlenbeck(cls, A, drift=(), sigma=1.0, x0=None, dim=None):
        A = np.atleast_2d(np.asarray(A, float))
        d = A.shape[0] if dim is None else dim
        drift = tuple(tuple(np.broadcast_to(np.asarray(c, float), (d,))) for c in drift)
        x0 = tuple(np.zeros(d)) if x0 is None else tuple(np.broadcast_to(np.asarray(x0, float), (d,)))
        return cls("ornstein_uhlenbeck", d, A=tuple(A.reshape(-1)), drift=drift, sigma=sigma, x0=x0)

    @classmethod
    def moving_average(cls, beta=None, kernel=None, dim=1):
        return cls("moving_average", dim, beta=beta, kernel=kernel)

    @classmethod
    def log_bm(cls, beta, dim=1):
        return cls("log_bm", dim, beta=beta)

    @classmethod
    def fbm_sum(cls, components=None, Hs=None, dim=1):
        """Components as (H_k, lambda_k) pairs; with only ``Hs`` the weights default to k^{-2}."""
        if components is None:
            components = [(h, (k + 1) ** -2.0) for k, h in enumerate(Hs)]
        return cls("fbm_sum", dim, components=tuple((float(h), float(l)) for h, l in components))

    @property
    def slnd_exponent(self):
        """beta with Var(X_t|F_s) ~ |t-s|^{2 beta}; None for log-type models."""
        v = self.variant
        if v in ("brownian", "ornstein_uhlenbeck"):
            return 0.5
        if v == "fbm":
            return self.H
        if v == "integrated_fbm":
            return self.H + self.order
        if v == "moving_average":
            return self.beta
        if v == "fbm_sum":
            return self.components[0][0]
        return None


@dataclass(frozen=True)
class StableModel:
    alpha: object = 1.5           # scalar, or per-coordinate tuple for spectral="axes"
    spectral: str = "axes"
    dim: int = 1

    def __post_init__(self):
        if self.spectral not in ("axes", "isotropic"):
            raise InputError("spectral must be 'axes' or 'isotropic'")
        a = np.atleast_1d(np.asarray(self.alpha, float))
        if a.size not in (1, self.dim):
            raise InputError("need one alpha or one per coordinate")
        if self.spectral == "isotropic" and a.size != 1:
            raise InputError("isotropic model takes a single alpha")
        # alpha = 2 is admitted for the axes variant as the Gaussian limit
        hi_ok = np.all(a <= 2) if self.spectral == "axes" else np.all(a < 2)
        if not (np.all(a > 0) and hi_ok):
            raise InputError("alpha must lie in (0, 2)")

    @property
    def alphas(self):
        return np.broadcast_to(np.atleast_1d(np.asarray(self.alpha, float)), (self.dim,)).copy()

    def exponent(self, xi):
        """G(xi) with E exp(i xi.(X_t-X_s)) = exp(-(t-s) G(xi))."""
        xi = np.atleast_2d(np.asarray(xi, float))
        if self.spectral == "axes":
            return np.sum(np.abs(xi) ** self.alphas, axis=-1)
        return np.linalg.norm(xi, axis=-1) ** float(self.alphas[0])


# --- fractional Gaussian noise --------------------------------------------

def fgn_autocov(k, H):
    k = np.abs(np.asarray(k, float))
    return 0.5 * ((k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


@lru_cache(maxsize=32)
def _circulant_sqrt(n, H):
    c = fgn_autocov(np.arange(n + 1), H)
    row = np.concatenate([c, c[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        return None
    out = np.sqrt(np.maximum(lam, 0.0) / row.size)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=8)
def _cholesky_factor(n, H):
    k = np.arange(n)
    C = fgn_autocov(k[:, None] - k[None, :], H)
    L = np.linalg.cholesky(C)
    L.setflags(write=False)
    return L


def fgn(n, H, rng, method="circulant"):
    """n unit-step fractional Gaussian noise values (covariance fgn_autocov)."""
    if method == "circulant":
        sq = _circulant_sqrt(n, H)
        if sq is None:
            if n > 2048:
                raise InputError("circulant embedding failed and n > 2048 is too large for Cholesky")
            warnings.warn(f"circulant embedding not nonnegative for n={n}, H={H}; using Cholesky",
                          SimulationWarning)
            method = "cholesky"
        else:
            z = rng.standard_normal(sq.size) + 1j * rng.standard_normal(sq.size)
            return np.fft.fft(sq * z)[:n].real
    if method == "cholesky":
        return _cholesky_factor(n, H) @ rng.standard_normal(n)
    raise InputError(f"unknown fGn method {method!r}")


def _fbm_coord(n, T, H, rng, method="circulant"):
    x = fgn(n, H, rng, method) * (T / n) ** H
    out = np.empty(n + 1)
    out[0] = 0.0
    np.cumsum(x, out=out[1:])
    return out


def _cumtrapz0(y, dt):
    out = np.empty_like(y)
    out[0] = 0.0
    np.cumsum(0.5 * (y[1:] + y[:-1]) * dt, out=out[1:])
    return out


def _ma_kernel(model):
    if model.variant == "log_bm":
        b = model.beta
        return lambda r: r ** -0.5 * np.abs(np.log(r)) ** (-b / 2 - 0.5)
    if model.kernel is None:
        b = model.beta
        return lambda r: r ** (b - 0.5)
    if callable(model.kernel):
        return model.kernel
    rt, kt = (np.asarray(a, float) for a in model.kernel)
    return lambda r: np.interp(r, rt, kt)


def _moving_average_coord(n, T, K, rng):
    dt = T / n
    kv = K((np.arange(1, n + 1) - 0.5) * dt)
    dB = rng.standard_normal(n) * math.sqrt(dt)
    m = 1 << (2 * n - 1).bit_length()
    conv = np.fft.irfft(np.fft.rfft(kv, m) * np.fft.rfft(dB, m), m)[:n]
    return np.concatenate([[0.0], conv])


def _ou_transition(model, dt):
    d = model.dim
    A = np.asarray(model.A, float).reshape(d, d) if model.A is not None else np.zeros((d, d))
    P = len(model.drift)
    # augmented state (X, 1, t, ..., t^{P-1}) makes the polynomial forcing exact
    m = d + P
    M = np.zeros((m, m))
    M[:d, :d] = -A
    for k, a in enumerate(model.drift):
        M[:d, d + k] = a
    for k in range(1, P):
        M[d + k, d + k - 1] = k
    E = linalg.expm(M * dt)
    # Van Loan: Q = sigma^2 int_0^dt e^{-rA} e^{-rA^T} dr
    V = np.zeros((2 * d, 2 * d))
    V[:d, :d] = -A
    V[:d, d:] = model.sigma ** 2 * np.eye(d)
    V[d:, d:] = A.T
    F = linalg.expm(V * dt)
    Q = F[:d, d:] @ F[d:, d:].T
    Q = 0.5 * (Q + Q.T)
    return E, np.linalg.cholesky(Q + 1e-300 * np.eye(d))


def _simulate_ou(model, n, T, seed):
    d, dt = model.dim, T / n
    E, Lq = _ou_transition(model, dt)
    P = len(model.drift)
    rngs = [stream(seed.child(coord=c)) for c in range(d)]
    Z = np.stack([r.standard_normal(n) for r in rngs], axis=1)
    noise = Z @ Lq.T
    out = np.empty((n + 1, d))
    state = np.concatenate([np.asarray(model.x0, float), np.zeros(P)])
    if P:
        state[d] = 1.0
    out[0] = state[:d]
    for k in range(n):
        state = E @ state
        if P:
            t = (k + 1) * dt
            state[d:] = t ** np.arange(P)  # keep the clock exact
        state[:d] += noise[k]
        out[k + 1] = state[:d]
    return out


def simulate_gaussian(model, n, T=1.0, seed=Seed(), method="circulant"):
    """One path of ``model`` on n steps over [0, T]."""
    if not isinstance(model, GaussianModel):
        raise InputError("model must be a GaussianModel")
    n = int(n)
    if n < 8:
        raise InputError("need n >= 8")
    if not T > 0:
        raise InputError("horizon must be positive")
    v, d = model.variant, model.dim
    if v == "log_bm" and T > 0.45:
        raise InputError("log_bm requires T <= 0.45")
    if v == "ornstein_uhlenbeck":
        return SampledPath(_simulate_ou(model, n, T, seed), T)
    cols = []
    for c in range(d):
        rng = stream(seed.child(coord=c))
        if v == "brownian":
            x = _fbm_coord(n, T, 0.5, rng, method)
        elif v == "fbm":
            x = _fbm_coord(n, T, model.H, rng, method)
        elif v == "integrated_fbm":
            x = _fbm_coord(n, T, model.H, rng, method)
            for _ in range(model.order):
                x = _cumtrapz0(x, T / n)
        elif v in ("moving_average", "log_bm"):
            x = _moving_average_coord(n, T, _ma_kernel(model), rng)
        elif v == "fbm_sum":
            x = np.zeros(n + 1)
            for j, (h, lam) in enumerate(model.components):
                x += lam * _fbm_coord(n, T, h, stream(seed.child(coord=c), j + 1), method)
        cols.append(x)
    return SampledPath(np.stack(cols, axis=1), T)


def _positive_stable(a, size, rng):
    """Kanter's sampler: E exp(-u S) = exp(-u^a), 0 < a < 1."""
    U = rng.uniform(0.0, 1.0, size)
    E = rng.exponential(1.0, size)
    return (np.sin(a * np.pi * U) / np.sin(np.pi * U) ** (1 / a)
            * (np.sin((1 - a) * np.pi * U) / E) ** ((1 - a) / a))


def _symmetric_stable(a, size, rng):
    """Chambers-Mallows-Stuck: characteristic function exp(-|xi|^a)."""
    V = rng.uniform(-np.pi / 2, np.pi / 2, size)
    E = rng.exponential(1.0, size)
    if a == 1.0:
        return np.tan(V)
    return np.sin(a * V) / np.cos(V) ** (1 / a) * (np.cos((1 - a) * V) / E) ** ((1 - a) / a)


def simulate_stable(model, n, T=1.0, seed=Seed()):
    if not isinstance(model, StableModel):
        raise InputError("model must be a StableModel")
    n = int(n)
    if n < 2:
        raise InputError("need n >= 2")
    dt = T / n
    d = model.dim
    if model.spectral == "axes":
        inc = np.empty((n, d))
        for c, a in enumerate(model.alphas):
            inc[:, c] = dt ** (1 / a) * _symmetric_stable(a, n, stream(seed.child(coord=c)))
    else:
        a = float(model.alphas[0])
        sub = dt ** (2 / a) * _positive_stable(a / 2, n, stream(seed.child(coord=0), 1))
        G = np.stack([stream(seed.child(coord=c)).standard_normal(n) for c in range(d)], axis=1)
        inc = np.sqrt(2 * sub)[:, None] * G
    vals = np.zeros((n + 1, d))
    np.cumsum(inc, axis=0, out=vals[1:])
    return SampledPath(vals, T)


def simulate_batch(model, M, n, T=1.0, seed=Seed(), threads=1):
    """Paths with path labels seed.path + i, i < M, as an (M, n+1, d) array."""
    if isinstance(model, StableModel):
        one = lambda i: simulate_stable(model, n, T, seed.child(path=seed.path + i)).values
    else:
        one = lambda i: simulate_gaussian(model, n, T, seed.child(path=seed.path + i)).values
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(one, range(M)))
    else:
        res = [one(i) for i in range(M)]
    return np.stack(res) if res else np.zeros((0, n + 1, model.dim))


# --- conditional variances -------------------------------------------------

def fbm_lnd_constant(H):
    """Var(W_t | past) / |t-s|^{2H} for fBm with E W_t^2 = t^{2H}.

    Equals Gamma(2H+1) sin(pi H) / (2H Gamma(H+1/2)^2); the bare Mandelbrot-van Ness
    constant Gamma(H+1/2)^{-2}/(2H) (see ``mvn_lnd_constant``) refers to a
    representation whose variance is not normalized, and differs from this for H != 1/2.
    """
    return Gamma(2 * H + 1) * math.sin(math.pi * H) / (2 * H * Gamma(H + 0.5) ** 2)


def mvn_lnd_constant(H):
    """Gamma(H+1/2)^{-2}/(2H): the constant of the un-normalized moving-average form."""
    return Gamma(H + 0.5) ** -2 / (2 * H)


def integrated_fbm_constant(H, m):
    """c_{m,H} in Var(Y_t|F_s) = c_{m,H}|t-s|^{2(m+H)} for the m-fold integral."""
    K2 = 2 * H * fbm_lnd_constant(H)
    prod = np.prod([(H - 0.5 + j) ** 2 for j in range(1, m + 1)])
    return K2 / (prod * (2 * H + 2 * m))


def log_bm_variance(beta, lag):
    """int_0^lag r^{-1}|log r|^{-beta-1} dr = |log lag|^{-beta}/beta  (lag < 1)."""
    return abs(math.log(lag)) ** (-beta) / beta


def conditional_variance(model, s, t):
    """Analytic Var(X_t | F_s) as a d x d matrix."""
    if not 0 <= s < t:
        raise InputError("need 0 <= s < t")
    d, lag, v = model.dim, t - s, model.variant
    I = np.eye(d)
    if v == "brownian":
        return lag * I
    if v == "fbm":
        return fbm_lnd_constant(model.H) * lag ** (2 * model.H) * I
    if v == "integrated_fbm":
        return integrated_fbm_constant(model.H, model.order) * lag ** (2 * (model.H + model.order)) * I
    if v == "moving_average":
        if model.kernel is not None:
            raise UnsupportedError("tabulated kernels have no closed-form conditional variance")
        b = model.beta
        return lag ** (2 * b) / (2 * b) * I
    if v == "log_bm":
        if lag >= 1:
            raise InputError("log_bm variance formula needs t - s < 1")
        return log_bm_variance(model.beta, lag) * I
    if v == "ornstein_uhlenbeck":
        A = np.asarray(model.A, float).reshape(d, d) if model.A is not None else np.zeros((d, d))
        V = np.zeros((2 * d, 2 * d))
        V[:d, :d] = -A
        V[:d, d:] = model.sigma ** 2 * I
        V[d:, d:] = A.T
        F = linalg.expm(V * lag)
        Q = F[:d, d:] @ F[d:, d:].T
        return 0.5 * (Q + Q.T)
    if v == "fbm_sum":
        return sum(l ** 2 * fbm_lnd_constant(h) * lag ** (2 * h) for h, l in model.components) * I
    raise UnsupportedError(f"no closed form for {v}")


def _as_array(samples):
    if isinstance(samples, np.ndarray):
        return samples if samples.ndim == 3 else samples[:, :, None]
    return np.stack([p.values for p in samples])


def empirical_conditional_variance(samples, t_node, history_nodes):
    """Residual covariance of X_t after least-squares projection on history values.

    ``samples`` is a list of paths or an (M, n+1, d) array; nodes are grid indices.
    """
    X = _as_array(samples)
    M, _, d = X.shape
    if M < 200:
        raise InputError("need at least 200 samples")
    hist = np.asarray(history_nodes, int)
    if hist.size and hist.max() >= t_node:
        raise InputError("history nodes must precede t")
    Y = X[:, t_node, :]
    D = np.concatenate([np.ones((M, 1)), X[:, hist, :].reshape(M, -1)], axis=1)
    p = D.shape[1]
    if p >= M:
        raise InputError("more regressors than samples")
    G = D.T @ D
    if np.linalg.cond(G) > 1e12:
        warnings.warn("singular history design; using a ridge-regularized solve", SimulationWarning)
        G = G + 1e-10 * np.trace(G) / p * np.eye(p)
    coef = np.linalg.solve(G, D.T @ Y)
    R = Y - D @ coef
    return R.T @ R / (M - p)


# --- controlled compositions -----------------------------------------------

def _on_grid(f, path):
    if isinstance(f, SampledPath):
        if f.n != path.n or f.horizon != path.horizon:
            raise InputError("grid mismatch between path and composed function")
        return f.values
    if callable(f):
        v = np.asarray(f(path.times()), float)
        return v.reshape(path.n + 1, -1)
    v = np.atleast_1d(np.asarray(f, float)).reshape(-1)
    return np.broadcast_to(v, (path.n + 1, v.size))


def controlled_compose(w, kind, f):
    """'add' -> f + w, 'multiply' -> f * w (d=1), 'young_integral' -> int_0^. f dw."""
    if kind == "add":
        return SampledPath(w.values + _on_grid(f, w), w.horizon)
    if kind == "multiply":
        if w.dim != 1:
            raise InputError("multiply is defined for d = 1")
        fv = _on_grid(f, w)
        if np.min(np.abs(fv)) == 0:
            raise InputError("multiplier must be bounded away from zero")
        return SampledPath(fv * w.values, w.horizon)
    if kind == "young_integral":
        from .young_ode import young_integral
        return young_integral(_on_grid(f, w), w).path
    raise InputError(f"unknown composition {kind!r}")
