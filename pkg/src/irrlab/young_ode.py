"""Sewing of two-parameter germs, Young integrals, and the perturbed ODE
    x_t = x_0 + int_0^t b(s, x_s) ds + w_t
solved through theta = x - w with exactly averaged drift increments.
"""
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core_path import SampledPath
from .errors import InputError
from . import spectral as sp


class SewingWarning(UserWarning):
    """Young/sewing preconditions not met (results still returned)."""


@dataclass
class Germ:
    """Gamma(s, t) for arrays of left/right times; values of shape (K, m)."""
    evaluate: object
    dim: int
    horizon: float
    alpha: float = None
    beta: float = 2.0

    def __post_init__(self):
        if self.beta is not None and not self.beta > 1:
            raise InputError("sewing needs a germ exponent beta > 1")

    def __call__(self, s, t):
        return np.asarray(self.evaluate(np.asarray(s, float), np.asarray(t, float))).reshape(len(np.atleast_1d(s)), self.dim)


@dataclass
class SewResult:
    times: np.ndarray
    values: np.ndarray          # (2^L + 1, m), (I Gamma)_{t_k} - (I Gamma)_0
    level: int
    diffs: np.ndarray           # sup-norm refinement differences, coarsest first
    diff_levels: np.ndarray
    order: float
    divergent: bool
    expected_order: float = None


def riemann_sum(germ, L, t0=0.0, t1=None):
    t1 = germ.horizon if t1 is None else t1
    tk = t0 + (t1 - t0) * np.arange((1 << L) + 1) / (1 << L)
    inc = germ(tk[:-1], tk[1:])
    out = np.zeros(((1 << L) + 1, germ.dim), dtype=inc.dtype)
    np.cumsum(inc, axis=0, out=out[1:])
    return tk, out


def sew(germ, L_s=10, n_diag=4, t0=0.0, t1=None):
    """Riemann-germ sums on the level-L_s partition of [t0, t1] with a refinement diagnostic.

    The diagnostic compares level l with level l-1 on the coarse nodes for the last
    ``n_diag`` levels; the fitted order is -slope of log2(difference) against l.
    """
    tk, I = riemann_sum(germ, L_s, t0, t1)
    lv = np.arange(max(1, L_s - n_diag + 1), L_s + 1)
    diffs = []
    prev = None
    for l in range(lv[0] - 1, L_s + 1):
        _, cur = riemann_sum(germ, l, t0, t1) if l != L_s else (tk, I)
        if prev is not None:
            diffs.append(float(np.max(np.abs(cur[::2] - prev))))
        prev = cur
    diffs = np.array(diffs)
    pos = diffs > 0
    if pos.sum() >= 2:
        slope = np.polyfit(lv[pos], np.log2(diffs[pos]), 1)[0]
        order = float(-slope)
    else:
        order = float("inf")  # exact at every level (additive germ)
    expected = None if germ.beta is None else germ.beta - 1
    return SewResult(tk, I, L_s, diffs, lv, order, bool(order <= 0), expected)


@dataclass
class YoungResult:
    path: SampledPath
    sew: SewResult
    holder: tuple               # (alpha_hat, beta_hat)
    warning: bool


def _estimate_exponent(path, lags=(1, 2, 4, 8, 16, 32)):
    """Hölder exponent from the scaling of root-mean-square increments over small lags."""
    w = path.values
    ks = [k for k in lags if k < path.n // 4]
    m = np.array([np.sqrt(np.mean(np.sum((w[k:] - w[:-k]) ** 2, axis=1))) for k in ks])
    if len(ks) < 2 or np.all(m == 0):
        return 1.0
    m = np.maximum(m, 1e-300)
    return float(min(1.0, np.polyfit(np.log(ks), np.log(m), 1)[0]))


def _matrix_values(A, d_phi):
    a = A.values if isinstance(A, SampledPath) else np.asarray(A, float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim == 2:
        if a.shape[1] == 1:
            return a[:, :, None] * np.eye(d_phi)[None]          # scalar integrand
        if a.shape[1] == d_phi:
            return a[:, :, None] * np.eye(d_phi)[None]          # diagonal
        if a.shape[1] % d_phi == 0:
            return a.reshape(a.shape[0], -1, d_phi)             # flattened matrix
    if a.ndim == 3 and a.shape[2] == d_phi:
        return a
    raise InputError("integrand shape is incompatible with the integrator")


def young_integral(A, phi, L_s=None, check=True):
    """int_0^. A_s dphi_s as the sewing of Gamma_{s,t} = A_s phi_{s,t}.

    A may be scalar, diagonal (same dim as phi) or a flattened m x d matrix path.
    The result lives on the level-L_s nodes (default: the full grid of phi).
    """
    n = phi.n
    Am = _matrix_values(A, phi.dim)
    if Am.shape[1] > 3:
        raise InputError("integral dimension must be <= 3")
    if Am.shape[0] != n + 1:
        raise InputError("integrand and integrator must share the grid")
    if L_s is None:
        if n & (n - 1):
            raise InputError("grid size must be a power of two for the default level")
        L_s = n.bit_length() - 1
    if n % (1 << L_s):
        raise InputError("2^L_s must divide n")
    ah = _estimate_exponent(SampledPath(Am.reshape(n + 1, -1)[:, :3], phi.horizon)) if check else 1.0
    bh = _estimate_exponent(phi) if check else 1.0
    warn = check and ah + bh <= 1
    if warn:
        warnings.warn(f"Young condition fails: measured exponents {ah:.2f} + {bh:.2f} <= 1",
                      SewingWarning)
    dt = phi.dt
    pv = phi.values

    def ev(s, t):
        i = np.rint(s / dt).astype(int)
        j = np.rint(t / dt).astype(int)
        return np.einsum("kij,kj->ki", Am[i], pv[j] - pv[i])

    # below the Young threshold the sums are still formed, without a predicted order
    germ = Germ(ev, Am.shape[1], phi.horizon, alpha=ah, beta=ah + bh if ah + bh > 1 else None)
    res = sew(germ, L_s)
    return YoungResult(SampledPath(res.values, phi.horizon), res, (ah, bh), bool(warn))


# --- perturbed ODE -----------------------------------------------------------

def _components(drift, d):
    comps = tuple(drift) if isinstance(drift, (tuple, list)) else (drift,)
    if len(comps) == 1 and d > 1:
        raise InputError("a d > 1 problem needs one drift field per coordinate")
    if len(comps) != d or any(c.xi.shape[1] != d for c in comps):
        raise InputError("drift, path and x0 dimensions must agree")
    return comps


@dataclass
class ODEProblem:
    """drift: one SpectralField / TimeDependentDrift per coordinate (a bare field when d = 1)."""
    drift: object
    path: SampledPath
    x0: np.ndarray
    level: int = 10

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, float))
        if self.x0.size != self.path.dim:
            raise InputError("x0 must have the path dimension")
        _components(self.drift, self.path.dim)
        if self.path.n % (1 << self.level):
            raise InputError("2^level must divide the path grid size")

    @property
    def components(self):
        return _components(self.drift, self.path.dim)


@dataclass
class ODESolution:
    times: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    fields: np.ndarray          # averaged drift increment applied at each step
    blowup: bool
    blowup_step: int = -1

    def path(self):
        return SampledPath(self.x, self.times[-1])


def _step_coefficients(problem):
    """Per component: averaged coefficients c_j Phi_{t_k,t_{k+1}}(xi_j), shape (steps, K)."""
    w, L = problem.path, problem.level
    st = w.n >> L
    out = []
    for b in problem.components:
        Phi = np.stack([sp._prefix(w, x)[::st] for x in b.xi], axis=1)     # (steps+1, K)
        dPhi = Phi[1:] - Phi[:-1]
        c = b.coef_paths[::st][:-1] if hasattr(b, "coef_paths") else b.coef[None, :]
        out.append(dPhi * c)                                              # left-point germ
    return out


def drift_band(problem):
    tot = 0.0
    for b in problem.components:
        c = np.max(np.abs(b.coef_paths), axis=0) if hasattr(b, "coef_paths") else np.abs(b.coef)
        tot = max(tot, float(c.sum()))
    return float(np.max(np.abs(problem.x0)) + problem.path.horizon * tot + 1.0)


def solve_ode(problem, coefficients=None):
    """theta_{k+1} = theta_k + (T^w_{t_k,t_{k+1}} b)(theta_k);  x = theta + w - w_0."""
    w, L = problem.path, problem.level
    steps = 1 << L
    st = w.n >> L
    C = _step_coefficients(problem) if coefficients is None else coefficients
    comps = problem.components
    band = 10 * drift_band(problem)
    th = np.empty((steps + 1, w.dim))
    th[0] = problem.x0
    fields = np.zeros((steps, w.dim))
    blow, where = False, -1
    for k in range(steps):
        for c, b in enumerate(comps):
            v = np.exp(1j * (b.xi @ th[k])) @ C[c][k]
            fields[k, c] = v.real
        th[k + 1] = th[k] + fields[k]
        if not np.all(np.isfinite(th[k + 1])) or np.max(np.abs(th[k + 1])) > band:
            blow, where = True, k
            th[k + 1:] = np.nan
            break
    times = np.arange(steps + 1) * (w.horizon / steps)
    x = th + (w.values[::st] - w.values[0])
    return ODESolution(times, x, th, fields, blow, where)


def flow_diagnostic(problem, eps=(1e-6, 1e-8)):
    """Sup-ratio |x^eps - x| / eps for starts x0 + eps e_1; JSON-ready records."""
    eps = [float(e) for e in eps]
    if len(eps) < 2:
        raise InputError("need at least two perturbation sizes")
    C = _step_coefficients(problem)
    base = solve_ode(problem, C)
    out = []
    for e in eps:
        x0 = problem.x0.copy()
        x0[0] += e
        pr = ODEProblem(problem.drift, problem.path, x0, problem.level)
        sol = solve_ode(pr, C)
        blow = base.blowup or sol.blowup
        r = float(np.nanmax(np.abs(sol.x - base.x)) / e) if not blow else float("inf")
        out.append({"epsilon": e, "sup_ratio": r, "blowup": bool(blow)})
    return out


def flow_json(records):
    return json.dumps([{k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                        for k, v in r.items()} for r in records], sort_keys=True)


# --- reparametrization -------------------------------------------------------

def _inverse(tau, r, T, tol=1e-12):
    lo = np.zeros_like(r)
    hi = np.full_like(r, T)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = tau(mid) < r
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < tol:
            break
    return 0.5 * (lo + hi)


def reparametrize(path, tau):
    """w~_r = w_{tau^{-1}(r)} on the uniform grid of [0, tau(T)] (linear interpolation)."""
    T = path.horizon
    probe = np.linspace(0, T, 8 * path.n + 1)
    tv = np.asarray(tau(probe), float)
    if abs(tv[0]) > 1e-12 or np.any(np.diff(tv) <= 0):
        raise InputError("tau must be strictly increasing with tau(0) = 0")
    Tn = float(tv[-1])
    r = np.arange(path.n + 1) * (Tn / path.n)
    s = _inverse(lambda x: np.asarray(tau(x), float), r, T)
    s[0], s[-1] = 0.0, T
    tg = path.times()
    vals = np.stack([np.interp(s, tg, path.values[:, c]) for c in range(path.dim)], axis=1)
    return SampledPath(vals, Tn)
