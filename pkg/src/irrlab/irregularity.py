"""Estimators for (gamma, rho)-irregularity built on Phi tables.

The basic statistic is the shell envelope
    E_gamma(q) = max over dyadic intervals and directions of |Phi_{s,t}(xi)| / |t-s|^gamma
at |xi| = q, and rho is read off a log-log regression of E against q. None of
this certifies irregularity (a finite sup never proves a statement for all xi);
every number comes with its fit diagnostics.
"""
import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core_path import SampledPath
from .errors import InputError, ResourceError
from .rng import Seed
from . import simulate as sim
from . import spectral as sp

GAMMA_GRID = np.round(np.arange(0.5, 0.951, 0.05), 2)
Q_RANGE = (8.0, 512.0)
# Level depth used when a report is built straight from a path. Few levels keep
# the sup over 2^L intervals from inflating the high-frequency end of the
# envelope (an extreme-value effect), which biases the fitted slope downwards.
ESTIMATOR_LEVELS = 4


@dataclass(frozen=True)
class Envelope:
    q: np.ndarray
    values: np.ndarray
    gamma: float


def _level_maxima(table):
    """max |Phi| per (level, shell) over intervals and directions: shape (L+1, Q)."""
    return np.array([np.abs(table.level(l)).max(axis=(1, 2)) for l in range(table.L + 1)])


def envelope(table, gamma):
    if table.L < 4:
        raise InputError("envelope needs a table with L >= 4")
    lm = _level_maxima(table)
    lens = table.lengths()
    vals = np.max(lm / lens[:, None] ** gamma, axis=0)
    return Envelope(table.freqs.magnitudes.copy(), vals, float(gamma))


def _envelopes(table, gammas):
    lm = _level_maxima(table)
    lens = table.lengths()
    return np.array([np.max(lm / lens[:, None] ** g, axis=0) for g in gammas])


# --- fits --------------------------------------------------------------------

@dataclass(frozen=True)
class PowerFit:
    rho: float
    C: float
    r2: float
    q_range: tuple
    n_shells: int


@dataclass(frozen=True)
class DecayFit:
    model: str                 # "power" or "exponential" (the selected one)
    rho: float
    C: float
    c1: float
    c2: float
    r2: float                  # R^2 of the selected model
    r2_power: float
    r2_exponential: float
    aic_power: float
    aic_exponential: float
    q_range: tuple


def _select(q, E, q_range):
    lo, hi = q_range
    sel = (q >= lo * (1 - 1e-12)) & (q <= hi * (1 + 1e-12))
    if sel.sum() < 6:
        raise InputError(f"need >= 6 shells in {q_range}, have {int(sel.sum())}")
    if np.any(E[sel] <= 0):
        raise InputError("envelope must be positive on the fit range")
    return q[sel], np.log(E[sel])


def _linfit(x, y):
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    rss = float(res @ res)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 1e-300 else (1.0 if rss < 1e-24 else 0.0)
    return coef[0], coef[1], r2, rss


def fit_rho(env, q_range=Q_RANGE):
    """Least squares of log E on log q: rho = -slope, C = exp(intercept)."""
    q, y = _select(env.q, env.values, q_range)
    slope, icpt, r2, _ = _linfit(np.log(q), y)
    return PowerFit(float(-slope), float(math.exp(icpt)), float(r2), tuple(q_range), int(q.size))


def _aic(rss, n, k=2):
    return n * math.log(max(rss, 1e-300) / n) + 2 * k


def fit_exponential(env, q_range=Q_RANGE, margin=2.0):
    """Fit log E against q, and against log q; pick by AIC.

    Both models have two parameters, so the criterion compares residual sums of
    squares; the exponential model is selected only when its AIC is lower by more
    than ``margin`` (default 2).
    """
    q, y = _select(env.q, env.values, q_range)
    n = q.size
    ps, pi, pr2, prss = _linfit(np.log(q), y)
    es, ei, er2, erss = _linfit(q, y)
    a_p, a_e = _aic(prss, n), _aic(erss, n)
    if prss < 1e-20 * n and erss < 1e-20 * n:
        a_p = a_e  # degenerate flat data: no evidence for either
    pick_exp = a_e + margin < a_p
    return DecayFit("exponential" if pick_exp else "power", float(-ps), float(math.exp(pi)),
                    float(math.exp(ei)), float(-es), float(er2 if pick_exp else pr2),
                    float(pr2), float(er2), float(a_p), float(a_e), tuple(q_range))


# --- reports -----------------------------------------------------------------

@dataclass
class IrregularityReport:
    gammas: np.ndarray
    q: np.ndarray
    envelopes: np.ndarray      # (G, Q)
    rho: np.ndarray
    C: np.ndarray
    r2: np.ndarray
    norm: np.ndarray           # sup over the table of E_gamma(q) q^rho
    q_range: tuple
    levels: int
    delta_star: float = float("nan")
    best: int = 0

    @property
    def rho_best(self):
        return float(self.rho[self.best])

    @property
    def gamma_best(self):
        return float(self.gammas[self.best])

    def to_dict(self):
        return {"gamma": self.gammas.tolist(), "q": self.q.tolist(),
                "envelope": self.envelopes.tolist(), "rho": self.rho.tolist(),
                "C": self.C.tolist(), "r2": self.r2.tolist(), "norm": self.norm.tolist(),
                "q_range": list(self.q_range), "levels": self.levels,
                "delta_star": self.delta_star, "best_gamma": self.gamma_best,
                "rho_best": self.rho_best}

    def to_json(self, fname):
        with open(fname, "w") as fh:
            json.dump(_finite(self.to_dict()), fh, sort_keys=True, indent=1)

    def to_csv(self, fname):
        with open(fname, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["gamma", "q", "envelope"])
            for g, row in zip(self.gammas, self.envelopes):
                for q, e in zip(self.q, row):
                    wr.writerow([f"{g:.17g}", f"{q:.17g}", f"{e:.17g}"])


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, list):
        return [_finite(o) for o in obj]
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    return obj


def irregularity_report(source, gammas=GAMMA_GRID, q_range=Q_RANGE, freqs=None,
                        levels=ESTIMATOR_LEVELS, min_r2=0.9):
    """Envelopes, fits and critical-parameter estimate for a table or a path.

    The reported "best" gamma is the grid point with the largest fitted rho among
    fits with R^2 >= min_r2 (largest R^2 if none qualifies).
    """
    if isinstance(source, SampledPath):
        table = sp.phi_table(source, freqs, sp.IntervalFamily(levels))
    else:
        table = source
    gammas = np.asarray(gammas, float)
    envs = _envelopes(table, gammas)
    q = table.freqs.magnitudes
    rho, C, r2, norm = (np.empty(len(gammas)) for _ in range(4))
    for i, g in enumerate(gammas):
        f = fit_rho(Envelope(q, envs[i], g), q_range)
        rho[i], C[i], r2[i] = f.rho, f.C, f.r2
        norm[i] = float(np.max(envs[i] * q ** f.rho))
    with np.errstate(divide="ignore"):
        ds = np.where(rho > 0, (1 - gammas) / np.where(rho > 0, rho, 1), np.inf)
    ok = r2 >= min_r2
    best = int(np.argmax(np.where(ok, rho, -np.inf))) if ok.any() else int(np.argmax(r2))
    return IrregularityReport(gammas, q.copy(), envs, rho, C, r2, norm, tuple(q_range),
                              table.L, float(ds.min()), best)


# --- interpolation inequality ----------------------------------------------------

def sup_norm(table, gamma, rho):
    """max over the table of |Phi_{s,t}(xi)| |xi|^rho / |t-s|^gamma."""
    lm = _level_maxima_weighted(table, rho)
    return float(np.max(lm / table.lengths()[:, None] ** gamma))


def _level_maxima_weighted(table, rho):
    q = table.freqs.magnitudes
    return np.array([(np.abs(table.level(l)) * (q ** rho)[:, None, None]).max(axis=(1, 2))
                     for l in range(table.L + 1)])


@dataclass(frozen=True)
class InterpolationCheck:
    theta: float
    gamma_theta: float
    rho_theta: float
    N: float
    N_theta: float
    bound: float
    holds: bool


def interpolation_check(table, gamma, rho, theta, tol=1e-9):
    """Sup-norm at (1 - theta + theta gamma, theta rho) against N^theta.

    Per interval |Phi| |xi|^{theta rho} / |t-s|^{gamma_theta}
    = (|Phi|/|t-s|)^{1-theta} (|Phi| |xi|^rho / |t-s|^gamma)^theta, and |Phi| <= |t-s|.
    """
    if not 0 < theta <= 1:
        raise InputError("theta must lie in (0, 1]")
    N = sup_norm(table, gamma, rho)
    gt, rt = 1 - theta + theta * gamma, theta * rho
    Nt = sup_norm(table, gt, rt)
    bound = N ** theta * (1 + tol)
    return InterpolationCheck(theta, gt, rt, N, Nt, bound, bool(Nt <= bound))


# --- strong irregularity -----------------------------------------------------------

def eta_lattice(n_p, k_max=8):
    if not 1 <= n_p <= 3:
        raise InputError("polynomial degree must be 1..3")
    if k_max > 8:
        raise InputError("k_max must be <= 8")
    vals = [0.0] + [s * 2.0 ** k for k in range(k_max + 1) for s in (1, -1)]
    grids = np.meshgrid(*([vals] * n_p), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def _seg_factor(db):
    """(exp(i db) - 1)/(i db), stable for small db."""
    out = np.empty(db.shape, complex)
    ad = np.abs(db)
    big = ad >= 0.1
    out[big] = (np.exp(1j * db[big]) - 1) / (1j * db[big])
    sm = ~big
    x = db[sm]
    h = np.sin(0.5 * x)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = (-2 * h * h + 1j * np.sin(x)) / (1j * x)
    v[np.abs(x) < 1e-8] = 1 + 0.5j * x[np.abs(x) < 1e-8]
    out[sm] = v
    return out


def _poly(eta, r):
    return sum(e * r ** (k + 1) for k, e in enumerate(eta))


def _dpoly(eta, r):
    return sum((k + 1) * e * r ** k for k, e in enumerate(eta))


def _ddpoly_max(eta, T):
    r = np.linspace(0, T, 65)
    return float(np.max(np.abs(sum((k + 1) * k * e * r ** (k - 1) if k else 0 * r
                                   for k, e in enumerate(eta)))))


def strong_prefix(path, xi, eta, tol=1e-3):
    """Phi_{0,t_k} of exp(i xi.w_r + i g^eta(r)) at every node, by linearized sub-segments."""
    n, dt = path.n, path.dt
    curv = _ddpoly_max(eta, path.horizon)
    sub = max(1, int(math.ceil(dt * math.sqrt(curv / tol)))) if curv > 0 else 1
    delta = dt / sub
    ph = sp._phase(path.values, xi)
    frac = np.arange(sub) / sub
    pl = ph[:-1, None] + frac[None, :] * (ph[1:] - ph[:-1])[:, None]      # path phase at sub-left ends
    dpath = ((ph[1:] - ph[:-1]) / sub)[:, None] * np.ones((1, sub))
    rl = (np.arange(n)[:, None] + frac[None, :]) * dt
    rm = rl + 0.5 * delta
    slope = _dpoly(eta, rm)
    a = pl + _poly(eta, rm) - 0.5 * delta * slope
    db = dpath + slope * delta
    seg = delta * np.exp(1j * a) * _seg_factor(db)
    out = np.zeros(n + 1, complex)
    np.cumsum(seg.sum(axis=1), out=out[1:])
    return out, sub


def _psi(x):
    return np.sqrt(x * np.log(np.e + 1.0 / x))


@dataclass
class StrongEnvelope:
    eta: np.ndarray            # (E, n_p)
    values: np.ndarray         # sup over (s,t,xi) of the normalized integral, per eta
    rho: float
    subdivisions: int

    def by_magnitude(self):
        """Max normalized value for each distinct |eta| (sup norm over components)."""
        mag = np.max(np.abs(self.eta), axis=1)
        keys = np.unique(mag)
        return keys, np.array([self.values[mag == k].max() for k in keys])


def strong_envelope(path, n_p=1, eta_set=None, freqs=None, intervals=None, rho=0.5, tol=1e-3,
                    cap_bytes=sp.DEFAULT_CAP):
    """sup over (s,t,xi) of |int e^{i xi.w + i g^eta}| F(xi) / (sqrt(log(e+|eta|)) psi(|t-s|)).

    F(xi) = |xi|^rho / sqrt(log(e + |xi|)), psi(x) = sqrt(x log(e + 1/x)); the e+
    shifts keep the normalizers positive at |eta| = 0, |xi| = 1 and |t-s| = 1
    without changing their large-argument behaviour.
    """
    freqs = sp.frequency_set(path.dim, J=12) if freqs is None else freqs
    intervals = sp.IntervalFamily(4) if intervals is None else intervals
    intervals.check(path)
    eta_set = eta_lattice(n_p) if eta_set is None else np.atleast_2d(eta_set)
    if eta_set.shape[1] > 3:
        raise InputError("polynomial degree must be <= 3")
    need = (path.n * 16 * 8) * max(1, int(math.ceil(path.dt * math.sqrt(
        max(_ddpoly_max(e, path.horizon) for e in eta_set) / tol))))
    if need > cap_bytes:
        raise ResourceError(f"strong_envelope needs ~{need} bytes, cap is {cap_bytes}")
    step = path.n >> intervals.L
    lens = intervals.lengths(path.horizon)
    q = freqs.magnitudes
    Fq = q ** rho / np.sqrt(np.log(np.e + q))
    vals = np.empty(len(eta_set))
    sub_max = 1
    for i, eta in enumerate(eta_set):
        best = 0.0
        for j in range(len(q)):
            for u in range(len(freqs.directions)):
                P, sub = strong_prefix(path, freqs.vector(j, u), eta, tol)
                sub_max = max(sub_max, sub)
                B = P[::step]
                for l in range(intervals.L + 1):
                    st = 1 << (intervals.L - l)
                    m = np.abs(B[st::st] - B[:-1:st][: 1 << l]).max()
                    best = max(best, m * Fq[j] / _psi(lens[l]))
        vals[i] = best / math.sqrt(math.log(math.e + float(np.linalg.norm(eta))))
    return StrongEnvelope(eta_set, vals, float(rho), sub_max)


# --- moment diagnostics -------------------------------------------------------------

def anisotropic_norm(xi, alphas):
    """sqrt(sum_i |xi_i|^{alpha_i})."""
    xi = np.atleast_2d(np.asarray(xi, float))
    return np.sqrt(np.sum(np.abs(xi) ** np.asarray(alphas, float), axis=-1))


@dataclass
class MomentDiagnostic:
    order: int                 # the moment is E|Phi|^{2 order}
    q: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    target_slope: float
    slope: float
    slope_ci: tuple
    r2: float
    inconclusive: bool
    psi: float                 # sqrt(x |log x|) at x = t - s
    fit_range: tuple
    cf_xi: np.ndarray = None   # stable models: probe frequencies
    cf_mean: np.ndarray = None
    cf_stderr: np.ndarray = None
    cf_target: np.ndarray = None

    def to_csv(self, fname):
        with open(fname, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["q", "mean", "stderr"])
            for a, b, c in zip(self.q, self.mean, self.stderr):
                wr.writerow([f"{a:.17g}", f"{b:.17g}", f"{c:.17g}"])


def moment_decay(model, M=500, order=1, s=0.0, t=1.0, q=None, seed=Seed(), n=2 ** 16, T=1.0,
                 direction=None, fit_range=Q_RANGE, batches=8, cf_xi=None, index="euclidean",
                 threads=1):
    """Monte-Carlo E|Phi_{s,t}(xi)|^{2 order} per shell with a batch-split slope CI.

    ``index="anisotropic"`` regresses against the anisotropic norm of xi instead of |xi|
    (axes-stable models with per-coordinate exponents).
    """
    if M < 200:
        raise InputError("need M >= 200 samples")
    q = 2.0 ** (np.arange(0, 19) / 2) if q is None else np.asarray(q, float)
    d = model.dim
    u = np.eye(d)[0] if direction is None else np.asarray(direction, float) / np.linalg.norm(direction)
    dt = T / n
    i0, i1 = int(round(s / dt)), int(round(t / dt))
    cf_xi = None if cf_xi is None else np.atleast_2d(np.asarray(cf_xi, float))
    vals = np.empty((M, q.size))
    cfv = None if cf_xi is None else np.empty((M, len(cf_xi)), complex)

    def one(i):
        sd = seed.child(path=seed.path + i)
        if isinstance(model, sim.StableModel):
            p = sim.simulate_stable(model, n, T, sd)
        else:
            p = sim.simulate_gaussian(model, n, T, sd)
        row = np.array([abs(sp._diff(p, qq * u, i0, i1)) ** (2 * order) for qq in q])
        cf = None
        if cf_xi is not None:
            inc = p.values[i1] - p.values[i0]
            cf = np.exp(1j * cf_xi @ inc)
        return row, cf

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(one, range(M)))
    else:
        res = [one(i) for i in range(M)]
    for i, (row, cf) in enumerate(res):
        vals[i] = row
        if cfv is not None:
            cfv[i] = cf
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(M)
    x = q if index == "euclidean" else anisotropic_norm(q[:, None] * u, model.alphas)
    sel = (q >= fit_range[0] * (1 - 1e-12)) & (q <= fit_range[1] * (1 + 1e-12))
    lx = np.log(x[sel])
    slope, _, r2, _ = _linfit(lx, np.log(mean[sel]))
    bs = []
    for b in np.array_split(np.arange(M), batches):
        mb = vals[b].mean(axis=0)[sel]
        bs.append(_linfit(lx, np.log(mb))[0])
    bs = np.array(bs)
    half = stats.t.ppf(0.975, batches - 1) * bs.std(ddof=1) / math.sqrt(batches)
    ci = (float(bs.mean() - half), float(bs.mean() + half))
    if isinstance(model, sim.StableModel):
        a = model.alphas
        target = -float(a[0]) * order if index == "euclidean" else -2.0 * order
    else:
        b = model.slnd_exponent
        target = -order / b if b else float("nan")
    lag = t - s
    diag = MomentDiagnostic(order, q, mean, se, target, float(slope), ci, float(r2),
                            bool(ci[1] - ci[0] > 0.5), float(math.sqrt(lag * abs(math.log(lag))))
                            if lag != 1 else 0.0, tuple(fit_range))
    if cf_xi is not None:
        diag.cf_xi = cf_xi
        diag.cf_mean = cfv.mean(axis=0)
        diag.cf_stderr = np.sqrt(cfv.real.var(axis=0, ddof=1) / M)
        if isinstance(model, sim.StableModel):
            diag.cf_target = np.exp(-lag * model.exponent(cf_xi))
    return diag
