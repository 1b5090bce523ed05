"""Experiment configs, seeded runs, the fixed-shift prevalence harness and artifact emission."""
import copy
import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import averaging as av
from . import core_path as cp
from . import geometry as geo
from . import irregularity as irr
from . import simulate as sim
from . import spectral as sp
from . import young_ode as yo
from .errors import InputError
from .rng import Seed, stream

KINDS = ("simulate", "phi", "irregularity", "average", "ode", "geometry", "prevalence", "moments")
FORMATS = ("csv", "json", "both")

# every key and its default; anything else in a config file is rejected
DEFAULTS = {
    "schema": 1,
    "kind": "simulate",
    "model": {"variant": "fbm", "dim": 1, "H": 0.5, "order": 1, "beta": 1.0, "alpha": 1.5,
              "spectral": "axes", "sigma": 1.0, "A": 1.0, "components": []},
    "grid": {"n": 1024, "T": 1.0, "L": 8, "J": 18, "q_min": 1.0, "random_directions": 0},
    "estimator": {"gammas": list(irr.GAMMA_GRID), "q_range": list(irr.Q_RANGE),
                  "levels": irr.ESTIMATOR_LEVELS, "min_r2": 0.9},
    "mc": {"M": 1, "seed": 0},
    "output": {"dir": "out", "format": "both"},
    "average": {"s": 0.0, "t": 1.0, "alpha": -0.5, "modes": 8},
    "ode": {"alpha": -0.5, "modes": 24, "level": 10, "x0": 0.0, "eps": [1e-6, 1e-8]},
    "geometry": {"theta": 0.75, "delta": 0.75, "M": 1.0, "p": [1.5, 3.0],
                 "eps": [2.0 ** -k for k in range(4, 10)]},
    "prevalence": {"phi": ["zero", "polynomial", "weierstrass"], "margin": 0.25, "phi_file": ""},
    "moments": {"order": 1, "q_range": [8.0, 512.0]},
}


def _merge(base, user, where=""):
    out = copy.deepcopy(base)
    for k, v in user.items():
        key = f"{where}{k}"
        if k not in base:
            raise InputError(f"unknown config key '{key}'")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise InputError(f"config key '{key}' must be a table")
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        self.data = _merge(DEFAULTS, self.data)
        if self.data["schema"] != 1:
            raise InputError(f"unsupported schema {self.data['schema']!r} (expected 1)")
        if self.data["kind"] not in KINDS:
            raise InputError(f"unknown experiment kind {self.data['kind']!r}")
        if self.data["output"]["format"] not in FORMATS:
            raise InputError(f"unknown output format {self.data['output']['format']!r}")

    def __getitem__(self, k):
        return self.data[k]

    @classmethod
    def from_toml(cls, text):
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise InputError(f"config is not valid TOML: {e}") from None
        return cls(doc)

    @classmethod
    def load(cls, fname):
        with open(fname, "rb") as fh:
            return cls.from_toml(fh.read().decode("utf-8"))

    def canonical(self):
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def seed(self):
        return Seed(int(self.data["mc"]["seed"]))


# --- models from configs ------------------------------------------------------------

def build_model(m):
    v, d = m["variant"], int(m["dim"])
    if v == "stable":
        return sim.StableModel(m["alpha"], m["spectral"], d)
    if v == "brownian":
        return sim.GaussianModel.brownian(d)
    if v == "fbm":
        return sim.GaussianModel.fbm(m["H"], d)
    if v == "integrated_fbm":
        return sim.GaussianModel.integrated_fbm(m["H"], m["order"], d)
    if v == "log_bm":
        return sim.GaussianModel.log_bm(m["beta"], d)
    if v == "moving_average":
        return sim.GaussianModel.moving_average(beta=m["beta"], dim=d)
    if v == "ornstein_uhlenbeck":
        return sim.GaussianModel.ornstein_uhlenbeck(np.eye(d) * np.asarray(m["A"], float),
                                                    sigma=m["sigma"], dim=d)
    if v == "fbm_sum":
        return sim.GaussianModel.fbm_sum(components=m["components"], dim=d)
    raise InputError(f"unknown model variant {v!r}")


def sample(model, n, T, seed):
    if isinstance(model, sim.StableModel):
        return sim.simulate_stable(model, n, T, seed)
    return sim.simulate_gaussian(model, n, T, seed)


# --- emission -------------------------------------------------------------------------

def fmt(x):
    """Fixed 17-significant-digit text for floats; ints and strings unchanged."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.17g}") if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    return obj


def dumps_json(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n"


def dumps_csv(header, rows):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([fmt(x) for x in r])
    return buf.getvalue()


def dumps_gnuplot(x, y):
    return "".join(f"{fmt(float(a))} {fmt(float(b))}\n" for a, b in zip(x, y))


def _curves(artifact):
    """Named (header, x, y) two-column curves of an artifact."""
    if isinstance(artifact, geo.DensityCurve):
        return {"": (("epsilon", "fraction"), artifact.eps, artifact.fraction)}
    if isinstance(artifact, geo.RoughnessModulus):
        return {"": (("epsilon", "L_theta"), artifact.eps, artifact.values)}
    if isinstance(artifact, geo.WindowReport):
        return {"": (("r", "W"), artifact.r, artifact.W)}
    if isinstance(artifact, geo.DimensionEstimate) and artifact.shells is not None:
        return {"": (("q", "value"), artifact.shells, artifact.sups)}
    if isinstance(artifact, irr.MomentDiagnostic):
        return {"": (("q", "mean"), artifact.q, artifact.mean)}
    if isinstance(artifact, irr.IrregularityReport):
        return {f"_gamma{g:.2f}": (("q", "envelope"), artifact.q, e)
                for g, e in zip(artifact.gammas, artifact.envelopes)}
    return {}


def _summary(artifact):
    if isinstance(artifact, irr.IrregularityReport):
        return artifact.to_dict()
    if isinstance(artifact, geo.DimensionEstimate):
        return json.loads(artifact.to_json())
    if isinstance(artifact, irr.MomentDiagnostic):
        return {"order": artifact.order, "target_slope": artifact.target_slope,
                "slope": artifact.slope, "slope_ci": list(artifact.slope_ci), "r2": artifact.r2,
                "inconclusive": artifact.inconclusive, "q": artifact.q, "mean": artifact.mean,
                "stderr": artifact.stderr}
    if isinstance(artifact, (geo.DensityCurve, geo.RoughnessModulus, geo.WindowReport)):
        return {k: getattr(artifact, k) for k in artifact.__dataclass_fields__}
    if isinstance(artifact, av.AveragedField):
        return json.loads(artifact.to_json())
    if isinstance(artifact, dict):
        return artifact
    return None


def emit(artifact, fmt_, out_dir, stem):
    """Write an artifact; returns the list of written file names."""
    if fmt_ not in FORMATS:
        raise InputError(f"unsupported format {fmt_!r}")
    os.makedirs(out_dir, exist_ok=True)
    files = []

    def put(name, text, mode="w"):
        p = os.path.join(out_dir, name)
        with open(p, mode, newline="" if mode == "w" else None) as fh:
            fh.write(text)
        files.append(p)

    if isinstance(artifact, cp.SampledPath):
        if fmt_ in ("csv", "both"):
            cp.write_csv(artifact, os.path.join(out_dir, stem + ".csv"))
            files.append(os.path.join(out_dir, stem + ".csv"))
        if fmt_ in ("json", "both"):
            cp.write_binary(artifact, os.path.join(out_dir, stem + ".path"))
            files.append(os.path.join(out_dir, stem + ".path"))
        return files
    if isinstance(artifact, sp.PhiTable):
        if fmt_ == "json":
            raise InputError("PhiTable has no JSON form (use csv)")
        artifact.export_csv(os.path.join(out_dir, stem + ".csv"))
        return [os.path.join(out_dir, stem + ".csv")]
    summ = _summary(artifact)
    curves = _curves(artifact)
    if summ is None and not curves:
        raise InputError(f"cannot emit {type(artifact).__name__} as {fmt_}")
    if fmt_ in ("json", "both"):
        if summ is None:
            raise InputError(f"{type(artifact).__name__} has no JSON form")
        put(stem + ".json", dumps_json(summ))
    if fmt_ in ("csv", "both"):
        if not curves:
            if fmt_ == "csv":
                raise InputError(f"{type(artifact).__name__} has no CSV form")
        for suffix, (head, x, y) in curves.items():
            put(f"{stem}{suffix}.csv", dumps_csv(head, zip(x, y)))
            put(f"{stem}{suffix}.dat", dumps_gnuplot(x, y))
    return files


# --- manifest and run -------------------------------------------------------------------

def sha256_file(p):
    h = hashlib.sha256()
    with open(p, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    version: str
    seed: int
    started: str
    finished: str = ""
    files: dict = field(default_factory=dict)        # relative name -> sha256
    stages: dict = field(default_factory=dict)       # stage -> "ok" | error text

    @property
    def ok(self):
        return all(v == "ok" for v in self.stages.values())

    def to_json(self):
        return dumps_json({"config_hash": self.config_hash, "version": self.version,
                           "seed": self.seed, "started": self.started,
                           "finished": self.finished, "files": self.files,
                           "stages": self.stages, "ok": self.ok})


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _freqs(cfg, d):
    g = cfg["grid"]
    return sp.frequency_set(d, g["q_min"], g["J"], g["random_directions"], cfg.seed())


def _path_for(cfg, seed=None):
    g = cfg["grid"]
    return sample(build_model(cfg["model"]), int(g["n"]), float(g["T"]), seed or cfg.seed())


def _stage_simulate(cfg, out, fm):
    M = max(1, int(cfg["mc"]["M"]))
    files = []
    for i in range(M):
        w = _path_for(cfg, cfg.seed().child(path=i))
        files += emit(w, fm, out, f"path_{i:04d}")
    return files


def _stage_phi(cfg, out, fm):
    w = _path_for(cfg)
    tab = sp.phi_table(w, _freqs(cfg, w.dim), sp.IntervalFamily(int(cfg["grid"]["L"])))
    return emit(tab, "csv", out, "phi_table")


def _stage_irregularity(cfg, out, fm):
    w = _path_for(cfg)
    e = cfg["estimator"]
    rep = irr.irregularity_report(w, np.asarray(e["gammas"], float), tuple(e["q_range"]),
                                  levels=int(e["levels"]), min_r2=float(e["min_r2"]))
    return emit(rep, fm, out, "irregularity")


def _stage_average(cfg, out, fm):
    w = _path_for(cfg)
    a = cfg["average"]
    tab = sp.phi_table(w, _freqs(cfg, w.dim), sp.IntervalFamily(int(cfg["grid"]["L"])))
    b = av.random_drift(tab, a["alpha"], cfg.seed())
    keep = slice(0, int(a["modes"]))
    half = len(b) // 2
    b = sp.SpectralField.from_modes(b.xi[:half][keep], b.coef[:half][keep])
    res = av.average_spectral(w, b, a["s"], a["t"])
    return emit(res, "json", out, "averaged_field")


def ode_drift(alpha, modes, seed, kappa=av.KAPPA, q_min=1.0):
    """d = 1 Hermitian drift on a half-octave ladder with |c| = <xi>^{-alpha-kappa}."""
    q = q_min * 2.0 ** (np.arange(modes) / 2)
    g = stream(seed, 0x0DE)
    c = sp.bracket(q[:, None]) ** (-alpha - kappa) * np.exp(2j * np.pi * g.random(modes))
    return sp.SpectralField.from_modes(q[:, None], c)


def _stage_ode(cfg, out, fm):
    o = cfg["ode"]
    w = _path_for(cfg)
    if w.dim != 1:
        raise InputError("the ode experiment uses d = 1")
    b = ode_drift(o["alpha"], int(o["modes"]), cfg.seed())
    prob = yo.ODEProblem(b, w, [o["x0"]], int(o["level"]))
    sol = yo.solve_ode(prob)
    files = emit(sol.path(), "csv", out, "ode_solution")
    rec = yo.flow_diagnostic(prob, o["eps"])
    files += emit({"flow": rec, "blowup": sol.blowup}, "json", out, "flow")
    return files


def _stage_geometry(cfg, out, fm):
    w = _path_for(cfg)
    gm = cfg["geometry"]
    eps = sorted((e for e in gm["eps"] if e >= 4 * w.dt), reverse=True)
    files = emit(geo.holder_density(w, w.n // 2, gm["delta"], gm["M"], eps), fm, out, "holder_density")
    files += emit(geo.roughness_modulus(w, gm["theta"], eps), fm, out, "roughness")
    pv = {f"p={p}": geo.p_variation(w, p).__dict__ for p in gm["p"]}
    files += emit(pv, "json", out, "p_variation")
    files += emit(geo.fourier_dimension(w), fm, out, "fourier_dimension")
    return files


def _stage_moments(cfg, out, fm):
    g, mo = cfg["grid"], cfg["moments"]
    model = build_model(cfg["model"])
    diag = irr.moment_decay(model, M=int(cfg["mc"]["M"]), order=int(mo["order"]), seed=cfg.seed(),
                            n=int(g["n"]), T=float(g["T"]), t=float(g["T"]),
                            fit_range=tuple(mo["q_range"]))
    return emit(diag, fm, out, "moments")


def _stage_prevalence(cfg, out, fm):
    g, pv = cfg["grid"], cfg["prevalence"]
    model = build_model(cfg["model"])
    reports = {}
    for name in pv["phi"]:
        reports[name] = prevalence_harness(name, model, int(cfg["mc"]["M"]), int(g["n"]),
                                           float(g["T"]), cfg.seed(), pv["margin"],
                                           cfg["estimator"], phi_file=pv["phi_file"] or None)
    return emit(reports, "json", out, "prevalence")


STAGES = {"simulate": _stage_simulate, "phi": _stage_phi, "irregularity": _stage_irregularity,
          "average": _stage_average, "ode": _stage_ode, "geometry": _stage_geometry,
          "moments": _stage_moments, "prevalence": _stage_prevalence}


def run(cfg, out_dir=None, fmt_=None, threads=1):
    """Execute the experiment of ``cfg``; writes artifacts and manifest.json into out_dir.

    ``threads`` is accepted for interface symmetry; outputs never depend on it.
    """
    out = out_dir or cfg["output"]["dir"]
    fm = fmt_ or cfg["output"]["format"]
    os.makedirs(out, exist_ok=True)
    man = RunManifest(cfg.digest(), __version__, int(cfg["mc"]["seed"]), _now())
    kind = cfg["kind"]
    try:
        written = STAGES[kind](cfg, out, fm)
        man.stages[kind] = "ok"
    except Exception as e:  # recorded, reported through the exit status
        written = []
        man.stages[kind] = f"{type(e).__name__}: {e}"
    for p in sorted(os.listdir(out)):
        full = os.path.join(out, p)
        if p != "manifest.json" and os.path.isfile(full):
            man.files[p] = sha256_file(full)
    man.finished = _now()
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        fh.write(man.to_json())
    man.written = written
    return man


# --- prevalence harness ---------------------------------------------------------------

WEIERSTRASS_MODES = 12


def base_function(name, n, T=1.0, fname=None):
    """Deterministic shift phi on the grid: zero, polynomial, trigonometric, weierstrass, file."""
    t = np.arange(n + 1) * (T / n)
    if name == "zero":
        v = np.zeros_like(t)
    elif name == "polynomial":
        v = 1.0 - 2.0 * t + 3.0 * t ** 2
    elif name == "trigonometric":
        v = np.sin(2 * np.pi * t) + 0.5 * np.cos(6 * np.pi * t)
    elif name == "weierstrass":
        # sum 2^{-k a} cos(2^k pi t) with a just below 1/2: Hölder of every order < a
        a = 0.49
        k = np.arange(WEIERSTRASS_MODES)
        v = np.sum(2.0 ** (-a * k)[:, None] * np.cos(np.pi * 2.0 ** k[:, None] * t), axis=0)
    elif name == "file":
        w = cp.read_binary(fname) if str(fname).endswith(".path") else cp.read_csv(fname)
        if w.n != n or w.dim != 1:
            raise InputError("shift file must be a d = 1 path on the experiment grid")
        return w
    else:
        raise InputError(f"unknown shift {name!r}")
    return cp.SampledPath(v, T)


@dataclass
class PrevalenceReport:
    shift: str
    M: int
    threshold: float
    rho: list
    passed: int
    inconclusive: int

    @property
    def pass_rate(self):
        valid = self.M - self.inconclusive
        return float(self.passed / valid) if valid else float("nan")

    def to_dict(self):
        return {"shift": self.shift, "M": self.M, "threshold": self.threshold, "rho": self.rho,
                "passed": self.passed, "inconclusive": self.inconclusive,
                "pass_rate": self.pass_rate}


def prevalence_harness(shift, noise, M, n=2 ** 14, T=1.0, seed=Seed(), margin=0.25,
                       estimator=None, phi_file=None, freqs=None):
    """Fraction of noise draws W with rho_hat(phi + W) > (2H)^{-1} - margin, phi fixed.

    Estimates whose best fit misses the R^2 floor are counted as inconclusive,
    not as failures.
    """
    est = dict(DEFAULTS["estimator"], **(estimator or {}))
    H = noise.slnd_exponent
    if H is None:
        raise InputError("noise model needs a power-law local nondeterminism exponent")
    thr = 1.0 / (2 * H) - margin
    phi = shift if isinstance(shift, cp.SampledPath) else base_function(shift, n, T, phi_file)
    name = shift if isinstance(shift, str) else "custom"
    rhos, ok, inc = [], 0, 0
    for i in range(M):
        w = sim.simulate_gaussian(noise, n, T, seed.child(path=i))
        x = cp.SampledPath(w.values + phi.values, T)
        rep = irr.irregularity_report(x, np.asarray(est["gammas"], float), tuple(est["q_range"]),
                                      freqs=freqs, levels=int(est["levels"]),
                                      min_r2=float(est["min_r2"]))
        r = rep.rho_best
        rhos.append(r)
        if rep.r2[rep.best] < float(est["min_r2"]):
            inc += 1
        elif r > thr:
            ok += 1
    return PrevalenceReport(name, int(M), float(thr), rhos, ok, inc).to_dict()
