import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irrlab import InputError, SampledPath, Seed
from irrlab import core_path as cp
from irrlab import geometry as geo
from irrlab import irregularity as irr
from irrlab import labcli as lc
from irrlab import simulate as sim
from irrlab.__main__ import main


def cfg(**tables):
    return lc.ExperimentConfig(tables)


# --- configs ---------------------------------------------------------------------------

def test_defaults_cover_every_key():
    c = lc.ExperimentConfig()
    assert c.data == lc.DEFAULTS and c["schema"] == 1


def test_unknown_key_named():
    with pytest.raises(InputError, match="grid.nn"):
        lc.ExperimentConfig.from_toml("[grid]\nnn = 4\n")
    with pytest.raises(InputError, match="bogus"):
        lc.ExperimentConfig.from_toml("bogus = 1\n")


def test_schema_kind_and_format_checked():
    for text in ("schema = 2\n", 'kind = "plot"\n', '[output]\nformat = "xml"\n', "[grid\n"):
        with pytest.raises(InputError):
            lc.ExperimentConfig.from_toml(text)


def test_toml_merges_defaults():
    c = lc.ExperimentConfig.from_toml('kind = "phi"\n[model]\nH = 0.7\n[mc]\nseed = 9\n')
    assert c["model"]["H"] == 0.7 and c["model"]["variant"] == "fbm"
    assert c["grid"]["n"] == 1024 and c.seed() == Seed(9)


def test_digest_tracks_content():
    a, b = cfg(mc={"seed": 1}), cfg(mc={"seed": 1})
    assert a.digest() == b.digest() != cfg(mc={"seed": 2}).digest()


@pytest.mark.parametrize("variant", ["brownian", "fbm", "integrated_fbm", "log_bm", "moving_average",
                                     "ornstein_uhlenbeck", "stable"])
def test_build_model_variants(variant):
    m = dict(lc.DEFAULTS["model"], variant=variant)
    w = lc.sample(lc.build_model(m), 64, 0.4, Seed(1))
    assert w.n == 64 and np.all(np.isfinite(w.values))


def test_build_model_unknown():
    with pytest.raises(InputError):
        lc.build_model(dict(lc.DEFAULTS["model"], variant="levy"))


# --- emission -----------------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_roundtrip(x):
    assert float(lc.fmt(x)) == x


def test_density_curve_csv(tmp_path):
    w = sim.simulate_gaussian(sim.GaussianModel.fbm(0.5), 1024, 1.0, Seed(1))
    c = geo.holder_density(w, 512, 0.75, 1.0, [0.1, 0.05])
    files = lc.emit(c, "both", tmp_path, "hd")
    names = sorted(os.path.basename(f) for f in files)
    assert names == ["hd.csv", "hd.dat", "hd.json"]
    assert (tmp_path / "hd.csv").read_text().splitlines()[0] == "epsilon,fraction"
    assert len((tmp_path / "hd.dat").read_text().split()) == 4


def test_report_json_and_shell_csv(tmp_path):
    w = sim.simulate_gaussian(sim.GaussianModel.fbm(0.5), 1024, 1.0, Seed(2))
    rep = irr.irregularity_report(w)
    files = lc.emit(rep, "both", tmp_path, "rep")
    assert len(files) == 1 + 2 * len(rep.gammas)
    doc = json.loads((tmp_path / "rep.json").read_text())
    assert list(doc) == sorted(doc)


def test_phi_table_csv_only(tmp_path):
    from irrlab import spectral as sp
    w = sim.simulate_gaussian(sim.GaussianModel.fbm(0.5), 64, 1.0, Seed(3))
    tab = sp.phi_table(w, sp.frequency_set(1, J=4), sp.IntervalFamily(4))
    assert lc.emit(tab, "csv", tmp_path, "t")
    with pytest.raises(InputError, match="PhiTable"):
        lc.emit(tab, "json", tmp_path, "t")


def test_unsupported_pairing_named(tmp_path):
    with pytest.raises(InputError, match="object"):
        lc.emit(object(), "json", tmp_path, "x")
    with pytest.raises(InputError, match="dict"):
        lc.emit({"a": 1}, "csv", tmp_path, "x")


def test_json_nonfinite_is_null():
    assert json.loads(lc.dumps_json({"a": math.inf, "b": np.float64(0.1)})) == {"a": None, "b": 0.1}


# --- runs ------------------------------------------------------------------------------------

def run_files(out):
    return {p: (out / p).read_bytes() for p in sorted(os.listdir(out)) if p != "manifest.json"}


def test_simulate_run_reproducible(tmp_path):
    c = cfg(kind="simulate", grid={"n": 1024}, mc={"seed": 7})
    m1 = lc.run(c, tmp_path / "a")
    m2 = lc.run(c, tmp_path / "b", threads=4)
    assert m1.ok and m1.files == m2.files
    assert set(m1.files) == {"path_0000.csv", "path_0000.path"}
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["config_hash"] == c.digest() and man["seed"] == 7
    assert run_files(tmp_path / "a") == run_files(tmp_path / "b")
    w = cp.read_binary(tmp_path / "a" / "path_0000.path")
    assert w == sim.simulate_gaussian(sim.GaussianModel.fbm(0.5), 1024, 1.0, Seed(7).child(path=0))


def test_manifest_lists_every_file(tmp_path):
    m = lc.run(cfg(kind="geometry", grid={"n": 2048}), tmp_path)
    assert m.ok
    on_disk = {p for p in os.listdir(tmp_path) if p != "manifest.json"}
    assert on_disk == set(m.files)
    for p, h in m.files.items():
        assert lc.sha256_file(tmp_path / p) == h


@pytest.mark.parametrize("kind", ["phi", "irregularity", "average", "ode", "moments"])
def test_each_kind_runs(tmp_path, kind):
    extra = {"mc": {"M": 200}, "grid": {"n": 256}} if kind == "moments" else {"grid": {"n": 1024}}
    if kind == "ode":
        extra["model"] = {"H": 0.3}
    m = lc.run(cfg(kind=kind, **extra), tmp_path)
    assert m.ok, m.stages
    assert m.files


def test_stage_failure_recorded(tmp_path):
    # moment_decay refuses M < 200: the manifest records it and run() does not raise
    m = lc.run(cfg(kind="moments", mc={"M": 5}), tmp_path)
    assert not m.ok and "InputError" in m.stages["moments"]
    assert json.loads((tmp_path / "manifest.json").read_text())["ok"] is False


# --- prevalence harness ------------------------------------------------------------------------

def test_prevalence_zero_samples():
    r = lc.prevalence_harness("zero", sim.GaussianModel.fbm(0.5), 0)
    assert r["M"] == 0 and r["rho"] == [] and math.isnan(r["pass_rate"])


def test_prevalence_zero_shift_passes():
    r = lc.prevalence_harness("zero", sim.GaussianModel.fbm(0.5), 10, n=2 ** 14, seed=Seed(1))
    assert r["threshold"] == pytest.approx(0.75) and r["pass_rate"] >= 0.9


def test_prevalence_shift_file(tmp_path):
    phi = SampledPath(np.linspace(0, 1, 1025) ** 2)
    cp.write_binary(phi, tmp_path / "phi.path")
    a = lc.prevalence_harness("file", sim.GaussianModel.fbm(0.5), 2, n=1024, seed=Seed(2),
                              phi_file=str(tmp_path / "phi.path"))
    b = lc.prevalence_harness(phi, sim.GaussianModel.fbm(0.5), 2, n=1024, seed=Seed(2))
    assert a["rho"] == b["rho"]
    with pytest.raises(InputError):
        lc.prevalence_harness("file", sim.GaussianModel.fbm(0.5), 1, n=512,
                              phi_file=str(tmp_path / "phi.path"))


def test_base_functions():
    t = np.arange(9) / 8
    assert np.all(lc.base_function("zero", 8).values == 0)
    np.testing.assert_allclose(lc.base_function("polynomial", 8).values[:, 0], 1 - 2 * t + 3 * t ** 2)
    v = lc.base_function("weierstrass", 8).values[0, 0]
    assert v == pytest.approx(sum(2.0 ** (-0.49 * k) for k in range(lc.WEIERSTRASS_MODES)))
    with pytest.raises(InputError):
        lc.base_function("gauss", 8)


def test_prevalence_needs_power_law_noise():
    with pytest.raises(InputError):
        lc.prevalence_harness("zero", sim.GaussianModel.log_bm(1.0), 1, n=256, T=0.4)


def test_ode_drift_modes():
    b = lc.ode_drift(-0.5, 24, Seed(1))
    assert len(b) == 48 and b.hermitian
    assert lc.ode_drift(-0.5, 24, Seed(1)).coef.tolist() == b.coef.tolist()


# --- command line ------------------------------------------------------------------------------

def test_cli_bad_key_exits_two(tmp_path, capsys):
    (tmp_path / "c.toml").write_text("[grid]\nsize = 3\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(tmp_path / "c.toml"), "--out", str(out)]) == 2
    assert "grid.size" in capsys.readouterr().err
    assert not out.exists()


def test_cli_missing_config(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.toml")]) == 2


def test_cli_seed_range(tmp_path):
    assert main(["simulate", "--seed", "-1", "--out", str(tmp_path)]) == 2


def test_cli_stage_failure_exits_one(tmp_path):
    (tmp_path / "c.toml").write_text("[mc]\nM = 3\n")
    assert main(["moments", "--config", str(tmp_path / "c.toml"), "--out", str(tmp_path / "o")]) == 1


def test_cli_subprocess_simulate(tmp_path):
    (tmp_path / "c.toml").write_text('schema = 1\n[grid]\nn = 256\n[output]\nformat = "csv"\n')
    r = subprocess.run([sys.executable, "-m", "irrlab", "simulate", "--config", str(tmp_path / "c.toml"),
                        "--seed", "7", "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["seed"] == 7 and list(man["files"]) == ["path_0000.csv"]
