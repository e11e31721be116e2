"""Command-line runner: artifacts, headers, exit codes, determinism.

Everything runs in-process through cli.main so the suite stays fast; one
subprocess test covers the `python -m` entry.  Frozen facts: the default
model is the doubling map with unit roof, whose decay sweep is exactly
flat (kappa_hat 0.0) and whose invariant suite is green; necklace totals
for n <= 8 sum to 71 primitive orbits.
"""

import csv
import hashlib
import io
import os
import subprocess
import sys

import numpy as np
import pytest

from transferlab import cli, orbits
from transferlab.markov import ModelConfig, build_model

SIN_MODEL = """family = doubling
roof = 2.0, 0.0, 0.5, 0.0
potential = 0.0, 0.0, 0.0, 0.0
mu = 0.5, 0.0, 0.0, 0.0
grid_size = 4096
theta = 0.5
"""


@pytest.fixture(autouse=True)
def _no_ambient_env(monkeypatch):
    for key in [k for k in os.environ if k.startswith("TRANSFERLAB_")]:
        monkeypatch.delenv(key)


@pytest.fixture
def sin_path(tmp_path):
    path = tmp_path / "sin_model.txt"
    path.write_text(SIN_MODEL)
    return str(path)


def read_csv(path):
    """Rows of a CSV artifact, header comments stripped."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(io.StringIO("".join(lines))))
    return rows[0], rows[1:]


def header_lines(path):
    with open(path) as fh:
        return [ln.rstrip("\n") for ln in fh if ln.startswith("#")]


# -- artifacts and headers --------------------------------------------------

def test_model_info_artifacts(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert cli.main(["model-info", "--out", out]) == 0
    assert capsys.readouterr().out.startswith("model-info: family=doubling")
    for name in ("model.csv", "branches.csv", "config.txt"):
        assert os.path.exists(os.path.join(out, name))
    header, rows = read_csv(os.path.join(out, "branches.csv"))
    assert header == ["sym", "domain", "target", "slope", "offset"]
    assert len(rows) == 2
    assert {r[0] for r in rows} == {"0", "1"}


def test_header_embeds_model_hash(tmp_path):
    out = str(tmp_path / "run")
    assert cli.main(["pressure", "--out", out]) == 0
    # the hash covers the built config, slopes filled in
    normalized = build_model(ModelConfig()).config.to_text()
    expect = hashlib.sha256(normalized.encode()).hexdigest()
    lines = header_lines(os.path.join(out, "pressure.csv"))
    assert lines[0] == "# transferlab pressure"
    assert f"# model_sha256 = {expect}" in lines
    assert any(ln.startswith("# config family") for ln in lines)


def test_config_echo_verbatim(tmp_path):
    source = "# sine roof model\n" + SIN_MODEL + "\n# trailing note\n"
    path = tmp_path / "m.txt"
    path.write_text(source)
    out = str(tmp_path / "run")
    assert cli.main(["model-info", "--model", str(path), "--out", out]) == 0
    echoed = (tmp_path / "run" / "config.txt").read_text()
    assert echoed == source


def test_every_artifact_has_param_header(tmp_path, sin_path):
    out = str(tmp_path / "run")
    assert cli.main(["decay", "--model", sin_path, "--out", out,
                     "--b", "16"]) == 0
    lines = header_lines(os.path.join(out, "decay.csv"))
    assert any(ln.startswith("# params ") and "b_list=16.0" in ln
               for ln in lines)


# -- exit codes -------------------------------------------------------------

def test_unknown_command_usage(tmp_path, capsys):
    assert cli.main(["frobnicate", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "usage:" in err


def test_missing_model_file(tmp_path):
    assert cli.main(["pressure", "--model", str(tmp_path / "nope.txt"),
                     "--out", str(tmp_path / "o")]) == 1


def test_unknown_config_key_rejected(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("family = doubling\nwavelength = 3\n")
    assert cli.main(["pressure", "--model", str(path),
                     "--out", str(tmp_path / "o")]) == 1


def test_bad_seed_and_threads(tmp_path):
    out = str(tmp_path / "o")
    assert cli.main(["pressure", "--seed", "-1", "--out", out]) == 1
    assert cli.main(["pressure", "--threads", "0", "--out", out]) == 1


def test_invariants_green_on_doubling(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert cli.main(["invariants", "--out", out]) == 0
    assert "pass ->" in capsys.readouterr().out
    _, rows = read_csv(os.path.join(out, "invariants.csv"))
    assert rows and all(r[3] == "pass" for r in rows)


def test_invariant_failure_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(cli, "_invariant_checks",
                        lambda model, cfg: [("forced", 1.0, 0.0)])
    out = str(tmp_path / "run")
    assert cli.main(["invariants", "--out", out]) == 2
    assert "1 of 1 failed" in capsys.readouterr().out


# -- environment overrides --------------------------------------------------

def test_unknown_env_override_rejected(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("TRANSFERLAB_FROB", "1")
    assert cli.main(["pressure", "--out", str(tmp_path / "o")]) == 1
    assert "TRANSFERLAB_FROB" in capsys.readouterr().err


def test_env_mirrors_flag_and_flag_wins(tmp_path, sin_path, monkeypatch):
    args = ["correlation", "--model", sin_path]
    monkeypatch.setenv("TRANSFERLAB_SAMPLES", "2000")
    monkeypatch.setenv("TRANSFERLAB_BLOCKS", "8")

    o_flag = str(tmp_path / "flag")
    assert cli.main(args + ["--out", o_flag, "--seed", "5"]) == 0
    o_env = str(tmp_path / "env")
    monkeypatch.setenv("TRANSFERLAB_SEED", "5")
    assert cli.main(args + ["--out", o_env]) == 0
    o_both = str(tmp_path / "both")
    assert cli.main(args + ["--out", o_both, "--seed", "9"]) == 0

    flag = open(os.path.join(o_flag, "correlation.csv"), "rb").read()
    env = open(os.path.join(o_env, "correlation.csv"), "rb").read()
    both = open(os.path.join(o_both, "correlation.csv"), "rb").read()
    assert flag == env
    assert both != flag


# -- command results --------------------------------------------------------

def test_pressure_values(tmp_path):
    out = str(tmp_path / "run")
    assert cli.main(["pressure", "--out", out]) == 0
    _, rows = read_csv(os.path.join(out, "pressure.csv"))
    table = {name: float(v) for name, v in rows}
    assert table["pressure"] == pytest.approx(np.log(2), abs=1e-8)
    assert table["entropy"] == pytest.approx(np.log(2), abs=1e-8)
    assert abs(table["entropy_residual"]) < 1e-6


def test_gibbs_weights_total(tmp_path):
    out = str(tmp_path / "run")
    assert cli.main(["gibbs", "--out", out, "--grid", "512"]) == 0
    _, rows = read_csv(os.path.join(out, "gibbs.csv"))
    assert len(rows) == 513
    assert sum(float(r[2]) for r in rows) == pytest.approx(1.0, abs=1e-10)


def test_decay_flat_roof_reports_zero(tmp_path, capsys):
    # locally constant roof: all phases align, the sweep must come out flat
    out = str(tmp_path / "run")
    assert cli.main(["decay", "--out", out]) == 0
    assert "kappa_hat=0.0" in capsys.readouterr().out
    _, rows = read_csv(os.path.join(out, "decay.csv"))
    assert [float(r[0]) for r in rows] == [64.0, 128.0, 256.0, 512.0]
    assert all(abs(float(r[3]) - 1.0) < 1e-10 for r in rows)


def test_decay_single_b_has_no_fit(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert cli.main(["decay", "--out", out, "--b", "64"]) == 0
    assert "kappa_hat=none" in capsys.readouterr().out


def test_decay_threads_byte_identical(tmp_path, sin_path):
    o1 = str(tmp_path / "t1")
    o2 = str(tmp_path / "t4")
    assert cli.main(["decay", "--model", sin_path, "--out", o1,
                     "--grid", "1024"]) == 0
    assert cli.main(["decay", "--model", sin_path, "--out", o2,
                     "--grid", "1024", "--threads", "4"]) == 0
    b1 = open(os.path.join(o1, "decay.csv"), "rb").read()
    b2 = open(os.path.join(o2, "decay.csv"), "rb").read()
    assert b1 == b2


def test_uni_scan_single_eps(tmp_path, sin_path):
    out = str(tmp_path / "run")
    assert cli.main(["uni-scan", "--model", sin_path, "--out", out,
                     "--eps", "0.015625"]) == 0
    _, rows = read_csv(os.path.join(out, "uni_scan.csv"))
    assert len(rows) == 1
    assert float(rows[0][1]) > 0.0
    assert rows[0][4] == "true"


def test_dolgopyat_certificate_rows(tmp_path, sin_path):
    out = str(tmp_path / "run")
    assert cli.main(["dolgopyat", "--model", sin_path, "--out", out,
                     "--b", "64"]) == 0
    lines = header_lines(os.path.join(out, "dolgopyat.csv"))
    params = next(ln for ln in lines if ln.startswith("# params"))
    assert "refused=false" in params
    header, rows = read_csv(os.path.join(out, "dolgopyat.csv"))
    assert header[:3] == ["n", "c0_u", "l2_u"]
    l2 = [float(r[2]) for r in rows]
    assert l2 == sorted(l2, reverse=True)


def test_orbits_counts_match_library(tmp_path, monkeypatch):
    monkeypatch.setenv("TRANSFERLAB_N_MAX", "8")
    out = str(tmp_path / "run")
    assert cli.main(["orbits", "--out", out]) == 0
    _, table = read_csv(os.path.join(out, "orbit_table.csv"))
    assert len(table) == 71          # primitive necklaces, n <= 8
    _, counts = read_csv(os.path.join(out, "counting.csv"))
    model = build_model(ModelConfig())
    report = orbits.prime_orbit_report(model, 8,
                                       [float(r[0]) for r in counts])
    assert [int(r[1]) for r in counts] == list(report.pi)


def test_correlation_determinism(tmp_path, sin_path, monkeypatch):
    monkeypatch.setenv("TRANSFERLAB_SAMPLES", "4000")
    base = ["correlation", "--model", sin_path, "--seed", "3"]
    o1, o2, o3 = (str(tmp_path / k) for k in ("a", "b", "c"))
    assert cli.main(base + ["--out", o1]) == 0
    assert cli.main(base + ["--out", o2, "--threads", "4"]) == 0
    assert cli.main(["correlation", "--model", sin_path, "--seed", "4",
                     "--out", o3]) == 0
    b1 = open(os.path.join(o1, "correlation.csv"), "rb").read()
    b2 = open(os.path.join(o2, "correlation.csv"), "rb").read()
    b3 = open(os.path.join(o3, "correlation.csv"), "rb").read()
    assert b1 == b2
    assert b1 != b3


def test_module_entry_subprocess(tmp_path):
    out = str(tmp_path / "run")
    proc = subprocess.run(
        [sys.executable, "-m", "transferlab.cli", "model-info",
         "--out", out],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("model-info:")
    assert os.path.exists(os.path.join(out, "model.csv"))
