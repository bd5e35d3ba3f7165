import hashlib
import json

import numpy as np
import pytest

from snlslab.cli import main
from snlslab.noise import load_noise_path, parse_phi, replay
from snlslab.presets import rough
from snlslab.spectral import GridSpec, read_field, write_field


def run(tmp_path, *args):
    return main([*args])


def tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


SOLVE = ["solve", "--case", "ia", "--d", "2", "--p", "4", "--s0", "1", "--phi", "cutoff:K=8", "--T", "0.1",
         "--seed", "7"]


def test_solve_is_byte_identical_across_runs_and_threads(tmp_path):
    assert main(SOLVE + ["--out", str(tmp_path / "a")]) == 0
    assert main(SOLVE + ["--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
    assert a == b
    header = a["norms.csv"].decode().splitlines()[0]
    assert header == 't,L2,H^s1,"W^s1,r",contraction_ratio'
    manifest = json.loads(a["manifest.json"])
    assert manifest["seed"] == 7 and "threads" not in manifest["config"] and "out" not in manifest["config"]
    for name, digest in manifest["artifacts"].items():
        assert hashlib.sha256(a[name]).hexdigest() == digest
    assert "trajectory/manifest.json" in manifest["artifacts"]


def test_config_file_and_flag_precedence(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[common]\nseed = 7\n\n[solve]\ncase = ia\nT = 0.05\nsteps = 8\n")
    assert main(["solve", "--config", str(ini), "--out", str(tmp_path / "a")]) == 0
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert m["config"]["T"] == 0.05 and m["config"]["steps"] == 8
    assert main(["solve", "--config", str(ini), "--steps", "4", "--out", str(tmp_path / "b")]) == 0
    m = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert m["config"]["steps"] == 4 and m["config"]["T"] == 0.05


def test_config_errors(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[common]\nseed = 1\n[solve]\nstepz = 4\n")
    assert main(["solve", "--config", str(ini), "--out", str(tmp_path / "x")]) == 2
    assert "stepz" in capsys.readouterr().err
    ini.write_text("[common]\nseed = 1\n[solver]\nsteps = 4\n")
    assert main(["solve", "--config", str(ini)]) == 2
    assert "solver" in capsys.readouterr().err
    assert main(["solve", "--seed", "1", "--steps", "four"]) == 2
    assert "steps" in capsys.readouterr().err
    assert main(["sample-noise", "--out", str(tmp_path / "n")]) == 2
    assert "seed" in capsys.readouterr().err
    assert main(["solve", "--seed", "1", "--phi", "wavelet:K=1", "--out", str(tmp_path / "y")]) == 2
    with pytest.raises(SystemExit) as info:
        main(["solve", "--seed", "1", "--nonsense", "1"])
    assert info.value.code == 2


def test_degenerate_and_hypothesis_exits(tmp_path, capsys):
    assert main(["verify-lemma21", "--phi", "zero", "--seed", "1", "--out", str(tmp_path / "z")]) == 3
    assert "phi = 0" in capsys.readouterr().err
    assert main(["verify-lemma21", "--q", "inf", "--seed", "1", "--out", str(tmp_path / "q")]) == 3
    assert main(["solve", "--case", "ii", "--d", "2", "--seed", "1", "--out", str(tmp_path / "h")]) == 3
    assert "d >= 3" in capsys.readouterr().err


def test_non_contraction_exit(tmp_path, capsys):
    code = main(["solve", "--seed", "1", "--u0", "gaussian:amp=20", "--out", str(tmp_path / "b")])
    assert code == 4
    assert "non-contraction" in capsys.readouterr().err


def test_verify_dispersive_outputs(tmp_path):
    out = tmp_path / "d"
    assert main(["verify-dispersive", "--d", "1", "--r", "inf", "--preset", "gaussian", "--out", str(out)]) == 0
    payload = json.loads((out / "decay.json").read_text())
    assert abs(payload["summary"]["fitted_exponent"] + 0.5) <= 0.05
    assert (out / "decay.svg").read_text().lstrip().startswith("<?xml")
    assert (out / "decay.csv").read_text().startswith("t,norm,ratio")


def test_sample_noise_replays(tmp_path):
    out = tmp_path / "n"
    assert main(["sample-noise", "--seed", "3", "--replicas", "2", "--steps", "4", "--out", str(out)]) == 0
    path = load_noise_path(out / "path_0001")
    phi = parse_phi("powerlaw:alpha=1.0,s=0", GridSpec(1, 20.0, 64))
    assert np.allclose(replay(path, phi).values, path.values, atol=1e-6)
    meta = json.loads((out / "path_0001" / "manifest.json").read_text())
    assert meta["master_seed"] == 3 and meta["replica"] == 1


def test_randomize_from_file(tmp_path):
    g = GridSpec(2, 8.0, 16)
    write_field(tmp_path / "u0.bin", rough(g))
    out = tmp_path / "r"
    args = ["randomize", "--input", str(tmp_path / "u0.bin"), "--dist", "bernoulli", "--sigma", "2", "--seed", "4"]
    assert main(args + ["--out", str(out)]) == 0
    f = read_field(out / "randomized_0000.bin")
    assert f.grid == g
    lineage = json.loads((out / "coefficients.json").read_text())
    assert lineage["sigma2"] == 4.0 and lineage["lineage"][0]["stream"] == "randomize"
    assert main(args + ["--out", str(tmp_path / "r2")]) == 0
    assert tree(out) == tree(tmp_path / "r2")


def test_report_detects_tampering(tmp_path, capsys):
    runs = tmp_path / "runs"
    assert main(SOLVE + ["--out", str(runs / "s")]) == 0
    assert main(["report", "--input", str(runs)]) == 0
    assert "True" in (runs / "report.csv").read_text()
    with open(runs / "s" / "norms.csv", "a") as fh:
        fh.write("tampered\n")
    assert main(["report", "--input", str(runs), "--out", str(tmp_path / "rep")]) == 1
    assert "norms.csv" in capsys.readouterr().err


def test_contraction_and_probe_commands(tmp_path):
    out = tmp_path / "c"
    assert main(["verify-contraction", "--seed", "7", "--steps-max", "32", "--out", str(out)]) == 0
    payload = json.loads((out / "contraction.json").read_text())
    assert payload["strictly_decreasing"] and payload["fit"]["exponent_hat"] > 0
    assert main(["verify-contraction", "--seed", "7", "--horizons", "0.2,0.13", "--out", str(tmp_path / "c1")]) == 2
    probe = tmp_path / "p"
    assert main(["probe-existence", "--case", "ia", "--seed", "2", "--paths", "3", "--steps", "8",
                 "--out", str(probe)]) == 0
    assert json.loads((probe / "existence.json").read_text())["summary"]["positive"] == 3
