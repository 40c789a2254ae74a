import csv
import subprocess
import sys

import pytest

from wsindy.cli import main


def _run(*args):
    proc = subprocess.run([sys.executable, "-m", "wsindy.cli", *args], capture_output=True, text=True)
    return proc.returncode, proc.stdout, proc.stderr


@pytest.fixture(scope="module")
def lorenz_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "lorenz.wsd"
    code, out, _ = _run("simulate", "lorenz", "--out", str(path), "--n-t", "20001")
    assert code == 0 and "counts=(20001,)" in out
    return path


def test_simulate_with_noise(tmp_path):
    path = tmp_path / "cubic.wsd"
    code, out, _ = _run("simulate", "cubic_oscillator", "--out", str(path), "--n-t", "2001",
                        "--noise", "0.05", "--seed", "4")
    assert code == 0 and "kind=noisy" in out


def test_discover(lorenz_file, tmp_path):
    code, out, _ = _run("discover", str(lorenz_file), "--system", "lorenz", "--p-max", "2",
                        "--weights-csv", str(tmp_path / "w.csv"),
                        "--loss-trace", str(tmp_path / "l.csv"),
                        "--system-csv", str(tmp_path / "g.csv"))
    assert code == 0, out
    assert "support_exact=1" in out
    assert "-10 u1 +10 u2" in out
    rows = list(csv.reader(open(tmp_path / "w.csv")))
    assert rows[0] == ["term", "u1", "u2", "u3"] and len(rows) == 11
    assert open(tmp_path / "l.csv").readline().strip() == "lambda,loss,support_size"


def test_estimate_noise(lorenz_file):
    code, out, _ = _run("estimate-noise", str(lorenz_file))
    assert code == 0 and out.startswith("sigma_est=") and "axis0=" in out


def test_bias(tmp_path):
    code, out, _ = _run("bias", "cubic_oscillator", "--sigma", "0.0645,0.258",
                        "--csv", str(tmp_path / "b.csv"))
    assert code == 0
    assert "case (ii)" in out and "sigma_c exact (pattern): 0.129" in out
    rows = list(csv.DictReader(open(tmp_path / "b.csv")))
    d1 = {float(r["sigma"]): float(r["delta_1"]) for r in rows}
    assert d1[0.0645] > 0 > d1[0.258]
    code, out, _ = _run("bias", "hyper_ks")
    assert code == 0 and "case (i)" in out and "inf" in out


def test_experiment(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("system=cubic_oscillator\nladder=8\nnoise_levels=0.0\ntrials=2\nn_t=20001\n")
    out_csv = tmp_path / "r.csv"
    code, out, _ = _run("experiment", str(cfg), "--out", str(out_csv), "--no-runtime",
                        "--aggregate", str(tmp_path / "a.csv"), "--cells", str(tmp_path / "c.csv"))
    assert code == 0
    assert "p_exact" in out
    first = out_csv.read_bytes()
    _run("experiment", str(cfg), "--out", str(out_csv), "--no-runtime")
    assert out_csv.read_bytes() == first
    rows = list(csv.DictReader(open(out_csv)))
    assert [r["support_exact"] for r in rows] == ["1", "1"]


def test_errors_exit_with_code_2(tmp_path, capsys):
    bad = tmp_path / "bad.wsd"
    bad.write_bytes(b"garbage")
    assert main(["estimate-noise", str(bad)]) == 2
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["simulate", "heat", "--out", "x"])
