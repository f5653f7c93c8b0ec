import json
import math
import subprocess
import sys

import pytest

from rqm import records
from rqm.cli import main

SIM = ["--total-devices", "8", "--devices-per-round", "3", "--rounds", "4", "--feature-dim", "3", "--classes", "2", "--samples-per-device", "20"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _rows(text):
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return [line.split(",") for line in body[1:]]


def test_pmf_two_levels(capsys):
    code, out, _ = run(capsys, "pmf", "--x", "0.4", "--c", "1", "--delta", "1", "--m", "2", "--q", "0.5")
    assert code == 0
    rows = _rows(out)
    assert [float(r[2]) for r in rows] == pytest.approx([0.4, 0.6], abs=1e-15)
    assert "# seed: 0" in out


def test_pmf_oracle_column(capsys):
    code, out, _ = run(capsys, "pmf", "--x", "1.5", "--oracle")
    assert code == 0
    rows = _rows(out)
    assert len(rows) == 16
    assert all(abs(float(r[2]) - float(r[3])) < 1e-12 for r in rows)
    assert sum(float(r[2]) for r in rows) == pytest.approx(1.0, abs=1e-12)


def test_pmf_pbm(capsys):
    code, out, _ = run(capsys, "pmf", "--mech", "pbm", "--x", "0", "--pbm-full-trials")
    assert code == 0
    probs = [float(r[2]) for r in _rows(out)]
    assert len(probs) == 17
    assert probs[8] == pytest.approx(math.comb(16, 8) / 2**16, rel=1e-12)
    code, _, _ = run(capsys, "pmf", "--mech", "pbm", "--x", "0", "--oracle")
    assert code == 1


def test_bound(capsys):
    code, out, _ = run(capsys, "bound", "--compare-numeric")
    assert code == 0
    lines = dict(line.split(": ") for line in out.strip().splitlines())
    assert float(lines["bound"]) == pytest.approx(math.log(2 * 0.58**2 * 2) + 16 * math.log(1 / 0.58), abs=1e-12)
    assert float(lines["numeric_d_inf"]) < float(lines["bound"])
    assert lines["dominated"] == "true"
    bounds = []
    for m in (4, 8, 16):
        _, out, _ = run(capsys, "bound", "--m", str(m))
        bounds.append(float(out.split(": ")[1]))
    assert bounds[0] < bounds[1] < bounds[2]


def test_divergence(capsys):
    code, out, _ = run(capsys, "divergence", "--n", "1", "--alpha", "inf")
    assert code == 0
    eps_inf = float(out.split(": ")[1])
    _, out, _ = run(capsys, "divergence", "--n", "1", "--alpha", "2")
    eps_2 = float(out.split(": ")[1])
    _, out, _ = run(capsys, "divergence", "--n", "1", "--alpha", "2", "--mech", "pbm")
    assert 0 < eps_2 < eps_inf
    assert eps_2 < float(out.split(": ")[1])
    code, _, err = run(capsys, "divergence", "--alpha", "1")
    assert code == 1 and "alpha" in err


def test_sweep_preset(capsys, tmp_path):
    out_file = tmp_path / "fig3.csv"
    code, _, _ = run(capsys, "sweep", "--paper-fig3", "--out", str(out_file))
    assert code == 0
    meta, rows = records.read_csv(out_file)
    assert list(rows[0]) == list(records.SWEEP_COLUMNS)
    n_rows = [r for r in rows if r["axis"] == "n"]
    assert [int(r["n"]) for r in n_rows] == list(range(1, 41))
    assert all(float(r["eps_rqm"]) < float(r["eps_pbm"]) for r in n_rows)
    assert meta["preset"] == "fig3"


def test_sweep_custom_and_ranges(capsys):
    code, out, _ = run(capsys, "sweep", "--axis", "alpha", "--values", "2:1000:5", "--n", "3")
    assert code == 0
    rows = _rows(out)
    assert len(rows) == 5
    assert float(rows[0][2]) == pytest.approx(2.0) and float(rows[-1][2]) == pytest.approx(1000.0)
    code, out, _ = run(capsys, "sweep", "--values", "1:4")
    assert [int(float(r[2])) for r in _rows(out)] == [1, 2, 3, 4]
    code, _, _ = run(capsys, "sweep")
    assert code == 1


def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[bound]\nm = 8\nq = 0.3\n")
    _, out, _ = run(capsys, "bound", "--config", str(cfg))
    from_file = float(out.split(": ")[1])
    _, out, _ = run(capsys, "bound", "--m", "8", "--q", "0.3")
    assert from_file == float(out.split(": ")[1])
    _, out, _ = run(capsys, "bound", "--config", str(cfg), "--m", "16")
    _, ref, _ = run(capsys, "bound", "--m", "16", "--q", "0.3")
    assert out == ref
    cfg.write_text("[bound]\nbogus = 1\n")
    code, _, err = run(capsys, "bound", "--config", str(cfg))
    assert code == 1 and "bogus" in err


def test_simulate_outputs_and_reruns(capsys, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    code, out, _ = run(capsys, "simulate", *SIM, "--out-dir", str(out_a))
    assert code == 0 and "manifest:" in out
    run(capsys, "simulate", *SIM, "--out-dir", str(out_b))
    for name in ("metrics_noise_free.csv", "metrics_rqm.csv", "metrics_pbm.csv", "comparison.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    _, rows = records.read_csv(out_a / "metrics_rqm.csv")
    assert list(rows[0]) == list(records.METRIC_COLUMNS)
    assert [int(r["round"]) for r in rows] == [0, 1, 2, 3]
    assert all(int(r["bits_per_device"]) == 4 * 8 for r in rows)
    _, combined = records.read_csv(out_a / "comparison.csv")
    assert len(combined) == 12
    manifest = json.loads((out_a / "manifest.json").read_text())
    assert manifest["config_hash"] == records.content_hash(manifest["config"])
    assert manifest["config"]["rounds"] == 4
    assert len(manifest["outputs"]) == 4
    assert manifest["outputs"]["comparison.csv"] == records.blob_hash((out_a / "comparison.csv").read_bytes())
    assert (out_a / "manifest.json").read_bytes() == (out_b / "manifest.json").read_bytes()


def test_simulate_validation(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--rounds", "0", "--out-dir", str(tmp_path))
    assert code == 1 and "rounds" in err
    code, _, _ = run(capsys, "simulate", *SIM, "--mechanisms", "rqm,gauss", "--out-dir", str(tmp_path))
    assert code == 1


def test_selftest(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0
    assert out.count("PASS") == 4
    code, out, _ = run(capsys, "selftest", "--inject-fault")
    assert code == 3
    assert "FAIL oracle-equivalence" in out and "counterexample" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["pmf", "--x", "2.0"],
        ["pmf"],
        ["pmf", "--x", "0", "--q", "1.5"],
        ["pmf", "--x", "0", "--m", "1"],
        ["pmf", "--x", "0", "--oracle", "--m", "24"],
        ["bound", "--c", "-1"],
        ["divergence", "--mech", "pbm", "--theta", "0.5"],
        ["divergence", "--split-k", "5", "--n", "3"],
        ["pmf", "--x", "abc"],
    ],
)
def test_invalid_parameters_exit_1(capsys, argv):
    code = None
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 1


def test_module_entry_point():
    result = subprocess.run([sys.executable, "-m", "rqm", "bound"], capture_output=True, text=True, check=False)
    assert result.returncode == 0
    assert result.stdout.startswith("bound: 9.01247")
