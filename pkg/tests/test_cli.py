import json
import shutil
import subprocess
from pathlib import Path

import pytest

from levyflux.cli import main, parse_values

MODELS = Path(__file__).resolve().parent.parent / "models"
BM = str(MODELS / "brownian.json")
GAMMA = str(MODELS / "gamma_minus_drift.json")
SUB = str(MODELS / "gamma_subordinator.json")


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_values():
    assert parse_values("1,2.5") == [1.0, 2.5]
    assert parse_values("0:1:3") == [0.0, 0.5, 1.0]
    with pytest.raises(Exception):
        parse_values("a,b")


def test_fpt_row(capsys):
    code, out, _ = run_cli(capsys, "fpt", "--model", BM, "--x", "1", "--t", "1")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "x,t,fpt_density"
    assert lines[1] == "1,1,0.24197072451914337"


def test_invalid_model_exit_3(capsys):
    code, _, err = run_cli(capsys, "fpt", "--model", str(MODELS / "bad.json"), "--x", "1", "--t", "1")
    assert code == 3
    assert "invalid model" in err


def test_density_on_compound_poisson_is_a_validation_error(tmp_path, capsys):
    m = tmp_path / "cp.json"
    m.write_text(json.dumps({"drift": -1.0, "jumps": {"type": "compound_poisson", "rate": 1.0, "size": {"dist": "exponential", "mean": 0.5}}}))
    code, _, _ = run_cli(capsys, "density", "--model", str(m), "--t", "1", "--x", "0")
    assert code == 3


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fpt", "--model", BM, "--x", "1"])
    assert exc.value.code == 1
    code, _, _ = run_cli(capsys, "fpt", "--model", "/nonexistent/model.json", "--x", "1", "--t", "1")
    assert code in (1, 3)
    code, _, _ = run_cli(capsys, "phi-identity", "--model", BM, "--lam", "1")
    assert code == 1


def test_negative_lists(capsys):
    code, out, _ = run_cli(capsys, "sup", "--model", BM, "--x", "0.5", "--t", "1", "--z", "-0.5,-1")
    assert code == 0
    assert len(out.splitlines()) == 3


def test_sidecar(tmp_path, capsys):
    out = tmp_path / "sup.csv"
    code, _, _ = run_cli(capsys, "sup", "--model", GAMMA, "--x", "0.5,1", "--t", "1", "-o", str(out))
    assert code == 0
    meta = json.loads((tmp_path / "sup.csv.meta.json").read_text())
    for key in ("command", "model_hash", "seed", "tolerances", "abserr", "max_abserr"):
        assert key in meta
    assert len(meta["abserr"]) == 2
    assert out.read_text().startswith("x,t,")


def test_same_seed_gives_identical_bytes(tmp_path, capsys):
    args = ["ballot-mc", "--c", "2", "--t", "1", "--x", "1", "--samples", "9000", "--seed", "17"]
    paths = []
    for i, workers in enumerate(("1", "1", "3")):
        p = tmp_path / f"b{i}.csv"
        assert main(args + ["--workers", workers, "-o", str(p)]) == 0
        paths.append(p.read_bytes())
    assert paths[0] == paths[1] == paths[2]
    header = paths[0].decode().splitlines()[0]
    assert header == "cell_t,cell_x,empirical,analytic,stderr"


def test_kendall_and_subord(capsys):
    code, out, _ = run_cli(capsys, "kendall-mc", "--model", GAMMA, "--x", "0.5", "--t-max", "1", "--t-bins", "2", "--samples", "5000")
    assert code == 0 and len(out.splitlines()) == 3
    code, out, _ = run_cli(capsys, "subord", "--model", SUB, "--r", "0.5", "--z", "1", "--samples", "5000")
    assert code == 0
    header, row = out.splitlines()
    assert header == "z,phi_Y_analytic,phi_Y_mc,stderr"
    assert float(row.split(",")[1]) == pytest.approx(0.8950843212751517, abs=1e-12)
    code, out, _ = run_cli(capsys, "subord", "--model", SUB, "--r", "0.5", "--y", "1")
    assert code == 0 and out.splitlines()[0] == "y,p_Y"
    code, _, _ = run_cli(capsys, "subord", "--model", SUB, "--r", "2", "--z", "1")
    assert code == 3


@pytest.mark.skipif(shutil.which("levyflux") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["levyflux", "selftest", "--only", "3"], capture_output=True, text=True, timeout=120)
    assert res.returncode == 0
    assert res.stdout.startswith("[PASS]  3")
