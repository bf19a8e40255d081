import json
from pathlib import Path

import numpy as np
import pytest

from hardyhenon.cli import EXIT_BRACKET, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, defaults_table, main
from hardyhenon.radial import RadialProfile, read_profile_csv, write_profile_csv


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def solved_csv(workdir):
    out = workdir / "profile.csv"
    code = main([
        "solve", "--N", "3", "--m", "2", "--sigma", "-1",
        "--eps-cap", "1e-6", "--out", str(out),
    ])
    assert code == EXIT_OK
    return out


def test_usage_error_exit_code():
    assert main(["solve"]) == EXIT_USAGE  # missing --out
    assert main(["nonsense"]) == EXIT_USAGE


def test_invalid_params_exit_code(workdir):
    out = workdir / "bad.csv"
    code = main(["solve", "--N", "3", "--m", "0.5", "--sigma", "-1", "--out", str(out)])
    assert code == EXIT_USAGE


def test_bracket_invalid_exit_code(workdir):
    out = workdir / "nobracket.csv"
    code = main([
        "solve", "--N", "3", "--m", "2", "--sigma", "-1",
        "--v0-lo", "1e-4", "--v0-hi", "1e-3", "--out", str(out),
    ])
    assert code == EXIT_BRACKET


def test_solve_artifacts(solved_csv):
    meta, prof = read_profile_csv(solved_csv)
    assert meta["N"] == 3 and meta["m"] == 2.0 and meta["sigma"] == -1.0
    assert meta["V0"] == pytest.approx(87.0186, rel=1e-4)
    assert np.isfinite(meta["R"])
    assert prof.is_nonincreasing()
    rep = json.loads(Path(str(solved_csv) + ".report.json").read_text())
    assert rep["V0_star"] == pytest.approx(meta["V0"], rel=1e-12)
    man = json.loads(Path(str(solved_csv) + ".manifest.json").read_text())
    assert man["version"] and str(solved_csv) in man["outputs"]


def test_verify_pass(solved_csv, workdir):
    rep_path = workdir / "verify.json"
    code = main(["verify", "--profile", str(solved_csv), "--report", str(rep_path)])
    assert code == EXIT_OK
    rep = json.loads(rep_path.read_text())
    assert all(v != "fail" for v in rep["verdicts"].values())
    assert rep["poh2_residual"] <= 1e-6


def test_verify_zero_profile(workdir):
    zero = workdir / "zero.csv"
    prof = RadialProfile(nodes=np.linspace(0, 1, 5), values=np.zeros(5))
    write_profile_csv(zero, prof, 3, 2.0, -1.0)
    rep_path = workdir / "zero.json"
    code = main(["verify", "--profile", str(zero), "--report", str(rep_path)])
    assert code == EXIT_VERIFY
    rep = json.loads(rep_path.read_text())
    assert rep["error"] == "DegenerateProfile"


def test_verify_determinism(solved_csv, workdir):
    r1 = workdir / "v1.json"
    r2 = workdir / "v2.json"
    assert main(["verify", "--profile", str(solved_csv), "--report", str(r1)]) == EXIT_OK
    assert main(["verify", "--profile", str(solved_csv), "--report", str(r2)]) == EXIT_OK
    assert r1.read_bytes() == r2.read_bytes()  # reports carry no timestamps


def test_simulate_short(solved_csv, workdir):
    out = workdir / "sim.csv"
    code = main([
        "simulate", "--profile", str(solved_csv), "--horizon-s", "0.02",
        "--cells", "400", "--out", str(out),
    ])
    assert code == EXIT_OK
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "s,deviation"
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    assert data[0, 0] == 0.0
    assert np.all(data[:, 1] <= 0.01)


def test_minimize_cli(workdir):
    out = workdir / "minprof.csv"
    rep_path = workdir / "minrep.json"
    code = main([
        "minimize", "--N", "3", "--m", "2", "--sigma", "-1",
        "--grid-size", "1024", "--out", str(out), "--report", str(rep_path),
    ])
    assert code == EXIT_OK
    rep = json.loads(rep_path.read_text())
    for key in ("lam", "K_star", "S_of_minimizer", "J_star", "lambda_opt", "A_w", "B_w"):
        assert key in rep
    assert rep["converged"]
    assert abs(rep["S_of_minimizer"] - rep["K_star"]) / rep["K_star"] <= 1e-4
    meta, prof = read_profile_csv(out)
    assert meta["V0"] == pytest.approx(87.0186, rel=2e-3)


def test_config_file(workdir):
    cfg = workdir / "cfg.txt"
    cfg.write_text("N=3\nm=2\nsigma=-1\nregime=Admissible\n")
    out = workdir / "cfgprof.csv"
    code = main(["solve", "--config", str(cfg), "--eps-cap", "1e-5", "--out", str(out)])
    assert code == EXIT_OK


def test_sweep_empty_and_probe(workdir):
    outdir = workdir / "sweep"
    code = main([
        "sweep", "--N-list", "3", "--m-list", "2", "--sigma-list", "-2",
        "--outdir", str(outdir), "--n-profile", "1500", "--grid-size", "512",
    ])
    assert code == EXIT_OK
    rows = (outdir / "summary.csv").read_text().strip().splitlines()
    assert rows[0].startswith("N,m,sigma,status")
    assert "nonexistence-certified" in rows[1]

    outdir2 = workdir / "sweep_empty"
    code = main(["sweep", "--m-list", "--sigma-list", "--outdir", str(outdir2)])
    assert code == EXIT_OK
    rows = (outdir2 / "summary.csv").read_text().strip().splitlines()
    assert len(rows) == 1  # header only


def test_show_defaults(capsys):
    assert main(["show-defaults"]) == EXIT_OK
    out = capsys.readouterr().out
    table = json.loads(out)
    assert table["solve"]["rtol"] == 1e-10
    assert table["minimize"]["kkt_tol"] == 1e-8
    assert "verify_tolerances" in table


def test_defaults_table_shape():
    t = defaults_table()
    assert t["simulate"]["n_cells"] == 2000
