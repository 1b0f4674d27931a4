import json
import os

import numpy as np
import pytest

from krylovlab import cli, io


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_list_prints_17_lines(capsys):
    code, out, err = run_cli(capsys, "list")
    assert code == 0
    assert len(out.strip().splitlines()) == 17


def test_usage_error_exit_code_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["no-such-command"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--bogus-flag"])
    assert exc.value.code == 2


def test_run_writes_one_csv_per_figure(tmp_path, capsys):
    out = str(tmp_path / "out")
    code, stdout, _ = run_cli(capsys, "run", "--name", "cg-clusters",
                              "--seed", "1", "--out", out)
    assert code == 0
    files = sorted(os.listdir(out))
    assert files == ["cg-clusters-csd.csv", "cg-clusters-errors.csv"]


def test_run_is_deterministic(tmp_path, capsys):
    outs = []
    for tag in ("a", "b"):
        out = str(tmp_path / tag)
        code, _, _ = run_cli(capsys, "run", "--name", "cg-prescribed",
                             "--out", out)
        assert code == 0
        outs.append(out)
    for name in os.listdir(outs[0]):
        b0 = open(os.path.join(outs[0], name), "rb").read()
        b1 = open(os.path.join(outs[1], name), "rb").read()
        assert b0 == b1


def test_run_svg_emission(tmp_path, capsys):
    out = str(tmp_path / "out")
    code, _, _ = run_cli(capsys, "run", "--name", "cg-prescribed",
                         "--out", out, "--svg")
    assert code == 0
    assert any(f.endswith(".svg") for f in os.listdir(out))


def test_run_unknown_name_exit_1(tmp_path, capsys):
    code, out, err = run_cli(capsys, "run", "--name", "nope",
                             "--out", str(tmp_path))
    assert code == 1
    assert "error" in err


def test_run_unknown_set_key_exit_1(tmp_path, capsys):
    code, _, err = run_cli(capsys, "run", "--name", "cg-eigdist",
                           "--set", "family.bogus=3", "--out", str(tmp_path))
    assert code == 1
    assert "unknown parameter" in err


def test_run_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"family.N": 3}))
    out = str(tmp_path / "out")
    code, _, _ = run_cli(capsys, "run", "--name", "cg-eigdist",
                         "--config", str(cfg), "--out", out)
    assert code == 0


def test_bounds_two_point_spectrum(tmp_path, capsys):
    spec = tmp_path / "spec.txt"
    spec.write_text("1\n3\n")
    code, out, _ = run_cli(capsys, "bounds", "--spectrum", str(spec),
                           "--k", "1")
    assert code == 0
    assert "minmax_bound: 0.5" in out


def test_construct_solve_mm_info_pipeline(tmp_path, capsys):
    curve = tmp_path / "curve.txt"
    curve.write_text("1.0\n0.5\n0.1\n0.01\n")
    eigs = tmp_path / "eigs.txt"
    eigs.write_text("1\n2\n3\n4\n")
    stem = str(tmp_path / "sys")
    code, out, _ = run_cli(capsys, "construct", "--kind", "gmres",
                           "--curve", str(curve), "--eigs", str(eigs),
                           "--out", stem)
    assert code == 0
    assert os.path.exists(stem + ".A.mtx") and os.path.exists(stem + ".b.mtx")

    code, out, _ = run_cli(capsys, "mm-info", stem + ".A.mtx")
    assert code == 0
    assert "size: 4 x 4" in out

    code, out, _ = run_cli(capsys, "solve", "--matrix", stem + ".A.mtx",
                           "--method", "gmres", "--tol", "1e-10")
    assert code == 0
    assert "tolerance_met" in out


def test_solve_missing_matrix_exit_1(capsys):
    code, _, err = run_cli(capsys, "solve", "--matrix", "/no/such/file.mtx",
                           "--method", "cg", "--tol", "1e-8")
    assert code == 1
    assert err


def test_solve_cg_on_spd_matrix(tmp_path, capsys):
    rng = np.random.default_rng(0)
    M = rng.standard_normal((12, 12))
    A = M @ M.T + 12 * np.eye(12)
    path = str(tmp_path / "spd.mtx")
    io.write_matrix_market(A, path)
    code, out, _ = run_cli(capsys, "solve", "--matrix", path, "--method", "cg",
                           "--precond", "jacobi", "--tol", "1e-12")
    assert code == 0
    assert "iterations:" in out
