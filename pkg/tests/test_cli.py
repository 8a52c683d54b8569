import csv
import io
import json

import numpy as np
import pytest

from liecf.cli import EXIT_DIVERGED, EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from liecf.harness import parse_csv
from liecf.problems import rigid_body_exact


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_list(capsys):
    code, out, _ = run(capsys, "list")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0].split() == ["name", "stages", "order", "format"]
    assert any(line.split() == ["YRK135", "13", "5", "2N"] for line in lines)
    assert any(line.split() == ["RALSTON3", "3", "3", "butcher"] for line in lines)


def test_check(capsys):
    code, out, _ = run(capsys, "check", "--scheme", "LUSCHER33")
    assert code == EXIT_OK
    assert "satisfied classical order: 3" in out
    assert "Williamson 2N constraint residual: 0.000e+00" in out
    assert "2N-storage form: exists" in out
    code, out, _ = run(capsys, "check", "--scheme", "RALSTON3", "--up-to", "3")
    assert "2N-storage form: none" in out


def test_check_requires_scheme(capsys):
    with pytest.raises(SystemExit) as info:
        main(["check"])
    assert info.value.code == EXIT_USAGE


def test_unknown_scheme(capsys):
    code, _, err = run(capsys, "check", "--scheme", "NOSUCH")
    assert code == EXIT_USAGE and "unknown scheme 'NOSUCH'" in err


def test_bad_problem_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["integrate", "--problem", "lorenz", "--scheme", "BWRRK33", "--family", "liecf", "--h", "0.1"])
    assert info.value.code == EXIT_USAGE


def test_non_2n_scheme_for_liecf_family(capsys):
    code, _, err = run(capsys, "integrate", "--problem", "rigid", "--scheme", "RALSTON3",
                       "--family", "liecf", "--h", "0.1")
    assert code == EXIT_USAGE and "2N" in err


def test_integrate_csv(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    code, _, _ = run(capsys, "integrate", "--problem", "rigid", "--scheme", "BWRRK33",
                     "--family", "liecf", "--h", "0.125", "--t1", "1", "--out", str(out))
    assert code == EXIT_OK
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["t", "y0", "y1", "y2"]
    assert len(rows) == 1 + 9
    assert float(rows[-1][0]) == 1.0
    Y = np.array([float(x) for x in rows[-1][1:]])
    assert np.linalg.norm(Y - rigid_body_exact(1.0)) <= 1e-3


def test_integrate_luscher_through_2n_conversion(capsys):
    code, out, _ = run(capsys, "integrate", "--problem", "so3t", "--scheme", "LUSCHER33",
                       "--family", "liecf", "--h", "0.5")
    assert code == EXIT_OK
    header, *rows = out.splitlines()
    assert header.split(",")[:2] == ["t", "y0"] and len(header.split(",")) == 10
    Y = np.array([float(x) for x in rows[-1].split(",")[1:]]).reshape(3, 3)
    assert np.linalg.norm(Y.T @ Y - np.eye(3), 2) <= 1e-14


def test_integrate_complex_state(capsys):
    code, out, _ = run(capsys, "integrate", "--problem", "su3", "--scheme", "BWRRK33",
                       "--family", "rkmk", "--h", "0.5", "--t1", "1")
    assert code == EXIT_OK
    header = out.splitlines()[0].split(",")
    assert header[1] == "re_y0" and header[-1] == "im_y8" and len(header) == 19


def test_integrate_divergence_exit_code(capsys):
    code, _, err = run(capsys, "integrate", "--problem", "vdp", "--scheme", "RALSTON3",
                       "--family", "classical", "--h", "0.1", "--t1", "5")
    assert code == EXIT_DIVERGED and "diverged" in err


def test_nonpositive_step(capsys):
    with pytest.raises(SystemExit) as info:
        main(["integrate", "--problem", "rigid", "--scheme", "BWRRK33", "--family", "liecf", "--h", "0"])
    assert info.value.code == EXIT_USAGE


def test_converge_csv(capsys):
    code, out, _ = run(capsys, "converge", "--problem", "rigid", "--scheme", "BWRRK33,TSRKF84",
                       "--family", "liecf", "--nmin", "3", "--nmax", "7")
    assert code == EXIT_OK
    reports = parse_csv(io.StringIO(out))
    assert [r.scheme_name for r in reports] == ["BWRRK33", "TSRKF84"]
    assert all(len(r.rows) == 5 for r in reports)
    assert abs(reports[0].fitted_slope - 3.0) < 0.15
    assert abs(reports[1].fitted_slope - 4.0) < 0.15


def test_converge_bad_range(capsys):
    code, _, _ = run(capsys, "converge", "--problem", "rigid", "--scheme", "BWRRK33",
                     "--family", "liecf", "--nmin", "7", "--nmax", "3")
    assert code == EXIT_USAGE


def test_conjecture_subset(capsys):
    code, out, _ = run(capsys, "conjecture", "--scheme", "BWRRK33", "--problems", "rigid,so3t")
    assert code == EXIT_OK
    assert out.count("PASS") == 2


def test_conjecture_negative_control_subset(capsys):
    code, out, _ = run(capsys, "conjecture", "--scheme", "RALSTON3", "--problems", "rigid")
    assert code == EXIT_FAIL and out.startswith("FAIL RALSTON3")


def test_coeff_dir_and_file(tmp_path, capsys):
    rec = {
        "name": "Heun2",
        "format": "butcher",
        "stages": 2,
        "order": 2,
        "a": [[], ["1"]],
        "b": ["1/2", "1/2"],
        "c": ["0", "1"],
    }
    path = tmp_path / "heun.json"
    path.write_text(json.dumps(rec))
    code, out, _ = run(capsys, "--coeff-dir", str(tmp_path), "list")
    assert code == EXIT_OK and "HEUN2" in out
    code, out, _ = run(capsys, "list", "--coeff-dir", str(tmp_path))
    assert "HEUN2" in out
    code, out, _ = run(capsys, "check", "--file", str(path))
    assert code == EXIT_OK and "satisfied classical order: 2" in out
    path.write_text("{broken")
    code, _, err = run(capsys, "check", "--file", str(path))
    assert code == EXIT_USAGE and "malformed" in err
