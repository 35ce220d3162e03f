import subprocess
import sys

import pytest

from freebound.cli import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, main, parse_radius, snap_to_admissible


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_radius():
    import math
    assert parse_radius("pi/2") == pytest.approx(math.pi / 2)
    assert parse_radius("2pi/3") == pytest.approx(2 * math.pi / 3)
    assert parse_radius("1.25") == 1.25
    assert snap_to_admissible("1.5708", 1.5708, math.pi / 2) == (math.pi / 2, True)
    assert snap_to_admissible("1.6", 1.6, math.pi / 2) == (1.6, False)
    assert snap_to_admissible("1.5", 1.5, math.pi / 2) == (1.5, False)


def test_threshold_gaussian(capsys):
    code, out, _ = run(["threshold", "--metric", "gaussian-shrinker"], capsys)
    assert code == EXIT_PASS
    assert "R_bar = " in out and "S_bar = " in out
    assert "reference_root = 1.545" in out and "reference_root_quoted = 1.546" in out


def test_field_check_sphere(capsys):
    code, out, _ = run(["field-check", "--metric", "sphere", "--R", "1.5708", "--samples", "100000",
                        "--seed", "7"], capsys)
    assert code == EXIT_PASS
    assert "PASS max div <= 1 + 1e-9" in out


def test_field_check_refuses_beyond_R_bar(capsys):
    code, _, err = run(["field-check", "--metric", "sphere", "--R", "1.7", "--samples", "100"], capsys)
    assert code == EXIT_USAGE and "R_bar" in err
    code, out, _ = run(["field-check", "--metric", "sphere", "--R", "1.7", "--samples", "20000",
                        "--force"], capsys)
    assert code == EXIT_FAIL and "FAIL max div" in out


def test_usage_errors(capsys):
    assert run(["metric", "--metric", "nope"], capsys)[0] == EXIT_USAGE
    assert run(["solve", "--metric", "sphere"], capsys)[0] == EXIT_USAGE
    assert run(["solve", "--metric", "sphere", "--R", "4"], capsys)[0] == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--metric", "sphere", "--R", "1", "--S-chart", "1"])
    assert exc.value.code == 2


def test_report_header_lists_flags(capsys):
    code, out, _ = run(["solve", "--metric", "euclidean", "--S-chart", "1", "--resolution", "8",
                        "--seed", "3", "--amplitude", "0.02"], capsys)
    assert code == EXIT_PASS
    for key in ("resolution = 8", "seed = 3", "amplitude = 0.02", "S_chart = 1.0", "R_geodesic = 1.0",
                "max_iter = 200", "grad_tol = 1e-09"):
        assert f"# {key}" in out


def test_solve_euclidean_example(capsys):
    code, out, _ = run(["solve", "--metric", "euclidean", "--R", "1", "--shape", "perturbed-disk",
                        "--seed", "3"], capsys)
    assert code == EXIT_PASS
    area = float(next(l for l in out.splitlines() if l.startswith("area_g = ")).split("=")[1])
    assert area == pytest.approx(3.141592653589793, rel=0.01)


def test_metric_csv(tmp_path, capsys):
    path = tmp_path / "m.csv"
    code, _, _ = run(["metric", "--metric", "sphere", "--R", "pi/2", "--points", "3", "--csv", str(path)],
                     capsys)
    assert code == EXIT_PASS
    rows = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    assert rows[0].startswith("r,s,h,dh")
    last = [float(v) for v in rows[-1].split(",")]
    assert last[1] == pytest.approx(2.0) and last[6] == pytest.approx(1.0)


def test_euclidean_metric_degenerate_passes(capsys):
    code, out, _ = run(["metric", "--metric", "euclidean", "--points", "5"], capsys)
    assert code == EXIT_PASS and "degenerate = true" in out


def test_verify_and_export(tmp_path, capsys):
    d = tmp_path / "run"
    code, out, _ = run(["verify", "--metric", "sphere", "--R", "pi/3", "--resolution", "24", "--seed", "1",
                        "--output-dir", str(d)], capsys)
    assert code == EXIT_PASS, out
    assert "audit_singular_flux = " in out and "FAIL" not in out
    e = tmp_path / "exported"
    code, out, _ = run(["export", "--run-dir", str(d), "--output-dir", str(e)], capsys)
    assert code == EXIT_PASS
    assert (e / "mesh.obj").read_bytes() == (d / "mesh.obj").read_bytes()
    # verify a stored mesh
    code, out, _ = run(["verify", "--metric", "sphere", "--R", "pi/3", "--mesh", str(d / "mesh.obj")], capsys)
    assert code == EXIT_PASS, out
    (d / "mesh.obj").write_text("tampered\n")
    code, out, _ = run(["export", "--run-dir", str(d), "--output-dir", str(tmp_path / "x")], capsys)
    assert code == EXIT_FAIL


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "freebound", "threshold", "--metric", "sphere"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "R_bar = 1.5707963" in proc.stdout
