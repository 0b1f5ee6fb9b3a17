import numpy as np
import pytest

from ltsdg import cli
from ltsdg.errors import NumericalError
from ltsdg.mesh import load_mesh_2d
from ltsdg.output import read_vtk_cells, snapshot_stem

SMALL = """
run.problem = ogata
run.scheme = gts, olts
run.integrator = impl
run.levels = 0..1
ogata.hx = 0.1
ogata.ny = 1
ogata.pe = 10
ogata.dt0 = 2^-8
ogata.dt1 = 2^-7
ogata.t_end = 2^-5
"""


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = root / "small.cfg"
    cfg.write_text(SMALL)
    out = root / "out"
    code = cli.main(["run", str(cfg), "--out", str(out)])
    return code, out


def test_run_writes_report_and_figures(small_run):
    code, out = small_run
    assert code == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0] == "level,scheme,integrator,ht,error,cpu_seconds"
    assert len(lines) == 5
    rows = [ln.split(",") for ln in lines[1:]]
    assert {r[1] for r in rows} == {"gts", "olts-D"}
    assert all(float(r[4]) > 0 for r in rows)
    for png in ("error_vs_ht.png", "error_vs_cpu.png", "final_field.png", "partition.png"):
        assert (out / png).stat().st_size > 1000
    assert (out / "config.txt").is_file()


def test_snapshot_names_and_vtk_round_trip(small_run):
    _, out = small_run
    stem = snapshot_stem("ogata", "olts-D", "impl", 1)
    assert stem == "ogata_olts-D_impl_r1"
    data = read_vtk_cells(out / f"{stem}.vtk")
    assert data["cells"].shape[1] == 3
    c = data["data"]["concentration"]
    assert c.size == data["cells"].shape[0]
    assert np.all(np.isfinite(c)) and c.max() > 0.1
    assert set(np.unique(data["data"]["subdomain"])) == {0.0, 1.0}


def test_run_is_deterministic_in_error(tmp_path, small_run):
    _, out = small_run
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o"), "--levels", "0..0"]) == 0
    first = [ln.split(",")[:5] for ln in (out / "report.csv").read_text().splitlines()[1:] if ln.startswith("0,")]
    again = [ln.split(",")[:5] for ln in (tmp_path / "o" / "report.csv").read_text().splitlines()[1:]]
    assert first == again


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("run.problem = heat\n")
    assert cli.main(["run", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == 2
    good = tmp_path / "good.cfg"
    good.write_text(SMALL)
    assert cli.main(["run", str(good), "--out", str(tmp_path / "o"), "--levels", "3..1"]) == 2
    assert cli.main(["run", str(good), "--jobs", "0"]) == 2
    assert cli.main(["mesh", "hexagon:3", "--out", str(tmp_path / "m")]) == 2
    assert cli.main(["mesh", "square:x", "--out", str(tmp_path / "m")]) == 2


def test_numerical_failure_exit_3(tmp_path, monkeypatch, capsys):
    import ltsdg.experiment

    def boom(*a, **k):
        raise NumericalError("non-finite values")

    monkeypatch.setattr(ltsdg.experiment, "run_experiment", boom)
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_mesh_command(tmp_path):
    path = tmp_path / "sq.mesh"
    assert cli.main(["mesh", "square:3", "--out", str(path)]) == 0
    assert load_mesh_2d(path).n_elements == 18
    path = tmp_path / "og.mesh"
    assert cli.main(["mesh", "ogata:hx=0.25,ny=2", "--out", str(path)]) == 0
    assert load_mesh_2d(path).n_elements == 16
    path = tmp_path / "g.csv"
    assert cli.main(["mesh", "graded:1,2,2,2", "--out", str(path)]) == 0
    lines = path.read_text().splitlines()
    assert lines[0] == "node,z" and len(lines) == 6


def test_check_command(capsys):
    assert cli.main(["check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
