import json
import subprocess
import sys

import pytest

from hexdiv.cli import main
from hexdiv.element import unit_cube_vertices
from hexdiv.mesh import gen_trapezoid


def test_study_csv(capsys):
    assert main(["study", "--mesh", "cube", "--n", "1,2", "--space", "at0"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split(",") == ["mesh", "n", "cells", "mult_dofs", "p_err", "p_ord",
                                   "u_err", "u_ord", "div_err", "div_ord"]
    assert len(lines) == 3


def test_study_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["study", "--mesh", "pillar", "--n", "2", "--space", "at1", "-o", str(path)]) == 0
    assert a.read_text() == b.read_text()


def test_study_markdown(capsys):
    assert main(["study", "--n", "2", "--format", "md"]) == 0
    assert "‖p−p_h‖" in capsys.readouterr().out


def test_study_mesh_file(tmp_path, capsys):
    path = tmp_path / "m.json"
    gen_trapezoid(2).save(path)
    assert main(["study", "--mesh", "file", "--mesh-file", str(path)]) == 0
    assert capsys.readouterr().out.splitlines()[1].startswith("file,2,8,")


def test_symmetric_refusal_exits_1(capsys):
    code = main(["study", "--n", "2", "--space", "at1", "--at1-mode", "symmetric",
                 "--cnu-threshold", "2"])
    assert code == 1
    err = capsys.readouterr().err
    assert "cell 0" in err and "SingularCnuMatrix" in err


@pytest.mark.parametrize("argv", [["study", "--space", "at7"], ["study", "--n", "6,2"],
                                  ["study", "--mesh", "pillar", "--n", "3"],
                                  ["study", "--mesh", "file"], ["bogus"]])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_missing_mesh_file_exits_1(tmp_path, capsys):
    assert main(["study", "--mesh", "file", "--mesh-file", str(tmp_path / "none.json")]) == 1
    assert "error:" in capsys.readouterr().err


def test_check_element_cube(tmp_path, capsys):
    path = tmp_path / "cube.json"
    path.write_text(json.dumps({"vertices": unit_cube_vertices().tolist()}))
    assert main(["check-element", str(path)]) == 0
    out = capsys.readouterr().out
    assert "parallel face pairs: 3" in out
    assert "det(C∘H): 1\n" in out
    assert "recommended AT1 mode: symmetric" in out


def test_check_element_non_flat(tmp_path, capsys):
    v = unit_cube_vertices()
    v[7] += [0.0, 0.0, 0.2]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"vertices": v.tolist()}))
    assert main(["check-element", str(path)]) == 1
    assert "NonFlatFace" in capsys.readouterr().err


def test_verify_projected_stack_suite(capsys):
    assert main(["verify", "lemma51", "--seed", "3", "--count", "50"]) == 0
    out = capsys.readouterr().out
    assert "seed 3" in out and "50/50 passed" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hexdiv", "verify", "appendix", "--count", "5"],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "appendix:" in res.stdout
