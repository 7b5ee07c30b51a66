import json

import numpy as np
import pytest

from sweepforge import cli
from sweepforge.cli import EXIT_LOAD, EXIT_NONSIMPLE, EXIT_OK, EXIT_SOLVER, bundled_scenes, main
from sweepforge.meshout import load_brep, read_obj


def _porcelain(out: str) -> dict:
    return dict(line.split("=", 1) for line in out.strip().splitlines())


def test_sweep_writes_three_files(tmp_path, capsys):
    assert main(["sweep", "--scene", "arc-sphere", "--out-dir", str(tmp_path), "--mesh-density", "8",
                 "--porcelain"]) == EXIT_OK
    out = _porcelain(capsys.readouterr().out)
    assert out["audits_ok"] == "true"
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "arc-sphere.brep.json", "arc-sphere.obj", "arc-sphere.report.json"]
    assert load_brep(out["brep"]).counts()["faces"] == int(out["faces"])
    assert len(read_obj(out["obj"])["f"]) > 0
    assert json.loads((tmp_path / "arc-sphere.report.json").read_text())["scene"] == "arc-sphere"


def test_missing_scene(tmp_path, capsys):
    assert main(["validate", "--scene", str(tmp_path / "nope.toml")]) == EXIT_LOAD
    assert "stage=" in capsys.readouterr().err


def test_corrupted_solid(tmp_path, capsys):
    solid = tmp_path / "broken.brep.json"
    solid.write_text("{ not json")
    scene = tmp_path / "broken.toml"
    scene.write_text(
        'version = "sweepforge-scene/1"\nname = "broken"\n'
        f'[solid]\nfile = "{solid.name}"\n'
        '[trajectory]\nkind = "circular-arc"\nt0 = 0.0\nt1 = 1.0\nradius = 3.0\n')
    assert main(["sweep", "--scene", str(scene), "--out-dir", str(tmp_path)]) == EXIT_LOAD
    assert capsys.readouterr().err.strip()


def test_unknown_generator(tmp_path):
    scene = tmp_path / "odd.toml"
    scene.write_text(
        'version = "sweepforge-scene/1"\nname = "odd"\n'
        '[solid]\ngenerator = "klein-bottle"\n'
        '[trajectory]\nkind = "circular-arc"\nt0 = 0.0\nt1 = 1.0\nradius = 3.0\n')
    assert main(["validate", "--scene", str(scene)]) == EXIT_LOAD


def test_tight_scene_is_rejected(tmp_path, capsys):
    assert main(["sweep", "--scene", "arc-sphere-tight", "--out-dir", str(tmp_path)]) == EXIT_NONSIMPLE
    assert "stage=" in capsys.readouterr().err
    assert not any(tmp_path.iterdir())


def test_solver_failures_exit_3(monkeypatch, capsys):
    def boom(args):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(cli, "cmd_validate", boom)
    assert main(["validate", "--scene", "arc-sphere"]) == EXIT_SOLVER
    assert "stage=solver" in capsys.readouterr().err


def test_validate_translation_warns(capsys):
    assert main(["validate", "--scene", "translation", "--porcelain"]) == EXIT_OK
    out = _porcelain(capsys.readouterr().out)
    assert out["general_position"] == "warnings" and int(out["warnings"]) > 0


def test_validate_clean_scene(capsys):
    assert main(["validate", "--scene", "capsule-helix"]) == EXIT_OK
    assert "general position: ok" in capsys.readouterr().out


def _probe(capsys, *args):
    assert main(["probe", "--scene", "arc-sphere", "--porcelain", *map(str, args)]) == EXIT_OK
    return _porcelain(capsys.readouterr().out)


def test_probe_at_the_pole(capsys):
    out = _probe(capsys, 4, 0, 0, 0)
    assert out["class"] == "on-coc" and out["orientation_sign"] == "0"
    assert float(out["f"]) == 0.0


def test_probe_interior_point(capsys):
    out = _probe(capsys, 0, 0.3, 0.2, 0.7)
    x = np.array([1.0, 0.3, 0.2]) / np.linalg.norm([1.0, 0.3, 0.2])
    assert float(out["f"]) == pytest.approx(3 * (-x[0] * np.sin(0.7) + x[1] * np.cos(0.7)), abs=1e-12)
    assert out["class"] == "interior-sweep" and out["orientation_sign"] == "1"


def test_probe_trailing_side_at_start(capsys):
    out = _probe(capsys, 3, 0, 0, 0)  # the -y pole: f = -3
    assert float(out["f"]) == pytest.approx(-3.0)
    assert out["class"] == "left-cap-candidate"


def test_probe_bad_face(capsys):
    assert main(["probe", "--scene", "arc-sphere", "9", "0", "0", "0"]) == EXIT_LOAD


def test_probe_human_output(capsys):
    assert main(["probe", "--scene", "arc-sphere", "0", "0", "0", "0.5"]) == EXIT_OK
    assert "class: interior-sweep" in capsys.readouterr().out


def test_scenes_lists_bundled(capsys):
    assert main(["scenes"]) == EXIT_OK
    listed = capsys.readouterr().out.split()
    assert listed == bundled_scenes() and "arc-sphere" in listed
