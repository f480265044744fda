import json
import shutil

import numpy as np
import pytest

from gslayout.bundle import SceneBundle
from gslayout.cli import main
from gslayout.energy import assemble
from gslayout.gscloud import read_composite_ply
from gslayout.optimizer import ScheduleConfig, optimize

PROMPT = "a lamp on a table, with a bed beside the table"


def _files(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _poses(root):
    return json.loads((root / "poses.json").read_text())


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    root = tmp_path_factory.mktemp("b") / "scene"
    assert main(["build", "--prompt", PROMPT, "--out", str(root), "--points", "300"]) == 0
    assert main(["optimize", str(root), "--steps", "150"]) == 0
    return root


@pytest.fixture
def bundle(built, tmp_path):
    dst = tmp_path / "scene"
    shutil.copytree(built, dst)
    return dst


def test_build_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["build", "--prompt", PROMPT, "--out", str(tmp_path / name), "--points", "200",
                     "--seed", "3"]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    assert {"graph.json", "configs.json", "poses.json", "meta.json"} <= set(_files(tmp_path / "a"))


def test_parse_and_init(tmp_path, capsys):
    scene = tmp_path / "s.scene"
    scene.write_text("object table\nobject lamp\nlamp on table\n")
    assert main(["parse", str(scene)]) == 0
    g = json.loads(capsys.readouterr().out)
    assert [n["label"] for n in g["nodes"]] == ["table_0", "lamp_0"]
    assert main(["init", str(scene)]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert np.allclose(cfg[1]["position"], [0, 0, 0.575])


def test_reload_reproduces_breakdown(bundle):
    b = SceneBundle.load(bundle)
    sc = b.scene()
    res = optimize(sc, ScheduleConfig(T=30), trace=False)
    b.absorb(sc, res.poses)
    b.save(bundle)
    again = assemble(SceneBundle.load(bundle).scene())
    assert again.to_dict() == res.final.to_dict()


def test_energy_report(bundle, capsys):
    assert main(["energy", "report", str(bundle), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["terms"]) == 15
    assert np.isfinite(doc["E_p"]) and np.isfinite(doc["E_l"])


def test_remove_is_local(bundle, capsys):
    before = _files(bundle)
    assert main(["edit", "remove", str(bundle), "bed_0"]) == 0
    after = _files(bundle)
    assert "clouds/bed_0.ply" not in after
    for f in ("clouds/lamp_0.ply", "clouds/table_0.ply"):
        assert after[f] == before[f]
    p0, p1 = json.loads(before["poses.json"]), json.loads(after["poses.json"])
    assert p1 == {k: v for k, v in p0.items() if k != "bed_0"}


def test_move_is_local(bundle, capsys):
    before, p0 = _files(bundle), _poses(bundle)
    assert main(["edit", "move", str(bundle), "lamp_0", "--by", "0", "0", "0.1"]) == 0
    after, p1 = _files(bundle), _poses(bundle)
    assert all(after[f] == before[f] for f in before if f.startswith("clouds/"))
    assert np.allclose(np.subtract(p1["lamp_0"]["translation"], p0["lamp_0"]["translation"]), [0, 0, 0.1])
    assert {k: v for k, v in p1.items() if k != "lamp_0"} == {k: v for k, v in p0.items() if k != "lamp_0"}
    assert main(["edit", "move", str(bundle), "lamp_0"]) == 2


def test_add_reoptimizes_only_incident(bundle, capsys):
    before, p0 = _files(bundle), _poses(bundle)
    assert main(["edit", "add", str(bundle), "object cup; cup on table", "--points", "200",
                 "--steps", "40"]) == 0
    after, p1 = _files(bundle), _poses(bundle)
    assert p1["lamp_0"] == p0["lamp_0"] and p1["bed_0"] == p0["bed_0"]
    assert "cup_0" in p1
    for f in ("clouds/lamp_0.ply", "clouds/table_0.ply", "clouds/bed_0.ply"):
        assert after[f] == before[f]


def test_move_then_follow(bundle, capsys):
    # away from the bed, so no frozen pair ends up overlapping
    t0 = np.array(_poses(bundle)["table_0"]["translation"])
    assert main(["edit", "move", str(bundle), "table_0", "--by", "-1", "0", "0"]) == 0
    assert main(["optimize", str(bundle), "--labels", "lamp_0", "--steps", "800"]) == 0
    p = _poses(bundle)
    lamp, table = np.array(p["lamp_0"]["translation"]), np.array(p["table_0"]["translation"])
    assert np.allclose(table, t0 - [1, 0, 0])
    # the lamp has to end up over the table top again
    assert np.all(np.abs(lamp[:2] - table[:2]) < [0.6, 0.4])


def test_export_composite_roundtrip(bundle, tmp_path, capsys):
    out = tmp_path / "x" / "scene.ply"
    assert main(["export", str(bundle), "--composite", "--out", str(out)]) == 0
    parts = read_composite_ply(out)
    assert set(parts) == {"table_0", "lamp_0", "bed_0"}
    assert all(len(c) == 300 for c, _ in parts.values())
    assert (out.parent / "configs.json").exists()
    loc = tmp_path / "loc"
    assert main(["export", str(bundle), "--local", "--out", str(loc)]) == 0
    assert json.loads((loc / "poses.json").read_text()) == _poses(bundle)
    assert main(["export", str(bundle), "--format", "json", "--out", str(tmp_path / "s.json")]) == 0


def test_export_empty_bundle_fails(bundle, tmp_path, capsys):
    for lab in ("lamp_0", "bed_0", "table_0"):
        assert main(["edit", "remove", str(bundle), lab]) == 0
    assert main(["export", str(bundle), "--out", str(tmp_path / "e")]) == 3


def test_exit_codes(tmp_path, capsys):
    assert main(["frobnicate"]) == 2
    assert main(["optimize", str(tmp_path / "missing")]) == 3
    assert main(["build", "--prompt", PROMPT, "--out", str(tmp_path / "o"),
                 "--pools", str(tmp_path / "nope.json")]) == 3
    capsys.readouterr()
    assert main(["parse", "--prompt", "a lamp glows softly", "--json-errors"]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["exit"] == 3 and err["error"] == "validation"
