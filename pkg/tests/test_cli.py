import json

import numpy as np
import pytest

from dm_stegkit import grid_from_pbm, mesh_volume, parse_stl, unit_vector, write_stl_binary
from dm_stegkit.cli import run
from conftest import box_mesh, two_tower_bridge, vrml_scene


def invoke(capsys, *argv):
    status = run(list(argv))
    out = capsys.readouterr().out
    return status, json.loads(out)


@pytest.fixture()
def cube_stl(tmp_path):
    path = tmp_path / "cube.stl"
    path.write_bytes(write_stl_binary(box_mesh(0, 0, 0, 10, 10, 10)))
    return path


def test_stl_info(capsys, cube_stl):
    status, doc = invoke(capsys, "stl-info", str(cube_stl))
    assert status == 0
    assert doc["subcommand"] == "stl-info"
    assert doc["result"]["triangles"] == 12
    assert doc["result"]["volume_mm3"] == pytest.approx(1000.0)
    assert str(cube_stl) in doc["inputs"]


def test_header_embed_extract_cycle(capsys, tmp_path, cube_stl):
    out = tmp_path / "hidden.stl"
    status, doc = invoke(capsys, "header-embed", str(cube_stl),
                         "--message", "ip=10.0.0.7 user=ops", "-o", str(out))
    assert status == 0
    status, doc = invoke(capsys, "header-extract", str(out))
    assert status == 0
    assert doc["result"]["payload"]["text"] == "ip=10.0.0.7 user=ops"
    # geometry untouched
    assert mesh_volume(parse_stl(out.read_bytes())) == pytest.approx(1000.0)


def test_header_extract_pristine_is_domain_error(capsys, cube_stl):
    status, doc = invoke(capsys, "header-extract", str(cube_stl))
    assert status == 1
    assert doc["result"]["error"] == "NoFrameFound"


def test_gcode_audit_mismatch(capsys, tmp_path):
    path = tmp_path / "bad.gcode"
    path.write_text(";filament used = 4290.7mm\nM82\nG1 X5 Z0.2 E3198.14\n")
    status, doc = invoke(capsys, "gcode-audit", str(path))
    assert status == 0
    assert doc["result"]["verdict"] == "mismatch"
    assert doc["result"]["discrepancy_ratio"] == pytest.approx(0.7454, abs=1e-3)


def test_vrml_cycle(capsys, tmp_path):
    src = tmp_path / "part.wrl"
    src.write_text(vrml_scene(triples=200, seed=31))
    out = tmp_path / "marked.wrl"
    status, doc = invoke(capsys, "vrml-embed", str(src),
                         "--message", "128.2 MPa", "-o", str(out))
    assert status == 0
    assert doc["result"]["slots_total"] == 200
    status, doc = invoke(capsys, "vrml-extract", str(out))
    assert status == 0
    assert doc["result"]["payload"]["text"] == "128.2 MPa"


def test_morse_cycle(capsys, tmp_path):
    out = tmp_path / "sketch.json"
    status, doc = invoke(capsys, "morse-encode", "SOS 123", "-o", str(out))
    assert status == 0
    status, doc = invoke(capsys, "morse-decode", str(out))
    assert status == 0
    assert doc["result"]["text"] == "SOS 123"


def test_qr3d_embed_search_cycle(capsys, tmp_path):
    rng = np.random.default_rng(32)
    bits = rng.random((13, 13)) < 0.5
    bits[0, 0] = bits[0, -1] = bits[-1, 0] = bits[-1, -1] = True
    pbm = tmp_path / "code.pbm"
    pbm.write_text("P1\n13 13\n" + "\n".join(
        " ".join("1" if b else "0" for b in row) for row in bits) + "\n")
    cloud_path = tmp_path / "code.xyz"
    status, doc = invoke(capsys, "qr3d-embed", "--grid", str(pbm),
                         "--dir", "0.2,-0.5,0.9", "--pitch", "2", "--seed", "7",
                         "-o", str(cloud_path))
    assert status == 0
    assert doc["result"]["spheres"] == int(bits.sum())

    status, doc = invoke(capsys, "qr3d-search", str(cloud_path))
    assert status == 0
    planted = unit_vector((0.2, -0.5, 0.9))
    found = np.array(doc["result"]["direction"])
    angle = np.degrees(np.arccos(min(1.0, abs(float(np.dot(found, planted))))))
    assert angle <= 0.1

    grid_out = tmp_path / "seen.pbm"
    status, doc = invoke(capsys, "qr3d-project", str(cloud_path),
                         "--dir", "0.2,-0.5,0.9", "--pitch", "2",
                         "-o", str(grid_out))
    assert status == 0
    assert np.array_equal(grid_from_pbm(grid_out.read_text()).bits, bits)


def test_qr3d_search_recovers_diagonal_direction(capsys, tmp_path):
    rng = np.random.default_rng(33)
    bits = rng.random((17, 17)) < 0.5
    bits[0, 0] = bits[0, -1] = bits[-1, 0] = bits[-1, -1] = True
    pbm = tmp_path / "code.pbm"
    pbm.write_text("P1\n17 17\n" + "\n".join(
        " ".join("1" if b else "0" for b in row) for row in bits) + "\n")
    cloud_path = tmp_path / "code.xyz"
    invoke(capsys, "qr3d-embed", "--grid", str(pbm), "--dir", "1,1,1",
           "--pitch", "2", "--seed", "7", "-o", str(cloud_path))
    status, doc = invoke(capsys, "qr3d-search", str(cloud_path))
    assert status == 0
    planted = unit_vector((1.0, 1.0, 1.0))
    found = np.array(doc["result"]["direction"])
    angle = np.degrees(np.arccos(min(1.0, abs(float(np.dot(found, planted))))))
    assert angle <= 0.1


def test_qr3d_embed_writes_sphere_mesh(capsys, tmp_path):
    pbm = tmp_path / "g.pbm"
    pbm.write_text("P1\n2 2\n1 1\n1 0\n")
    xyz = tmp_path / "g.xyz"
    stl = tmp_path / "g.stl"
    status, doc = invoke(capsys, "qr3d-embed", "--grid", str(pbm), "--dir", "0,0,1",
                         "--pitch", "2", "--subdivisions", "0",
                         "-o", str(xyz), "--stl", str(stl))
    assert status == 0
    assert doc["result"]["stl_triangles"] == 3 * 20
    mesh = parse_stl(stl.read_bytes())
    assert len(mesh.triangles) == 60


def test_qr3d_embed_env_seed(capsys, tmp_path, monkeypatch):
    pbm = tmp_path / "g.pbm"
    pbm.write_text("P1\n2 2\n1 0\n0 1\n")
    a = tmp_path / "a.xyz"
    b = tmp_path / "b.xyz"
    monkeypatch.setenv("DM_STEGKIT_SEED", "41")
    invoke(capsys, "qr3d-embed", "--grid", str(pbm), "--dir", "0,0,1",
           "--pitch", "2", "-o", str(a))
    status, doc = invoke(capsys, "qr3d-embed", "--grid", str(pbm), "--dir", "0,0,1",
                         "--pitch", "2", "-o", str(b))
    assert doc["result"]["seed"] == 41
    assert a.read_text() == b.read_text()


def test_recon_subcommand(capsys, tmp_path):
    import math
    rows = []
    for i in range(21):
        z = i * 0.5
        for k in range(64):
            t = 2 * math.pi * k / 64
            rows.append(f"{5*math.cos(t):.6f} {5*math.sin(t):.6f} {z:.6f}")
    src = tmp_path / "scan.xyz"
    src.write_text("# scan\n" + "\n".join(rows) + "\n")
    out = tmp_path / "rebuilt.stl"
    status, doc = invoke(capsys, "recon", str(src), "-o", str(out))
    assert status == 0
    assert doc["result"]["layer_count"] == 21
    analytic = math.pi * 25 * 10
    assert doc["result"]["volume_mm3"] == pytest.approx(analytic, rel=0.01)
    assert out.exists()


def test_orient_scan_subcommand(capsys, tmp_path):
    path = tmp_path / "towers.stl"
    path.write_bytes(write_stl_binary(two_tower_bridge()))
    status, doc = invoke(capsys, "orient-scan", str(path),
                         "--angle-step", "90", "--top", "3")
    assert status == 0
    assert doc["result"]["candidate_count"] == 64
    assert len(doc["result"]["candidates"]) == 3
    best = doc["result"]["candidates"][0]
    assert best["fragmentation_score"] <= doc["result"]["candidates"][1]["fragmentation_score"]


def test_reports_are_deterministic(capsys, tmp_path, cube_stl):
    s1, d1 = invoke(capsys, "stl-info", str(cube_stl))
    s2, d2 = invoke(capsys, "stl-info", str(cube_stl))
    assert (s1, d1) == (s2, d2)


def test_qr3d_project_degenerate_is_domain_error(capsys, tmp_path):
    path = tmp_path / "line.xyz"
    path.write_text("0 0 0\n0 0 5\n0 0 9\n")
    status, doc = invoke(capsys, "qr3d-project", str(path),
                         "--dir", "0,0,1", "--pitch", "2")
    assert status == 1
    assert doc["result"]["error"] == "DegenerateProjection"


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as err:
        run(["no-such-command"])
    assert err.value.code == 2


def test_missing_file_is_domain_error(capsys):
    status, doc = invoke(capsys, "stl-info", "/nonexistent/path.stl")
    assert status == 1
    assert "error" in doc["result"]
