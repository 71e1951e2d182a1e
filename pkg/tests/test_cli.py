import filecmp
import json
import os
import subprocess
import sys


from rmfem import cli


def run_cli(args):
    return subprocess.run([sys.executable, "-m", "rmfem.cli"] + args,
                          capture_output=True, text=True)


def test_unknown_experiment_exits_2():
    proc = run_cli(["run", "does-not-exist"])
    assert proc.returncode == 2
    assert "unknown experiment" in proc.stderr


def test_missing_experiment_exits_2():
    proc = run_cli(["run"])
    assert proc.returncode == 2


def test_experiment_flag_alias(tmp_path):
    rc = cli.main(["run", "-e", "convergence", "--p", "2", "--nmc", "5",
                   "--out", str(tmp_path), "--threads", "1"])
    assert rc == 0
    assert (tmp_path / "convergence.csv").exists()


def test_manifest_references_all_outputs(tmp_path):
    rc = cli.main(["run", "convergence", "--p", "1", "--nmc", "5",
                   "--out", str(tmp_path), "--threads", "1"])
    assert rc == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["version"]
    assert manifest["params"]
    for name in manifest["outputs"]:
        assert (tmp_path / name).exists()
    # every non-manifest file is referenced
    files = {f for f in os.listdir(tmp_path) if f != "manifest.json"}
    assert files == set(manifest["outputs"])


def test_csv_schema_header(tmp_path):
    cli.main(["run", "convergence", "--p", "1", "--nmc", "4",
              "--out", str(tmp_path), "--threads", "1"])
    first = (tmp_path / "convergence.csv").read_text().splitlines()[0]
    assert first == "# rmfem-csv v1"


def test_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        rc = cli.main(["run", "adapt1d", "--gamma", "0.05", "--nmc", "5",
                       "--seed", "3", "--out", str(out), "--threads", "1"])
        assert rc == 0
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b))
    for name in names:
        assert filecmp.cmp(a / name, b / name, shallow=False), name


def test_adapt1d_outputs(tmp_path):
    rc = cli.main(["run", "adapt1d", "--gamma", "0.05", "--nmc", "5",
                   "--out", str(tmp_path), "--threads", "1"])
    assert rc == 0
    for name in ("adapt.csv", "estimators.csv", "mesh_final.json",
                 "field_final.json", "manifest.json"):
        assert (tmp_path / name).exists()
    # mesh file parses and validates
    from rmfem import mesh as M
    M.SimplicialMesh.from_json((tmp_path / "mesh_final.json").read_text())
    field = json.loads((tmp_path / "field_final.json").read_text())
    assert field["mesh_ref"] == "mesh_final.json"


def test_gamma_loc_history_in_manifest(tmp_path):
    cli.main(["run", "adapt1d", "--gamma", "0.05", "--nmc", "5",
              "--out", str(tmp_path), "--threads", "1"])
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert len(manifest["gamma_loc_history"]) >= 1
