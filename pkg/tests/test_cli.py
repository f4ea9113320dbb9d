import json
import subprocess
import sys

import pytest

from crip.cli import EXIT_CONFIG, list_experiments, main

REQUIRED = {"fig2a_spectrum", "fig2b_relaxation", "fig2c", "fig3_ratio", "fig4b", "fig4c", "oracle_compare"}


def _csvs(path):
    return {p.name: p.read_bytes() for p in sorted(path.glob("*.csv"))}


def test_list_sorted_and_complete(capsys):
    assert main(["list"]) == 0
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert names == sorted(names)
    assert REQUIRED <= set(names)


def test_show(capsys):
    assert main(["show", "fig4b"]) == 0
    assert "kind: scaleup" in capsys.readouterr().out


@pytest.mark.slow
@pytest.mark.parametrize("name", [n for n, _ in list_experiments()])
def test_every_experiment_runs(name, tmp_path, capsys):
    out = tmp_path / name
    assert main(["run", "--experiment", name, "--out", str(out)]) == 0
    status = json.loads(capsys.readouterr().out)
    assert status["status"] == "ok"
    manifest = json.loads((out / "manifest.json").read_text())
    for key in ("experiment", "kind", "seed", "config_sha256", "config", "versions", "kernel_backend",
                "wall_time_s", "outputs"):
        assert key in manifest
    assert manifest["experiment"] == name
    assert any(o.endswith(".csv") for o in manifest["outputs"])
    assert "summary.json" in manifest["outputs"]


def test_manifest_and_seed_override(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "-e", "fig4b", "-o", str(out), "--seed", "7"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["config"]["seed"] == 7
    assert manifest["versions"]["crip"]


def test_config_error_json(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("kind: spectrum\nensemble: {species: 13C, number_density: 1.94}\nprobe: {depth: -1}\n")
    assert main(["run", str(bad), "-o", str(tmp_path / "x")]) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
    assert any(e.startswith("probe.depth") for e in err["errors"])


def test_unknown_experiment(capsys):
    assert main(["run", "-e", "nope"]) == EXIT_CONFIG
    assert "fig2c" in json.loads(capsys.readouterr().err)["errors"][0]


def test_missing_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.yaml")]) != 0
    assert "error" in json.loads(capsys.readouterr().err)


def test_deterministic_csvs(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["run", "-e", "oracle_compare", "-o", str(out)]) == 0
    assert _csvs(a) and _csvs(a) == _csvs(b)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "crip.cli", "run", "-e", "fig4c", "-o", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "stack_delivery.csv").is_file()
