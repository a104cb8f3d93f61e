from __future__ import annotations

import json
from pathlib import Path

import pytest

from nonlocal_lightcone_lab.config import ScenarioConfig, parse_config
from nonlocal_lightcone_lab.ledger import RunLedger
from nonlocal_lightcone_lab.runner import run_scenario


def _config(tmp_path: Path, checks: list[dict], **overrides: object) -> ScenarioConfig:
    raw = {
        "name": "tiny",
        "lattice": {"dim": 1, "half_width": 8.0, "points_per_axis": 32, "boundary": "periodic"},
        "kernel": {"family": "power_law", "a": 5.0},
        "reference": {"kind": "region", "lower": [-1.0], "upper": [1.0]},
        "cutoff": {"delta": 0.5, "n": 2},
        "dynamics": {"potential": "none", "t_max": 2.0, "samples": 9},
        "checks": checks,
        "output": {"directory": str(tmp_path / "runs"), "plots": False},
        "ledger": {"db_path": str(tmp_path / "ledger.db")},
    }
    raw.update(overrides)
    return parse_config(raw)


def test_run_writes_the_artifact_inventory(tmp_path: Path) -> None:
    cfg = _config(tmp_path, [{"name": "speed", "kind": "speed_bounds", "n": 2}])
    manifest = run_scenario(cfg)

    run_dir = tmp_path / "runs" / "tiny"
    assert manifest.failure is None
    assert set(manifest.summary) == {"speed"}
    for name in (
        "config.yaml",
        "speed_bounds.json",
        "cutoff.csv",
        "trajectory.csv",
        "checks/speed.csv",
        "reports.json",
        "timings.txt",
        "manifest.json",
    ):
        assert name in manifest.files
        assert (run_dir / name).exists()
    assert manifest.files == sorted(manifest.files)

    bounds = json.loads((run_dir / "speed_bounds.json").read_text(encoding="utf-8"))
    assert bounds["speeds"] == {}
    timings = (run_dir / "timings.txt").read_text(encoding="utf-8").splitlines()
    assert [line.split("\t")[0] for line in timings] == ["assemble", "bounds", "cutoffs", "propagate", "checks"]


def test_run_records_into_the_ledger(tmp_path: Path) -> None:
    cfg = _config(tmp_path, [{"name": "speed", "kind": "speed_bounds", "n": 2}])
    manifest = run_scenario(cfg)

    with RunLedger(str(tmp_path / "ledger.db")) as ledger:
        rec = ledger.last_run("tiny")
        assert rec is not None
        assert rec.finished_at is not None
        assert rec.ok is manifest.ok
        assert set(ledger.check_results(rec.id)) == {"speed"}


def test_json_only_output_skips_csv_artifacts(tmp_path: Path) -> None:
    cfg = _config(
        tmp_path,
        [{"name": "speed", "kind": "speed_bounds", "n": 2}],
        output={"directory": str(tmp_path / "runs"), "formats": ["json"], "plots": False},
    )
    manifest = run_scenario(cfg)
    assert manifest.failure is None
    assert not any(f.endswith(".csv") for f in manifest.files)
    assert "reports.json" in manifest.files


def test_speed_at_or_below_kappa_fails_in_the_bounds_stage(tmp_path: Path) -> None:
    cfg = _config(tmp_path, [{"name": "sandwich", "kind": "sandwich", "n": 2, "c": 1e-6}])
    manifest = run_scenario(cfg)

    assert not manifest.ok
    assert manifest.failure is not None
    assert manifest.failure.startswith("bounds: HypothesisError")
    assert "must exceed kappa" in manifest.failure
    assert manifest.summary == {}
    assert "trajectory.csv" not in manifest.files
    assert "manifest.json" in manifest.files
    assert list((tmp_path / "runs").glob("failure_bundle_tiny_*.zip"))

    with RunLedger(str(tmp_path / "ledger.db")) as ledger:
        rec = ledger.last_run("tiny")
        assert rec is not None and rec.ok is False
        assert "must exceed kappa" in (rec.message or "")


def test_reruns_are_byte_identical(tmp_path: Path) -> None:
    checks = [
        {"name": "speed", "kind": "speed_bounds", "n": 2},
        {"name": "sandwich", "kind": "sandwich", "n": 2, "trials": 3},
    ]
    cfg = _config(tmp_path, checks, seed=7)
    threaded = _config(tmp_path, checks, seed=7, threads=2)

    first = run_scenario(cfg, out_dir=tmp_path / "a")
    second = run_scenario(cfg, out_dir=tmp_path / "b")
    assert first.failure is None

    for name in ("manifest.json", "reports.json", "checks/sandwich.csv"):
        a = (tmp_path / "a" / "tiny" / name).read_bytes()
        b = (tmp_path / "b" / "tiny" / name).read_bytes()
        assert a == b, name
    assert first.summary == second.summary

    # Worker scheduling does not change the per-check seeds.
    run_scenario(threaded, out_dir=tmp_path / "c")
    a = json.loads((tmp_path / "a" / "tiny" / "reports.json").read_text(encoding="utf-8"))
    c = json.loads((tmp_path / "c" / "tiny" / "reports.json").read_text(encoding="utf-8"))
    assert a == c


@pytest.mark.slow
def test_free_lightcone_preset_passes(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.chdir(tmp_path)
    from nonlocal_lightcone_lab.scenarios import scenario_config

    cfg = scenario_config("free-lightcone")
    manifest = run_scenario(cfg, out_dir=tmp_path, plots=False)
    assert manifest.failure is None
    assert manifest.ok, manifest.summary


def _reports(tmp_path: Path) -> dict:
    return json.loads((tmp_path / "runs" / "tiny" / "reports.json").read_text(encoding="utf-8"))


def test_refined_checks_repeat_at_twice_the_points(tmp_path: Path) -> None:
    cfg = _config(
        tmp_path,
        [
            {"name": "rme", "kind": "rme", "n": 2, "refine": True},
            {"name": "decay", "kind": "lightcone_decay", "n": 2, "refine": True},
            {"name": "markov", "kind": "markov", "n": 2},
        ],
    )
    manifest = run_scenario(cfg)
    assert manifest.failure is None

    reports = _reports(tmp_path)
    for name in ("rme", "decay"):
        details = reports[name]["details"]
        assert details["refined_points"] == 64
        assert isinstance(details["refinement_stable"], bool)
        assert reports[name]["stable"] is not None
    assert reports["rme"]["details"]["refined_value"] >= 0.0
    assert "refined_points" not in reports["markov"]["details"]


def test_envelope_sweeps_t_max_and_twice_t_max(tmp_path: Path) -> None:
    cfg = _config(tmp_path, [{"name": "envelope", "kind": "envelope", "n": 2}])
    manifest = run_scenario(cfg)
    assert manifest.failure is None

    details = _reports(tmp_path)["envelope"]["details"]
    scales = [scale for scale, _ in details["C_by_scale"]]
    assert details["s"] == pytest.approx(4.0)
    assert scales == pytest.approx([2.0, 4.0])
    assert _reports(tmp_path)["envelope"]["stable"] is not None
    assert _reports(tmp_path)["envelope"]["smallest_C"] == max(C for _, C in details["C_by_scale"])


@pytest.mark.slow
def test_acceptance_preset_passes(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.chdir(tmp_path)
    from nonlocal_lightcone_lab.scenarios import scenario_config

    cfg = scenario_config("acceptance")
    manifest = run_scenario(cfg, out_dir=tmp_path, plots=False)
    assert manifest.failure is None
    assert set(manifest.summary) == {"envelope", "main", "decay", "strichartz", "markov"}

    reports = json.loads((tmp_path / "acceptance" / "reports.json").read_text(encoding="utf-8"))
    assert [scale for scale, _ in reports["envelope"]["details"]["C_by_scale"]] == pytest.approx([50.0, 100.0])
    assert reports["decay"]["details"]["refined_points"] == 2048
    assert manifest.ok, manifest.summary
