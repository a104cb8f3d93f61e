from __future__ import annotations

import zipfile
from pathlib import Path

from nonlocal_lightcone_lab.util.failure_bundle import create_failure_bundle


def test_failure_bundle_includes_artifacts_and_log(tmp_path: Path) -> None:
    run_dir = tmp_path / "runs" / "free-lightcone"
    (run_dir / "checks").mkdir(parents=True)
    (run_dir / "speed_bounds.json").write_text("{}", encoding="utf-8")
    (run_dir / "checks" / "main.csv").write_text("sample,margin\n", encoding="utf-8")
    (run_dir / "failure_bundle_old.zip").write_bytes(b"zip")

    log_file = tmp_path / "lab.log"
    log_file.write_text("hello", encoding="utf-8")

    out = create_failure_bundle(
        artifact_dir=str(run_dir),
        log_file=str(log_file),
        out_dir=str(tmp_path / "runs"),
        scenario="Free Lightcone",
    )
    assert out.exists()
    assert out.suffix == ".zip"
    assert out.name.startswith("failure_bundle_free-lightcone_")

    with zipfile.ZipFile(out, "r") as z:
        names = set(z.namelist())
        assert "lab.log" in names
        assert "artifacts/speed_bounds.json" in names
        assert "artifacts/checks/main.csv" in names
        assert not any("failure_bundle_old" in n for n in names)


def test_failure_bundle_tolerates_missing_inputs(tmp_path: Path) -> None:
    extra = tmp_path / "config.yaml"
    extra.write_text("name: x\n", encoding="utf-8")
    out = create_failure_bundle(
        artifact_dir=str(tmp_path / "missing"),
        log_file="",
        out_dir=str(tmp_path / "bundles"),
        extra_paths=[str(extra), str(tmp_path / "nope")],
    )
    with zipfile.ZipFile(out, "r") as z:
        assert z.namelist() == ["extra/config.yaml"]
