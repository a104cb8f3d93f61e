from __future__ import annotations

import time
import zipfile
from pathlib import Path
from typing import Iterable, Optional


def create_failure_bundle(
    *,
    artifact_dir: str,
    log_file: str,
    out_dir: str,
    scenario: str = "",
    extra_paths: Optional[Iterable[str]] = None,
) -> Path:
    """
    Zip the run log, whatever artifacts a failed run managed to write, and any extra paths.

    Existing bundles in `out_dir` are skipped so re-running after a failure does not nest zips.
    """
    out_root = Path(out_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    stamp = time.strftime("%Y%m%d_%H%M%S")
    slug = (scenario or "").strip().lower().replace(" ", "-")
    slug_part = f"_{slug}" if slug else ""
    out_path = out_root / f"failure_bundle{slug_part}_{stamp}.zip"

    art = Path(artifact_dir)
    log = Path(log_file) if log_file else None

    def _add_file(z: zipfile.ZipFile, file_path: Path, arcname: str) -> None:
        try:
            if file_path.exists() and file_path.is_file():
                z.write(file_path, arcname=arcname)
        except OSError:
            # file vanished between listing and zipping
            return

    with zipfile.ZipFile(out_path, "w", compression=zipfile.ZIP_DEFLATED) as z:
        if log is not None:
            _add_file(z, log, arcname=log.name)

        if art.exists() and art.is_dir():
            for p in sorted(art.rglob("*")):
                if not p.is_file() or p.name.startswith("failure_bundle") or p == out_path:
                    continue
                rel = p.relative_to(art)
                _add_file(z, p, arcname=str(Path("artifacts") / rel))

        for raw in extra_paths or ():
            p = Path(raw)
            if p.is_file():
                _add_file(z, p, arcname=str(Path("extra") / p.name))
            elif p.is_dir():
                for f in sorted(p.rglob("*")):
                    if f.is_file():
                        _add_file(z, f, arcname=str(Path("extra") / p.name / f.relative_to(p)))

    return out_path
