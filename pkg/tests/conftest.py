from __future__ import annotations

import os
import sys
from typing import Any
from pathlib import Path

import pytest


ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))


def pytest_configure(config: Any) -> None:
    config.addinivalue_line(
        "markers",
        "slow: desk-scale acceptance runs (large lattices, long horizons); set LAB_RUN_SLOW=1 to enable",
    )


def pytest_collection_modifyitems(config: Any, items: list) -> None:
    if os.getenv("LAB_RUN_SLOW", "").strip().lower() in {"1", "true", "yes", "on"}:
        return
    skip = pytest.mark.skip(reason="desk-scale run; set LAB_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch: pytest.MonkeyPatch) -> None:
    # Scenario defaults come from these; a developer's shell must not leak into tests.
    for name in ("LAB_SEED", "LAB_THREADS", "LAB_OUT_DIR", "LAB_PLOTS", "LOG_LEVEL", "LOG_FILE", "LAB_LEDGER_PATH"):
        monkeypatch.delenv(name, raising=False)
