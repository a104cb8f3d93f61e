from __future__ import annotations

import logging
import sqlite3
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .models import InequalityReport


logger = logging.getLogger(__name__)

_SCHEMA = (
    """
    CREATE TABLE IF NOT EXISTS runs (
      id INTEGER PRIMARY KEY AUTOINCREMENT,
      scenario TEXT NOT NULL,
      config_hash TEXT NOT NULL,
      out_dir TEXT NOT NULL,
      started_at TEXT NOT NULL,
      finished_at TEXT,
      ok INTEGER,
      message TEXT
    );
    """,
    """
    CREATE TABLE IF NOT EXISTS check_results (
      run_id INTEGER NOT NULL REFERENCES runs(id),
      check_name TEXT NOT NULL,
      passed INTEGER NOT NULL,
      smallest_c REAL,
      created_at TEXT NOT NULL,
      PRIMARY KEY (run_id, check_name)
    );
    """,
)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class RunRecord:
    id: int
    scenario: str
    config_hash: str
    out_dir: str
    started_at: str
    finished_at: Optional[str]
    ok: Optional[bool]
    message: Optional[str]


class RunLedger:
    """
    sqlite index of scenario runs and their check verdicts.

    The run directories hold the reports; an unreadable ledger is moved aside as
    `<db>.corrupt-<stamp>` and started over instead of failing the run.
    """

    def __init__(self, db_path: str) -> None:
        self.db_path = Path(db_path)
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        self._conn = self._open()
        self._conn.execute("PRAGMA journal_mode=WAL;")
        for stmt in _SCHEMA:
            self._conn.execute(stmt)
        self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    def __enter__(self) -> "RunLedger":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def _open(self) -> sqlite3.Connection:
        if self.db_path.exists():
            conn = sqlite3.connect(self.db_path)
            try:
                row = conn.execute("PRAGMA quick_check;").fetchone()
                if row and row[0] == "ok":
                    return conn
            except sqlite3.DatabaseError as e:
                logger.debug("quick_check raised: %s", e)
            conn.close()
            stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
            aside = self.db_path.with_name(f"{self.db_path.name}.corrupt-{stamp}")
            self.db_path.replace(aside)
            logger.warning("Run ledger unreadable; moved to %s and starting a new one.", aside)
        return sqlite3.connect(self.db_path)

    def record_run_start(self, scenario: str, config_hash: str, out_dir: str) -> int:
        cur = self._conn.execute(
            "INSERT INTO runs(scenario, config_hash, out_dir, started_at) VALUES (?, ?, ?, ?);",
            (scenario, config_hash, out_dir, _now()),
        )
        self._conn.commit()
        return int(cur.lastrowid)

    def record_run_finish(self, run_id: int, *, ok: bool, message: Optional[str] = None) -> None:
        self._conn.execute(
            "UPDATE runs SET finished_at = ?, ok = ?, message = ? WHERE id = ?;",
            (_now(), 1 if ok else 0, message, run_id),
        )
        self._conn.commit()

    def record_check(self, run_id: int, report: InequalityReport) -> None:
        # a rerun of the same check within one run keeps the latest verdict
        self._conn.execute(
            "INSERT OR REPLACE INTO check_results(run_id, check_name, passed, smallest_c, created_at)"
            " VALUES (?, ?, ?, ?, ?);",
            (run_id, report.name, 1 if report.ok else 0, report.smallest_C, _now()),
        )
        self._conn.commit()

    def check_results(self, run_id: int) -> dict[str, tuple[bool, Optional[float]]]:
        rows = self._conn.execute(
            "SELECT check_name, passed, smallest_c FROM check_results WHERE run_id = ? ORDER BY check_name;",
            (run_id,),
        ).fetchall()
        return {name: (bool(passed), smallest_c) for name, passed, smallest_c in rows}

    def last_run(self, scenario: str) -> Optional[RunRecord]:
        row = self._conn.execute(
            """
            SELECT id, scenario, config_hash, out_dir, started_at, finished_at, ok, message
            FROM runs WHERE scenario = ? ORDER BY id DESC LIMIT 1;
            """,
            (scenario,),
        ).fetchone()
        if row is None:
            return None
        rid, name, chash, out_dir, started, finished, ok, message = row
        return RunRecord(
            id=int(rid),
            scenario=name,
            config_hash=chash,
            out_dir=out_dir,
            started_at=started,
            finished_at=finished,
            ok=None if ok is None else bool(ok),
            message=message,
        )
