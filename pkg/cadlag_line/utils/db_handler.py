import sqlite3
import os
import logging
from pathlib import Path
from contextlib import contextmanager

logger = logging.getLogger(__name__)


class LedgerDB:
    """SQLite run ledger for benchmarks and experiments.

    The ledger is a side channel: it records what ran, how long it took and
    the headline numbers, but no computation ever reads from it.
    """

    def __init__(self, db_path: str):
        self.db_path = db_path
        parent = Path(db_path).parent
        if str(parent):
            os.makedirs(parent, exist_ok=True)
        self._initialize_schema()

    @contextmanager
    def get_connection(self):
        """Context-managed connection; a fresh connection per call.

        Usage:
            with ledger.get_connection() as conn:
                conn.execute(...)
        """
        is_network = "/mnt/" in self.db_path or self.db_path.startswith("\\\\")
        conn = sqlite3.connect(self.db_path, timeout=60, check_same_thread=False)
        try:
            if is_network:
                conn.execute("PRAGMA journal_mode=DELETE")
            else:
                conn.execute("PRAGMA journal_mode=WAL")
            conn.execute("PRAGMA synchronous=NORMAL")
            yield conn
        finally:
            try:
                conn.close()
            except Exception:
                pass

    def _initialize_schema(self):
        with self.get_connection() as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id TEXT UNIQUE NOT NULL,
                    started_at TEXT NOT NULL,
                    completed_at TEXT,
                    scenario TEXT NOT NULL,
                    config_fingerprint TEXT,
                    cpu_workers INTEGER,
                    status TEXT NOT NULL,
                    notes TEXT
                )
            """)
            conn.execute("""
                CREATE TABLE IF NOT EXISTS run_metrics (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id TEXT NOT NULL,
                    stage TEXT NOT NULL,
                    metric TEXT NOT NULL,
                    value REAL,
                    unit TEXT,
                    FOREIGN KEY(run_id) REFERENCES runs(run_id)
                )
            """)
            conn.execute("CREATE INDEX IF NOT EXISTS idx_run_metrics_run ON run_metrics(run_id)")
            conn.commit()

    def run_start(self, run_id: str, scenario: str, config_fingerprint: str = "", cpu_workers: int = 0):
        with self.get_connection() as conn:
            conn.execute(
                """
                INSERT INTO runs (run_id, started_at, scenario, config_fingerprint, cpu_workers, status)
                VALUES (?, CURRENT_TIMESTAMP, ?, ?, ?, 'running')
                """,
                (run_id, scenario, config_fingerprint, int(cpu_workers)),
            )
            conn.commit()

    def metric(self, run_id: str, stage: str, metric: str, value: float, unit: str):
        with self.get_connection() as conn:
            conn.execute(
                """
                INSERT INTO run_metrics (run_id, stage, metric, value, unit)
                VALUES (?, ?, ?, ?, ?)
                """,
                (run_id, stage, metric, float(value), unit),
            )
            conn.commit()

    def run_finish(self, run_id: str, status: str, notes: str = ""):
        with self.get_connection() as conn:
            conn.execute(
                """
                UPDATE runs
                SET completed_at = CURRENT_TIMESTAMP, status = ?, notes = ?
                WHERE run_id = ?
                """,
                (status, notes, run_id),
            )
            conn.commit()

    def run_metrics(self, run_id: str):
        """All (stage, metric, value, unit) rows of one run, in insertion order."""
        with self.get_connection() as conn:
            cursor = conn.execute(
                "SELECT stage, metric, value, unit FROM run_metrics WHERE run_id = ? ORDER BY id",
                (run_id,),
            )
            return [tuple(row) for row in cursor]

    def run_status(self, run_id: str):
        with self.get_connection() as conn:
            row = conn.execute("SELECT status FROM runs WHERE run_id = ?", (run_id,)).fetchone()
        return row[0] if row else None

    @staticmethod
    def safe_open(db_path: str):
        """Open a ledger, or return None (with a warning) when the location is unusable."""
        if not db_path:
            return None
        try:
            return LedgerDB(db_path)
        except Exception as e:
            logger.warning("LEDGER_UNAVAILABLE: %s (%s)", db_path, e)
            return None
