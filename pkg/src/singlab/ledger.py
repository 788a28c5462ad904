import json
import sqlite3
from datetime import datetime
from typing import Any, Dict, List, Optional


class RunLedger:
    """SQLite record of CLI runs and the checks each one reported."""

    def __init__(self, db_path: str = "runs.db"):
        """
        Initialize the ledger connection.

        Args:
            db_path: Path to the SQLite database file
        """
        self.db_path = db_path
        self.conn: Optional[sqlite3.Connection] = None
        self._connect()
        self._create_tables()

    def _connect(self) -> None:
        """Establish database connection."""
        self.conn = sqlite3.connect(self.db_path, check_same_thread=False)
        self.conn.row_factory = sqlite3.Row

    def _create_tables(self) -> None:
        """Create necessary database tables if they don't exist."""
        cursor = self.conn.cursor()

        cursor.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                started_at DATETIME NOT NULL,
                finished_at DATETIME,
                subcommand TEXT NOT NULL,
                config_json TEXT,
                seed TEXT,
                threads INTEGER,
                exit_code INTEGER,
                outputs_json TEXT
            )
        """)

        cursor.execute("""
            CREATE TABLE IF NOT EXISTS checks (
                run_id INTEGER NOT NULL,
                name TEXT NOT NULL,
                sample_size INTEGER,
                statistic REAL,
                threshold REAL,
                passed INTEGER,
                FOREIGN KEY (run_id) REFERENCES runs(id) ON DELETE CASCADE
            )
        """)

        cursor.execute("""
            CREATE INDEX IF NOT EXISTS idx_runs_started
            ON runs(started_at)
        """)

        self.conn.commit()

    def start_run(
        self,
        subcommand: str,
        config_json: Optional[str] = None,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
    ) -> int:
        """
        Record the start of a run.

        Returns:
            int: Run ID
        """
        cursor = self.conn.cursor()
        cursor.execute(
            """
            INSERT INTO runs (started_at, subcommand, config_json, seed, threads)
            VALUES (?, ?, ?, ?, ?)
            """,
            # seeds span [0, 2^64), wider than a sqlite integer
            (datetime.now().isoformat(), subcommand, config_json,
             None if seed is None else str(seed), threads)
        )
        self.conn.commit()
        return cursor.lastrowid

    def record_checks(self, run_id: int, checks) -> None:
        """Store CheckResult rows for a run."""
        cursor = self.conn.cursor()
        cursor.executemany(
            """
            INSERT INTO checks (run_id, name, sample_size, statistic, threshold, passed)
            VALUES (?, ?, ?, ?, ?, ?)
            """,
            [
                (run_id, c.name, c.sample_size, c.statistic, c.threshold,
                 None if c.passed is None else int(c.passed))
                for c in checks
            ]
        )
        self.conn.commit()

    def finish_run(self, run_id: int, exit_code: int, outputs: Optional[List[str]] = None) -> None:
        cursor = self.conn.cursor()
        cursor.execute(
            "UPDATE runs SET finished_at = ?, exit_code = ?, outputs_json = ? WHERE id = ?",
            (datetime.now().isoformat(), exit_code, json.dumps(outputs or []), run_id)
        )
        self.conn.commit()

    def get_run(self, run_id: int) -> Optional[Dict[str, Any]]:
        cursor = self.conn.cursor()
        cursor.execute("SELECT * FROM runs WHERE id = ?", (run_id,))
        row = cursor.fetchone()
        if not row:
            return None
        result = dict(row)
        result['outputs'] = json.loads(result['outputs_json']) if result['outputs_json'] else []
        result['checks'] = self.get_run_checks(run_id)
        return result

    def get_run_checks(self, run_id: int) -> List[Dict[str, Any]]:
        cursor = self.conn.cursor()
        cursor.execute(
            "SELECT name, sample_size, statistic, threshold, passed FROM checks WHERE run_id = ? ORDER BY rowid",
            (run_id,)
        )
        return [dict(row) for row in cursor.fetchall()]

    def get_recent_runs(self, limit: int = 10) -> List[Dict[str, Any]]:
        """
        Get the most recent runs.

        Args:
            limit: Maximum number of runs to return

        Returns:
            List of run dictionaries, newest first
        """
        cursor = self.conn.cursor()
        cursor.execute("""
            SELECT r.id, r.started_at, r.finished_at, r.subcommand, r.seed, r.threads, r.exit_code,
                   COUNT(c.name) as check_count,
                   SUM(CASE WHEN c.passed = 0 THEN 1 ELSE 0 END) as failed_count
            FROM runs r
            LEFT JOIN checks c ON c.run_id = r.id
            GROUP BY r.id
            ORDER BY r.id DESC
            LIMIT ?
        """, (limit,))
        return [dict(row) for row in cursor.fetchall()]

    def get_statistics(self) -> Dict[str, Any]:
        """
        Get ledger statistics.

        Returns:
            Dict with run counts per outcome and the date range
        """
        cursor = self.conn.cursor()

        cursor.execute("SELECT COUNT(*) as total FROM runs")
        total = cursor.fetchone()['total']

        cursor.execute("SELECT MIN(started_at) as first, MAX(started_at) as last FROM runs")
        dates = cursor.fetchone()

        cursor.execute("""
            SELECT exit_code, COUNT(*) as n FROM runs
            WHERE exit_code IS NOT NULL
            GROUP BY exit_code
        """)
        by_code = {row['exit_code']: row['n'] for row in cursor.fetchall()}

        return {
            "total_runs": total,
            "first_run": dates['first'],
            "last_run": dates['last'],
            "passed_runs": by_code.get(0, 0),
            "failed_runs": by_code.get(1, 0),
            "error_runs": by_code.get(2, 0),
            "unfinished_runs": total - sum(by_code.values()),
        }

    def close(self) -> None:
        """Close the database connection."""
        if self.conn:
            self.conn.close()

    def __enter__(self):
        """Context manager entry."""
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Context manager exit."""
        self.close()
