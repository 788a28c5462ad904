#!/usr/bin/env python3
"""
Simple utility to view singlab run ledger statistics and recent runs.
"""

import argparse
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from singlab.ledger import RunLedger


def main():
    parser = argparse.ArgumentParser(description="View the singlab run ledger")
    parser.add_argument(
        "-d", "--database",
        type=str,
        default="results/runs.db",
        help="Path to SQLite ledger file (default: results/runs.db)"
    )
    parser.add_argument(
        "-n", "--limit",
        type=int,
        default=10,
        help="Number of recent runs to show (default: 10)"
    )
    parser.add_argument(
        "--run",
        type=int,
        default=None,
        help="Show every check of one run"
    )
    parser.add_argument(
        "--stats-only",
        action="store_true",
        help="Only show statistics, not individual runs"
    )

    args = parser.parse_args()

    if not Path(args.database).exists():
        print(f"Error: Database file '{args.database}' not found")
        sys.exit(1)

    with RunLedger(db_path=args.database) as ledger:
        if args.run is not None:
            run = ledger.get_run(args.run)
            if run is None:
                print(f"Error: no run with ID {args.run}")
                sys.exit(1)
            print(f"Run {run['id']}: {run['subcommand']} (seed {run['seed']}, exit {run['exit_code']})")
            print(f"Started: {run['started_at']}  Finished: {run['finished_at']}")
            for check in run['checks']:
                mark = {1: "✓", 0: "✗", None: "·"}[check['passed']]
                print(f"  {mark} {check['name']}: {check['statistic']}")
            for path in run['outputs']:
                print(f"  → {path}")
            return

        stats = ledger.get_statistics()
        print("="*60)
        print("singlab Run Ledger")
        print("="*60)
        print(f"Total runs: {stats['total_runs']}")
        print(f"Passed: {stats['passed_runs']}  Failed: {stats['failed_runs']}  "
              f"Errors: {stats['error_runs']}  Unfinished: {stats['unfinished_runs']}")
        if stats['first_run']:
            print(f"First run: {stats['first_run']}")
            print(f"Last run: {stats['last_run']}")
        print()

        if not args.stats_only and stats['total_runs'] > 0:
            print(f"Recent {args.limit} runs:")
            print("-"*60)
            for run in ledger.get_recent_runs(limit=args.limit):
                print(f"\nID: {run['id']}")
                print(f"Time: {run['started_at']}")
                print(f"Command: {run['subcommand']} (seed {run['seed']}, {run['threads']} threads)")
                print(f"Exit code: {run['exit_code']}")
                print(f"Checks: {run['check_count']} ({run['failed_count'] or 0} failed)")


if __name__ == "__main__":
    main()
