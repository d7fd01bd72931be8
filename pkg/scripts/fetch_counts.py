"""Print source fetch counts and destination put counts per method and loading strategy.

    python scripts/fetch_counts.py --rows 10 --batch 10
"""

from __future__ import annotations

import argparse
import tempfile
from pathlib import Path

from cloudshift.engine import MigrationItem, execute, plan_migration
from cloudshift.schema import load_model
from cloudshift.store import LocalStore


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=10)
    ap.add_argument("--batch", type=int, default=10)
    args = ap.parse_args()

    bundle = load_model("personnel")
    items = [
        MigrationItem(f"P{i:04d}", {"LastName": "Memon"}, {"Picture": bytes([i % 256]) * 256, "TextFile": b"row\n" * 8})
        for i in range(args.rows)
    ]
    print(f"{'method':<9}{'strategy':<10}{'fetches':>8}{'puts':>6}")
    with tempfile.TemporaryDirectory() as tmp:
        for method, strategy in (("baseline", "lazy"), ("orm", "lazy"), ("orm", "explicit"), ("orm", "eager")):
            root = Path(tmp) / f"{method}-{strategy}"
            src, dst = LocalStore(root / "src"), LocalStore(root / "dst")
            plan = plan_migration(
                bundle.conceptual, bundle.mapping, src, dst,
                storage=bundle.storage, method=method, strategy=strategy, batch_size=args.batch,
            )
            result = execute(plan, items)
            print(f"{method:<9}{strategy:<10}{result.source_fetches:>8}{result.dest_puts:>6}")


if __name__ == "__main__":
    main()
