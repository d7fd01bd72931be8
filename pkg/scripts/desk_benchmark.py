"""Full desk-scale benchmark: two simulator servers, virtual clock, fixed per-request latency.

    python scripts/desk_benchmark.py --out runs/desk --count 100 --latency-ms 20
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from cloudshift.bench import BenchConfig, flag_outliers, run_suite
from cloudshift.clock import VirtualClock
from cloudshift.report import emit, summarize
from cloudshift.schema import load_model
from cloudshift.store import ShapingProfile, SimulatorServer, connect


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/desk"))
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--latency-ms", type=float, default=20.0)
    ap.add_argument("--bandwidth", type=float, default=None)
    ap.add_argument("--batch", type=int, default=25)
    ap.add_argument("--strategy", default="eager")
    args = ap.parse_args()

    shaping = ShapingProfile(args.latency_ms, args.bandwidth)
    clock = VirtualClock()
    bundle = load_model("personnel")
    t0 = time.perf_counter()
    with SimulatorServer(args.out / "source", shaping, clock_mode="virtual") as src_srv, SimulatorServer(
        args.out / "dest", shaping, clock_mode="virtual", seed=1
    ) as dst_srv:
        suite = run_suite(
            args.out / "corpus",
            bundle,
            connect(src_srv.url, clock=clock),
            connect(dst_srv.url, clock=clock),
            count=args.count,
            seed=args.seed,
            config=BenchConfig(batch_size=args.batch, strategy=args.strategy, clock=clock),
        )
    report = emit(args.out, suite.rows, suite.report)
    outliers = flag_outliers(suite.records)
    (args.out / "outliers.json").write_text(json.dumps([o.__dict__ for o in outliers], indent=2) + "\n")
    print(summarize(suite.rows, report))
    print(f"outliers: {len(outliers)}  wall time: {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
