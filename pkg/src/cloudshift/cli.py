"""Command-line entry point.

Settings resolve as flag > config document > built-in default. The config
document is JSON with a ``version`` field; any key it carries must be a known
option name (flags with dashes turned into underscores).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

from .bench import BenchConfig, aggregate, flag_outliers, run_suite
from .clock import Clock, make_clock
from .corpus import CorpusError, items_from_manifest, load_manifest
from .engine import CATEGORIES, METHODS, STRATEGIES, PlanError, execute, plan_migration, transfer_phase
from .report import ReportSchemaError, emit, load_directory, summarize
from .schema import ModelError, load_model, serialize_bundle, validate_mapping
from .store import TOKEN_ENV, FetchQuery, ShapingProfile, SimulatorServer, StoreError, UnknownTable, connect
from .validation import ValidationAborted, ValidationError, records_from_rows, run_all

log = logging.getLogger("cloudshift")

CONFIG_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Opt:
    flag: str
    default: Any
    help: str
    type: Callable[[str], Any] | None = str
    choices: Sequence[str] | None = None
    switch: bool = False

    @property
    def dest(self) -> str:
        return self.flag.lstrip("-").replace("-", "_")


def _csv_list(text: str) -> list[str]:
    return [s for s in (p.strip() for p in text.split(",")) if s]


def _bind(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host, int(port)


MODEL = Opt("--model", "personnel", "preset name or path to a JSON model document")
SOURCE = Opt("--source", None, "source endpoint URI (local:<dir> or http://host:port)")
DEST = Opt("--dest", None, "destination endpoint URI")
LATENCY = Opt("--latency-ms", 0.0, "per-request latency in ms", float)
BANDWIDTH = Opt("--bandwidth", None, "bandwidth cap in bytes/s (unlimited if unset)", float)
JITTER = Opt("--jitter-ms", 0.0, "maximum per-request jitter in ms", float)
CLOCK = Opt("--clock", "wall", "timing clock: wall, or virtual for deterministic shaped time", str, ("wall", "virtual"))
SEED = Opt("--seed", 0, "random seed", int)
BATCH = Opt("--batch", 25, "rows per batch (baseline always uses 1)", int)
STRATEGY = Opt("--strategy", "eager", "loading strategy for the orm method", str, STRATEGIES)
STRICT = Opt("--strict", False, "exit 1 if any item fails to migrate", None, switch=True)

OPTIONS: dict[str, list[Opt]] = {
    "model": [
        MODEL,
        Opt("--print", False, "print the canonical model document as JSON", None, switch=True),
    ],
    "validate": [
        MODEL,
        SOURCE,
        Opt("--policy", "exclude", "exclude offending records, or fail on the first check with findings", str, ("exclude", "fail")),
    ],
    "serve": [
        Opt("--root", None, "directory backing the simulated store"),
        Opt("--bind", "127.0.0.1:8750", "listen address host:port", str),
        LATENCY,
        BANDWIDTH,
        JITTER,
        CLOCK,
        SEED,
    ],
    "migrate": [
        MODEL,
        SOURCE,
        DEST,
        Opt("--method", "orm", "write method", str, METHODS),
        STRATEGY,
        BATCH,
        Opt("--parallel", 1, "worker threads for per-item work (wall clock only)", int),
        STRICT,
        Opt("--corpus", None, "corpus directory to save into the source before transferring"),
        Opt("--category", None, "corpus category to migrate (with --corpus)", str, CATEGORIES),
        LATENCY,
        BANDWIDTH,
        JITTER,
        CLOCK,
        SEED,
    ],
    "bench": [
        MODEL,
        Opt("--categories", list(CATEGORIES), "comma-separated categories", _csv_list),
        Opt("--count", 100, "files per category", int),
        SEED,
        Opt("--size-min", None, "smallest file in bytes (category default if unset)", int),
        Opt("--size-max", None, "largest file in bytes (category default if unset)", int),
        SOURCE,
        DEST,
        STRATEGY,
        BATCH,
        LATENCY,
        BANDWIDTH,
        JITTER,
        CLOCK,
        STRICT,
    ],
    "report": [
        Opt("--in", None, "directory holding efficiency_<category>.csv files (defaults to --out)"),
    ],
}
CONFIG_KEYS = {"version", "out"} | {o.dest for opts in OPTIONS.values() for o in opts}

HELP = {
    "model": "inspect a conceptual model and its mapping",
    "validate": "run pre-migration checks over the rows in a store",
    "serve": "run the store simulator",
    "migrate": "move rows and blobs between two endpoints",
    "bench": "run paired baseline/orm benchmarks over seeded corpora",
    "report": "summarise efficiency CSVs and draw the aggregate chart",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON config document (flags override it)")
    common.add_argument("--out", default=None, help="directory for all written artifacts (default: .)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = argparse.ArgumentParser(prog="cloudshift", description="Schema-mapped migration between storage endpoints.")
    subs = parser.add_subparsers(dest="command", metavar="{" + ",".join(OPTIONS) + "}")
    for name, opts in OPTIONS.items():
        sp = subs.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
        for o in opts:
            default_txt = "off" if o.switch else o.default
            if isinstance(default_txt, list):
                default_txt = ",".join(default_txt)
            text = f"{o.help} (default: {default_txt})"
            if o.switch:
                sp.add_argument(o.flag, dest=o.dest, action="store_const", const=True, default=None, help=text)
            else:
                sp.add_argument(o.flag, dest=o.dest, type=o.type, choices=o.choices, default=None, help=text)
    return parser


def load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config document must be a JSON object")
    if doc.get("version") != CONFIG_VERSION:
        raise UsageError(f"config version must be {CONFIG_VERSION}, got {doc.get('version')!r}")
    unknown = sorted(set(doc) - CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    return doc


def resolve(command: str, args: argparse.Namespace, config: dict[str, Any]) -> dict[str, Any]:
    """Merge flag values, config values and defaults for one subcommand."""
    settings: dict[str, Any] = {}
    for o in OPTIONS[command] + [Opt("--out", ".", "")]:
        flag_value = getattr(args, o.dest, None)
        if flag_value is not None:
            settings[o.dest] = flag_value
        elif o.dest in config:
            value = config[o.dest]
            if o.choices is not None and value not in o.choices:
                raise UsageError(f"config {o.dest}: {value!r} is not one of {list(o.choices)}")
            if o.type is _csv_list and isinstance(value, str):
                value = _csv_list(value)
            settings[o.dest] = value
        else:
            settings[o.dest] = o.default
    return settings


def _shaping(s: dict[str, Any]) -> ShapingProfile:
    try:
        return ShapingProfile(s["latency_ms"], s["bandwidth"], s["jitter_ms"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _endpoint(uri: str, s: dict[str, Any], clock: Clock, shaping: ShapingProfile | None = None, seed: int = 0):
    if shaping is not None and not shaping.unlimited and uri.startswith("http://"):
        log.warning("%s: shaping flags apply to local endpoints only; configure the server instead", uri)
    try:
        return connect(uri, clock=clock, shaping=shaping, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _require(s: dict[str, Any], *names: str) -> None:
    missing = [n for n in names if not s.get(n)]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _write(out: str, name: str, text: str) -> Path:
    path = Path(out) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


# -- subcommands ---------------------------------------------------------------


def cmd_model(s: dict[str, Any]) -> int:
    bundle = load_model(s["model"])
    violations = validate_mapping(bundle.mapping, bundle.conceptual, bundle.storage)
    if s["print"]:
        print(json.dumps(serialize_bundle(bundle), indent=2, sort_keys=True))
    else:
        for e in bundle.conceptual.entities:
            print(f"{e.name} -> {bundle.mapping.table_for(e.name)}")
            for p in e.properties:
                extra = f"({p.max_length})" if p.max_length else ""
                flags = " key" if p.is_key else ""
                print(f"  {p.name:<14} {p.kind}{extra}{flags} -> {bundle.mapping.column_for(e.name, p.name)}")
    for v in violations:
        print(f"mapping {v.kind}: {v.entity}.{v.property}: {v.detail}", file=sys.stderr)
    return EXIT_FAIL if violations else EXIT_OK


def cmd_validate(s: dict[str, Any]) -> int:
    _require(s, "source")
    bundle = load_model(s["model"])
    store = _endpoint(s["source"], s, make_clock("wall"))
    rows = []
    for table in bundle.mapping.entity_to_table.values():
        try:
            rows.extend(store.fetch(FetchQuery(table)))
        except UnknownTable:
            continue
    records = records_from_rows(rows, bundle.conceptual, bundle.mapping)
    try:
        report = run_all(records, bundle.conceptual, bundle.mapping, bundle.storage, policy=s["policy"])
        code = EXIT_OK
    except ValidationAborted as exc:
        report = exc.report
        code = EXIT_FAIL
    _write(s["out"], "validation.json", report.to_json() + "\n")
    print(report.format_table())
    return code


def cmd_serve(s: dict[str, Any]) -> int:
    _require(s, "root")
    bind = _bind(s["bind"]) if isinstance(s["bind"], str) else tuple(s["bind"])
    Path(s["root"]).mkdir(parents=True, exist_ok=True)
    server = SimulatorServer(
        s["root"], _shaping(s), bind, clock_mode=s["clock"], token=os.environ.get(TOKEN_ENV), seed=s["seed"]
    )
    print(f"serving {s['root']} at {server.url} (clock={s['clock']})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.httpd.server_close()
    return EXIT_OK


def cmd_migrate(s: dict[str, Any]) -> int:
    _require(s, "source", "dest")
    bundle = load_model(s["model"])
    clock = make_clock(s["clock"])
    shaping = _shaping(s)
    source = _endpoint(s["source"], s, clock, shaping, s["seed"])
    dest = _endpoint(s["dest"], s, clock, shaping, s["seed"] + 1)
    manifest = None
    if s["corpus"]:
        _require(s, "category")
        manifest = load_manifest(s["corpus"], s["category"])
    plan = plan_migration(
        bundle.conceptual,
        bundle.mapping,
        source,
        dest,
        storage=bundle.storage,
        method=s["method"],
        strategy=s["strategy"],
        batch_size=s["batch"],
        manifest=manifest,
        clock=clock,
        parallel=s["parallel"],
    )
    if manifest is not None:
        result = execute(plan, items_from_manifest(manifest, s["corpus"], plan.entity_def))
    else:
        result = transfer_phase(plan)
    text = json.dumps(result.to_dict(), indent=2, sort_keys=True)
    _write(s["out"], "migration.json", text + "\n")
    print(text)
    return EXIT_FAIL if s["strict"] and result.failed else EXIT_OK


def cmd_bench(s: dict[str, Any]) -> int:
    out = Path(s["out"])
    unknown = [c for c in s["categories"] if c not in CATEGORIES]
    if unknown or not s["categories"]:
        raise UsageError(f"categories must be drawn from {', '.join(CATEGORIES)}")
    bundle = load_model(s["model"])
    clock = make_clock(s["clock"])
    shaping = _shaping(s)
    for d in ("source", "dest"):
        if not s[d]:
            (out / d).mkdir(parents=True, exist_ok=True)
            s[d] = f"local:{out / d}"
    source = _endpoint(s["source"], s, clock, shaping, s["seed"])
    dest = _endpoint(s["dest"], s, clock, shaping, s["seed"] + 1)
    cfg = BenchConfig(batch_size=s["batch"], strategy=s["strategy"], clock=clock)
    suite = run_suite(
        out / "corpus",
        bundle,
        source,
        dest,
        categories=s["categories"],
        count=s["count"],
        seed=s["seed"],
        size_min=s["size_min"],
        size_max=s["size_max"],
        config=cfg,
    )
    rows_by_cat, all_records = suite.rows, suite.records
    report = suite.report
    emit(out, rows_by_cat, report)
    outliers = flag_outliers(all_records)
    _write(str(out), "outliers.json", json.dumps([o.__dict__ for o in outliers], indent=2) + "\n")
    print(summarize(rows_by_cat, report))
    failed = sum(1 for rows in rows_by_cat.values() for r in rows if r.failed)
    if failed:
        print(f"{failed} item(s) failed verification", file=sys.stderr)
    return EXIT_FAIL if s["strict"] and failed else EXIT_OK


def cmd_report(s: dict[str, Any]) -> int:
    rows_by_cat = load_directory(s["in"] or s["out"])
    if not rows_by_cat:
        raise UsageError(f"no efficiency_<category>.csv files in {s['in'] or s['out']}")
    report = emit(s["out"], {}, aggregate([r for rows in rows_by_cat.values() for r in rows]))
    print(summarize(rows_by_cat, report))
    return EXIT_OK


COMMANDS = {
    "model": cmd_model,
    "validate": cmd_validate,
    "serve": cmd_serve,
    "migrate": cmd_migrate,
    "bench": cmd_bench,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve(args.command, args, load_config(args.config))
        return COMMANDS[args.command](settings)
    except UsageError as exc:
        print(f"cloudshift {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, PlanError, ValidationError, StoreError, CorpusError, ReportSchemaError, OSError) as exc:
        print(f"cloudshift {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
