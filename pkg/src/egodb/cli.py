"""Unified command-line entry point.

Subcommands: upload, scan, serve, process, query, sync, stats, score,
selftest. Exit codes are a stable contract: 0 full success, 1 partial or
domain failure, 2 validation, 3 transport. Registry and store URIs accept
file:// paths, bare paths, or http(s):// endpoints; defaults come from the
EGODB_REGISTRY / EGODB_STORE / EGODB_TOKEN environment variables.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading
from pathlib import Path

from . import selftest as selftest_mod
from .errors import (
    ConflictError,
    EgodbError,
    InvalidArgumentError,
    NotFoundError,
    PreconditionError,
    TransportError,
    ValidationError,
)
from .align import normalized_score
from .ingest import open_store, run_daemon, scan_once, upload_episode
from .pipeline import DEFAULT_ADAPTERS, RetryPolicy, run_round
from .registry import EpisodeFilter, Registry
from .registry_http import RegistryServer, open_registry
from .syncset import load_sync_config, resolve, split, sync

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_TRANSPORT = 3


def _env(name: str, fallback: str | None = None) -> str | None:
    return os.environ.get(name, fallback)


def _parse_duration(text: str) -> float:
    """Accepts '90', '1.5s', '250ms', '2m'."""
    text = text.strip().lower()
    for suffix, scale in (("ms", 1e-3), ("s", 1.0), ("m", 60.0)):
        if text.endswith(suffix):
            return float(text[: -len(suffix)]) * scale
    return float(text)


def _registry_from(args):
    uri = args.registry or _env("EGODB_REGISTRY")
    if not uri:
        raise InvalidArgumentError("no registry URI (use --registry or EGODB_REGISTRY)")
    return open_registry(uri, token=getattr(args, "token", None) or _env("EGODB_TOKEN"))


def _store_from(args):
    uri = args.store or _env("EGODB_STORE")
    if not uri:
        raise InvalidArgumentError("no store URI (use --store or EGODB_STORE)")
    return open_store(uri)


# ---------------------------------------------------------------------------
# subcommands


def cmd_upload(args) -> int:
    store = _store_from(args)
    raw = Path(args.raw).read_bytes()
    meta = json.loads(Path(args.meta).read_text(encoding="utf-8"))
    manifest = upload_episode(store, raw, meta, nonce=args.nonce)
    print(manifest.episode_hash)
    return EXIT_OK


def cmd_scan(args) -> int:
    store = _store_from(args)
    registry = _registry_from(args)
    if not args.daemon:
        report = scan_once(store, registry)
        print(report.as_line())
        return EXIT_OK if report.conflicts == 0 else EXIT_FAILURE
    interval = _parse_duration(args.interval)
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    run_daemon(store, registry, interval, stop=stop, on_report=lambda r: print(r.as_line(), flush=True))
    return EXIT_OK


def cmd_serve(args) -> int:
    registry = Registry(args.registry or _env("EGODB_REGISTRY") or ":memory:")
    store = None
    if args.store or _env("EGODB_STORE"):
        store = _store_from(args)
    server = RegistryServer(
        registry, host=args.host, port=args.port,
        token=args.token or _env("EGODB_TOKEN"), store=store,
    )
    print(f"registry listening on {server.address}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def cmd_process(args) -> int:
    registry = _registry_from(args)
    store = _store_from(args)
    summary = run_round(
        registry, store, DEFAULT_ADAPTERS,
        max_parallel=args.parallel,
        retry_policy=RetryPolicy(max_attempts=args.retry_max),
    )
    print(summary.as_line())
    return EXIT_OK if summary.failed == 0 else EXIT_FAILURE


def _filter_from_args(args) -> EpisodeFilter:
    tri = {}
    for name in ("is_deleted", "is_eval", "has_processed_path", "has_processing_error"):
        value = getattr(args, name)
        if value is not None:
            tri[name] = value == "true"
    return EpisodeFilter(
        operator=args.operator, lab=args.lab, task=args.task, scene=args.scene,
        embodiment=args.embodiment, robot_name=args.robot_name,
        task_description_contains=args.description_contains, **tri,
    )


def cmd_query(args) -> int:
    registry = _registry_from(args)
    records = registry.query(_filter_from_args(args), include_deleted=args.include_deleted)
    if args.json:
        print(json.dumps([r.to_dict() for r in records], indent=2))
        return EXIT_OK
    if not records:
        return EXIT_OK
    header = f"{'hash':12}  {'lab':10}  {'task':16}  {'scene':10}  {'embod.':6}  {'operator':10}  {'frames':>6}  status"
    print(header)
    print("-" * len(header))
    for r in records:
        if r.processed_path:
            status = "processed"
        elif r.processing_error:
            status = "error"
        else:
            status = "pending"
        flags = ("D" if r.is_deleted else "") + ("E" if r.is_eval else "")
        frames = "" if r.num_frames is None else str(r.num_frames)
        print(f"{r.episode_hash[:12]:12}  {r.lab:10}  {r.task:16}  {r.scene:10}  "
              f"{r.embodiment:6}  {r.operator:10}  {frames:>6}  {status}{' ' + flags if flags else ''}")
    return EXIT_OK


def cmd_sync(args) -> int:
    config = load_sync_config(args.config)
    registry = _registry_from(args)
    store = _store_from(args)
    records = resolve(config, registry)
    subset = split(records, config.mode, val_ratio=config.val_ratio,
                   percent=config.percent, seed=config.seed)
    paths, report = sync(subset, store, config.cache_dir, parallelism=config.parallelism)
    print(report.as_line())
    print(f"cached={len(paths)} cache_dir={config.cache_dir}")
    if args.json_report:
        doc = {"downloaded": report.downloaded, "skipped": report.skipped,
               "failed": report.failed, "failures": report.failures,
               "episodes": [p.name for p in paths]}
        Path(args.json_report).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return EXIT_OK if report.ok else EXIT_FAILURE


def cmd_stats(args) -> int:
    registry = _registry_from(args)
    groups = registry.stats(args.group_by)
    if args.json:
        print(json.dumps([
            {"value": g.value, "episode_count": g.episode_count, "total_frames": g.total_frames}
            for g in groups
        ], indent=2))
        return EXIT_OK
    print(f"{args.group_by:20}  {'episodes':>8}  {'frames':>10}")
    for g in groups:
        print(f"{g.value:20}  {g.episode_count:>8}  {g.total_frames:>10}")
    return EXIT_OK


def cmd_score(args) -> int:
    print(normalized_score(args.points, args.max))
    return EXIT_OK


def cmd_selftest(args) -> int:
    if args.suite == "align":
        failures = selftest_mod.run_align_selftest()
    else:
        failures = selftest_mod.run_flowmatch_selftest()
    for failure in failures:
        print(f"FAIL: {failure}", file=sys.stderr)
    print(f"{args.suite} selftest: {'ok' if not failures else f'{len(failures)} failure(s)'}")
    return EXIT_OK if not failures else EXIT_FAILURE


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egodb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_registry(p):
        p.add_argument("--registry", default=None, help="registry URI (env EGODB_REGISTRY)")
        p.add_argument("--token", default=None, help="bearer token (env EGODB_TOKEN)")

    def add_store(p):
        p.add_argument("--store", default=None, help="object store URI (env EGODB_STORE)")

    p = sub.add_parser("upload", help="upload one raw episode plus metadata sidecar")
    p.add_argument("--raw", required=True)
    p.add_argument("--meta", required=True)
    add_store(p)
    p.add_argument("--nonce", default=None, help="uploader nonce mixed into the episode hash")
    p.set_defaults(func=cmd_upload)

    p = sub.add_parser("scan", help="register new store uploads (once or as a daemon)")
    add_store(p)
    add_registry(p)
    p.add_argument("--daemon", action="store_true")
    p.add_argument("--interval", default="1h", help="daemon scan interval (e.g. 50ms, 10s, 1h)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("serve", help="serve the registry over HTTP")
    p.add_argument("--registry", default=None, help="registry database path")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--token", default=None)
    add_store(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("process", help="run one processing round")
    add_registry(p)
    add_store(p)
    p.add_argument("--parallel", type=int, default=4)
    p.add_argument("--retry-max", type=int, default=3, dest="retry_max")
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("query", help="query episode metadata")
    add_registry(p)
    p.add_argument("--operator")
    p.add_argument("--lab")
    p.add_argument("--task")
    p.add_argument("--scene")
    p.add_argument("--embodiment", choices=("human", "robot"))
    p.add_argument("--robot-name", dest="robot_name")
    p.add_argument("--is-deleted", dest="is_deleted", choices=("true", "false"))
    p.add_argument("--is-eval", dest="is_eval", choices=("true", "false"))
    p.add_argument("--has-processed", dest="has_processed_path", choices=("true", "false"))
    p.add_argument("--has-error", dest="has_processing_error", choices=("true", "false"))
    p.add_argument("--description-contains", dest="description_contains")
    p.add_argument("--include-deleted", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("sync", help="sync a filtered, split subset to a local cache")
    p.add_argument("--config", required=True, help="JSON sync config file")
    add_registry(p)
    add_store(p)
    p.add_argument("--json-report", default=None, help="also write the report as JSON here")
    p.set_defaults(func=cmd_sync)

    p = sub.add_parser("stats", help="dataset growth statistics")
    add_registry(p)
    p.add_argument("--group-by", dest="group_by", default="lab",
                   choices=("lab", "task", "embodiment", "scene", "operator"))
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("score", help="normalized rollout score")
    p.add_argument("--points", type=float, required=True)
    p.add_argument("--max", type=float, required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("selftest", help="run a module's invariant suite")
    p.add_argument("suite", choices=("align", "flowmatch"))
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        for violation in exc.violations:
            print(f"validation: {violation}", file=sys.stderr)
        return EXIT_VALIDATION
    except InvalidArgumentError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TransportError as exc:
        print(f"transport: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (NotFoundError, ConflictError, PreconditionError, EgodbError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except json.JSONDecodeError as exc:
        print(f"bad JSON input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
