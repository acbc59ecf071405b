"""Operator command line: serve, provision, simulate, analyze, export.

Every command is scriptable and non-interactive. Errors are reported as one
JSON object on stderr with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import threading
import time
from datetime import datetime, timedelta, timezone
from pathlib import Path

from . import core
from .clock import VirtualClock, WallClock
from .core import Condition, Enforcement, GroupConfig
from .events import EventKind, format_ts, parse_ts
from .metrics import AnalysisConfig, analyze_store
from .service import ChatService
from .sim import ExperimentPlan, run_experiment
from .store import GroupStore


def _fail(code: str, detail: str) -> int:
    print(json.dumps({"error": code, "detail": detail}), file=sys.stderr)
    return 1


def _load_manifest_groups(path: Path) -> list[GroupConfig]:
    doc = json.loads(path.read_text(encoding="utf-8"))
    return [GroupConfig.from_json_dict(entry) for entry in doc.get("groups", [])]


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    store = GroupStore(Path(args.log_dir))
    if args.config:
        for cfg in _load_manifest_groups(Path(args.config)):
            if cfg.group_id not in store.configs():
                store.create_group(cfg, cfg.epoch)
    if args.virtual_clock:
        epochs = [c.epoch for c in store.configs().values()]
        start = min(epochs) if epochs else datetime.now(timezone.utc)
        clock: VirtualClock | WallClock = VirtualClock(start)
    else:
        clock = WallClock()
    service = ChatService(store, clock)

    if not args.virtual_clock:
        def ticker():
            while True:
                time.sleep(args.tick_seconds)
                service.tick()

        threading.Thread(target=ticker, daemon=True).start()

    uvicorn.run(create_app(service), host=args.host, port=args.port,
                log_level="info")
    return 0


def cmd_group_create(args: argparse.Namespace) -> int:
    if args.cycle_hours <= 0:
        return _fail("VALIDATION_ERROR", "cycle-hours must be positive")
    if args.members < 1:
        return _fail("VALIDATION_ERROR", "members must be >= 1")
    epoch = parse_ts(args.epoch) if args.epoch else \
        datetime.now(timezone.utc).replace(microsecond=0)
    group_id = args.id or args.name.lower().replace(" ", "-")
    config = GroupConfig(
        group_id=group_id,
        name=args.name,
        condition=Condition(args.condition.upper()),
        epoch=epoch,
        cycle_length=timedelta(hours=args.cycle_hours),
        expectation_count=args.expectation,
        commit_ahead_limit=args.commit_ahead_limit,
        null_commit_allowed=args.null_commit_allowed,
        enforcement=Enforcement.FORFEIT_AFTER_N if args.forfeit_after
        else Enforcement.SOCIAL_ONLY,
        forfeit_after=args.forfeit_after,
        auto_renew=args.auto_renew,
    )
    try:
        config.validate()
        store = GroupStore(Path(args.log_dir))
        log = store.create_group(config, epoch)
        for i in range(args.members):
            log.append(log.state.make_join_event(f"{group_id}.p{i + 1}", f"p{i + 1}", epoch))
    except core.ChatError as exc:
        return _fail(exc.code, exc.detail)
    print(json.dumps({"group_id": group_id, "epoch": format_ts(epoch),
                      "members": args.members}))
    return 0


def cmd_sim_run(args: argparse.Namespace) -> int:
    plan_path = Path(args.plan)
    if not plan_path.exists():
        return _fail("VALIDATION_ERROR", f"plan file not found: {plan_path}")
    try:
        plan = ExperimentPlan.load(plan_path)
        result = run_experiment(plan, Path(args.out))
    except (ValueError, KeyError) as exc:
        return _fail("VALIDATION_ERROR", str(exc))
    messages = sum(
        1 for log in result.store.all_logs()
        for rec in log.records if rec.kind is EventKind.MESSAGE
    )
    print(json.dumps({"groups": len(result.group_conditions),
                      "messages": messages, "out": str(args.out)}))
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    logs_dir = Path(args.logs)
    if not logs_dir.exists():
        return _fail("VALIDATION_ERROR", f"logs directory not found: {logs_dir}")
    store = GroupStore(logs_dir)
    if args.config:
        for cfg in _load_manifest_groups(Path(args.config)):
            if cfg.group_id not in store.configs():
                store._configs[cfg.group_id] = cfg  # analysis-only override
    if not store.group_ids():
        return _fail("VALIDATION_ERROR", "no group logs found")
    try:
        windows = tuple(int(w) for w in args.lapse_windows.split(","))
    except ValueError:
        return _fail("VALIDATION_ERROR", f"bad lapse windows: {args.lapse_windows!r}")
    analysis = AnalysisConfig(study_days=args.study_days, lapse_windows=windows)
    report = analyze_store(store, analysis)
    out = Path(args.out)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    print(json.dumps({"out": str(out),
                      "groups": len(report["groups"]),
                      "observations": report["cohort"]["observations"]}))
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    logs_dir = Path(args.logs)
    if not logs_dir.exists():
        return _fail("VALIDATION_ERROR", f"logs directory not found: {logs_dir}")
    store = GroupStore(logs_dir)
    sink = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        if args.format == "jsonl":
            for log in store.all_logs():
                for rec in log.records:
                    doc = {"group_id": log.config.group_id,
                           "seq": rec.seq, "at": format_ts(rec.at),
                           "kind": rec.kind.value, "payload": rec.payload}
                    sink.write(json.dumps(doc, sort_keys=True, ensure_ascii=False) + "\n")
        else:  # csv: flattened messages
            writer = csv.writer(sink)
            writer.writerow(["group_id", "seq", "at", "message_id",
                             "sender_id", "kind", "body"])
            for log in store.all_logs():
                for rec in log.records:
                    if rec.kind is not EventKind.MESSAGE:
                        continue
                    p = rec.payload
                    writer.writerow([log.config.group_id, rec.seq, format_ts(rec.at),
                                     p["message_id"], p["sender_id"], p["kind"],
                                     p["body"]])
    finally:
        if args.out:
            sink.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="commitchat")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the group-chat service")
    serve.add_argument("--config", help="manifest file of group configs")
    serve.add_argument("--log-dir", required=True)
    serve.add_argument("--virtual-clock", action="store_true")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--tick-seconds", type=float, default=5.0)
    serve.set_defaults(func=cmd_serve)

    group = sub.add_parser("group", help="group provisioning")
    group_sub = group.add_subparsers(dest="group_command", required=True)
    create = group_sub.add_parser("create")
    create.add_argument("--name", required=True)
    create.add_argument("--condition", default="commit",
                        choices=["commit", "control", "COMMIT", "CONTROL"])
    create.add_argument("--cycle-hours", type=float, default=48.0)
    create.add_argument("--members", type=int, default=5)
    create.add_argument("--log-dir", default="logs")
    create.add_argument("--id", help="explicit group id (defaults to slug of name)")
    create.add_argument("--epoch", help="ISO-8601 UTC start (defaults to now)")
    create.add_argument("--expectation", type=int, default=1)
    create.add_argument("--commit-ahead-limit", type=int, default=1)
    create.add_argument("--null-commit-allowed", action="store_true")
    create.add_argument("--forfeit-after", type=int)
    create.add_argument("--auto-renew", action="store_true")
    create.set_defaults(func=cmd_group_create)

    sim = sub.add_parser("sim", help="scripted-agent experiments")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)
    run = sim_sub.add_parser("run")
    run.add_argument("--plan", required=True)
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_sim_run)

    analyze = sub.add_parser("analyze", help="metrics report over logs")
    analyze.add_argument("--logs", required=True)
    analyze.add_argument("--config", help="manifest file (defaults to logs dir manifest)")
    analyze.add_argument("--out", default="report.json")
    analyze.add_argument("--lapse-windows", default="3,5,7,9,11")
    analyze.add_argument("--study-days", type=int, default=21)
    analyze.set_defaults(func=cmd_analyze)

    export = sub.add_parser("export", help="dump logs as jsonl or csv")
    export.add_argument("--logs", required=True)
    export.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    export.add_argument("--out")
    export.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except core.ChatError as exc:
        return _fail(exc.code, exc.detail)
    except (ValueError, OSError) as exc:
        return _fail("ERROR", str(exc))


if __name__ == "__main__":
    sys.exit(main())
