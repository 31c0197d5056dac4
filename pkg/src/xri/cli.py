"""Operator entry point: serve a live broker, run/replay scenarios, inspect logs.

Diagnostics go to stderr only (level from XRI_LOG_LEVEL); stdout carries
results, so logs and metrics files stay clean.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .eventlog import LogIntegrityError, read_log
from .scenario import ScenarioError, load_scenario
from .sim import MetricsReport, ScenarioRunError, final_twin_states, replay, run

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}

DEFAULT_PORT = 7450


def _setup_logging() -> None:
    raw = os.environ.get("XRI_LOG_LEVEL", "info").lower()
    level = LOG_LEVELS.get(raw, logging.INFO)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def summary_line(metrics: MetricsReport) -> str:
    """One line: per-user immersive-mode G, total diverged keys, message count."""
    parts = []
    for user in sorted(metrics.awareness_gap):
        g = metrics.awareness_gap[user]["immersive"]
        parts.append(f"G({user})={g:.3f}")
    diverged = sum(len(d["diverged_keys"]) for d in metrics.divergence.values())
    parts.append(f"diverged={diverged}")
    parts.append(f"msgs={metrics.total_messages}")
    return " ".join(parts)


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        from dataclasses import replace
        scenario = replace(scenario, seed=args.seed)
    result = run(scenario)
    log_path = Path(args.log)
    result.log.write(log_path)
    Path(f"{log_path}.metrics").write_text(result.metrics.to_json(),
                                           encoding="utf-8")
    print(summary_line(result.metrics))
    return 0


def _cmd_replay(args) -> int:
    print(summary_line(replay(args.log)))
    return 0


def _cmd_metrics(args) -> int:
    sys.stdout.write(replay(args.log).to_json())
    return 0


def _cmd_inspect(args) -> int:
    states = final_twin_states(read_log(args.log))
    if args.object is not None:
        if args.object not in states:
            raise LogIntegrityError(f"no object {args.object!r} in log")
        states = {args.object: states[args.object]}
    sys.stdout.write(json.dumps(states, indent=2, ensure_ascii=False) + "\n")
    return 0


def _cmd_serve(args) -> int:
    from .server import serve
    scenario = load_scenario(args.scenario) if args.scenario else None
    serve(port=args.port, log_path=args.log, scenario=scenario)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xri",
        description="XR-IoT broker, twin sync, and scenario harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run a live broker (TCP + WebSocket /ws)")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--log", default="broker.log", help="event log path")
    p.add_argument("--scenario", default=None,
                   help="preload this scenario's objects and user presences")
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("run", help="execute a scenario deterministically")
    p.add_argument("scenario", help="scenario file path")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario's seed")
    p.add_argument("--log", default="out.log", help="event log output path")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("replay", help="recompute metrics from a log")
    p.add_argument("log", help="event log path")
    p.set_defaults(fn=_cmd_replay)

    p = sub.add_parser("metrics", help="print the full metrics report for a log")
    p.add_argument("log", help="event log path")
    p.set_defaults(fn=_cmd_metrics)

    p = sub.add_parser("inspect", help="print final twin states from a log")
    p.add_argument("log", help="event log path")
    p.add_argument("--object", default=None, help="limit to one object id")
    p.set_defaults(fn=_cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ScenarioError, ScenarioRunError, LogIntegrityError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 0


if __name__ == "__main__":
    sys.exit(main())
