"""Command line entry points: ``broker``, ``agent``, ``query`` and ``trace``.

Exit codes: 0 success, 2 startup/usage failure, 3 the query ended with an
error message, 4 the query timed out.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading

from .agents import BrokerUnavailable, Client, ConfigError, connect, load_agent, load_config
from .broker import AddressInUse, BrokerConfig, BrokerError, start
from .lang import RuleSyntaxError, parse_query, serialize_term
from .messaging import MessageError, decode, goal_term
from .terms import Str

DEFAULT_BROKER = "127.0.0.1:7700"

EXIT_OK = 0
EXIT_STARTUP = 2
EXIT_ERROR = 3
EXIT_TIMEOUT = 4


def _broker_addr(flag: str | None, fallback: str | None = None) -> str:
    return flag or os.environ.get("RR_BROKER") or fallback or DEFAULT_BROKER


def _wait_for_signal() -> None:
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    while not stop.wait(0.5):
        pass


def cmd_broker(args) -> int:
    try:
        config = BrokerConfig(
            listen=_broker_addr(args.listen),
            timeout_ms=args.timeout_ms,
            max_conversations=args.max_conversations,
        )
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STARTUP
    trace = None
    if args.trace_file:
        try:
            trace = open(args.trace_file, "ab")
        except OSError as e:
            print(f"error: cannot open trace file: {e.strerror}", file=sys.stderr)
            return EXIT_STARTUP
    try:
        broker = start(config, trace)
    except AddressInUse as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STARTUP
    except (BrokerError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STARTUP
    logging.getLogger(__name__).info("broker listening on %s", broker.address_text)
    print(f"listening on {broker.address_text}", flush=True)
    try:
        _wait_for_signal()
    finally:
        broker.stop()
        if trace is not None:
            trace.close()
    return EXIT_OK


def cmd_agent(args) -> int:
    try:
        cfg = load_config(args.config)
        agent = load_agent(cfg, address=_broker_addr(args.broker, cfg.broker))
    except ConfigError as e:
        print(f"error: config error in {e.field}: {e.detail}", file=sys.stderr)
        return EXIT_STARTUP
    except BrokerUnavailable as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STARTUP
    print(f"{cfg.name} registered", flush=True)
    done = threading.Event()
    threading.Thread(target=lambda: (agent.wait(), done.set()), daemon=True).start()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: done.set())
    while not done.wait(0.5):
        pass
    agent.stop()
    return EXIT_OK


def format_answer(bindings: dict) -> str:
    if not bindings:
        return "true"
    return ", ".join(f"{k}={serialize_term(v)}" for k, v in bindings.items())


def cmd_query(args) -> int:
    try:
        goal = goal_term(parse_query(args.query))
    except RuleSyntaxError as e:
        print(f"error: bad query: {e}", file=sys.stderr)
        return EXIT_STARTUP
    try:
        client = Client(connect(_broker_addr(args.broker)), args.name)
    except BrokerUnavailable as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STARTUP
    try:
        result = client.query(args.target, goal, args.timeout_ms, args.max_answers)
    finally:
        client.close()
    for answer in result.answers:
        print(format_answer(answer))
    if result.status == "complete":
        print(f"-- {len(result.answers)} answers")
        return EXIT_OK
    if result.error is not None:
        code, detail = result.error
        print(f"error({code},{serialize_term(Str(detail))})")
    else:
        print(f"error: no reply within {args.timeout_ms} ms", file=sys.stderr)
    return EXIT_TIMEOUT if result.status == "timeout" else EXIT_ERROR


def cmd_trace(args) -> int:
    try:
        f = open(args.trace_file, "rb")
    except OSError as e:
        print(f"error: cannot open {args.trace_file}: {e.strerror}", file=sys.stderr)
        return EXIT_STARTUP
    offset = 0
    with f:
        for line in f:
            try:
                ts, direction, raw = line.split(b"\t", 2)
                float(ts)
                if direction not in (b"in", b"out"):
                    raise ValueError(direction)
                m = decode(raw)
            except (ValueError, MessageError):
                print(f"error: corrupted trace record at byte offset {offset}", file=sys.stderr)
                return EXIT_STARTUP
            print(
                f"{ts.decode()}\t{direction.decode()}\t{m.performative}\t"
                f"{m.sender}->{m.receiver}\t{serialize_term(m.content)}"
            )
            offset += len(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rule-responder", description="Rule-based agent middleware")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("broker", help="run the message broker")
    b.add_argument("--listen", help="host:port (default $RR_BROKER or 127.0.0.1:7700)")
    b.add_argument("--timeout-ms", type=int, default=5000)
    b.add_argument("--max-conversations", type=int, default=1024)
    b.add_argument("--trace-file", help="append every routed message to this file")
    b.set_defaults(func=cmd_broker)

    a = sub.add_parser("agent", help="run one agent from its JSON config")
    a.add_argument("--config", required=True)
    a.add_argument("--broker", help="host:port (overrides $RR_BROKER and the config)")
    a.set_defaults(func=cmd_agent)

    q = sub.add_parser("query", help="send one query and print its answers")
    q.add_argument("query", help='e.g. \'expert(P,"ADDLs").\'')
    q.add_argument("--target", default="hcls_org")
    q.add_argument("--broker", help="host:port (default $RR_BROKER or 127.0.0.1:7700)")
    q.add_argument("--timeout-ms", type=int, default=5000)
    q.add_argument("--max-answers", type=int)
    q.add_argument("--name", help="client name to register as")
    q.set_defaults(func=cmd_query)

    t = sub.add_parser("trace", help="dump a broker trace file")
    t.add_argument("trace_file")
    t.set_defaults(func=cmd_trace)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
