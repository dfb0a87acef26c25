"""Command-line entry point: run, replicate, and diff-trace.

The CLI is a thin shell over the harness; exit codes are 0 for success,
1 for a failed or divergent run, 2 for usage or configuration problems.
Verbosity comes from -v/-vv or the AGRSIM_LOG environment variable.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .harness import (
    ConfigError,
    export_metrics,
    export_run,
    load_config,
    replicate,
    run_experiment,
)
from .kernel import HandlerFault
from .organization import SimulationError

log = logging.getLogger("agrsim.cli")


class TraceFormatError(Exception):
    def __init__(self, path: str, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no


@dataclass
class TraceDiff:
    identical: bool
    record: Optional[int] = None  # 1-based index of the first divergence
    left: Optional[str] = None
    right: Optional[str] = None


def _read_trace(path: str) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for i, line in enumerate(lines, start=1):
        parts = line.split(",")
        if len(parts) != 5:
            raise TraceFormatError(path, i, f"expected 5 fields, got {len(parts)}")
        for j, name in enumerate(("event_id", "fire_time", "seq", "target")):
            if not parts[j].isdigit():
                raise TraceFormatError(path, i, f"field {name} is not an unsigned integer")
    return lines

def diff_trace(path_a: str, path_b: str) -> TraceDiff:
    """Compare two canonical trace files record by record.

    Returns the identical verdict, or the 1-based index of the first
    divergent record together with both records (None where one trace has
    already ended).
    """
    a = _read_trace(path_a)
    b = _read_trace(path_b)
    for i in range(max(len(a), len(b))):
        left = a[i] if i < len(a) else None
        right = b[i] if i < len(b) else None
        if left != right:
            return TraceDiff(False, record=i + 1, left=left, right=right)
    return TraceDiff(True)


def _configure_logging(verbosity: int) -> None:
    env = os.environ.get("AGRSIM_LOG", "").upper()
    level = getattr(logging, env, None) if env else None
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    logging.basicConfig(
        level=level if level is not None else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agrsim",
        description="Deterministic agent/group/role blockchain network simulator.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one experiment")
    run.add_argument("--config", required=True, help="path to a JSON config")
    run.add_argument("--seed", type=int, default=None, help="override the config's seed")
    run.add_argument("--format", choices=["json", "csv"], default="json")
    run.add_argument("--output", default=None, help="result file (default: stdout)")
    run.add_argument("--trace-out", default=None, help="dump the canonical trace here")
    run.add_argument(
        "--queue",
        choices=["heap", "sorted"],
        default="heap",
        help="event queue implementation (for divergence experiments)",
    )

    rep = sub.add_parser("replicate", help="run one config across several seeds")
    rep.add_argument("--config", required=True, help="path to a JSON config")
    rep.add_argument("--seeds", required=True, nargs="+", type=int, metavar="SEED")
    rep.add_argument("--format", choices=["json", "csv"], default="json")
    rep.add_argument("--output", default=None, help="result file (default: stdout)")

    diff = sub.add_parser("diff-trace", help="find the first divergent trace record")
    diff.add_argument("trace_a")
    diff.add_argument("trace_b")

    return parser


def _load_config_file(path: str):
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return load_config(data)


def _emit(data: bytes, output: Optional[str]) -> None:
    if output is None:
        sys.stdout.write(data.decode("utf-8"))
    else:
        Path(output).write_bytes(data)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    sink = open(args.trace_out, "wb") if args.trace_out else None
    try:
        metrics, digest = run_experiment(config, queue=args.queue, trace_sink=sink)
    finally:
        if sink is not None:
            sink.close()
    _emit(export_run(metrics, digest, args.format), args.output)
    return 0


def _cmd_replicate(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    report = replicate(config, args.seeds)
    _emit(export_metrics(report, args.format), args.output)
    # A seed that failed is reported, not swallowed.
    return 1 if any(r.error for r in report.results) else 0


def _cmd_diff(args: argparse.Namespace) -> int:
    diff = diff_trace(args.trace_a, args.trace_b)
    if diff.identical:
        print("identical")
        return 0
    print(f"traces differ at record {diff.record}:")
    print(f"  a: {diff.left if diff.left is not None else '<end of trace>'}")
    print(f"  b: {diff.right if diff.right is not None else '<end of trace>'}")
    return 1


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "replicate":
            return _cmd_replicate(args)
        return _cmd_diff(args)
    except (ConfigError, TraceFormatError) as exc:
        print(f"agrsim: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"agrsim: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (HandlerFault, SimulationError) as exc:
        print(f"agrsim: run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
