"""``fiberrt`` command line: cstest, vsuite, csloop, bench and report.

Exit status: 0 ok, 1 verification failure, 2 usage error, 3 backend unavailable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

from .ctxcore import backends as _backends
from .ctxcore.stack import DEFAULT_STACK_BYTES, MIN_STACK_BYTES
from .errors import (
    BackendUnavailable,
    EmptyInput,
    SizeTooSmall,
    UnknownBackend,
)

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_UNAVAILABLE = 0, 1, 2, 3
FORMATS = ("table", "csv", "json")
BACKEND_ENV = "FIBER_RT_BACKEND"


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, default_backend: str) -> None:
    p.add_argument("--backend", default=default_backend,
                   help='backend name or "all" (default: $%s or "all")' % BACKEND_ENV)
    p.add_argument("--format", choices=FORMATS, default="table")
    p.add_argument("--out", help="write output here instead of standard output")
    p.add_argument("--stack-bytes", type=int, default=DEFAULT_STACK_BYTES)


def build_parser() -> argparse.ArgumentParser:
    default_backend = os.environ.get(BACKEND_ENV) or "all"
    parser = argparse.ArgumentParser(
        prog="fiberrt",
        description="Green-thread runtime: switch tests, semantics suite and benchmarks.")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("cstest", help="context switch and stack guard self-test")
    _common(p, default_backend)

    p = sub.add_parser("vsuite", help="runtime semantics suite with oracle comparison")
    _common(p, default_backend)
    p.add_argument("--trace", action=argparse.BooleanOptionalAction, default=True,
                   help="record traces (trace-based checks are skipped without it)")

    p = sub.add_parser("csloop", help="raw context switch timing")
    _common(p, default_backend)
    p.add_argument("--seconds", type=float, default=2.0)

    p = sub.add_parser("bench", help="twelve-kernel run time system benchmark")
    _common(p, default_backend)
    p.add_argument("--reps", type=int, default=10)

    p = sub.add_parser("report", help="re-render saved bench CSV/JSON output")
    _common(p, default_backend)
    p.add_argument("inputs", nargs="+", metavar="FILE")
    return parser


def _backends_for(name: str) -> list[str]:
    if name == "all":
        return _backends.backend_list()
    if name not in _backends.BACKEND_NAMES:
        raise UsageError(f"unknown backend {name!r}; known: "
                         + ", ".join(_backends.BACKEND_NAMES) + ", all")
    if not _backends.backend_available(name):
        raise BackendUnavailable(f"backend {name!r} is not available in this build")
    return [name]


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _reports_text(reports, fmt: str) -> str:
    if fmt == "json":
        doc = {"overall": all(r.overall for r in reports),
               "reports": [r.to_dict() for r in reports]}
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["suite", "backend", "check", "status", "detail"])
        for r in reports:
            for c in r.checks:
                w.writerow([r.suite, r.backend, c.name, c.status, c.detail])
        return buf.getvalue()
    return "\n\n".join(r.render() for r in reports) + "\n"


def _cstest_all(names, stack_bytes):
    from .verify import run_cstest
    return [run_cstest(b, stack_bytes=stack_bytes) for b in names]


def cmd_cstest(args) -> int:
    reports = _cstest_all(_backends_for(args.backend), args.stack_bytes)
    _emit(_reports_text(reports, args.format), args.out)
    return EXIT_OK if all(r.overall for r in reports) else EXIT_VERIFY


def cmd_vsuite(args) -> int:
    from .verify import run_vsuite
    reports = [run_vsuite(backend=b, trace=args.trace, stack_bytes=args.stack_bytes)
               for b in _backends_for(args.backend)]
    _emit(_reports_text(reports, args.format), args.out)
    return EXIT_OK if all(r.overall for r in reports) else EXIT_VERIFY


def _gate(names, stack_bytes, fmt, out) -> bool:
    """Refuse to time anything on a backend that fails cstest."""
    reports = _cstest_all(names, stack_bytes)
    bad = [r for r in reports if not r.overall]
    for r in bad:
        print(f"cstest failed on {r.backend}: {', '.join(r.failed())}", file=sys.stderr)
    if bad:
        _emit(_reports_text(reports, fmt), out)
    return not bad


def cmd_csloop(args) -> int:
    from .bench import csloop
    from .sched import Runtime
    if not args.seconds >= 1:
        raise UsageError(f"--seconds must be at least 1, got {args.seconds:g}")
    names = _backends_for(args.backend)
    if not _gate(names, args.stack_bytes, args.format, args.out):
        return EXIT_VERIFY
    results = []
    for b in names:
        with Runtime(b, args.stack_bytes) as rt:
            results.append(csloop(rt, args.seconds))
    if args.format == "json":
        text = json.dumps({"csloop": [
            {"backend": r.backend, "switches_total": r.switches_total,
             "ns_per_switch": round(r.ns_per_switch, 3), "seconds": round(r.seconds, 3)}
            for r in results]}, indent=2) + "\n"
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["backend", "switches_total", "ns_per_switch", "seconds"])
        for r in results:
            w.writerow([r.backend, r.switches_total, f"{r.ns_per_switch:.3f}", f"{r.seconds:.3f}"])
        text = buf.getvalue()
    else:
        lines = ["Raw context switch times"]
        width = max(len(r.backend) for r in results)
        for r in results:
            lines.append(f"{r.backend:<{width}}  {r.ns_per_switch / 1000:.3f} µs"
                         f"  ({r.switches_total} switches in {r.seconds:.2f} s)")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def _columns(requested: str, names):
    # "all" shows every known backend, unavailable ones as n/a
    return list(_backends.BACKEND_NAMES) if requested == "all" else list(names)


def cmd_bench(args) -> int:
    from .bench import report_render, run_backends, timer_resolution_ns
    if args.reps < 1:
        raise UsageError(f"--reps must be at least 1, got {args.reps}")
    names = _backends_for(args.backend)
    if not _gate(names, args.stack_bytes, args.format, args.out):
        return EXIT_VERIFY
    records = run_backends(names, args.reps, default_stack_bytes=args.stack_bytes)
    meta = {"timer_resolution_ns": timer_resolution_ns(), "repetitions": args.reps}
    _emit(report_render(records, args.format, backends=_columns(args.backend, names),
                        meta=meta), args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    from .bench import records_from_text, report_render
    records = []
    for path in args.inputs:
        try:
            with open(path, encoding="utf-8") as fh:
                records += records_from_text(fh.read())
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read {path}: {exc}") from exc
    if args.backend == "all":
        cols = list(_backends.BACKEND_NAMES)
        cols += sorted({r.backend for r in records} - set(cols))
    else:
        if args.backend not in _backends.BACKEND_NAMES:
            raise UsageError(f"unknown backend {args.backend!r}")
        cols = [args.backend]
        records = [r for r in records if r.backend == args.backend]
    _emit(report_render(records, args.format, backends=cols), args.out)
    return EXIT_OK


COMMANDS = {
    "cstest": cmd_cstest,
    "vsuite": cmd_vsuite,
    "csloop": cmd_csloop,
    "bench": cmd_bench,
    "report": cmd_report,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.stack_bytes < MIN_STACK_BYTES:
            raise UsageError(f"--stack-bytes must be at least {MIN_STACK_BYTES}")
        return COMMANDS[args.subcommand](args)
    except (UsageError, UnknownBackend, SizeTooSmall, EmptyInput) as exc:
        print(f"fiberrt {args.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendUnavailable as exc:
        print(f"fiberrt {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_UNAVAILABLE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
