"""Render benchmark records as a text table, CSV or JSON, and read them back."""

from __future__ import annotations

import csv
import io
import json

from ..ctxcore.backends import BACKEND_NAMES
from ..errors import EmptyInput
from .harness import BenchmarkRecord, BenchmarkSpec, TimingSample
from .kernels import KERNEL_CLASS, KERNEL_NAMES

FORMATS = ("table", "csv", "json")
CSV_FIELDS = ("kernel", "class", "backend", "reps", "inner_iterations", "median_ns",
              "switches_per_op")
NA = "n/a"
# rules in the text table separate the primitive families
GROUP_STARTS = frozenset({"semaphore P only", "asynchronous send/receive", "rendezvous"})
NET_NOTE = ("per-op medians are net of the loop control overhead, "
            "which is measured as its own row and subtracted from every other row")


def _row(rec) -> dict:
    return {
        "kernel": rec.name,
        "class": rec.op_class,
        "backend": rec.backend,
        "reps": len(rec.samples) or rec.spec.repetitions,
        "inner_iterations": rec.inner_iterations,
        "median_ns": round(rec.median_per_op, 3),
        "switches_per_op": rec.switch_count_per_op,
    }


def _columns(records, backends):
    present = []
    for rec in records:
        if rec.backend not in present:
            present.append(rec.backend)
    if backends is None:
        # known backends first in their canonical order, then anything else
        backends = [b for b in BACKEND_NAMES if b in present]
        backends += [b for b in present if b not in backends]
    return list(backends)


def _header(records, meta):
    meta = dict(meta or {})
    lines = ["Run time system performance (median per operation)"]
    if "timer_resolution_ns" in meta:
        lines.append(f"timer resolution: {meta.pop('timer_resolution_ns')} ns")
    overhead = {}
    for rec in records:
        overhead.setdefault(rec.backend, rec.loop_overhead)
    if overhead:
        lines.append("loop overhead: " + ", ".join(
            f"{b} " + (NA if ns is None else f"{ns / 1000:.3f} µs")
            for b, ns in overhead.items()))
    for key, value in meta.items():
        lines.append(f"{key}: {value}")
    lines.append(NET_NOTE)
    return lines


def _table(records, backends, meta):
    cols = _columns(records, backends)
    cell = {(r.name, r.backend): f"{r.median_per_op / 1000:.3f} µs" for r in records}
    head = ["Test description"] + cols
    body = [[name] + [cell.get((name, b), NA) for b in cols] for name in KERNEL_NAMES]
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]

    def fmt(row):
        first = row[0].ljust(widths[0])
        rest = (v.rjust(w) for v, w in zip(row[1:], widths[1:]))
        return " | ".join([first, *rest]).rstrip()

    rule = "-+-".join("-" * w for w in widths)
    out = _header(records, meta) + ["", fmt(head), rule]
    for row in body:
        if row[0] in GROUP_STARTS:
            out.append(rule)
        out.append(fmt(row))
    return "\n".join(out) + "\n"


def _csv(records):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for rec in records:
        w.writerow(_row(rec))
    return buf.getvalue()


def _json(records, meta):
    doc = {
        "meta": dict(meta or {}),
        "note": NET_NOTE,
        "records": [
            {**_row(rec),
             "loop_overhead_ns": (None if rec.loop_overhead is None
                                  else round(rec.loop_overhead, 3)),
             "samples": [{"elapsed_ns": s.elapsed_ns, "iterations": s.iterations}
                         for s in rec.samples]}
            for rec in records
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def report_render(records, format: str = "table", *, backends=None, meta=None) -> str:
    """Render ``records``; ``backends`` fixes the table columns (missing ones show n/a)."""
    records = list(records)
    if not records:
        raise EmptyInput("no benchmark records to report")
    if format == "table":
        return _table(records, backends, meta)
    if format == "csv":
        return _csv(records)
    if format == "json":
        return _json(records, meta)
    raise ValueError(f"unknown report format {format!r}; expected one of {FORMATS}")


def _record(row, samples=()) -> BenchmarkRecord:
    name = row["kernel"]
    op_class = int(row["class"])
    if KERNEL_CLASS.get(name, op_class) != op_class:
        raise ValueError(f"{name!r} is class {KERNEL_CLASS[name]}, not {op_class}")
    reps = int(row["reps"])
    inner = int(row["inner_iterations"])
    median = float(row["median_ns"])
    overhead = row.get("loop_overhead_ns")  # absent from CSV
    spec = BenchmarkSpec(name, op_class, inner, reps)
    samples = [TimingSample(int(s["elapsed_ns"]), int(s["iterations"])) for s in samples]
    return BenchmarkRecord(spec, row["backend"], samples, median_per_op=median,
                           raw_median_per_op=median,
                           loop_overhead=None if overhead is None else float(overhead),
                           switch_count_per_op=int(row["switches_per_op"]),
                           inner_iterations=inner)


def records_from_csv(text: str) -> list[BenchmarkRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames!r}")
    return [_record(row) for row in reader]


def records_from_json(text: str) -> list[BenchmarkRecord]:
    doc = json.loads(text)
    return [_record(r, r.get("samples", ())) for r in doc["records"]]


def records_from_text(text: str) -> list[BenchmarkRecord]:
    """Parse CSV or JSON, whichever ``text`` looks like."""
    if text.lstrip().startswith("{"):
        return records_from_json(text)
    return records_from_csv(text)


def summary_fields(records) -> list[dict]:
    """The fields a CSV round trip preserves."""
    return [_row(r) for r in records]
