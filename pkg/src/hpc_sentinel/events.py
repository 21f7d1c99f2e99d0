"""Event schema, per-process counter samples, and the JSONL trace format.

Counters are stored cumulative per process, exactly as OS counter facilities
report them; downstream windowing converts them to per-window deltas.
Timestamps are integer milliseconds relative to trace start, and pids are
opaque integers. All types are immutable value data once constructed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import DecodeError

SCHEMA_VERSION = 1


class EventKind(str, Enum):
    HARDWARE = "hardware"
    SOFTWARE = "software"


class Profile(str, Enum):
    SPECTRE = "spectre"
    MELTDOWN = "meltdown"


class Load(str, Enum):
    NL = "NL"
    AL = "AL"
    FL = "FL"


class ProcessCategory(str, Enum):
    BENIGN = "benign"
    SPECTRE_V1 = "spectre_v1"
    SPECTRE_V2 = "spectre_v2"
    MELTDOWN = "meltdown"

    @property
    def malicious(self) -> bool:
        return self is not ProcessCategory.BENIGN


@dataclass(frozen=True)
class EventDescriptor:
    """One monitored counter; PAGE_FAULTS is OS-maintained, the rest are CPU events."""

    id: str
    kind: EventKind
    scope: str = "per-process"


EVENT_REGISTRY: dict[str, EventDescriptor] = {
    d.id: d
    for d in (
        EventDescriptor("L3_TCM", EventKind.HARDWARE),
        EventDescriptor("L3_TCA", EventKind.HARDWARE),
        EventDescriptor("BR_INS", EventKind.HARDWARE),
        EventDescriptor("BR_MSP", EventKind.HARDWARE),
        EventDescriptor("TOT_INS", EventKind.HARDWARE),
        EventDescriptor("PAGE_FAULTS", EventKind.SOFTWARE),
    )
}

SPECTRE_EVENT_IDS: tuple[str, ...] = ("L3_TCM", "L3_TCA", "BR_INS", "BR_MSP", "TOT_INS")
MELTDOWN_EVENT_IDS: tuple[str, ...] = ("L3_TCM", "L3_TCA", "PAGE_FAULTS", "TOT_INS")


@dataclass(frozen=True)
class EventSet:
    """Ordered set of monitored events for one detection profile.

    The ordering is fixed per profile and stable across serialization.
    """

    profile: Profile
    events: tuple[EventDescriptor, ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.events)

    def index(self, event_id: str) -> int:
        return self.ids.index(event_id)

    def __len__(self) -> int:
        return len(self.events)


def make_event_set(profile: Profile | str) -> EventSet:
    """Return the canonical ordered event set for a detection profile."""
    profile = Profile(profile)
    ids = SPECTRE_EVENT_IDS if profile is Profile.SPECTRE else MELTDOWN_EVENT_IDS
    return EventSet(profile=profile, events=tuple(EVENT_REGISTRY[i] for i in ids))


@dataclass(frozen=True)
class CounterSample:
    """One timestamped reading of all monitored events for one process.

    values are cumulative, non-negative counts in EventSet order.
    """

    pid: int
    t: int
    values: tuple[int, ...]


@dataclass(frozen=True, eq=True)
class Trace:
    """A labeled, time-ordered collection of counter samples."""

    event_set: EventSet
    load: Load
    window_ms: int
    processes: dict[int, ProcessCategory]
    samples: tuple[CounterSample, ...] = field(default=())


@dataclass(frozen=True)
class Violation:
    """One trace-invariant violation; a valid trace produces none."""

    code: str
    message: str
    pid: int | None = None
    t: int | None = None
    field: str | None = None


def validate_trace(trace: Trace) -> list[Violation]:
    """Check every trace invariant; violations are data, not failures."""
    out: list[Violation] = []
    d = len(trace.event_set)
    ids = trace.event_set.ids

    if trace.window_ms < 1:
        out.append(Violation("bad_window_ms", f"window_ms must be >= 1, got {trace.window_ms}", field="window_ms"))

    last_global_t: int | None = None
    last_by_pid: dict[int, CounterSample] = {}
    for s in trace.samples:
        if s.pid not in trace.processes:
            out.append(Violation("unknown_pid", f"sample pid {s.pid} missing from process map", pid=s.pid, t=s.t))
        if last_global_t is not None and s.t < last_global_t:
            out.append(Violation("unordered_samples", f"global timestamp order broken at t={s.t}", pid=s.pid, t=s.t))
        last_global_t = s.t

        if len(s.values) != d:
            out.append(
                Violation(
                    "bad_value_count",
                    f"pid {s.pid} at t={s.t}: {len(s.values)} values for {d} events",
                    pid=s.pid,
                    t=s.t,
                )
            )
            continue
        for j, v in enumerate(s.values):
            if v < 0:
                out.append(
                    Violation("negative_value", f"pid {s.pid} event {ids[j]} negative at t={s.t}", pid=s.pid, t=s.t, field=ids[j])
                )

        prev = last_by_pid.get(s.pid)
        if prev is not None:
            if s.t <= prev.t:
                out.append(
                    Violation("non_monotonic_time", f"pid {s.pid}: t={s.t} not after t={prev.t}", pid=s.pid, t=s.t)
                )
            elif s.t - prev.t != trace.window_ms:
                out.append(
                    Violation(
                        "bad_window_spacing",
                        f"pid {s.pid}: gap {s.t - prev.t} ms != window_ms {trace.window_ms}",
                        pid=s.pid,
                        t=s.t,
                    )
                )
            for j, (a, b) in enumerate(zip(prev.values, s.values)):
                if b < a:
                    out.append(
                        Violation(
                            "decreasing_counter",
                            f"pid {s.pid} event {ids[j]}: cumulative count fell {a} -> {b} at t={s.t}",
                            pid=s.pid,
                            t=s.t,
                            field=ids[j],
                        )
                    )
        last_by_pid[s.pid] = s
    return out


# --- JSONL trace format ----------------------------------------------------
#
# Line 1 is a header object; every following line is one sample:
#   {"schema_version": 1, "profile": ..., "load": ..., "window_ms": ...,
#    "events": [ids], "processes": {"<pid>": "<category>"}}
#   {"pid": ..., "t": ..., "values": [ints]}
# Unknown fields are rejected.

_HEADER_KEYS = {"schema_version", "profile", "load", "window_ms", "events", "processes"}
_SAMPLE_KEYS = {"pid", "t", "values"}


def trace_to_jsonl(trace: Trace) -> str:
    header = {
        "schema_version": SCHEMA_VERSION,
        "profile": trace.event_set.profile.value,
        "load": trace.load.value,
        "window_ms": trace.window_ms,
        "events": list(trace.event_set.ids),
        "processes": {str(pid): cat.value for pid, cat in sorted(trace.processes.items())},
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    for s in trace.samples:
        lines.append(json.dumps({"pid": s.pid, "t": s.t, "values": list(s.values)}, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def _decode_fail(lineno: int, why: str) -> DecodeError:
    return DecodeError(f"trace line {lineno}: {why}")


def trace_from_jsonl(text: str) -> Trace:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DecodeError("empty trace document")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise _decode_fail(1, f"invalid JSON ({e.msg})") from e
    if not isinstance(header, dict):
        raise _decode_fail(1, "header must be an object")
    if set(header) != _HEADER_KEYS:
        unknown = sorted(set(header) - _HEADER_KEYS)
        missing = sorted(_HEADER_KEYS - set(header))
        raise _decode_fail(1, f"unknown fields {unknown}, missing fields {missing}")
    if header["schema_version"] != SCHEMA_VERSION:
        raise _decode_fail(1, f"unsupported schema_version {header['schema_version']!r}")
    try:
        event_set = make_event_set(header["profile"])
        load = Load(header["load"])
    except ValueError as e:
        raise _decode_fail(1, str(e)) from e
    if tuple(header["events"]) != event_set.ids:
        raise _decode_fail(1, f"events {header['events']} do not match the {event_set.profile.value} profile")
    window_ms = header["window_ms"]
    if not isinstance(window_ms, int) or window_ms < 1:
        raise _decode_fail(1, f"window_ms must be a positive integer, got {window_ms!r}")
    try:
        processes = {int(pid): ProcessCategory(cat) for pid, cat in header["processes"].items()}
    except (ValueError, AttributeError) as e:
        raise _decode_fail(1, f"bad process map ({e})") from e

    samples: list[CounterSample] = []
    d = len(event_set)
    for lineno, ln in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(ln)
        except json.JSONDecodeError as e:
            raise _decode_fail(lineno, f"invalid JSON ({e.msg})") from e
        if not isinstance(obj, dict) or set(obj) != _SAMPLE_KEYS:
            raise _decode_fail(lineno, f"sample fields must be exactly {sorted(_SAMPLE_KEYS)}")
        pid, t, values = obj["pid"], obj["t"], obj["values"]
        if not isinstance(pid, int) or not isinstance(t, int):
            raise _decode_fail(lineno, "pid and t must be integers")
        if not isinstance(values, list) or len(values) != d or not all(isinstance(v, int) for v in values):
            raise _decode_fail(lineno, f"values must be a list of {d} integers")
        samples.append(CounterSample(pid=pid, t=t, values=tuple(values)))

    return Trace(event_set=event_set, load=load, window_ms=window_ms, processes=processes, samples=tuple(samples))


def write_trace(trace: Trace, path: str | Path) -> None:
    Path(path).write_text(trace_to_jsonl(trace), encoding="utf-8")


def read_trace(path: str | Path) -> Trace:
    return trace_from_jsonl(Path(path).read_text(encoding="utf-8"))
