"""Counter sample sources: trace replay, live simulation, and OS counters.

All sources expose the same single-consumer pull interface so the detector
pipeline runs identically on replayed files, streamed simulator output, or
(where available) real per-process OS performance counters. Ground-truth
labels travel only in ProcessEvent metadata of simulated/replayed sources;
samples themselves never carry labels.
"""

from __future__ import annotations

import json
import os
import platform
import struct
import sys
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

from .errors import CapabilityError, ConfigurationError, PrivilegeError
from .events import CounterSample, EventSet, ProcessCategory, Trace, validate_trace
from .simgen import SimConfig, generate_trace


@dataclass(frozen=True)
class ProcessEvent:
    """Process lifecycle notification; label present only in simulated sources."""

    pid: int
    kind: str  # "started" | "stopped"
    t: int
    label: ProcessCategory | None = None


class CounterSource(ABC):
    """Single-consumer pull source of per-process cumulative counter samples."""

    event_set: EventSet
    window_ms: int

    @abstractmethod
    def next_batch(self) -> list[CounterSample]:
        """Samples for the next window tick; empty list when exhausted."""

    @abstractmethod
    def active_pids(self) -> set[int]:
        """Pids currently tracked (subscribed, started, not yet stopped)."""

    @abstractmethod
    def drain_events(self) -> list[ProcessEvent]:
        """Process start/stop events observed since the last call."""

    def subscribe(self, pids: set[int] | None) -> None:
        """Restrict emission to the given pids; None means all."""
        self._subscribed = set(pids) if pids is not None else None

    def _want(self, pid: int) -> bool:
        sub = getattr(self, "_subscribed", None)
        return sub is None or pid in sub

    def close(self) -> None:
        pass


class ReplaySource(CounterSource):
    """Replays a trace's samples in timestamp order, one batch per window tick."""

    def __init__(self, trace: Trace, speed: float | str = "instant"):
        violations = validate_trace(trace)
        if violations:
            raise ConfigurationError(f"trace is invalid: {violations[0].message} (+{len(violations) - 1} more)")
        if speed != "instant" and (not isinstance(speed, (int, float)) or speed <= 0):
            raise ConfigurationError(f"speed must be 'instant' or a positive multiplier, got {speed!r}")
        self.event_set = trace.event_set
        self.window_ms = trace.window_ms
        self._trace = trace
        self._speed = speed
        self._subscribed: set[int] | None = None

        self._ticks: list[list[CounterSample]] = []
        for s in trace.samples:
            if self._ticks and self._ticks[-1][0].t == s.t:
                self._ticks[-1].append(s)
            else:
                self._ticks.append([s])
        self._remaining: dict[int, int] = {}
        for s in trace.samples:
            self._remaining[s.pid] = self._remaining.get(s.pid, 0) + 1
        self._labels = dict(trace.processes)
        self._cursor = 0
        self._started: set[int] = set()
        self._pending_events: list[ProcessEvent] = []

    def next_batch(self) -> list[CounterSample]:
        if self._cursor >= len(self._ticks):
            return []
        if self._speed != "instant":
            time.sleep(self.window_ms / 1000.0 / float(self._speed))
        tick = self._ticks[self._cursor]
        self._cursor += 1
        out = []
        for s in tick:
            if not self._want(s.pid):
                continue
            if s.pid not in self._started:
                self._started.add(s.pid)
                self._pending_events.append(ProcessEvent(s.pid, "started", s.t, self._labels.get(s.pid)))
            out.append(s)
            self._remaining[s.pid] -= 1
            if self._remaining[s.pid] == 0:
                self._pending_events.append(ProcessEvent(s.pid, "stopped", s.t, self._labels.get(s.pid)))
        return out

    def active_pids(self) -> set[int]:
        return {pid for pid, left in self._remaining.items() if left > 0 and self._want(pid)}

    def drain_events(self) -> list[ProcessEvent]:
        out, self._pending_events = self._pending_events, []
        return out


class LiveSimSource(ReplaySource):
    """Streams a simulated workload window by window; content-identical to
    replaying generate_trace(config) instantly."""

    def __init__(self, config: SimConfig):
        config.validate()
        super().__init__(generate_trace(config), speed="instant")
        self._stopped = False

    def stop(self) -> None:
        self._stopped = True

    def next_batch(self) -> list[CounterSample]:
        if self._stopped:
            return []
        return super().next_batch()

    def active_pids(self) -> set[int]:
        if self._stopped:
            return set()
        return super().active_pids()


# --- OS counter adapter (optional capability) --------------------------------

COUNTER_MAP_ENV = "HPC_SENTINEL_COUNTER_MAP"

DEFAULT_COUNTER_MAP = {
    "L3_TCM": "cache-misses",
    "L3_TCA": "cache-references",
    "BR_INS": "branch-instructions",
    "BR_MSP": "branch-misses",
    "TOT_INS": "instructions",
    "PAGE_FAULTS": "page-faults",
}

# (perf event type, config) pairs for the supported platform counter names.
_PERF_EVENT_CODES = {
    "cache-misses": (0, 3),
    "cache-references": (0, 2),
    "branch-instructions": (0, 4),
    "branch-misses": (0, 5),
    "instructions": (0, 1),
    "page-faults": (1, 2),
}

_SYSCALL_PERF_EVENT_OPEN = {"x86_64": 298, "aarch64": 241}


def resolve_counter_map(event_set: EventSet, mapping_path: str | Path | None = None) -> dict[str, str]:
    """Event-id -> platform counter name.

    A mapping file replaces the built-in defaults entirely; the
    HPC_SENTINEL_COUNTER_MAP env var overrides the explicit path.
    """
    mapping = dict(DEFAULT_COUNTER_MAP)
    path = os.environ.get(COUNTER_MAP_ENV) or mapping_path
    if path:
        try:
            mapping = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"cannot read counter map {path}: {e}") from e
        if not isinstance(mapping, dict):
            raise ConfigurationError(f"counter map {path} must be a JSON object")
    missing = [eid for eid in event_set.ids if eid not in mapping]
    if missing:
        raise ConfigurationError(f"counter map missing events: {missing}")
    unknown = [mapping[eid] for eid in event_set.ids if mapping[eid] not in _PERF_EVENT_CODES]
    if unknown:
        raise ConfigurationError(f"unsupported platform counter names: {unknown}")
    return {eid: mapping[eid] for eid in event_set.ids}


def _perf_event_open(attr: bytes, pid: int) -> int:
    import ctypes

    nr = _SYSCALL_PERF_EVENT_OPEN.get(platform.machine())
    if nr is None:
        raise CapabilityError(f"perf_event_open syscall number unknown for {platform.machine()}")
    libc = ctypes.CDLL(None, use_errno=True)
    buf = ctypes.create_string_buffer(attr, len(attr))
    fd = libc.syscall(nr, buf, pid, -1, -1, 0)
    if fd < 0:
        err = ctypes.get_errno()
        if err in (1, 13):  # EPERM, EACCES
            raise PrivilegeError(f"perf_event_open denied (errno {err}); check perf_event_paranoid")
        raise ConfigurationError(f"perf_event_open failed with errno {err}")
    return fd


def _pack_attr(ev_type: int, config: int) -> bytes:
    # perf_event_attr v0: type, size, config, sample_period, sample_type,
    # read_format, flags, then zero padding to 64 bytes.
    return struct.pack("<IIQQQQQ", ev_type, 64, config, 0, 0, 0, 0) + b"\x00" * 8


class OsCounterSource(CounterSource):
    """Per-process OS performance counters, sampled every window_ms.

    Optional capability: raises CapabilityError on platforms without
    per-process counters so callers can fall back to replay sources. New
    processes are not discovered automatically; the pid set is fixed at
    construction (a 100 ms discovery poll would sit here).
    """

    def __init__(
        self,
        event_set: EventSet,
        pids: set[int],
        window_ms: int = 100,
        mapping_path: str | Path | None = None,
    ):
        if sys.platform != "linux":
            raise CapabilityError(f"per-process performance counters unsupported on {sys.platform}")
        if not Path("/proc/sys/kernel/perf_event_paranoid").exists():
            raise CapabilityError("kernel lacks perf_event support")
        if window_ms < 1:
            raise ConfigurationError(f"window_ms must be >= 1, got {window_ms}")
        self.event_set = event_set
        self.window_ms = window_ms
        self._subscribed: set[int] | None = None
        mapping = resolve_counter_map(event_set, mapping_path)

        self._fds: dict[int, list[int]] = {}
        self._pending_events: list[ProcessEvent] = []
        try:
            for pid in sorted(pids):
                fds = []
                for eid in event_set.ids:
                    ev_type, config = _PERF_EVENT_CODES[mapping[eid]]
                    fds.append(_perf_event_open(_pack_attr(ev_type, config), pid))
                self._fds[pid] = fds
                self._pending_events.append(ProcessEvent(pid, "started", 0, None))
        except Exception:
            self.close()
            raise
        self._tick = 0
        self._t0 = time.monotonic()

    def next_batch(self) -> list[CounterSample]:
        if not self._fds:
            return []
        self._tick += 1
        deadline = self._t0 + self._tick * self.window_ms / 1000.0
        delay = deadline - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        t = (self._tick - 1) * self.window_ms
        out = []
        for pid in sorted(self._fds):
            if not self._want(pid):
                continue
            try:
                values = tuple(struct.unpack("<Q", os.read(fd, 8))[0] for fd in self._fds[pid])
            except OSError:
                self._drop(pid, t)
                continue
            out.append(CounterSample(pid=pid, t=t, values=values))
        return out

    def _drop(self, pid: int, t: int) -> None:
        for fd in self._fds.pop(pid, []):
            try:
                os.close(fd)
            except OSError:
                pass
        self._pending_events.append(ProcessEvent(pid, "stopped", t, None))

    def active_pids(self) -> set[int]:
        return {pid for pid in self._fds if self._want(pid)}

    def drain_events(self) -> list[ProcessEvent]:
        out, self._pending_events = self._pending_events, []
        return out

    def close(self) -> None:
        for pid in list(self._fds):
            for fd in self._fds.pop(pid):
                try:
                    os.close(fd)
                except OSError:
                    pass


def replay_source(trace: Trace, speed: float | str = "instant") -> ReplaySource:
    return ReplaySource(trace, speed)


def live_sim_source(config: SimConfig) -> LiveSimSource:
    return LiveSimSource(config)


def os_source(
    event_set: EventSet,
    pids: set[int],
    window_ms: int = 100,
    mapping_path: str | Path | None = None,
) -> OsCounterSource:
    return OsCounterSource(event_set, pids, window_ms, mapping_path)
