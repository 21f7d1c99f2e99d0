"""Runtime detection pipeline: pull samples, window, classify, raise alerts.

The pipeline is a pure function of samples and the trained model: ground
truth labels in simulated sources are never consulted here. Verdicts are
emitted per window; process-level disposition is the alert policy's job,
and nothing is ever killed.
"""

from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .collector import CounterSource, LiveSimSource, ReplaySource, OsCounterSource
from .errors import ConfigurationError, DataError
from .events import CounterSample, read_trace
from .features import window_delta
from .models import ClassifierModel, load_model, predict_score
from .simgen import SimConfig


@dataclass(frozen=True)
class AlertPolicy:
    """first-hit alerts on any malicious window; m-of-n needs m of the last n."""

    kind: str = "m-of-n"
    m: int = 3
    n: int = 5

    def validate(self) -> None:
        if self.kind not in ("first-hit", "m-of-n"):
            raise ConfigurationError(f"unknown alert policy kind {self.kind!r}")
        if self.kind == "m-of-n" and not (1 <= self.m <= self.n):
            raise ConfigurationError(f"alert policy needs 1 <= m <= n, got m={self.m} n={self.n}")


FIRST_HIT = AlertPolicy(kind="first-hit", m=1, n=1)


def alert_policy_decide(history: list[int], policy: AlertPolicy) -> bool:
    """Decide on the last-n window labels (1 = malicious)."""
    policy.validate()
    if policy.kind == "first-hit":
        return any(history)
    recent = history[-policy.n :]
    return sum(recent) >= policy.m


@dataclass(frozen=True)
class DetectionVerdict:
    pid: int
    window_index: int
    t: int
    score: float
    label: str  # "benign" | "malicious"


@dataclass
class _PidState:
    prev: CounterSample
    windows: int = 0
    history: list[int] = field(default_factory=list)
    recent: deque = field(default_factory=deque)
    first_alert_latency: int | None = None


@dataclass
class DetectorResult:
    verdicts: list[DetectionVerdict]
    summary: dict
    error: str | None = None

    @property
    def alerts(self) -> dict[int, int]:
        return self.summary["alerts"]


def _score_window(model: ClassifierModel, state: _PidState, delta: np.ndarray) -> tuple[float, int]:
    if model.kind != "cnn":
        return predict_score(model, delta)
    w = model.params.stack_windows
    k = model.params.kernel.shape[1]
    state.recent.append(delta)
    while len(state.recent) > w:
        state.recent.popleft()
    stack = list(state.recent)
    while len(stack) < k:  # warm-up: replicate the oldest delta
        stack.insert(0, stack[0])
    return predict_score(model, np.stack(stack))


def run_pipeline(
    model: ClassifierModel,
    source: CounterSource,
    policy: AlertPolicy = AlertPolicy(),
    sink=None,
    max_windows: int | None = None,
) -> DetectorResult:
    """Drive a source to exhaustion, emitting one verdict per complete window.

    `sink` is called with each DetectionVerdict as it is produced. A source
    failure mid-run shuts down cleanly and returns the partial summary.
    """
    policy.validate()
    if source.event_set != model.event_set:
        raise ConfigurationError(
            f"event-set mismatch: model is {model.event_set.profile.value} "
            f"{list(model.event_set.ids)}, source is {source.event_set.profile.value} "
            f"{list(source.event_set.ids)}"
        )
    states: dict[int, _PidState] = {}
    verdicts: list[DetectionVerdict] = []
    alerts: dict[int, int] = {}
    compute_s = 0.0
    windows_total = 0
    error: str | None = None

    while True:
        if max_windows is not None and windows_total >= max_windows:
            break
        try:
            batch = source.next_batch()
        except Exception as e:  # clean shutdown with partial summary
            error = f"source failure: {e}"
            break
        if not batch:
            break
        for sample in batch:
            state = states.get(sample.pid)
            if state is None:
                states[sample.pid] = _PidState(prev=sample)
                continue
            t0 = time.perf_counter()
            delta = window_delta(state.prev, sample, model.event_set)
            score, label = _score_window(model, state, delta)
            compute_s += time.perf_counter() - t0

            state.prev = sample
            state.windows += 1
            state.history.append(label)
            windows_total += 1
            verdict = DetectionVerdict(
                pid=sample.pid,
                window_index=state.windows - 1,
                t=sample.t,
                score=score,
                label="malicious" if label else "benign",
            )
            verdicts.append(verdict)
            if sink is not None:
                sink(verdict)
            if state.first_alert_latency is None and alert_policy_decide(state.history, policy):
                state.first_alert_latency = state.windows
                alerts[sample.pid] = state.windows

    budget_s = windows_total * source.window_ms / 1000.0
    summary = {
        "windows_total": windows_total,
        "verdicts_malicious": sum(1 for v in verdicts if v.label == "malicious"),
        "alerts": alerts,
        "pids": {
            pid: {
                "windows": st.windows,
                "malicious": int(sum(st.history)),
                "alerted": st.first_alert_latency is not None,
                "first_alert_latency": st.first_alert_latency,
            }
            for pid, st in states.items()
        },
        "policy": {"kind": policy.kind, "m": policy.m, "n": policy.n},
        "overhead_pct": 100.0 * compute_s / budget_s if budget_s > 0 else 0.0,
        "per_window_compute_ms": 1000.0 * compute_s / windows_total if windows_total else 0.0,
        "error": error,
    }
    return DetectorResult(verdicts=verdicts, summary=summary, error=error)


@dataclass(frozen=True)
class OverheadReport:
    overhead_pct: float
    per_window_ms: float
    windows: int


def measure_overhead(model: ClassifierModel, source: CounterSource, max_windows: int | None = None) -> OverheadReport:
    """Pipeline compute time (featurize + classify) against the window budget."""
    result = run_pipeline(model, source, FIRST_HIT, max_windows=max_windows)
    return OverheadReport(
        overhead_pct=result.summary["overhead_pct"],
        per_window_ms=result.summary["per_window_compute_ms"],
        windows=result.summary["windows_total"],
    )


# --- config-driven entry point ------------------------------------------------


@dataclass(frozen=True)
class SourceSpec:
    kind: str  # "replay" | "sim" | "os"
    trace_path: str | None = None
    sim: SimConfig | None = None
    pids: tuple[int, ...] = ()
    speed: float | str = "instant"
    counter_map: str | None = None


@dataclass(frozen=True)
class DetectorConfig:
    """Everything needed to run detection: model, source, granularity, policy."""

    model_path: str
    source: SourceSpec
    granularity: str = "coarse"  # coarse samples at 100 ms; fine goes down to 1 ms
    window_ms: int = 100
    policy: AlertPolicy = AlertPolicy()
    sink_path: str | None = None

    def validate(self) -> None:
        if self.granularity not in ("fine", "coarse"):
            raise ConfigurationError(f"granularity must be fine|coarse, got {self.granularity!r}")
        if self.window_ms < 1:
            raise ConfigurationError(f"window_ms must be >= 1, got {self.window_ms}")
        self.policy.validate()
        if self.source.kind not in ("replay", "sim", "os"):
            raise ConfigurationError(f"unknown source kind {self.source.kind!r}")


def _build_source(config: DetectorConfig, event_set) -> CounterSource:
    spec = config.source
    if spec.kind == "replay":
        return ReplaySource(read_trace(spec.trace_path), spec.speed)
    if spec.kind == "sim":
        return LiveSimSource(spec.sim)
    return OsCounterSource(event_set, set(spec.pids), config.window_ms, spec.counter_map)


def run_detector(config: DetectorConfig) -> DetectorResult:
    """Load the model, build the source, and run the pipeline per config."""
    config.validate()
    model = load_model(config.model_path)
    source = _build_source(config, model.event_set)
    sink = None
    fh = None
    if config.sink_path:
        fh = open(config.sink_path, "w", encoding="utf-8")

        def sink(v: DetectionVerdict) -> None:
            fh.write(verdict_to_json(v) + "\n")

    try:
        return run_pipeline(model, source, config.policy, sink=sink)
    finally:
        if fh is not None:
            fh.close()
        source.close()


def verdict_to_json(v: DetectionVerdict) -> str:
    return json.dumps(
        {"pid": v.pid, "window_index": v.window_index, "t": v.t, "score": v.score, "label": v.label},
        separators=(",", ":"),
    )
