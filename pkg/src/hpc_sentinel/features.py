"""Per-window delta features, z-score normalization, datasets, and CV splits."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, DecodeError
from .events import EventSet, CounterSample, Profile, Trace, make_event_set

SCHEMA_VERSION = 1

# Degenerate (constant) features get their stddev floored instead of failing.
STD_FLOOR = 1e-12

# Offset applied to pids of the i-th trace when a dataset mixes several
# traces, so processes from different traces can never collide.
PID_STRIDE = 1_000_000


def window_delta(prev: CounterSample, cur: CounterSample, event_set: EventSet) -> np.ndarray:
    """Delta vector between two consecutive cumulative samples of one pid."""
    out = np.empty(len(event_set), dtype=np.float64)
    for j, (a, b) in enumerate(zip(prev.values, cur.values)):
        if b < a:
            raise DataError(
                f"pid {cur.pid}: cumulative counter {event_set.ids[j]} decreased ({a} -> {b}) at t={cur.t}"
            )
        out[j] = b - a
    return out


@dataclass(eq=False)
class WindowFeatures:
    """One per-window feature vector; label is absent during live classification."""

    pid: int
    window_index: int
    x: np.ndarray
    label: int | None = None


def windowize(samples: list[CounterSample], event_set: EventSet) -> list[WindowFeatures]:
    """Convert one pid's cumulative samples into N-1 raw delta windows."""
    out: list[WindowFeatures] = []
    for k in range(1, len(samples)):
        out.append(WindowFeatures(pid=samples[k].pid, window_index=k - 1, x=window_delta(samples[k - 1], samples[k], event_set)))
    return out


@dataclass(frozen=True)
class NormStats:
    """Per-feature mean and stddev fitted on training windows."""

    mean: np.ndarray
    std: np.ndarray

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, NormStats)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.std, other.std)
        )


def fit_norm(X: np.ndarray) -> NormStats:
    """Fit z-score statistics; constant features are floored, not fatal."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError(f"fit_norm needs at least 2 windows, got shape {X.shape}")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    if np.any(std < STD_FLOOR):
        warnings.warn("constant feature(s) detected; flooring stddev", stacklevel=2)
        std = np.maximum(std, STD_FLOOR)
    return NormStats(mean=mean, std=std)


def apply_norm(X: np.ndarray, stats: NormStats) -> np.ndarray:
    return (np.asarray(X, dtype=np.float64) - stats.mean) / stats.std


def invert_norm(Xn: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(Xn, dtype=np.float64) * stats.std + stats.mean


@dataclass
class TraceDataset:
    """Labeled window collection with its fitted normalization statistics.

    X holds raw deltas; models normalize through `norm` on their own.
    """

    X: np.ndarray
    y: np.ndarray
    pids: np.ndarray
    window_indices: np.ndarray
    norm: NormStats
    event_set: EventSet

    @property
    def profile(self) -> Profile:
        return self.event_set.profile

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    def normalized(self) -> np.ndarray:
        return apply_norm(self.X, self.norm)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, TraceDataset)
            and self.event_set == other.event_set
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.pids, other.pids)
            and np.array_equal(self.window_indices, other.window_indices)
            and self.norm == other.norm
        )


def build_dataset(traces: list[Trace], seed: int = 0, balance: bool = False) -> TraceDataset:
    """Windowize, label, deterministically shuffle, and fit normalization.

    Windows inherit their process's binary label (malicious iff the category
    is not benign). When multiple traces are mixed, pids of trace i are
    offset by i * PID_STRIDE to keep processes distinct.
    """
    if not traces:
        raise DataError("build_dataset needs at least one trace")
    profile = traces[0].event_set.profile
    if any(t.event_set.profile is not profile for t in traces):
        raise ConfigurationError("all traces in a dataset must share one profile")
    event_set = traces[0].event_set

    rows_x: list[np.ndarray] = []
    rows_meta: list[tuple[int, int, int]] = []
    for i, trace in enumerate(traces):
        by_pid: dict[int, list[CounterSample]] = {}
        for s in trace.samples:
            by_pid.setdefault(s.pid, []).append(s)
        for pid, samples in by_pid.items():
            label = int(trace.processes[pid].malicious)
            for w in windowize(samples, event_set):
                rows_x.append(w.x)
                rows_meta.append((i * PID_STRIDE + pid, w.window_index, label))

    if len(rows_x) < 2:
        raise DataError("dataset needs at least 2 windows")
    X = np.vstack(rows_x)
    pids = np.array([m[0] for m in rows_meta], dtype=np.int64)
    widx = np.array([m[1] for m in rows_meta], dtype=np.int64)
    y = np.array([m[2] for m in rows_meta], dtype=np.int8)

    rng = np.random.default_rng(seed)
    if balance:
        keep = _balanced_indices(y, rng)
        X, y, pids, widx = X[keep], y[keep], pids[keep], widx[keep]
    perm = rng.permutation(len(y))
    X, y, pids, widx = X[perm], y[perm], pids[perm], widx[perm]

    return TraceDataset(X=X, y=y, pids=pids, window_indices=widx, norm=fit_norm(X), event_set=event_set)


def _balanced_indices(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Undersample the majority class to the minority count."""
    idx0 = np.flatnonzero(y == 0)
    idx1 = np.flatnonzero(y == 1)
    m = min(len(idx0), len(idx1))
    if m == 0:
        return np.arange(len(y))
    keep = np.concatenate([rng.permutation(idx0)[:m], rng.permutation(idx1)[:m]])
    return np.sort(keep)


def stratified_kfold_indices(y: np.ndarray, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint, covering, class-stratified (train, validation) index pairs."""
    if k < 2:
        raise ConfigurationError(f"k must be >= 2, got {k}")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if 0 < len(idx) < k:
            raise ConfigurationError(f"class {cls} has {len(idx)} windows, fewer than k={k}")
        idx = rng.permutation(idx)
        for pos, i in enumerate(idx):
            buckets[pos % k].append(int(i))
    folds = []
    for f in range(k):
        val = np.sort(np.array(buckets[f], dtype=np.int64))
        train = np.sort(np.array([i for g in range(k) if g != f for i in buckets[g]], dtype=np.int64))
        folds.append((train, val))
    return folds


def kfold_split(dataset: TraceDataset, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified K-fold over the dataset's windows."""
    return stratified_kfold_indices(dataset.y, k, seed)


# --- JSONL dataset cache -----------------------------------------------------
#
# Header: {"schema_version": 1, "profile": ..., "events": [ids],
#          "norm": {"mean": [...], "std": [...]}}
# Rows:   {"pid": ..., "window_index": ..., "x": [floats], "label": 0|1}

_DS_HEADER_KEYS = {"schema_version", "profile", "events", "norm"}
_DS_ROW_KEYS = {"pid", "window_index", "x", "label"}


def dataset_to_jsonl(ds: TraceDataset) -> str:
    header = {
        "schema_version": SCHEMA_VERSION,
        "profile": ds.profile.value,
        "events": list(ds.event_set.ids),
        "norm": {"mean": [float(v) for v in ds.norm.mean], "std": [float(v) for v in ds.norm.std]},
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    for i in range(ds.n):
        row = {
            "pid": int(ds.pids[i]),
            "window_index": int(ds.window_indices[i]),
            "x": [float(v) for v in ds.X[i]],
            "label": int(ds.y[i]),
        }
        lines.append(json.dumps(row, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def dataset_from_jsonl(text: str) -> TraceDataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DecodeError("empty dataset document")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DecodeError(f"dataset line 1: invalid JSON ({e.msg})") from e
    if not isinstance(header, dict) or set(header) != _DS_HEADER_KEYS:
        raise DecodeError("dataset line 1: bad header fields")
    if header["schema_version"] != SCHEMA_VERSION:
        raise DecodeError(f"unsupported dataset schema_version {header['schema_version']!r}")
    try:
        event_set = make_event_set(header["profile"])
    except ValueError as e:
        raise DecodeError(str(e)) from e
    if tuple(header["events"]) != event_set.ids:
        raise DecodeError("dataset events do not match profile")
    norm = NormStats(
        mean=np.array(header["norm"]["mean"], dtype=np.float64),
        std=np.array(header["norm"]["std"], dtype=np.float64),
    )
    if norm.mean.shape != (len(event_set),) or norm.std.shape != (len(event_set),):
        raise DecodeError("norm stats have wrong dimensionality")

    X, y, pids, widx = [], [], [], []
    for lineno, ln in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(ln)
        except json.JSONDecodeError as e:
            raise DecodeError(f"dataset line {lineno}: invalid JSON ({e.msg})") from e
        if not isinstance(obj, dict) or set(obj) != _DS_ROW_KEYS:
            raise DecodeError(f"dataset line {lineno}: bad row fields")
        if len(obj["x"]) != len(event_set):
            raise DecodeError(f"dataset line {lineno}: x has wrong length")
        X.append(obj["x"])
        y.append(obj["label"])
        pids.append(obj["pid"])
        widx.append(obj["window_index"])
    if len(X) < 1:
        raise DecodeError("dataset has no rows")
    return TraceDataset(
        X=np.array(X, dtype=np.float64),
        y=np.array(y, dtype=np.int8),
        pids=np.array(pids, dtype=np.int64),
        window_indices=np.array(widx, dtype=np.int64),
        norm=norm,
        event_set=event_set,
    )


def write_dataset(ds: TraceDataset, path: str | Path) -> None:
    Path(path).write_text(dataset_to_jsonl(ds), encoding="utf-8")


def read_dataset(path: str | Path) -> TraceDataset:
    return dataset_from_jsonl(Path(path).read_text(encoding="utf-8"))
