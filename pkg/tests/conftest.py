"""Shared fixtures: hand-built toy traces and cached simulated datasets."""

from __future__ import annotations

import numpy as np
import pytest

from hpc_sentinel.events import CounterSample, Load, ProcessCategory, Trace, make_event_set
from hpc_sentinel.features import build_dataset
from hpc_sentinel.simgen import SimConfig, generate_trace


def make_toy_trace(window_ms: int = 100, n_samples: int = 3) -> Trace:
    """Two well-formed processes (one benign, one attack) with exact spacing."""
    es = make_event_set("spectre")
    samples = []
    for k in range(n_samples):
        for pid in (1, 2):
            values = tuple((k + 1) * 10 * (j + 1) * pid for j in range(len(es)))
            samples.append(CounterSample(pid=pid, t=k * window_ms, values=values))
    return Trace(
        event_set=es,
        load=Load.NL,
        window_ms=window_ms,
        processes={1: ProcessCategory.BENIGN, 2: ProcessCategory.SPECTRE_V1},
        samples=tuple(samples),
    )


def per_pid_mean_deltas(trace) -> dict[int, np.ndarray]:
    by_pid: dict[int, list] = {}
    for s in trace.samples:
        by_pid.setdefault(s.pid, []).append(s.values)
    return {pid: np.diff(np.array(vals), axis=0).mean(axis=0) for pid, vals in by_pid.items()}


@pytest.fixture(scope="session")
def spectre_nl_trace():
    return generate_trace(SimConfig(profile="spectre", load=Load.NL, duration_windows=400, seed=11))


@pytest.fixture(scope="session")
def spectre_nl_dataset(spectre_nl_trace):
    return build_dataset([spectre_nl_trace], seed=11)


@pytest.fixture(scope="session")
def meltdown_nl_trace():
    return generate_trace(SimConfig(profile="meltdown", load=Load.NL, duration_windows=400, seed=12))


@pytest.fixture(scope="session")
def meltdown_nl_dataset(meltdown_nl_trace):
    return build_dataset([meltdown_nl_trace], seed=12)
