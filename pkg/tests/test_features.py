"""Windowing, normalization, dataset assembly, and stratified K-fold splits."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpc_sentinel.errors import ConfigurationError, DataError
from hpc_sentinel.events import CounterSample, Load, ProcessCategory, make_event_set
from hpc_sentinel.features import (
    NormStats,
    apply_norm,
    build_dataset,
    dataset_from_jsonl,
    dataset_to_jsonl,
    fit_norm,
    invert_norm,
    kfold_split,
    read_dataset,
    windowize,
    write_dataset,
)
from hpc_sentinel.simgen import SimConfig, generate_trace

from conftest import make_toy_trace

ES = make_event_set("spectre")


def _samples_from_column(cumulative: list[int], pid: int = 1) -> list[CounterSample]:
    """Samples whose first event follows `cumulative`; others scale by column."""
    out = []
    for k, v in enumerate(cumulative):
        out.append(CounterSample(pid=pid, t=k * 100, values=tuple(v * (j + 1) for j in range(len(ES)))))
    return out


class TestWindowize:
    def test_simple_deltas(self):
        windows = windowize(_samples_from_column([0, 10, 25]), ES)
        assert [w.x[0] for w in windows] == [10.0, 15.0]
        assert [w.window_index for w in windows] == [0, 1]

    def test_single_sample_empty(self):
        assert windowize(_samples_from_column([5]), ES) == []

    def test_telescoping_identity(self):
        cumulative = [0, 3, 17, 17, 120, 121]
        windows = windowize(_samples_from_column(cumulative), ES)
        assert sum(w.x[0] for w in windows) == cumulative[-1] - cumulative[0]

    @settings(max_examples=60, deadline=None)
    @given(deltas=st.lists(st.integers(0, 10_000), min_size=1, max_size=40))
    def test_telescoping_property(self, deltas):
        cumulative = np.concatenate([[0], np.cumsum(deltas)]).tolist()
        windows = windowize(_samples_from_column(cumulative), ES)
        for j in range(len(ES)):
            total = sum(w.x[j] for w in windows)
            assert total == (cumulative[-1] - cumulative[0]) * (j + 1)

    def test_non_monotonic_names_pid_and_event(self):
        samples = _samples_from_column([0, 10, 25], pid=42)
        values = list(samples[2].values)
        values[2] = 0
        samples[2] = dataclasses.replace(samples[2], values=tuple(values))
        with pytest.raises(DataError, match=r"pid 42.*BR_INS"):
            windowize(samples, ES)


class TestNormalization:
    def test_two_point_zscore(self):
        stats = fit_norm(np.array([[0.0], [2.0]]))
        normalized = apply_norm(np.array([[0.0], [2.0]]), stats)
        assert np.allclose(normalized, [[-1.0], [1.0]])

    def test_apply_known_stats(self):
        stats = NormStats(mean=np.array([5.0]), std=np.array([2.0]))
        assert apply_norm(np.array([[9.0]]), stats)[0, 0] == 2.0

    def test_train_set_becomes_standard(self, spectre_nl_dataset):
        Xn = spectre_nl_dataset.normalized()
        assert np.all(np.abs(Xn.mean(axis=0)) <= 1e-9)
        assert np.all(np.abs(Xn.var(axis=0) - 1.0) <= 1e-6)

    def test_constant_feature_floored_with_warning(self):
        X = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
        with pytest.warns(UserWarning, match="constant"):
            stats = fit_norm(X)
        assert stats.std[1] >= 1e-12

    def test_invertibility(self, spectre_nl_dataset):
        ds = spectre_nl_dataset
        back = invert_norm(apply_norm(ds.X, ds.norm), ds.norm)
        assert np.allclose(back, ds.X, rtol=1e-9, atol=1e-9)

    def test_needs_two_windows(self):
        with pytest.raises(DataError):
            fit_norm(np.array([[1.0, 2.0]]))

    def test_scale_invariance_of_normalized_features(self):
        rng = np.random.default_rng(3)
        X = rng.gamma(4.0, 100.0, size=(200, 5))
        scaled = X.copy()
        scaled[:, 2] *= 1000.0
        a = apply_norm(X, fit_norm(X))
        b = apply_norm(scaled, fit_norm(scaled))
        assert np.allclose(a, b, rtol=1e-9, atol=1e-9)


class TestBuildDataset:
    def test_window_counts(self):
        trace = generate_trace(SimConfig(profile="spectre", duration_windows=100, seed=1))
        ds = build_dataset([trace], seed=0)
        assert ds.n == 4 * 99  # N samples yield N-1 windows per process

    def test_label_counts_match_processes(self):
        trace = generate_trace(SimConfig(profile="spectre", duration_windows=50, seed=2))
        ds = build_dataset([trace], seed=0)
        n_attack_procs = sum(1 for c in trace.processes.values() if c.malicious)
        assert int(ds.y.sum()) == n_attack_procs * 49
        assert int((ds.y == 0).sum()) == (len(trace.processes) - n_attack_procs) * 49

    def test_mixed_profiles_rejected(self):
        a = generate_trace(SimConfig(profile="spectre", duration_windows=10, seed=1))
        b = generate_trace(SimConfig(profile="meltdown", duration_windows=10, seed=1))
        with pytest.raises(ConfigurationError, match="profile"):
            build_dataset([a, b], seed=0)

    def test_shuffle_deterministic(self):
        trace = generate_trace(SimConfig(profile="spectre", duration_windows=30, seed=3))
        assert build_dataset([trace], seed=7) == build_dataset([trace], seed=7)
        assert build_dataset([trace], seed=7) != build_dataset([trace], seed=8)

    def test_multi_trace_pids_distinct(self):
        trace = generate_trace(SimConfig(profile="spectre", duration_windows=20, seed=4))
        ds = build_dataset([trace, trace], seed=0)
        assert len(np.unique(ds.pids)) == 2 * len(trace.processes)

    def test_balance_flag(self):
        trace = generate_trace(SimConfig(profile="spectre", duration_windows=60, seed=5))
        ds = build_dataset([trace], seed=0, balance=True)
        assert int((ds.y == 0).sum()) == int((ds.y == 1).sum())


class TestSeparabilityOracle:
    def test_single_feature_threshold_oracle(self, spectre_nl_dataset):
        """Brute-force best single-feature cut reaches 95% on spectre data."""
        ds = spectre_nl_dataset
        Xn = ds.normalized()
        best = max(_best_threshold_accuracy(Xn[:, j], ds.y) for j in range(Xn.shape[1]))
        assert best >= 0.95

    def test_oracle_exact_on_known_split(self):
        x = np.array([0.0, 1.0, 2.0, 10.0, 11.0])
        y = np.array([0, 0, 0, 1, 1])
        assert _best_threshold_accuracy(x, y) == 1.0


def _best_threshold_accuracy(x: np.ndarray, y: np.ndarray) -> float:
    """Exact best accuracy of a rule `x >= cut` (either polarity)."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order].astype(np.int64)
    n = len(ys)
    total_ones = ys.sum()
    best = max(total_ones, n - total_ones) / n  # all-one / all-zero rules
    ones_left = np.cumsum(ys)
    for i in range(n - 1):
        if xs[i + 1] == xs[i]:
            continue  # no cut between equal values
        # predict 1 for indices > i
        correct_pos = (total_ones - ones_left[i]) + (i + 1 - ones_left[i])
        best = max(best, correct_pos / n, (n - correct_pos) / n)
    return float(best)


class TestKfold:
    def _balanced_dataset(self, n_per_class=50):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(2 * n_per_class, 5))
        y = np.array([0] * n_per_class + [1] * n_per_class, dtype=np.int8)
        from hpc_sentinel.features import TraceDataset

        return TraceDataset(
            X=X,
            y=y,
            pids=np.arange(2 * n_per_class),
            window_indices=np.zeros(2 * n_per_class, dtype=np.int64),
            norm=fit_norm(X),
            event_set=ES,
        )

    def test_fold_sizes_and_stratification(self):
        ds = self._balanced_dataset(50)
        folds = kfold_split(ds, k=5, seed=1)
        for _, val in folds:
            assert len(val) == 20
            ones = int(ds.y[val].sum())
            assert abs(ones - 10) <= 1

    def test_folds_cover_and_disjoint(self):
        ds = self._balanced_dataset(33)
        folds = kfold_split(ds, k=4, seed=2)
        all_val = np.concatenate([val for _, val in folds])
        assert sorted(all_val.tolist()) == list(range(ds.n))
        for i, (_, a) in enumerate(folds):
            for _, b in folds[i + 1 :]:
                assert not set(a.tolist()) & set(b.tolist())
        for train, val in folds:
            assert sorted(np.concatenate([train, val]).tolist()) == list(range(ds.n))

    def test_deterministic(self):
        ds = self._balanced_dataset(20)
        a = kfold_split(ds, k=5, seed=3)
        b = kfold_split(ds, k=5, seed=3)
        for (ta, va), (tb, vb) in zip(a, b):
            assert np.array_equal(ta, tb) and np.array_equal(va, vb)

    def test_too_few_per_class_rejected(self):
        ds = self._balanced_dataset(3)
        with pytest.raises(ConfigurationError):
            kfold_split(ds, k=5, seed=0)

    @settings(max_examples=30, deadline=None)
    @given(k=st.integers(2, 8), seed=st.integers(0, 1000))
    def test_stratification_property(self, k, seed):
        ds = self._balanced_dataset(40)
        dataset_frac = ds.y.mean()
        for _, val in kfold_split(ds, k, seed):
            fold_frac = ds.y[val].mean()
            assert abs(fold_frac - dataset_frac) <= 1.0 / len(val) + 1e-12


class TestDatasetCache:
    def test_round_trip_exact(self, spectre_nl_dataset):
        ds = spectre_nl_dataset
        assert dataset_from_jsonl(dataset_to_jsonl(ds)) == ds

    def test_file_round_trip(self, tmp_path, meltdown_nl_dataset):
        path = tmp_path / "ds.jsonl"
        write_dataset(meltdown_nl_dataset, path)
        assert read_dataset(path) == meltdown_nl_dataset

    def test_header_carries_norm(self, spectre_nl_dataset):
        import json

        header = json.loads(dataset_to_jsonl(spectre_nl_dataset).splitlines()[0])
        assert set(header) == {"schema_version", "profile", "events", "norm"}
        assert len(header["norm"]["mean"]) == 5
