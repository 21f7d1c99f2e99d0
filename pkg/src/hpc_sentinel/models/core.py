"""Common classifier interface: training, scoring, metrics, CV, and model files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import DataError, DecodeError
from ..events import EventSet, make_event_set
from ..features import NormStats, TraceDataset, apply_norm, fit_norm, stratified_kfold_indices
from . import cnn, lda, logreg, svm
from .cnn import CnnParams
from .lda import LdaParams
from .logreg import LinearParams, _sigmoid

SCHEMA_VERSION = 1
KINDS = ("lda", "lr", "svm", "cnn")

# Logits are clipped before squashing so scores stay strictly inside (0, 1).
_LOGIT_CLIP = 36.0


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; the defaults are the documented desk-scale choices."""

    learning_rate: float = 0.1
    epochs: int = 500
    svm_ridge: float = 1e-3
    stack_windows: int = 8
    conv_filters: int = 16
    conv_kernel: int = 3
    cnn_learning_rate: float = 0.01
    cnn_epochs: int = 50
    batch_size: int = 32
    threshold: float = 0.5


@dataclass
class ClassifierModel:
    """A trained classifier plus everything needed to score raw window deltas."""

    kind: str
    params: LdaParams | LinearParams | CnnParams
    norm: NormStats
    event_set: EventSet
    threshold: float = 0.5
    train_loss: list[float] = field(default_factory=list)
    warning: str | None = None


@dataclass(frozen=True)
class Metrics:
    """Counts and the paper-style percentages sharing one denominator."""

    tp: int
    tn: int
    fp_count: int
    fn_count: int

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp_count + self.fn_count

    @property
    def accuracy(self) -> float:
        return 100.0 * (self.tp + self.tn) / self.n

    @property
    def fp(self) -> float:
        return 100.0 * self.fp_count / self.n

    @property
    def fn(self) -> float:
        return 100.0 * self.fn_count / self.n

    def confusion(self) -> dict[str, int]:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp_count, "fn": self.fn_count}


def metrics_from_predictions(y_true: np.ndarray, y_pred: np.ndarray) -> Metrics:
    if len(y_true) == 0:
        raise DataError("cannot compute metrics on empty input")
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    return Metrics(
        tp=int(np.sum(y_true & y_pred)),
        tn=int(np.sum(~y_true & ~y_pred)),
        fp_count=int(np.sum(~y_true & y_pred)),
        fn_count=int(np.sum(y_true & ~y_pred)),
    )


# --- stacks for the CNN ------------------------------------------------------


@dataclass
class WindowStacks:
    """Per-pid sliding stacks of raw window deltas; stacks never straddle processes."""

    X: np.ndarray  # (n, W, d) raw deltas
    y: np.ndarray  # (n,)
    pids: np.ndarray  # (n,)
    start_index: np.ndarray  # (n,) window_index of the first stacked window


def build_stacks(dataset: TraceDataset, stack_windows: int) -> WindowStacks:
    """Reassemble the (shuffled) dataset into temporally contiguous stacks."""
    xs, ys, ps, ss = [], [], [], []
    for pid in np.unique(dataset.pids):
        sel = dataset.pids == pid
        order = np.argsort(dataset.window_indices[sel])
        widx = dataset.window_indices[sel][order]
        X = dataset.X[sel][order]
        y = dataset.y[sel][order]
        # split into contiguous runs; CV subsets may leave gaps
        run_start = 0
        for i in range(1, len(widx) + 1):
            if i == len(widx) or widx[i] != widx[i - 1] + 1:
                run_len = i - run_start
                for s in range(run_start, i - stack_windows + 1):
                    xs.append(X[s : s + stack_windows])
                    ys.append(y[s])
                    ps.append(pid)
                    ss.append(widx[s])
                run_start = i
                del run_len
    if not xs:
        raise DataError(f"no pid has {stack_windows} contiguous windows; cannot build stacks")
    return WindowStacks(
        X=np.stack(xs),
        y=np.array(ys, dtype=np.int8),
        pids=np.array(ps, dtype=np.int64),
        start_index=np.array(ss, dtype=np.int64),
    )


def _normalize_stacks(X: np.ndarray, norm: NormStats) -> np.ndarray:
    return (X - norm.mean) / norm.std


# --- fit / predict -----------------------------------------------------------


def fit(kind: str, dataset: TraceDataset, config: TrainConfig | None = None, seed: int = 0) -> ClassifierModel:
    """Train one classifier kind on a dataset; deterministic for a fixed seed."""
    if kind not in KINDS:
        raise DataError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    config = config or TrainConfig()
    for cls in (0, 1):
        if int(np.sum(dataset.y == cls)) < 2:
            raise DataError(f"need at least 2 examples of class {cls} to fit")

    if kind == "cnn":
        stacks = build_stacks(dataset, config.stack_windows)
        Xn = _normalize_stacks(stacks.X, dataset.norm)
        params, history, warning = cnn.fit(
            Xn,
            stacks.y,
            stack_windows=config.stack_windows,
            filters=config.conv_filters,
            kernel=config.conv_kernel,
            learning_rate=config.cnn_learning_rate,
            epochs=config.cnn_epochs,
            batch_size=config.batch_size,
            seed=seed,
        )
    else:
        Xn = dataset.normalized()
        y = dataset.y.astype(np.float64)
        if kind == "lda":
            params, warning = lda.fit(Xn, dataset.y)
            history = []
        elif kind == "lr":
            params, history, warning = logreg.fit(Xn, y, config.learning_rate, config.epochs)
        else:
            params, history, warning = svm.fit(Xn, y, config.learning_rate, config.epochs, config.svm_ridge)

    return ClassifierModel(
        kind=kind,
        params=params,
        norm=dataset.norm,
        event_set=dataset.event_set,
        threshold=config.threshold,
        train_loss=history,
        warning=warning,
    )


def _logits(model: ClassifierModel, Xn: np.ndarray) -> np.ndarray:
    if model.kind == "lda":
        return lda.logits(model.params, Xn)
    if model.kind == "lr":
        return logreg.logits(model.params, Xn)
    if model.kind == "svm":
        return svm.logits(model.params, Xn)
    return cnn.logits(model.params, Xn)


def predict_batch(model: ClassifierModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scores in (0,1) and hard labels for raw inputs.

    Linear kinds take (n, d) windows; the CNN takes (n, W, d) stacks with
    any W >= the convolution kernel length.
    """
    X = np.asarray(X, dtype=np.float64)
    d = len(model.event_set)
    if model.kind == "cnn":
        if X.ndim != 3 or X.shape[2] != d:
            raise DataError(f"cnn input must have shape (n, W, {d}), got {X.shape}")
        Xn = _normalize_stacks(X, model.norm)
    else:
        if X.ndim != 2 or X.shape[1] != d:
            raise DataError(f"input must have shape (n, {d}), got {X.shape}")
        Xn = apply_norm(X, model.norm)
    z = np.clip(_logits(model, Xn), -_LOGIT_CLIP, _LOGIT_CLIP)
    scores = _sigmoid(z)
    return scores, (scores >= model.threshold).astype(np.int8)


def predict_score(model: ClassifierModel, x: np.ndarray) -> tuple[float, int]:
    """Score one raw window (linear kinds) or one raw stack (CNN)."""
    x = np.asarray(x, dtype=np.float64)
    scores, labels = predict_batch(model, x[None, ...])
    return float(scores[0]), int(labels[0])


def evaluate(model: ClassifierModel, dataset: TraceDataset) -> Metrics:
    """Accuracy/FP/FN over a labeled dataset (stack-level for the CNN)."""
    if dataset.n == 0:
        raise DataError("cannot evaluate on an empty dataset")
    if dataset.event_set != model.event_set:
        raise DataError("dataset event set does not match the model")
    if model.kind == "cnn":
        stacks = build_stacks(dataset, model.params.stack_windows)
        _, pred = predict_batch(model, stacks.X)
        return metrics_from_predictions(stacks.y, pred)
    _, pred = predict_batch(model, dataset.X)
    return metrics_from_predictions(dataset.y, pred)


# --- cross-validation --------------------------------------------------------


@dataclass(frozen=True)
class CvResult:
    per_fold: tuple[Metrics, ...]
    mean_accuracy: float
    std_accuracy: float


def _subset_dataset(dataset: TraceDataset, idx: np.ndarray) -> TraceDataset:
    X = dataset.X[idx]
    return TraceDataset(
        X=X,
        y=dataset.y[idx],
        pids=dataset.pids[idx],
        window_indices=dataset.window_indices[idx],
        norm=fit_norm(X),
        event_set=dataset.event_set,
    )


def cross_validate(
    kind: str,
    dataset: TraceDataset,
    k: int,
    seed: int,
    config: TrainConfig | None = None,
) -> CvResult:
    """Stratified k-fold CV; normalization is refitted on each training fold."""
    config = config or TrainConfig()
    per_fold: list[Metrics] = []
    if kind == "cnn":
        stacks = build_stacks(dataset, config.stack_windows)
        folds = stratified_kfold_indices(stacks.y, k, seed)
        for train_idx, val_idx in folds:
            flat = stacks.X[train_idx].reshape(-1, dataset.X.shape[1])
            norm = fit_norm(flat)
            params, history, warning = cnn.fit(
                _normalize_stacks(stacks.X[train_idx], norm),
                stacks.y[train_idx],
                stack_windows=config.stack_windows,
                filters=config.conv_filters,
                kernel=config.conv_kernel,
                learning_rate=config.cnn_learning_rate,
                epochs=config.cnn_epochs,
                batch_size=config.batch_size,
                seed=seed,
            )
            model = ClassifierModel("cnn", params, norm, dataset.event_set, config.threshold, history, warning)
            _, pred = predict_batch(model, stacks.X[val_idx])
            per_fold.append(metrics_from_predictions(stacks.y[val_idx], pred))
    else:
        folds = stratified_kfold_indices(dataset.y, k, seed)
        for train_idx, val_idx in folds:
            model = fit(kind, _subset_dataset(dataset, train_idx), config, seed)
            _, pred = predict_batch(model, dataset.X[val_idx])
            per_fold.append(metrics_from_predictions(dataset.y[val_idx], pred))
    accs = np.array([m.accuracy for m in per_fold])
    return CvResult(per_fold=tuple(per_fold), mean_accuracy=float(accs.mean()), std_accuracy=float(accs.std()))


# --- model files -------------------------------------------------------------


def _params_to_json(model: ClassifierModel) -> dict:
    p = model.params
    if model.kind == "lda":
        return {
            "means": p.means.tolist(),
            "covariance": p.covariance.tolist(),
            "priors": p.priors.tolist(),
            "w": p.w.tolist(),
            "b": p.b,
        }
    if model.kind in ("lr", "svm"):
        return {"w": p.w.tolist(), "b": p.b}
    return {
        "stack_windows": p.stack_windows,
        "kernel": p.kernel.tolist(),
        "kernel_bias": p.kernel_bias.tolist(),
        "dense": p.dense.tolist(),
        "dense_bias": p.dense_bias,
    }


def _params_from_json(kind: str, obj: dict):
    try:
        if kind == "lda":
            return LdaParams(
                means=np.array(obj["means"], dtype=np.float64),
                covariance=np.array(obj["covariance"], dtype=np.float64),
                priors=np.array(obj["priors"], dtype=np.float64),
                w=np.array(obj["w"], dtype=np.float64),
                b=float(obj["b"]),
            )
        if kind in ("lr", "svm"):
            return LinearParams(w=np.array(obj["w"], dtype=np.float64), b=float(obj["b"]))
        return CnnParams(
            stack_windows=int(obj["stack_windows"]),
            kernel=np.array(obj["kernel"], dtype=np.float64),
            kernel_bias=np.array(obj["kernel_bias"], dtype=np.float64),
            dense=np.array(obj["dense"], dtype=np.float64),
            dense_bias=float(obj["dense_bias"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DecodeError(f"bad {kind} parameters: {e}") from e


_MODEL_KEYS = {"schema_version", "kind", "event_set", "norm", "threshold", "params"}


def save_model(model: ClassifierModel, path: str | Path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": model.kind,
        "event_set": {"profile": model.event_set.profile.value, "events": list(model.event_set.ids)},
        "norm": {"mean": model.norm.mean.tolist(), "std": model.norm.std.tolist()},
        "threshold": model.threshold,
        "params": _params_to_json(model),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path) -> ClassifierModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DecodeError(f"cannot decode model file {path}: {e}") from e
    if not isinstance(doc, dict) or set(doc) != _MODEL_KEYS:
        raise DecodeError(f"model file {path} has wrong fields")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise DecodeError(f"unsupported model schema_version {doc['schema_version']!r}")
    kind = doc["kind"]
    if kind not in KINDS:
        raise DecodeError(f"unknown model kind {kind!r}")
    try:
        event_set = make_event_set(doc["event_set"]["profile"])
    except (KeyError, TypeError, ValueError) as e:
        raise DecodeError(f"bad event_set in model file: {e}") from e
    if tuple(doc["event_set"].get("events", ())) != event_set.ids:
        raise DecodeError("model event list does not match its profile")
    norm = NormStats(
        mean=np.array(doc["norm"]["mean"], dtype=np.float64),
        std=np.array(doc["norm"]["std"], dtype=np.float64),
    )
    if norm.mean.shape != (len(event_set),):
        raise DecodeError("model norm stats have wrong dimensionality")
    params = _params_from_json(kind, doc["params"])
    return ClassifierModel(
        kind=kind,
        params=params,
        norm=norm,
        event_set=event_set,
        threshold=float(doc["threshold"]),
    )
