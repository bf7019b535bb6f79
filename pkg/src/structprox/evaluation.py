"""Prediction, classification metrics, cross-validation, and the reduced
parameter summaries used in reports.

Rates are expressed as percentages.  Cross-validation keeps scaling and
model selection strictly inside each training fold; independent fold fits
may run in parallel when the ``STRUCTPROX_THREADS`` environment variable
asks for more than one worker, and results are always reduced in fold
order so reruns are reproducible.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np

from .core import Dataset, GroupStructure, Hyperparameters, ParameterSet
from .objective import margins, sigmoid
from .preprocessing import ScalingRecord, fit_scaler, make_design
from .solver import SolverState, fit

__all__ = [
    "MetricsReport",
    "MeanMetrics",
    "ReducedParameters",
    "SelectedGroups",
    "FittedModel",
    "CvResult",
    "balanced_accuracy",
    "confusion",
    "metrics",
    "predict",
    "fit_pipeline",
    "log_grid",
    "make_grid",
    "stratified_folds",
    "kfold_cv",
    "reduce_parameters",
    "selected_groups",
]


@dataclass(frozen=True)
class MetricsReport:
    """Confusion counts and the derived rates, in percent.

    ``precision`` is None when no positive predictions were made.
    """

    tp: int
    fp: int
    tn: int
    fn: int
    sensitivity: float
    specificity: float
    precision: float | None
    balanced_accuracy: float


@dataclass(frozen=True)
class MeanMetrics:
    """Per-fold averages of the rates; entries are None when no fold
    defines them."""

    sensitivity: float | None
    specificity: float | None
    precision: float | None
    balanced_accuracy: float | None


def balanced_accuracy(sensitivity: float, specificity: float) -> float:
    """Arithmetic mean of sensitivity and specificity."""
    return (sensitivity + specificity) / 2.0


def confusion(y_true, y_pred):
    """Confusion counts ``(tp, fp, tn, fn)`` for 0/1 arrays."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError(
            "label arrays must be 1-D and equally long, got %r and %r"
            % (y_true.shape, y_pred.shape)
        )
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("%s must take values in {0, 1}" % name)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    return tp, fp, tn, fn


def _report_from_counts(tp: int, fp: int, tn: int, fn: int) -> MetricsReport:
    if tp + fn == 0:
        raise ValueError("no positive samples: sensitivity is undefined")
    if tn + fp == 0:
        raise ValueError("no negative samples: specificity is undefined")
    sen = 100.0 * tp / (tp + fn)
    spe = 100.0 * tn / (tn + fp)
    pre = None if tp + fp == 0 else 100.0 * tp / (tp + fp)
    return MetricsReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        sensitivity=sen,
        specificity=spe,
        precision=pre,
        balanced_accuracy=balanced_accuracy(sen, spe),
    )


def metrics(y_true, y_pred) -> MetricsReport:
    """Sensitivity, specificity, precision, and balanced accuracy."""
    return _report_from_counts(*confusion(y_true, y_pred))


@dataclass
class FittedModel:
    """A trained model together with its preprocessing statistics."""

    params: ParameterSet
    record: ScalingRecord
    state: SolverState
    hyper: Hyperparameters


def fit_pipeline(
    d: Dataset,
    gs: GroupStructure,
    h: Hyperparameters,
    normalization: str = "sd",
) -> FittedModel:
    """Scale, build the design, and run the solver in one call."""
    record = fit_scaler(d, normalization)
    design = make_design(d, gs, record)
    params, state = fit(design, gs, h)
    return FittedModel(params=params, record=record, state=state, hyper=h)


def predict(
    params: ParameterSet,
    record: ScalingRecord,
    gs: GroupStructure,
    genetic,
    imaging,
    threshold: float = 0.5,
    variant: str = "multilevel",
):
    """Probabilities and thresholded labels for raw feature rows.

    The rows are standardized with the stored training statistics before
    evaluation; returns ``(probabilities, labels)``.
    """
    if record is None:
        raise ValueError("predict needs a fitted scaling record")
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1), got %r" % threshold)
    genetic = np.asarray(genetic, dtype=float)
    imaging = np.asarray(imaging, dtype=float)
    d = Dataset(genetic, imaging, np.zeros(genetic.shape[0], dtype=int))
    design = make_design(d, gs, record)
    probs = sigmoid(margins(params, design, variant))
    return probs, (probs >= threshold).astype(np.intp)


def log_grid(num: int = 7, low: float = 1e-3, high: float = 1.0) -> np.ndarray:
    """Logarithmically spaced penalty strengths, ascending."""
    if num < 1:
        raise ValueError("grid needs at least one point")
    if not 0 < low <= high:
        raise ValueError("need 0 < low <= high, got %r, %r" % (low, high))
    if num == 1:
        return np.array([high])
    return np.geomspace(low, high, num)


def make_grid(
    interaction_values,
    imaging_values,
    genetic_values,
    variant: str = "multilevel",
    **solver_settings,
) -> list[Hyperparameters]:
    """All combinations of the given strengths, in deterministic order."""
    grid = [
        Hyperparameters(
            lambda_interaction=float(w),
            lambda_imaging=float(i),
            lambda_genetic=float(g),
            variant=variant,
            **solver_settings,
        )
        for w, i, g in product(interaction_values, imaging_values, genetic_values)
    ]
    if not grid:
        raise ValueError("empty hyperparameter grid")
    return grid


def stratified_folds(labels, k: int, seed: int = 0) -> list[np.ndarray]:
    """Class-balanced partition into k folds of test indices.

    Samples of each class are shuffled with the seed and dealt round-robin,
    so fold sizes per class differ by at most one.  Deterministic for a
    given ``(labels, k, seed)``.
    """
    labels = np.asarray(labels)
    k = int(k)
    if k < 2:
        raise ValueError("k must be >= 2, got %d" % k)
    if labels.shape[0] < k:
        raise ValueError(
            "cannot split %d samples into %d folds" % (labels.shape[0], k)
        )
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    # the fold cursor runs on across classes so k = N still fills every fold
    cursor = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        for sample in idx:
            folds[cursor % k].append(int(sample))
            cursor += 1
    return [np.sort(np.array(f, dtype=np.intp)) for f in folds]


@dataclass(frozen=True)
class SelectedGroups:
    """Indices of groups carrying nonzero coefficients."""

    genetic: tuple[int, ...]
    interaction: tuple[int, ...]


def selected_groups(p: ParameterSet, gs: GroupStructure) -> SelectedGroups:
    """Groups with a nonzero genetic block or interaction column block."""
    red = reduce_parameters(p, gs)
    return SelectedGroups(
        genetic=tuple(int(l) for l in np.flatnonzero(red.genetic > 0)),
        interaction=tuple(int(l) for l in np.flatnonzero(red.interaction.max(axis=0) > 0)),
    )


@dataclass(frozen=True)
class ReducedParameters:
    """Blockwise maximum absolute values of the fitted parameters.

    ``interaction`` is (n_imaging, n_groups): the largest |entry| of each
    row/group block.  ``genetic`` is per group, ``imaging`` per feature.
    """

    interaction: np.ndarray
    imaging: np.ndarray
    genetic: np.ndarray


def reduce_parameters(p: ParameterSet, gs: GroupStructure) -> ReducedParameters:
    if p.expanded_size != gs.expanded_size:
        raise ValueError(
            "parameters have expanded size %d, groups give %d"
            % (p.expanded_size, gs.expanded_size)
        )
    return ReducedParameters(
        interaction=np.maximum.reduceat(np.abs(p.interaction), gs.offsets, axis=1),
        imaging=np.abs(p.imaging),
        genetic=np.maximum.reduceat(np.abs(p.genetic), gs.offsets),
    )


@dataclass
class CvResult:
    """Cross-validation outcome.

    ``fold_metrics[f]`` is None when the test fold holds a single class
    (its predictions still enter ``pooled``).  ``mean`` averages rates over
    folds where they are defined.  ``chosen[f]`` is the grid point picked
    for fold ``f`` and ``selected[f]`` the groups its final fit retained.
    """

    k: int
    selection: str
    fold_test_indices: list[np.ndarray]
    fold_metrics: list[MetricsReport | None]
    pooled: MetricsReport
    mean: MeanMetrics
    chosen: list[Hyperparameters]
    selected: list[SelectedGroups]
    probabilities: np.ndarray
    predictions: np.ndarray


def _thread_count() -> int:
    raw = os.environ.get("STRUCTPROX_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError("STRUCTPROX_THREADS must be an integer, got %r" % raw)
    return max(1, n)


def _ordered_map(fn, items):
    workers = min(_thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _pooled_bacc(tp: int, fp: int, tn: int, fn: int) -> float:
    if tp + fn == 0 or tn + fp == 0:
        return float("-inf")
    return balanced_accuracy(100.0 * tp / (tp + fn), 100.0 * tn / (tn + fp))


def _fit_and_score(d: Dataset, gs, h, train_idx, test_idx, normalization, threshold):
    train = d.subset(train_idx)
    record = fit_scaler(train, normalization)
    params, state = fit(make_design(train, gs, record), gs, h)
    test = d.subset(test_idx)
    probs, preds = predict(
        params, record, gs, test.genetic, test.imaging, threshold, h.variant
    )
    return params, state, probs, preds


def kfold_cv(
    d: Dataset,
    gs: GroupStructure,
    grid,
    k: int = 10,
    seed: int = 0,
    selection: str = "nested",
    inner_k: int = 3,
    normalization: str = "sd",
    threshold: float = 0.5,
) -> CvResult:
    """Stratified k-fold cross-validation with per-fold grid selection.

    ``selection="nested"`` picks each fold's grid point by pooled balanced
    accuracy over an inner split of that fold's training data, so the test
    fold never informs the choice.  ``selection="oracle"`` picks by test
    fold balanced accuracy instead and is optimistic by construction; it
    is reported only as an upper reference.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    if selection not in ("nested", "oracle"):
        raise ValueError("selection must be 'nested' or 'oracle', got %r" % selection)
    labels = d.labels
    if np.unique(labels).size < 2:
        raise ValueError("cross-validation needs both classes present")
    folds = stratified_folds(labels, k, seed)
    all_idx = np.arange(d.n_samples)
    train_sets = []
    for f, test_idx in enumerate(folds):
        mask = np.ones(d.n_samples, dtype=bool)
        mask[test_idx] = False
        train_idx = all_idx[mask]
        if np.unique(labels[train_idx]).size < 2:
            raise ValueError(
                "fold %d leaves a single-class training set; use a smaller k" % f
            )
        train_sets.append(train_idx)

    def run_fold(f: int):
        train_idx, test_idx = train_sets[f], folds[f]
        if len(grid) == 1:
            best = grid[0]
        elif selection == "oracle":
            scores = []
            for h in grid:
                _, _, _, preds = _fit_and_score(
                    d, gs, h, train_idx, test_idx, normalization, threshold
                )
                scores.append(_pooled_bacc(*confusion(labels[test_idx], preds)))
            best = grid[int(np.argmax(scores))]
        else:
            train_labels = labels[train_idx]
            counts = [int(np.sum(train_labels == c)) for c in (0, 1)]
            inner = min(inner_k, min(counts))
            if inner < 2:
                raise ValueError(
                    "fold %d training data cannot support an inner split; "
                    "use a smaller k or a single grid point" % f
                )
            inner_folds = stratified_folds(train_labels, inner, seed + 7919 * (f + 1))
            scores = []
            for h in grid:
                tp = fp = tn = fn = 0
                for inner_test in inner_folds:
                    inner_mask = np.ones(train_idx.size, dtype=bool)
                    inner_mask[inner_test] = False
                    _, _, _, preds = _fit_and_score(
                        d, gs, h,
                        train_idx[inner_mask], train_idx[inner_test],
                        normalization, threshold,
                    )
                    a, b, c, e = confusion(train_labels[inner_test], preds)
                    tp += a; fp += b; tn += c; fn += e
                scores.append(_pooled_bacc(tp, fp, tn, fn))
            best = grid[int(np.argmax(scores))]
        params, state, probs, preds = _fit_and_score(
            d, gs, best, train_idx, test_idx, normalization, threshold
        )
        return best, params, probs, preds

    results = _ordered_map(run_fold, range(k))

    probabilities = np.empty(d.n_samples)
    predictions = np.empty(d.n_samples, dtype=np.intp)
    fold_metrics: list[MetricsReport | None] = []
    chosen = []
    selected = []
    tp = fp = tn = fn = 0
    for f, (best, params, probs, preds) in enumerate(results):
        test_idx = folds[f]
        probabilities[test_idx] = probs
        predictions[test_idx] = preds
        a, b, c, e = confusion(labels[test_idx], preds)
        tp += a; fp += b; tn += c; fn += e
        if a + e > 0 and b + c > 0:
            fold_metrics.append(_report_from_counts(a, b, c, e))
        else:
            fold_metrics.append(None)
        chosen.append(best)
        selected.append(selected_groups(params, gs))

    pooled = _report_from_counts(tp, fp, tn, fn)
    defined = [m for m in fold_metrics if m is not None]
    if defined:
        precisions = [m.precision for m in defined if m.precision is not None]
        mean = MeanMetrics(
            sensitivity=float(np.mean([m.sensitivity for m in defined])),
            specificity=float(np.mean([m.specificity for m in defined])),
            precision=float(np.mean(precisions)) if precisions else None,
            balanced_accuracy=float(np.mean([m.balanced_accuracy for m in defined])),
        )
    else:
        mean = MeanMetrics(None, None, None, None)
    return CvResult(
        k=k,
        selection=selection,
        fold_test_indices=folds,
        fold_metrics=fold_metrics,
        pooled=pooled,
        mean=mean,
        chosen=chosen,
        selected=selected,
        probabilities=probabilities,
        predictions=predictions,
    )
