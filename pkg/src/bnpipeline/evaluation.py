"""Classification metrics and the cross-validation harness.

Predictions and truths are compared on the numeric value of the target
states (the parsed label when labels are numbers). RMSE is the default
selection criterion because it penalizes large mistakes, not just wrong
ones.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .bayesnet import FittedNetwork, fit_conjugate
from .dataset import Dataset, SplitPlan, numeric_state_values
from .mcmc import McmcConfig, PosteriorPredictive, posterior_predict
from .structlearn import CandidateModel


@dataclass(frozen=True)
class Metrics:
    """Test-set summary: counts, accuracy, and root-mean-square error.

    large_errors counts predictions whose numeric value is off by more
    than one state.
    """

    cases: int
    correct: int
    large_errors: int
    accuracy: float
    rmse: float


def confusion_matrix(pred: Sequence[int], truth: Sequence[int], num_states: int | None = None) -> np.ndarray:
    """Matrix with entry (i, j) counting records predicted i while truly j."""
    p = np.asarray(pred, dtype=np.int64)
    t = np.asarray(truth, dtype=np.int64)
    if p.shape != t.shape:
        raise ValueError("prediction and truth lengths differ")
    r = num_states if num_states is not None else int(max(p.max(), t.max())) + 1
    matrix = np.zeros((r, r), dtype=np.int64)
    np.add.at(matrix, (p, t), 1)
    return matrix


def metrics(pred: Sequence[float], truth: Sequence[float], literal_rmse: bool = False) -> Metrics:
    """Accuracy, large-error count and RMSE of numeric predictions.

    literal_rmse divides the Euclidean distance by the number of cases
    instead of taking the root of the mean squared error.
    """
    p = np.asarray(pred, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError("prediction and truth must be equal-length vectors")
    if p.size == 0:
        raise ValueError("no predictions to score")
    err = p - t
    correct = int((err == 0).sum())
    if literal_rmse:
        rmse = float(np.linalg.norm(err) / p.size)
    else:
        rmse = float(math.sqrt(np.mean(err ** 2)))
    return Metrics(
        cases=int(p.size),
        correct=correct,
        large_errors=int((np.abs(err) > 1).sum()),
        accuracy=correct / p.size,
        rmse=rmse,
    )


def evidence_records(
    data: Dataset, rows: Sequence[int], target: str
) -> tuple[list[dict[str, int]], list[int]]:
    """Per-row evidence dicts (every variable but the target) plus true target states."""
    names = [n for n in data.schema.names if n != target]
    cols = {n: data.schema.index(n) for n in names}
    t_col = data.schema.index(target)
    records = []
    truths = []
    for i in rows:
        row = data.records[i]
        records.append({n: int(row[c]) for n, c in cols.items()})
        truths.append(int(row[t_col]))
    return records, truths


@dataclass(frozen=True)
class CvResult:
    """Per-(model, fold) metrics, per-model fold averages, and the winner."""

    fold_metrics: tuple[tuple[str, int, Metrics], ...]
    averages: dict[str, tuple[float, float]]  # label -> (mean accuracy, mean rmse)
    best: str


def cross_validate(
    candidates: Sequence[CandidateModel],
    data: Dataset,
    split: SplitPlan,
    alpha0: float = 1.0,
    mode: str = "exact",
    config: McmcConfig | None = None,
    literal_rmse: bool = False,
) -> CvResult:
    """Fit every candidate on train-minus-fold and score it on each fold.

    The winner is the model with the smallest average RMSE over folds
    (ties go to the lexicographically first label).
    """
    if not candidates:
        raise ValueError("no candidate models")
    labels = [c.label for c in candidates]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate candidate labels: {labels}")
    target = data.schema.target
    values = numeric_state_values(data.schema.spec(target))
    train_set = set(split.train_idx)
    rows_by_fold = []
    for fold in split.folds:
        rows_by_fold.append((sorted(train_set - set(fold)), list(fold)))

    results = []
    sums: dict[str, list[float]] = {c.label: [0.0, 0.0] for c in candidates}
    for fold_no, (train_rows, valid_rows) in enumerate(rows_by_fold, 1):
        train_data = data.subset(train_rows)
        records, truths = evidence_records(data, valid_rows, target)
        truth_vals = [values[t] for t in truths]
        for cand in candidates:
            network = fit_conjugate(cand.dag, train_data, alpha0)
            preds = posterior_predict(network, records, config=config, mode=mode, target=target)
            pred_vals = [values[p.predicted] for p in preds]
            m = metrics(pred_vals, truth_vals, literal_rmse=literal_rmse)
            results.append((cand.label, fold_no, m))
            sums[cand.label][0] += m.accuracy
            sums[cand.label][1] += m.rmse
    n_folds = len(rows_by_fold)
    averages = {label: (acc / n_folds, rmse / n_folds) for label, (acc, rmse) in sums.items()}
    best = min(averages, key=lambda lbl: (averages[lbl][1], lbl))
    return CvResult(tuple(results), averages, best)


def final_evaluation(
    best: CandidateModel,
    data: Dataset,
    split: SplitPlan,
    alpha0: float = 1.0,
    mode: str = "exact",
    config: McmcConfig | None = None,
    literal_rmse: bool = False,
) -> tuple[Metrics, list[PosteriorPredictive], FittedNetwork]:
    """Retrain on the full training split and score the held-out test set."""
    target = data.schema.target
    values = numeric_state_values(data.schema.spec(target))
    network = fit_conjugate(best.dag, data.subset(list(split.train_idx)), alpha0)
    records, truths = evidence_records(data, list(split.test_idx), target)
    preds = posterior_predict(
        network, records, config=config, mode=mode, target=target, true_states=truths
    )
    pred_vals = [values[p.predicted] for p in preds]
    truth_vals = [values[t] for t in truths]
    return metrics(pred_vals, truth_vals, literal_rmse=literal_rmse), preds, network


def write_cv_csv(cv: CvResult, path: str | Path) -> None:
    """Per-fold rows plus one 'mean' row per model."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "fold", "cases", "correct", "accuracy", "rmse"])
        for label, fold, m in cv.fold_metrics:
            writer.writerow(
                [label, fold, m.cases, m.correct, repr(m.accuracy), repr(m.rmse)]
            )
        for label in sorted(cv.averages):
            acc, rmse = cv.averages[label]
            writer.writerow([label, "mean", "", "", repr(acc), repr(rmse)])


def write_final_metrics(m: Metrics, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cases", "correct", "large_errors", "accuracy", "rmse"])
        writer.writerow([m.cases, m.correct, m.large_errors, repr(m.accuracy), repr(m.rmse)])
