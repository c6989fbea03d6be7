"""Evaluation metrics: rank-based AUC for binary tasks, accuracy for multiclass."""

from __future__ import annotations

import numpy as np


def auc_score(labels: np.ndarray, scores: np.ndarray) -> float:
    """Area under the ROC curve via tie-averaged ranks (Mann-Whitney statistic)."""
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(np.sum(labels > 0.5))
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(labels.shape[0], dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum_pos = float(np.sum(ranks[labels > 0.5]))
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def accuracy_score(labels: np.ndarray, predicted: np.ndarray) -> float:
    labels = np.asarray(labels)
    predicted = np.asarray(predicted)
    return float(np.mean(labels.astype(np.int64) == predicted.astype(np.int64)))
