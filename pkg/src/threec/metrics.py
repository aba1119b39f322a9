from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class DegenerateLabels(ValueError):
    code = "degenerate_labels"


def auc(scores, labels) -> float:
    """ROC-AUC as the normalized Mann-Whitney U statistic (ties get average ranks)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
