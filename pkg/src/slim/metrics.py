"""Structure-recovery scores for estimated DAGs."""

from __future__ import annotations

from typing import Optional

import numpy as np


def edge_decision(eta, nu=None, alpha_m: float = 0.95, policy: str = "bound") -> np.ndarray:
    """Binary adjacency from median inclusion probabilities.

    ``bound``: edge j -> i kept when eta[i, j] > alpha_m * (1 - nu[j]).
    ``half``: kept when eta[i, j] > 0.5.
    """
    eta = np.asarray(eta, dtype=float)
    if policy == "half":
        return (eta > 0.5).astype(int)
    if policy != "bound":
        raise ValueError(f"unknown threshold policy {policy!r}")
    if nu is None:
        raise ValueError("the bound policy needs the column rates")
    nu = np.asarray(nu, dtype=float)
    return (eta > alpha_m * (1.0 - nu[None, : eta.shape[1]])).astype(int)


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve traced by sweeping a threshold over ``scores``."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel() != 0
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    thresholds = np.unique(scores)[::-1]
    tpr = [0.0]
    fpr = [0.0]
    for t in thresholds:
        hit = scores >= t
        tpr.append((hit & labels).sum() / n_pos)
        fpr.append((hit & ~labels).sum() / n_neg)
    return float(np.trapezoid(tpr, fpr))


def structure_metrics(estimated, truth, eta: Optional[np.ndarray] = None) -> dict:
    """Compare an estimated adjacency with the truth (``R[i, j]`` = edge j -> i).

    FPR uses the d(d-1) - |E| absent ordered pairs as denominator.  A reversed
    link is a true edge estimated only in the opposite direction.  Structural
    errors count unordered pairs whose estimated state (none, one direction,
    the other) differs from the truth, so a reversal costs one error.  AUC is
    computed from ``eta`` over the d(d-1) ordered pairs when given.
    """
    est = np.asarray(estimated) != 0
    tru = np.asarray(getattr(truth, "R", truth)) != 0
    if est.shape != tru.shape or est.shape[0] != est.shape[1]:
        raise ValueError(f"shape mismatch: estimate {est.shape}, truth {tru.shape}")
    d = tru.shape[0]
    off = ~np.eye(d, dtype=bool)
    n_true = int((tru & off).sum())
    n_absent = d * (d - 1) - n_true
    tp = int((est & tru & off).sum())
    fp = int((est & ~tru & off).sum())
    reversed_links = int((tru & ~est & est.T & off).sum())
    errors = 0
    for i in range(d):
        for j in range(i + 1, d):
            if (est[i, j], est[j, i]) != (tru[i, j], tru[j, i]):
                errors += 1
    out = {
        "tpr": tp / n_true if n_true else float("nan"),
        "fpr": fp / n_absent if n_absent else float("nan"),
        "true_positives": tp,
        "false_positives": fp,
        "reversed": reversed_links,
        "structural_errors": errors,
        "n_edges": n_true,
    }
    if eta is not None:
        eta = np.asarray(eta, dtype=float)
        out["auc"] = roc_auc(eta[off], tru[off])
    return out
