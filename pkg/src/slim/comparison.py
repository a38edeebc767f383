"""Held-out predictive densities and selection between factor and DAG models."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels as kern
from .distributions import RngLike, as_generator
from .model import Dataset, DagState, FactorState, Hyperparameters, validate_hyperparameters

UPS_CAP = 1e12
DEFAULT_EVAL_DRAWS = 200


def _test_values(test: Union[Dataset, np.ndarray]) -> np.ndarray:
    X = test.values if isinstance(test, Dataset) else np.asarray(test, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("test data must be fully observed")
    return np.ascontiguousarray(X, dtype=float)


def predictive_log_density(
    test,
    draw: Union[FactorState, DagState],
    hp: Optional[Hyperparameters] = None,
    rng: RngLike = None,
    parents: Optional[np.ndarray] = None,
    per_column: bool = False,
):
    """Test log density under one posterior draw.

    Each column's density is a Monte Carlo average of N(x | m, C U C' + Psi)
    over ``n_rep`` prior draws of the scale diagonal U, computed in
    log-sum-exp form.  Factor models use m = 0; DAGs use m = B x (or B y when
    ``parents`` holds transformed parent values).
    """
    hp = validate_hyperparameters(hp, "factor")
    gen = as_generator(rng)
    X = _test_values(test)
    if isinstance(draw, DagState):
        d = draw.d
        top = X if parents is None else np.asarray(parents, dtype=float)
        mean = draw.B @ top
        C = draw.W[:, d:]
    else:
        mean = np.zeros_like(X)
        C = draw.C
    if C.shape[0] != X.shape[0]:
        raise ValueError(f"draw has {C.shape[0]} variables, test data {X.shape[0]}")
    lat = draw.latent
    if len(lat) != C.shape[1]:
        raise ValueError("latent spec does not match the loading columns")
    cols = kern.predictive_log_density(
        X, np.ascontiguousarray(mean), np.ascontiguousarray(C, dtype=float), np.asarray(draw.psi, dtype=float),
        lat.kind, lat.lam2, lat.theta, lat.sigma2, int(hp.n_rep), gen, UPS_CAP,
    )
    return cols if per_column else float(cols.sum())


def thinned_indices(n_samples: int, n_eval: int = DEFAULT_EVAL_DRAWS) -> np.ndarray:
    if n_samples < 1:
        raise ValueError("no posterior draws")
    return np.unique(np.linspace(0, n_samples - 1, min(n_eval, n_samples)).round().astype(int))


def chain_test_loglik(chain, test, hp=None, rng: RngLike = None, n_eval: int = DEFAULT_EVAL_DRAWS) -> np.ndarray:
    """Test log-likelihood for evenly spaced post-burn-in draws of a factor, DAG or SNIM chain."""
    gen = as_generator(rng)
    X = _test_values(test)
    idx = thinned_indices(chain.n_samples, n_eval)
    out = np.empty(len(idx))
    for k, s in enumerate(idx):
        parents = chain.test_parents(s, X) if hasattr(chain, "test_parents") else None
        out[k] = predictive_log_density(X, chain.draw(s), hp, gen, parents=parents)
    return out


def missing_value_log_density(data: Dataset, draw: FactorState, hp: Optional[Hyperparameters] = None) -> float:
    """Gaussian log density of the masked-out entries (M == 0) given C, Z and Psi."""
    if data.mask is None:
        raise ValueError("dataset has no mask")
    M = np.asarray(data.mask)
    held = (M == 0) & np.isfinite(data.values)
    if not held.any():
        warnings.warn("mask has no held-out entries; log density is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    mu = draw.C @ draw.Z
    var = np.broadcast_to(np.asarray(draw.psi, dtype=float)[:, None], mu.shape)
    r = data.values[held] - mu[held]
    return float(-0.5 * np.sum(kern.LOG_2PI + np.log(var[held]) + r * r / var[held]))


def _summary(x: np.ndarray) -> dict:
    q = np.quantile(x, [0.025, 0.5, 0.975])
    return {"q025": float(q[0]), "median": float(q[1]), "q975": float(q[2])}


@dataclass
class ComparisonReport:
    """Per-model test log-likelihood samples and the selected model.

    ``ratio`` holds the log-likelihood ratio samples of the best alternative
    against the reference (first) model: positive means the alternative wins.
    """

    labels: list
    samples: dict
    medians: dict
    quantiles: dict
    ratio: np.ndarray
    median_ratio: float
    selected: str
    paired: bool
    tie: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def reference(self) -> str:
        return self.labels[0]

    def alternative_selected(self) -> bool:
        return self.selected != self.reference

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "selected": self.selected,
            "tie": self.tie,
            "paired": self.paired,
            "median_ratio": self.median_ratio,
            "ratio": self.ratio.tolist(),
            "models": {
                k: {**self.quantiles[k], "samples": np.asarray(self.samples[k]).tolist()} for k in self.labels
            },
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def compare_models(reports: Sequence, tol: float = 0.0) -> ComparisonReport:
    """Select the model with the largest median test log-likelihood.

    ``reports`` holds (label, samples) pairs, or (label, samples, test_key)
    triples where ``test_key`` identifies the test set; keys must agree.  The
    first label is the reference, and wins ties.
    """
    if len(reports) < 2:
        raise ValueError("need at least two models to compare")
    labels, samples, keys = [], {}, set()
    for rep in reports:
        label, vals = rep[0], np.asarray(rep[1], dtype=float).ravel()
        if len(rep) > 2:
            keys.add(rep[2])
        if label in samples:
            raise ValueError(f"duplicate model label {label!r}")
        if vals.size == 0:
            raise ValueError(f"no samples for {label!r}")
        labels.append(label)
        samples[label] = vals
    if len(keys) > 1:
        raise ValueError(f"models were evaluated on different test sets: {sorted(map(str, keys))}")
    quant = {k: _summary(v) for k, v in samples.items()}
    medians = {k: quant[k]["median"] for k in labels}
    best = labels[int(np.argmax([medians[k] for k in labels]))]
    ref = labels[0]
    alt = max(labels[1:], key=lambda k: (medians[k], -labels.index(k)))
    paired = samples[alt].size == samples[ref].size
    ratio = samples[alt] - samples[ref] if paired else np.array([medians[alt] - medians[ref]])
    median_ratio = medians[alt] - medians[ref]
    tie = abs(medians[best] - max(medians[k] for k in labels if k != best)) <= tol
    if tie:
        top = max(medians.values())
        best = next(k for k in labels if abs(medians[k] - top) <= tol)
    return ComparisonReport(labels, samples, medians, quant, ratio, float(median_ratio), best, paired, tie)
