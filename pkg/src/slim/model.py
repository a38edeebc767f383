"""Domain types shared by the samplers, hyperparameter defaults and data preparation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class SamplerError(RuntimeError):
    """Raised when a chain produces non-finite state."""


# Latent signal kinds, shared with the numba kernels.
LAPLACE = 0
STUDENT_T = 1
GAUSSIAN_PROCESS = 2

# Structural role of each weight entry, shared with the numba kernels.
ROLE_ZERO = 0  # structurally absent (outside the allowed support)
ROLE_SPIKE_SLAB = 1
ROLE_SLAB = 2  # always present, no spike
ROLE_FROZEN = 3  # held at its current value


@dataclass
class Dataset:
    """Observations with variables as rows and samples as columns.

    ``mask`` marks observed entries with 1.  ``center`` and ``scale`` are set
    by :func:`standardize` so results can be mapped back to the raw units.
    """

    values: np.ndarray
    names: Optional[list[str]] = None
    mask: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"values must be a d x N matrix, got shape {values.shape}")
        d, n = values.shape
        if d < 2:
            raise ValueError(f"need at least 2 variables, got {d}")
        if self.names is None:
            self.names = [f"x{i + 1}" for i in range(d)]
        self.names = [str(name) for name in self.names]
        if len(self.names) != d:
            raise ValueError(f"{len(self.names)} names for {d} variables")
        if self.mask is not None:
            mask = np.asarray(self.mask)
            if mask.shape != values.shape:
                raise ValueError(f"mask shape {mask.shape} != values shape {values.shape}")
            self.mask = mask.astype(bool)
            observed = values[self.mask]
        else:
            observed = values
        if not np.all(np.isfinite(observed)):
            raise ValueError("non-finite entries among observed values")
        self.values = values

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def observed_mask(self) -> np.ndarray:
        """Float mask (1 observed, 0 missing); all ones when no mask is set."""
        if self.mask is None:
            return np.ones_like(self.values)
        return self.mask.astype(float)

    def filled(self) -> np.ndarray:
        """Values with unobserved entries replaced by 0 (the standardized mean)."""
        if self.mask is None:
            return self.values.copy()
        return np.where(self.mask, self.values, 0.0)

    def columns(self, idx) -> "Dataset":
        mask = None if self.mask is None else self.mask[:, idx]
        return Dataset(self.values[:, idx], list(self.names), mask, self.center, self.scale)

    def rows(self, idx) -> "Dataset":
        idx = list(idx)
        mask = None if self.mask is None else self.mask[idx]
        center = None if self.center is None else self.center[idx]
        scale = None if self.scale is None else self.scale[idx]
        return Dataset(self.values[idx], [self.names[i] for i in idx], mask, center, scale)

    def standardize_with(self, center, scale) -> "Dataset":
        """Apply an existing standardization (e.g. training statistics to a test split)."""
        center = np.asarray(center, dtype=float)
        scale = np.asarray(scale, dtype=float)
        values = (self.values - center[:, None]) / scale[:, None]
        return Dataset(values, list(self.names), self.mask, center, scale)

    def destandardize(self, values=None) -> np.ndarray:
        values = self.values if values is None else np.asarray(values, dtype=float)
        if self.center is None:
            return values.copy()
        return values * self.scale[:, None] + self.center[:, None]


@dataclass
class Hyperparameters:
    """Model and chain settings.  ``None`` marks a field to be filled with its default."""

    s_s: Optional[float] = None
    s_r: Optional[float] = None
    alpha_p: Optional[float] = None
    alpha_m: Optional[float] = None
    beta_p: Optional[float] = None
    beta_m: Optional[float] = None
    t_s: Optional[float] = None
    t_r: Optional[float] = None
    u_s: Optional[float] = None
    k_s: Optional[float] = None
    k_r: Optional[float] = None
    lam: Optional[float] = None
    theta: Optional[float] = None
    n_rep: Optional[int] = None
    n_samples: Optional[int] = None
    n_burnin: Optional[int] = None
    m_top: Optional[int] = None
    mh_perm_reps: Optional[int] = None

    def replace(self, **changes) -> "Hyperparameters":
        return dataclasses.replace(self, **changes)


_DEFAULTS = dict(
    s_s=20.0,
    s_r=1.0,
    alpha_p=10.0,
    alpha_m=0.95,
    beta_p=100.0,
    t_s=2.0,
    t_r=1.0,
    u_s=2.0,
    k_s=2.0,
    k_r=0.02,
    lam=1.0,
    theta=1.0,
    n_rep=500,
    m_top=10,
    mh_perm_reps=10,
)

_CHAIN_DEFAULTS = {
    "factor": (10000, 5000),
    "dag": (3000, 1000),
}

_POSITIVE = ("s_s", "s_r", "alpha_p", "beta_p", "t_s", "t_r", "u_s", "k_s", "k_r", "lam", "theta")


def validate_hyperparameters(
    raw: Optional[Hyperparameters] = None,
    mode: str = "factor",
    dense: bool = False,
    latents: int = 0,
) -> Hyperparameters:
    """Fill defaults for absent fields and check every constraint.

    ``mode`` is ``"factor"`` or ``"dag"``; it selects the column sparsity mean
    (0.9 for factor models, 0.1 for sparse DAGs, 0.99 with ``dense``) and the
    chain lengths.  DAGs with latent variables get twice the default length.
    """
    if mode not in _CHAIN_DEFAULTS:
        raise ValueError(f"unknown mode {mode!r}")
    raw = raw if raw is not None else Hyperparameters()
    values = {f.name: getattr(raw, f.name) for f in dataclasses.fields(raw)}
    for name, default in _DEFAULTS.items():
        if values[name] is None:
            values[name] = default
    if values["beta_m"] is None:
        if mode == "factor":
            values["beta_m"] = 0.9
        else:
            values["beta_m"] = 0.99 if dense else 0.1
    n_samples, n_burnin = _CHAIN_DEFAULTS[mode]
    if mode == "dag" and latents > 0:
        n_samples, n_burnin = 2 * n_samples, 2 * n_burnin
    if values["n_samples"] is None:
        values["n_samples"] = n_samples
    if values["n_burnin"] is None:
        values["n_burnin"] = n_burnin

    for name in _POSITIVE:
        if not values[name] > 0:
            raise ValueError(f"{name} must be strictly positive, got {values[name]}")
    for name in ("alpha_m", "beta_m"):
        if not 0.0 < values[name] < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {values[name]}")
    for name in ("n_rep", "n_samples", "m_top"):
        if int(values[name]) < 1:
            raise ValueError(f"{name} must be at least 1, got {values[name]}")
    if int(values["n_burnin"]) < 0 or int(values["mh_perm_reps"]) < 0:
        raise ValueError("n_burnin and mh_perm_reps must be non-negative")
    for name in ("n_rep", "n_samples", "n_burnin", "m_top", "mh_perm_reps"):
        values[name] = int(values[name])
    return Hyperparameters(**values)


def standardize(data: Dataset) -> Dataset:
    """Zero mean, unit sample standard deviation per row over observed entries."""
    values = data.values
    mask = data.mask if data.mask is not None else np.ones(values.shape, dtype=bool)
    center = np.empty(data.d)
    scale = np.empty(data.d)
    for i in range(data.d):
        row = values[i, mask[i]]
        if row.size < 2 or np.unique(row).size < 2:
            raise ValueError(f"variable {data.names[i]!r} is constant or has fewer than 2 observed values")
        center[i] = row.mean()
        scale[i] = row.std(ddof=1)
    out = data.standardize_with(center, scale)
    if data.center is not None:
        # compose with the earlier standardization so destandardize stays correct
        out.center = data.center + data.scale * center
        out.scale = data.scale * scale
    return out


def partition(data: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Column-wise train/test split; the test part gets round(fraction * N) columns."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in [0, 1), got {test_fraction}")
    n_test = int(np.floor(test_fraction * data.n + 0.5))
    order = np.random.default_rng(seed).permutation(data.n)
    test_idx = np.sort(order[:n_test])
    train_idx = np.sort(order[n_test:])
    return data.columns(train_idx), data.columns(test_idx)


@dataclass(frozen=True)
class Permutation:
    """Variable ordering; ``order[r]`` is the variable placed at position ``r``."""

    order: tuple

    def __post_init__(self):
        order = tuple(int(v) for v in self.order)
        if sorted(order) != list(range(len(order))):
            raise ValueError(f"not a permutation: {order}")
        object.__setattr__(self, "order", order)

    @classmethod
    def identity(cls, d: int) -> "Permutation":
        return cls(tuple(range(d)))

    def __len__(self):
        return len(self.order)

    def __iter__(self):
        return iter(self.order)

    def __getitem__(self, r):
        return self.order[r]

    def compose(self, other: "Permutation") -> "Permutation":
        """(self o other)[r] = self[other[r]]."""
        if len(other) != len(self):
            raise ValueError("permutations of different sizes")
        return Permutation(tuple(self.order[k] for k in other.order))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.order)
        for pos, var in enumerate(self.order):
            inv[var] = pos
        return Permutation(tuple(inv))

    def rank(self) -> np.ndarray:
        """Position of every variable in the ordering."""
        return np.asarray(self.inverse().order, dtype=np.int64)

    def matrix(self) -> np.ndarray:
        """Permutation matrix P with (P x)[r] = x[order[r]]."""
        d = len(self.order)
        m = np.zeros((d, d))
        m[np.arange(d), self.order] = 1.0
        return m

    def to_list(self) -> list[int]:
        return list(self.order)


@dataclass
class LatentSpec:
    """Per-row prior of the latent signals.

    Laplace rows use an exponential mixing density with rate ``lam2`` (so the
    signal variance is ``1 / lam2``); Student-t rows use gamma mixing with
    ``theta`` degrees of freedom and scale ``sigma2``.
    """

    kind: np.ndarray
    lam2: np.ndarray
    theta: np.ndarray
    sigma2: np.ndarray

    @classmethod
    def build(cls, kinds: Sequence[str], lam: float = 1.0, theta: float = 1.0) -> "LatentSpec":
        codes = {"laplace": LAPLACE, "student_t": STUDENT_T, "cauchy": STUDENT_T, "gp": GAUSSIAN_PROCESS}
        kind = np.array([codes[k] for k in kinds], dtype=np.int64)
        n = len(kind)
        th = np.full(n, float(theta))
        th[[k == "cauchy" for k in kinds]] = 1.0
        return cls(kind, np.full(n, float(lam) ** 2), th, np.ones(n))

    def __len__(self):
        return len(self.kind)

    def names(self) -> list[str]:
        out = []
        for k, th in zip(self.kind, self.theta):
            if k == LAPLACE:
                out.append("laplace")
            elif k == GAUSSIAN_PROCESS:
                out.append("gp")
            else:
                out.append("cauchy" if th == 1.0 else "student_t")
        return out

    def copy(self) -> "LatentSpec":
        return LatentSpec(self.kind.copy(), self.lam2.copy(), self.theta.copy(), self.sigma2.copy())


def _copy_arrays(obj):
    changes = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, np.ndarray):
            changes[f.name] = value.copy()
        elif isinstance(value, LatentSpec):
            changes[f.name] = value.copy()
    return dataclasses.replace(obj, **changes)


@dataclass
class FactorState:
    """Full state of the sparse factor model sampler.

    ``C`` is d x K with mask ``Q``; ``Z`` and ``upsilon`` are K x N.  ``role``
    gives the structural role of each loading (see the ``ROLE_*`` constants).
    ``P`` and ``Pf`` are the row and column orderings used by order search.
    """

    C: np.ndarray
    Z: Optional[np.ndarray]
    psi: np.ndarray
    tau: np.ndarray
    Q: np.ndarray
    eta: np.ndarray
    nu: np.ndarray
    upsilon: Optional[np.ndarray]
    latent: LatentSpec
    role: np.ndarray
    P: Optional[Permutation] = None
    Pf: Optional[Permutation] = None

    @property
    def d(self) -> int:
        return self.C.shape[0]

    @property
    def n_factors(self) -> int:
        return self.C.shape[1]

    def copy(self) -> "FactorState":
        return _copy_arrays(self)

    def check_invariants(self):
        _check_weight_invariants(self.C, self.Q, self.eta, self.role)
        _check_positive(psi=self.psi, tau=self.tau)
        if self.upsilon is not None:
            _check_positive(upsilon=self.upsilon)


@dataclass
class DagState:
    """State of the DAG sampler under a fixed ordering ``P``.

    Weights are stored side by side as ``W = [B | C_D | C_L]`` (d x (2d+m)),
    with ``C_D`` occupying a diagonal d x d block.  ``H`` is the matching
    binary mask ``[R | Q_D | Q_L]``.  ``Z`` stacks the d driving signals over
    the m latent signals.  ``Y`` holds Gaussian-process transformed parents
    for the non-linear variant and is ``None`` in the linear model.
    """

    P: Permutation
    W: np.ndarray
    H: np.ndarray
    tau: np.ndarray
    eta: np.ndarray
    nu: np.ndarray
    role: np.ndarray
    Z: Optional[np.ndarray]
    upsilon: Optional[np.ndarray]
    psi: np.ndarray
    latent: LatentSpec
    Y: Optional[np.ndarray] = None

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.W.shape[1] - 2 * self.d

    @property
    def B(self) -> np.ndarray:
        return self.W[:, : self.d]

    @property
    def R(self) -> np.ndarray:
        return self.H[:, : self.d]

    @property
    def C_D(self) -> np.ndarray:
        d = self.d
        return np.diag(self.W[:, d : 2 * d]).copy()

    @property
    def Q_D(self) -> np.ndarray:
        d = self.d
        return self.H[:, d : 2 * d]

    @property
    def C_L(self) -> np.ndarray:
        return self.W[:, 2 * self.d :]

    @property
    def Q_L(self) -> np.ndarray:
        return self.H[:, 2 * self.d :]

    @property
    def C(self) -> np.ndarray:
        """Loadings on the latent signals, [diag(C_D) | C_L]."""
        return self.W[:, self.d :]

    def copy(self) -> "DagState":
        return _copy_arrays(self)

    def check_invariants(self):
        _check_weight_invariants(self.W, self.H, self.eta, self.role)
        _check_positive(psi=self.psi)
        rank = self.P.rank()
        R = self.R
        rows, cols = np.nonzero(R)
        if np.any(rank[cols] >= rank[rows]):
            raise AssertionError("edge violates the ordering (cycle or self-loop)")
        if not np.array_equal(self.Q_D, np.eye(self.d, dtype=self.H.dtype)):
            raise AssertionError("driving-signal mask is not the identity pattern")


def _check_weight_invariants(W, H, eta, role):
    if not np.array_equal(W != 0, H != 0):
        raise AssertionError("weights and mask disagree on zero pattern")
    if np.any((eta == 0) & (H != 0) & (role == ROLE_SPIKE_SLAB)):
        raise AssertionError("eta is zero on an active entry")
    if np.any((role == ROLE_ZERO) & (H != 0)):
        raise AssertionError("entry outside the allowed support is active")


def _check_positive(**arrays):
    for name, arr in arrays.items():
        if not np.all(np.asarray(arr) > 0):
            raise AssertionError(f"{name} must be strictly positive")
