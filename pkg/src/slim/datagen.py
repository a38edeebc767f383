"""Synthetic ground-truth generators for structure-recovery and model-selection studies."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .distributions import (
    Laplace,
    StudentT,
    random_gg_shape,
    sample_generalized_gaussian,
    sample_heavy_tailed,
)
from .model import Dataset, Permutation

SPARSITY_LEVELS = tuple(np.round(np.arange(1, 9) / 10.0, 1))

# mixing matrices of the two equivalent two-variable latent graphs
TOY_PAIR_MIXING = (
    np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]),  # no edge, latent on both
    np.array([[1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]),  # x1 -> x2, latent cancels on x2
)


@dataclass
class GroundTruthModel:
    """Generating model x = B x + C_D z_D + C_L z_L (no noise).

    ``R[i, j] = 1`` encodes the edge x_j -> x_i.  ``order`` lists the
    variables in a causal order (None for factor models).  ``kind`` is "dag"
    or "factor"; a factor model keeps its loadings in ``C_L`` with d = 0
    driving signals and ``B = 0``.
    """

    R: np.ndarray
    B: np.ndarray
    C_D: np.ndarray
    C_L: np.ndarray
    order: Optional[Permutation]
    source_kinds: list
    kind: str = "dag"
    Z: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.int64)
        self.B = np.asarray(self.B, dtype=float)
        if np.any((self.R == 0) & (self.B != 0)):
            raise ValueError("weights must be zero off the support")
        if not is_acyclic(self.R):
            raise ValueError("connectivity is cyclic")

    @property
    def d(self) -> int:
        return self.R.shape[0]

    @property
    def m(self) -> int:
        return self.C_L.shape[1] if self.kind == "dag" else 0

    def mixing(self) -> np.ndarray:
        """Equivalent factor-model mixing matrix (I - B)^-1 [diag(C_D) | C_L]."""
        C = np.hstack([np.diag(self.C_D), self.C_L]) if self.kind == "dag" else self.C_L
        return np.linalg.solve(np.eye(self.d) - self.B, C)

    def regenerate(self, Z: Optional[np.ndarray] = None) -> np.ndarray:
        """Rebuild X variable by variable in causal order."""
        Z = self.Z if Z is None else Z
        if self.kind == "factor":
            return self.C_L @ Z
        d = self.d
        drive = self.C_D[:, None] * Z[:d] + self.C_L @ Z[d:]
        X = np.zeros_like(drive)
        for i in self.order:
            X[i] = self.B[i] @ X + drive[i]
        return X

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "R": self.R.tolist(),
            "B": self.B.tolist(),
            "C_D": np.asarray(self.C_D).tolist(),
            "C_L": np.asarray(self.C_L).tolist(),
            "order": None if self.order is None else list(self.order),
            "source_kinds": [str(k) for k in self.source_kinds],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GroundTruthModel":
        d = len(obj["R"])
        C_L = np.asarray(obj["C_L"], dtype=float).reshape(d, -1)
        return cls(
            R=np.asarray(obj["R"]),
            B=np.asarray(obj["B"]),
            C_D=np.asarray(obj["C_D"], dtype=float),
            C_L=C_L,
            order=None if obj["order"] is None else Permutation(tuple(obj["order"])),
            source_kinds=list(obj["source_kinds"]),
            kind=obj.get("kind", "dag"),
        )


def is_acyclic(R) -> bool:
    R = np.asarray(R) != 0
    d = R.shape[0]
    indeg = R.sum(axis=1).astype(int)
    ready = [i for i in range(d) if indeg[i] == 0]
    seen = 0
    while ready:
        j = ready.pop()
        seen += 1
        for i in np.flatnonzero(R[:, j]):
            indeg[i] -= 1
            if indeg[i] == 0:
                ready.append(int(i))
    return seen == d


def topological_order(R) -> list[int]:
    R = np.asarray(R) != 0
    d = R.shape[0]
    indeg = R.sum(axis=1).astype(int)
    ready = sorted(i for i in range(d) if indeg[i] == 0)
    out = []
    while ready:
        j = ready.pop(0)
        out.append(j)
        for i in np.flatnonzero(R[:, j]):
            indeg[i] -= 1
            if indeg[i] == 0:
                ready.append(int(i))
        ready.sort()
    if len(out) != d:
        raise ValueError("connectivity is cyclic")
    return out


def permutable_to_triangular(D, tol: float = 0.0) -> bool:
    """Whether row and column permutations can zero everything above the diagonal.

    Exhaustive over row orders; the column assignment for a given row order is
    a deadline-scheduling problem solved greedily.  Meant for d <= 6.
    """
    nz = np.abs(np.asarray(D, dtype=float)) > tol
    d, K = nz.shape
    if K < d:
        nz = np.hstack([nz, np.zeros((d, d - K), dtype=bool)])
    for rows in itertools.permutations(range(d)):
        sub = nz[list(rows)]
        first = np.where(sub.any(axis=0), sub.argmax(axis=0), d)
        if _fits(first, d):
            return True
    return False


def _fits(first, d) -> bool:
    # a column in slot c < d needs its first nonzero at row position >= c;
    # slots beyond d are free, so they take the K - d most constrained columns
    f = np.sort(first)
    extra = len(f) - d
    if extra <= 0:
        return bool(np.all(f >= np.arange(len(f))))
    return bool(np.all(f[extra:] >= np.arange(d)))


def _random_signs(gen, shape):
    return np.where(gen.random(shape) < 0.5, -1.0, 1.0)


def _gg_sources(gen, k, n, ranges=((0.5, 0.8), (1.2, 2.0))):
    shapes = [random_gg_shape(gen, ranges) for _ in range(k)]
    Z = np.vstack([sample_generalized_gaussian(s, gen, n) for s in shapes]) if k else np.zeros((0, n))
    if n > 1:
        # exact zero mean and unit variance per row, as in the benchmark generator
        Z = (Z - Z.mean(axis=1, keepdims=True)) / Z.std(axis=1, keepdims=True)
    return Z, [f"gg({s:.3f})" for s in shapes]


def _relabel(gen, d):
    perm = gen.permutation(d)  # new variable r is old variable perm[r]
    return perm, np.argsort(perm)


def _lower_weights(gen, d, sparsity):
    pos = [(i, j) for i in range(d) for j in range(i)]
    B = np.zeros((d, d))
    for i, j in pos:
        B[i, j] = gen.uniform(0.5, 1.5) * _random_signs(gen, None)
    n_drop = int(round(sparsity * len(pos)))
    for k in gen.permutation(len(pos))[:n_drop]:
        B[pos[k]] = 0.0
    return B


def generate_lingam_suite(d: int, N: int, seed: int, dense: Optional[bool] = None, gg_ranges=((0.5, 0.8), (1.2, 2.0))):
    """Random linear DAG with generalized-Gaussian sources, rows shuffled.

    Half of the draws are fully connected; the rest drop a fraction of the
    d(d-1)/2 possible edges taken from {0.1, ..., 0.8}.  Weights are
    uniform in +-[0.5, 1.5].  ``dense`` forces the structure type.
    """
    if d < 2:
        raise ValueError("need at least 2 variables")
    gen = np.random.default_rng(seed)
    is_dense = gen.random() < 0.5
    if dense is not None:
        is_dense = bool(dense)
    sparsity = 0.0 if is_dense else float(gen.choice(SPARSITY_LEVELS))
    B0 = _lower_weights(gen, d, sparsity)
    Z0, kinds0 = _gg_sources(gen, d, N, gg_ranges)
    X0 = np.zeros((d, N))
    for i in range(d):
        X0[i] = B0[i] @ X0 + Z0[i]
    perm, inv = _relabel(gen, d)
    B = B0[np.ix_(perm, perm)]
    truth = GroundTruthModel(
        R=(B != 0).astype(int),
        B=B,
        C_D=np.ones(d),
        C_L=np.zeros((d, 0)),
        order=Permutation(tuple(int(v) for v in inv)),
        source_kinds=[kinds0[k] for k in perm],
        Z=Z0[perm],
    )
    return Dataset(X0[perm]), truth


def weights_from_structure(R, seed: int, noise_var: float = 0.2) -> np.ndarray:
    """sign(N(0,1)) + N(0, noise_var) on the support of R, zero elsewhere."""
    R = np.asarray(R)
    if not is_acyclic(R):
        raise ValueError("connectivity is cyclic")
    gen = np.random.default_rng(seed)
    w = np.sign(gen.standard_normal(R.shape)) + np.sqrt(noise_var) * gen.standard_normal(R.shape)
    return np.where(R != 0, w, 0.0)


def generate_toy_latent_pair(variant: str = "i", N: int = 500, seed: int = 0):
    """Two observed variables and one latent: x1 = z1 + zL, x2 = x1 + z2 - zL.

    Variant "u" uses unit-variance Laplace signals throughout; variant "i"
    makes the latent signal Cauchy.
    """
    if variant not in ("u", "i"):
        raise ValueError(f"variant must be 'u' or 'i', got {variant!r}")
    gen = np.random.default_rng(seed)
    lap = Laplace(1.0)
    z1 = sample_heavy_tailed(lap, gen, N)
    z2 = sample_heavy_tailed(lap, gen, N)
    if variant == "u":
        zL = sample_heavy_tailed(lap, gen, N)
        kinds = ["laplace", "laplace", "laplace"]
    else:
        zL = sample_heavy_tailed(StudentT(1.0, 1.0), gen, N)
        kinds = ["laplace", "laplace", "cauchy"]
    B = np.array([[0.0, 0.0], [1.0, 0.0]])
    truth = GroundTruthModel(
        R=(B != 0).astype(int),
        B=B,
        C_D=np.ones(2),
        C_L=np.array([[1.0], [-1.0]]),
        order=Permutation((0, 1)),
        source_kinds=kinds,
        Z=np.vstack([z1, z2, zL]),
    )
    return Dataset(truth.regenerate()), truth


def nonlinear_toy_functions(x1, z2=0.0, z3=0.0, z4=0.0):
    x2 = x1**2 + z2
    x3 = 4.0 * np.sqrt(np.abs(x1)) + z3
    x4 = 2.0 * np.sin(x2) + 2.0 * np.sin(x3) + z4
    return x2, x3, x4


NONLINEAR_TOY_ORDERS = ((0, 1, 2, 3), (0, 2, 1, 3))
NONLINEAR_TOY_EDGES = ((1, 0), (2, 0), (3, 1), (3, 2))  # (child, parent)


def generate_nonlinear_toy(N: int = 100, seed: int = 0, gg_ranges=((0.5, 0.8), (1.2, 2.0))):
    """Four-variable network with square, root and sine links."""
    gen = np.random.default_rng(seed)
    Z, kinds = _gg_sources(gen, 4, N, gg_ranges)
    x1 = Z[0]
    x2, x3, x4 = nonlinear_toy_functions(x1, Z[1], Z[2], Z[3])
    R = np.zeros((4, 4), dtype=int)
    for child, parent in NONLINEAR_TOY_EDGES:
        R[child, parent] = 1
    truth = GroundTruthModel(
        R=R,
        B=R.astype(float),
        C_D=np.ones(4),
        C_L=np.zeros((4, 0)),
        order=Permutation(NONLINEAR_TOY_ORDERS[0]),
        source_kinds=kinds,
        kind="dag",
        Z=Z,
    )
    return Dataset(np.vstack([x1, x2, x3, x4])), truth


def generate_factor_model(d: int, N: int, seed: int, max_tries: int = 1000):
    """Square factor model whose mixing matrix admits no DAG representation.

    Loadings are uniform in +-[0.5, 1.5] with a random fraction (0 to 40%)
    of zeros; draws that can be permuted to triangular form are rejected.
    """
    gen = np.random.default_rng(seed)
    for _ in range(max_tries):
        D = gen.uniform(0.5, 1.5, (d, d)) * _random_signs(gen, (d, d))
        n_drop = int(round(gen.choice([0.0, 0.1, 0.2, 0.3, 0.4]) * d * d))
        D.flat[gen.permutation(d * d)[:n_drop]] = 0.0
        if np.any(~D.any(axis=0)) or np.any(~D.any(axis=1)):
            continue
        if abs(np.linalg.det(D)) < 1e-3:
            continue
        if not permutable_to_triangular(D):
            break
    else:
        raise RuntimeError("could not draw a non-triangular mixing matrix")
    Z, kinds = _gg_sources(gen, d, N)
    truth = GroundTruthModel(
        R=np.zeros((d, d), dtype=int),
        B=np.zeros((d, d)),
        C_D=np.zeros(d),
        C_L=D,
        order=None,
        source_kinds=kinds,
        kind="factor",
        Z=Z,
    )
    return Dataset(D @ Z), truth


def generate_latent_dag(d: int = 5, m: int = 1, N: int = 500, seed: int = 0):
    """Sparse DAG with m latent confounders, each touching at least 2 variables."""
    gen = np.random.default_rng(seed)
    sparsity = float(gen.choice(SPARSITY_LEVELS))
    B0 = _lower_weights(gen, d, sparsity)
    C_L0 = np.zeros((d, m))
    for j in range(m):
        while True:
            hit = gen.random(d) < 0.5
            if hit.sum() >= 2:
                break
        C_L0[hit, j] = gen.uniform(0.5, 1.5, hit.sum()) * _random_signs(gen, hit.sum())
    Z0, kinds0 = _gg_sources(gen, d + m, N)
    drive = Z0[:d] + C_L0 @ Z0[d:]
    X0 = np.zeros((d, N))
    for i in range(d):
        X0[i] = B0[i] @ X0 + drive[i]
    perm, inv = _relabel(gen, d)
    B = B0[np.ix_(perm, perm)]
    truth = GroundTruthModel(
        R=(B != 0).astype(int),
        B=B,
        C_D=np.ones(d),
        C_L=C_L0[perm],
        order=Permutation(tuple(int(v) for v in inv)),
        source_kinds=[kinds0[k] for k in perm] + kinds0[d:],
        Z=np.vstack([Z0[:d][perm], Z0[d:]]),
    )
    return Dataset(X0[perm]), truth


def generate_model_comparison_case(d: int, N: int, seed: int):
    """A DAG (from the LiNGAM-style suite) or a factor model with equal probability."""
    gen = np.random.default_rng(seed)
    sub = int(gen.integers(2**31))
    if gen.random() < 0.5:
        return generate_lingam_suite(d, N, sub)
    return generate_factor_model(d, N, sub)
