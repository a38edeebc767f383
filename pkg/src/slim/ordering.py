"""Metropolis-Hastings search over variable orderings driven by factor-model draws."""

from __future__ import annotations

import json
from typing import Iterable, Optional

import numpy as np

from . import _kernels as kern
from .distributions import RngLike, as_generator
from .model import Dataset, FactorState, Permutation


class PermutationCandidateSet:
    """Acceptance tally of row orderings, remembering when each was first seen."""

    def __init__(self):
        self._counts: dict[tuple, int] = {}

    def add(self, p, count: int = 1):
        if count < 1:
            raise ValueError("counts must be positive")
        key = tuple(int(v) for v in (p.order if isinstance(p, Permutation) else p))
        self._counts[key] = self._counts.get(key, 0) + int(count)

    def __len__(self):
        return len(self._counts)

    def __contains__(self, p):
        key = tuple(p.order if isinstance(p, Permutation) else p)
        return key in self._counts

    def count(self, p) -> int:
        key = tuple(p.order if isinstance(p, Permutation) else p)
        return self._counts.get(key, 0)

    @property
    def total(self) -> int:
        return sum(self._counts.values())

    def items(self):
        """(Permutation, count) in order of first acceptance."""
        return [(Permutation(k), c) for k, c in self._counts.items()]

    def merge(self, other: "PermutationCandidateSet") -> "PermutationCandidateSet":
        out = PermutationCandidateSet()
        for src in (self, other):
            for key, c in src._counts.items():
                out.add(key, c)
        return out

    def to_json(self) -> str:
        return json.dumps([{"order": list(k), "count": c} for k, c in self._counts.items()])

    @classmethod
    def from_json(cls, text: str) -> "PermutationCandidateSet":
        out = cls()
        for entry in json.loads(text):
            out.add(entry["order"], entry["count"])
        return out


def propose_transposition(p: Permutation, rng: RngLike = None) -> Permutation:
    """Swap two positions chosen uniformly among the d(d-1)/2 pairs."""
    d = len(p)
    if d < 2:
        raise ValueError("transpositions need at least 2 elements")
    gen = as_generator(rng)
    a = int(gen.integers(0, d))
    b = int(gen.integers(0, d - 1))
    if b >= a:
        b += 1
    order = list(p.order)
    order[a], order[b] = order[b], order[a]
    return Permutation(tuple(order))


def support_mask(p: Permutation, pf: Permutation, d: int) -> np.ndarray:
    """1 where D[i, j] survives the triangular mask under row order p and column order pf."""
    rr = p.rank()
    rc = pf.rank()
    return ~((rc[None, :] < d) & (rc[None, :] > rr[:, None]))


def masked_log_likelihood(data: Dataset, D, p: Permutation, pf: Permutation, Z, psi) -> float:
    """Gaussian log-likelihood of the data under the triangular-masked loadings."""
    D = np.ascontiguousarray(D, dtype=float)
    Z = np.ascontiguousarray(Z, dtype=float)
    if D.shape != (data.d, Z.shape[0]) or Z.shape[1] != data.n or len(p) != data.d or len(pf) != D.shape[1]:
        raise ValueError("dimension mismatch between data, loadings, factors and orderings")
    return float(
        kern.masked_log_likelihood(
            np.ascontiguousarray(data.filled()), data.observed_mask(), D, Z,
            np.asarray(psi, dtype=float), p.rank(), pf.rank(),
        )
    )


def mh_update_permutations(
    state: FactorState,
    data: Dataset,
    rng: RngLike = None,
    proposal: Optional[tuple[Permutation, Permutation]] = None,
    candidates: Optional[PermutationCandidateSet] = None,
):
    """One M-H step over (P, Pf).  Returns the new state and the acceptance flag.

    ``proposal`` forces the proposed pair instead of random transpositions.
    Accepted row orderings are added to ``candidates`` when given.
    """
    gen = as_generator(rng)
    P = state.P if state.P is not None else Permutation.identity(state.d)
    Pf = state.Pf if state.Pf is not None else Permutation.identity(state.n_factors)
    if proposal is None:
        proposal = (propose_transposition(P, gen), propose_transposition(Pf, gen))
    Pn, Pfn = proposal
    cur = masked_log_likelihood(data, state.C, P, Pf, state.Z, state.psi)
    new = masked_log_likelihood(data, state.C, Pn, Pfn, state.Z, state.psi)
    delta = new - cur
    accept = bool(delta >= 0 or np.log(gen.random()) < delta)
    out = state.copy()
    if accept:
        out.P, out.Pf = Pn, Pfn
        if candidates is not None:
            candidates.add(Pn)
    else:
        out.P, out.Pf = P, Pf
    return out, accept


def top_candidates(cset: PermutationCandidateSet, m_top: int = 10) -> list[Permutation]:
    """Most frequently accepted orderings; ties keep the earliest first acceptance."""
    if len(cset) == 0:
        raise ValueError("empty candidate set")
    if m_top < 1:
        raise ValueError("m_top must be at least 1")
    items = cset.items()
    ranked = sorted(range(len(items)), key=lambda i: (-items[i][1], i))
    return [items[i][0] for i in ranked[:m_top]]


def tally_block(cset: PermutationCandidateSet, accepted: np.ndarray, visited: np.ndarray):
    for flag, order in zip(accepted, visited):
        if flag:
            cset.add(order)
