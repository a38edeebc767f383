import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from slim.factor import init_factor_state, run_factor_chain
from slim.model import Dataset, Hyperparameters, Permutation, standardize, validate_hyperparameters
from slim.ordering import (
    PermutationCandidateSet,
    masked_log_likelihood,
    mh_update_permutations,
    propose_transposition,
    support_mask,
    top_candidates,
)


def test_transposition_uniform_over_pairs():
    # chi-square against the d(d-1)/2 equally likely swaps
    d = 4
    p = Permutation.identity(d)
    pairs = list(itertools.combinations(range(d), 2))
    counts = dict.fromkeys(pairs, 0)
    gen = np.random.default_rng(0)
    for _ in range(6000):
        q = propose_transposition(p, gen)
        diff = tuple(i for i in range(d) if q.order[i] != i)
        assert len(diff) == 2
        counts[diff] += 1
    assert stats.chisquare(list(counts.values())).pvalue > 0.01


def test_transposition_needs_two():
    with pytest.raises(ValueError):
        propose_transposition(Permutation((0,)))


def test_support_mask_identity_is_lower_triangular():
    d = 3
    S = support_mask(Permutation.identity(d), Permutation.identity(d), d)
    assert np.array_equal(S, np.tril(np.ones((d, d), dtype=bool)))
    # extra factor columns beyond the first d are never masked
    S = support_mask(Permutation.identity(d), Permutation.identity(d + 1), d)
    assert S[:, 3].all()


def test_masked_log_likelihood_direct():
    gen = np.random.default_rng(1)
    d, N = 3, 7
    X = gen.standard_normal((d, N))
    D = gen.standard_normal((d, d))
    Z = gen.standard_normal((d, N))
    psi = np.array([0.5, 1.0, 2.0])
    p, pf = Permutation((2, 0, 1)), Permutation((1, 2, 0))
    Dm = D * support_mask(p, pf, d)
    mu = Dm @ Z
    direct = stats.norm.logpdf(X, mu, np.sqrt(psi)[:, None]).sum()
    assert masked_log_likelihood(Dataset(X), D, p, pf, Z, psi) == pytest.approx(direct, abs=1e-10)


def test_masked_log_likelihood_skips_missing():
    gen = np.random.default_rng(2)
    X = gen.standard_normal((2, 5))
    M = np.ones((2, 5), dtype=bool)
    M[0, 3] = False
    D, Z, psi = np.eye(2), gen.standard_normal((2, 5)), np.ones(2)
    p = Permutation.identity(2)
    full = stats.norm.logpdf(X, Z, 1.0)
    got = masked_log_likelihood(Dataset(X, mask=M), D, p, p, Z, psi)
    assert got == pytest.approx(full.sum() - full[0, 3], abs=1e-12)


def test_masked_log_likelihood_shape_checks():
    with pytest.raises(ValueError):
        masked_log_likelihood(Dataset(np.zeros((2, 3)) + np.arange(3)), np.eye(3), Permutation.identity(2),
                              Permutation.identity(3), np.zeros((3, 3)), np.ones(2))


def test_mh_forced_proposal_accepts_improvement():
    gen = np.random.default_rng(3)
    hp = validate_hyperparameters(None, "factor")
    z = gen.laplace(size=(2, 200))
    X = np.vstack([z[0], 0.9 * z[0] + z[1]])
    st_ = init_factor_state(2, 200, 2, hp, 0)
    st_.C = np.array([[1.0, 0.0], [0.9, 1.0]])
    st_.Q = np.ones((2, 2))
    st_.Z, st_.psi = z, np.full(2, 0.01)
    st_.P = Permutation((1, 0))
    st_.Pf = Permutation((1, 0))
    cs = PermutationCandidateSet()
    out, ok = mh_update_permutations(st_, Dataset(X), gen, (Permutation((0, 1)), Permutation((0, 1))), cs)
    assert ok and out.P.order == (0, 1)
    assert cs.count((0, 1)) == 1
    # the reverse move loses the 0.9 loading and is essentially never accepted
    back, ok = mh_update_permutations(out, Dataset(X), gen, (Permutation((1, 0)), Permutation((1, 0))))
    assert not ok and back.P.order == (0, 1)


def test_candidate_set_tally_and_json():
    cs = PermutationCandidateSet()
    cs.add((1, 0, 2))
    cs.add(Permutation((0, 1, 2)), 3)
    cs.add((1, 0, 2))
    assert cs.total == 5 and len(cs) == 2
    assert PermutationCandidateSet.from_json(cs.to_json()).items() == cs.items()
    merged = cs.merge(cs)
    assert merged.count((0, 1, 2)) == 6 and cs.count((0, 1, 2)) == 3
    with pytest.raises(ValueError):
        cs.add((0, 1, 2), 0)


def test_top_candidates_ties_keep_first_seen():
    cs = PermutationCandidateSet()
    for order, c in [((2, 1, 0), 2), ((0, 1, 2), 5), ((1, 2, 0), 2), ((0, 2, 1), 1)]:
        cs.add(order, c)
    top = [p.order for p in top_candidates(cs, 3)]
    assert top == [(0, 1, 2), (2, 1, 0), (1, 2, 0)]
    assert len(top_candidates(cs, 10)) == 4
    with pytest.raises(ValueError):
        top_candidates(PermutationCandidateSet())
    with pytest.raises(ValueError):
        top_candidates(cs, 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.permutations([0, 1, 2, 3]), st.integers(1, 9)), min_size=1, max_size=12),
       st.integers(1, 12))
def test_top_candidates_sorted_by_count(entries, m):
    cs = PermutationCandidateSet()
    for order, c in entries:
        cs.add(tuple(order), c)
    top = top_candidates(cs, m)
    counts = [cs.count(p) for p in top]
    assert counts == sorted(counts, reverse=True)
    assert len(top) == min(m, len(cs))
    # nothing left out beats the last one kept
    rest = [c for p, c in cs.items() if p not in top]
    assert all(c <= counts[-1] for c in rest)


def test_two_variable_search_prefers_true_ordering():
    gen = np.random.default_rng(4)
    N = 1000
    e = gen.laplace(size=(2, N))
    X = np.vstack([e[0], 0.8 * e[0] + e[1]])
    hp = Hyperparameters(n_samples=2000, n_burnin=1000)
    chain = run_factor_chain(standardize(Dataset(X)), hp, "order_search", 5)
    cs = chain.candidates
    assert cs.count((0, 1)) / cs.total > 0.8
    assert top_candidates(cs, 1)[0].order == (0, 1)


def test_fallback_when_no_acceptance_after_burn_in():
    data = Dataset(np.random.default_rng(6).standard_normal((2, 30)))
    hp = Hyperparameters(n_samples=3, n_burnin=2, mh_perm_reps=1)
    chain = run_factor_chain(data, hp, "order_search", 7)
    assert len(chain.candidates) >= 1
