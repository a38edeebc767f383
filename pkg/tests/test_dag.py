import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slim.dag import (
    dag_roles,
    edge_list,
    implied_mixing,
    init_from_ordering,
    run_dag_chain,
    select_best_candidate,
)
from slim.datagen import generate_lingam_suite
from slim.metrics import structure_metrics
from slim.model import (
    ROLE_FROZEN,
    ROLE_SLAB,
    ROLE_SPIKE_SLAB,
    ROLE_ZERO,
    Dataset,
    Hyperparameters,
    Permutation,
    standardize,
    validate_hyperparameters,
)


def test_roles_identity_order_d4():
    role = dag_roles(Permutation.identity(4), 4, 1)
    B = role[:, :4]
    assert (B == ROLE_SPIKE_SLAB).sum() == 6
    assert np.array_equal(B == ROLE_SPIKE_SLAB, np.tril(np.ones((4, 4), dtype=bool), -1))
    assert np.array_equal(np.diag(role[:, 4:8]), [ROLE_SLAB] * 4)
    assert (role[:, 4:8][~np.eye(4, dtype=bool)] == ROLE_ZERO).all()
    assert (role[:, 8] == ROLE_SPIKE_SLAB).all()
    assert (np.diag(dag_roles(Permutation.identity(4), 4, 0, fixed_cd=True)[:, 4:]) == ROLE_FROZEN).all()


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6).flatmap(lambda d: st.permutations(list(range(d)))))
def test_roles_follow_ordering(order):
    d = len(order)
    p = Permutation(tuple(order))
    B = dag_roles(p, d, 0)[:, :d] == ROLE_SPIKE_SLAB
    assert B.sum() == d * (d - 1) // 2
    # permuting to the ordering gives a strictly lower-triangular pattern
    idx = list(order)
    assert np.array_equal(B[np.ix_(idx, idx)], np.tril(np.ones((d, d), dtype=bool), -1))


def test_init_validates_inputs():
    hp = validate_hyperparameters(None, "dag")
    with pytest.raises(ValueError):
        init_from_ordering(Permutation.identity(3), 4, 0, hp)
    with pytest.raises(ValueError):
        init_from_ordering(Permutation.identity(3), 3, -1, hp)
    st_ = init_from_ordering(Permutation.identity(3), 3, 1, hp, 0, n_obs=10)
    assert st_.W.shape == (3, 7) and st_.Z.shape == (4, 10)
    assert np.all(st_.B == 0)


def test_implied_mixing_direct():
    hp = validate_hyperparameters(None, "dag")
    st_ = init_from_ordering(Permutation.identity(3), 3, 1, hp, 0, n_obs=2)
    st_.W[1, 0] = 0.5
    st_.W[2, 1] = -2.0
    st_.W[:, 6] = [0.3, 0.0, 1.0]
    B = st_.W[:, :3]
    C = st_.W[:, 3:]
    assert np.allclose(implied_mixing(st_), np.linalg.inv(np.eye(3) - B) @ C, atol=1e-12)


def _chain_data(seed, N=800):
    gen = np.random.default_rng(seed)
    e = gen.laplace(size=(3, N))
    x1 = e[0]
    x2 = 0.9 * x1 + e[1]
    x3 = -0.8 * x2 + e[2]
    return standardize(Dataset(np.vstack([x1, x2, x3])))


def test_sparse_chain_recovers_edges():
    data = _chain_data(0)
    chain = run_dag_chain(data, Permutation.identity(3), hp=Hyperparameters(n_samples=600, n_burnin=300), rng=1)
    R = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    est = np.zeros((3, 3), dtype=int)
    for e in edge_list(chain):
        est[int(e["child"][1:]) - 1, int(e["parent"][1:]) - 1] = 1
    m = structure_metrics(est, R, chain.median_eta())
    assert m["structural_errors"] == 0 and m["auc"] == 1.0
    # entries outside the ordering's support stay exactly zero in every draw
    assert np.all(chain.B[:, 0, :] == 0) and np.all(chain.B[:, 1, 1:] == 0)
    e = {(x["parent"], x["child"]): x for x in edge_list(chain)}
    assert e[("x1", "x2")]["weight_q025"] < e[("x1", "x2")]["weight_median"] < e[("x1", "x2")]["weight_q975"]


def test_chain_shapes_and_summary():
    data = _chain_data(1, N=100)
    hp = Hyperparameters(n_samples=20, n_burnin=5)
    chain = run_dag_chain(data, Permutation((2, 1, 0)), m=1, hp=hp, rng=2)
    assert chain.W.shape == (20, 3, 7) and chain.m == 1 and chain.n_samples == 20
    s = chain.summary()
    assert s["order"] == [2, 1, 0]
    assert np.all(s["W_q025"] <= s["W_median"]) and np.all(s["W_median"] <= s["W_q975"])
    d0 = chain.draw(3)
    assert np.array_equal(d0.W, chain.W[3])


def test_true_ordering_has_best_likelihood():
    data = _chain_data(3, N=500)
    hp = Hyperparameters(n_samples=200, n_burnin=200)
    chains = [run_dag_chain(data, Permutation(o), hp=hp, rng=4) for o in [(2, 1, 0), (0, 1, 2)]]
    best, info = select_best_candidate(chains)
    assert best == 1 and info["order"] == [0, 1, 2]
    with pytest.raises(ValueError):
        select_best_candidate([])


def test_select_best_ties_lowest_index():
    class Fake:
        def __init__(self, ll, order):
            self.loglik = np.array(ll)
            self.P = Permutation(order)

    best, _ = select_best_candidate([Fake([1.0, 2.0], (0, 1)), Fake([2.0, 1.0], (1, 0))])
    assert best == 0


def test_dense_prior_used_when_requested():
    assert validate_hyperparameters(None, "dag", dense=True).beta_m == 0.99
    data, _ = generate_lingam_suite(3, 50, 0)
    chain = run_dag_chain(standardize(data), Permutation.identity(3), hp=Hyperparameters(n_samples=5, n_burnin=0),
                          rng=0, dense=True)
    assert chain.n_samples == 5
