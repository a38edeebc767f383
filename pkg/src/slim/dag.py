"""Gibbs sampler for linear DAGs with optional latent variables under a fixed ordering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .distributions import RngLike, as_generator
from .engine import LinearEngine
from .model import (
    ROLE_FROZEN,
    ROLE_SLAB,
    ROLE_SPIKE_SLAB,
    ROLE_ZERO,
    Dataset,
    DagState,
    Hyperparameters,
    LatentSpec,
    Permutation,
    validate_hyperparameters,
)


def dag_roles(p: Permutation, d: int, m: int, fixed_cd: bool = False) -> np.ndarray:
    """Role of every entry of W = [B | C_D | C_L] under ordering ``p``."""
    rank = p.rank()
    role = np.zeros((d, 2 * d + m), dtype=np.int64)
    role[:, :d] = np.where(rank[None, :] < rank[:, None], ROLE_SPIKE_SLAB, ROLE_ZERO)
    role[np.arange(d), d + np.arange(d)] = ROLE_FROZEN if fixed_cd else ROLE_SLAB
    role[:, 2 * d :] = ROLE_SPIKE_SLAB
    return role


def default_latent(d: int, m: int, lam: float = 1.0) -> LatentSpec:
    return LatentSpec.build(["laplace"] * d + ["cauchy"] * m, lam=lam)


def init_from_ordering(
    p: Permutation,
    d: int,
    m: int,
    hp: Hyperparameters,
    rng: RngLike = None,
    n_obs: int = 1,
    latent: Optional[LatentSpec] = None,
    fixed_cd=None,
) -> DagState:
    """Empty connectivity on the triangular support of ``p``.

    Driving-signal weights come from the slab prior unless ``fixed_cd`` gives
    their values (then they are held fixed).  Signals start at prior draws.
    """
    if m < 0:
        raise ValueError(f"latent count must be non-negative, got {m}")
    if len(p) != d:
        raise ValueError(f"ordering of length {len(p)} for {d} variables")
    gen = as_generator(rng)
    latent = latent if latent is not None else default_latent(d, m, hp.lam)
    if len(latent) != d + m:
        raise ValueError("latent spec must cover d driving plus m latent signals")
    role = dag_roles(p, d, m, fixed_cd is not None)
    K = 2 * d + m
    W = np.zeros((d, K))
    H = np.zeros((d, K))
    diag = np.arange(d)
    if fixed_cd is not None:
        W[diag, d + diag] = np.broadcast_to(np.asarray(fixed_cd, dtype=float), (d,))
    else:
        W[diag, d + diag] = gen.standard_normal(d)
    W[diag, d + diag] = np.where(W[diag, d + diag] == 0, 1e-12, W[diag, d + diag])
    H[diag, d + diag] = 1.0
    eta = np.zeros((d, K))
    eta[diag, d + diag] = 1.0
    ups = np.empty((d + m, n_obs))
    for a in range(d + m):
        if latent.kind[a] == 0:
            ups[a] = gen.exponential(1.0 / latent.lam2[a], n_obs)
        else:
            th = latent.theta[a]
            ups[a] = latent.sigma2[a] * th / (2.0 * gen.gamma(th / 2.0, 1.0, n_obs))
    ups = np.clip(ups, 1e-300, 1e6)
    Z = np.sqrt(ups) * gen.standard_normal((d + m, n_obs))
    return DagState(
        P=p,
        W=W,
        H=H,
        tau=np.ones((d, K)),
        eta=eta,
        nu=np.full(K, hp.beta_m),
        role=role,
        Z=Z,
        upsilon=ups,
        psi=np.ones(d),
        latent=latent,
    )


def dag_engine(state: DagState, data: Dataset, parents: Optional[np.ndarray] = None, learn_lam=None) -> LinearEngine:
    d = state.d
    if data.d != d or state.Z.shape[1] != data.n:
        raise ValueError(f"state for {d} variables / {state.Z.shape[1]} columns, data is {data.d}x{data.n}")
    X = data.filled()
    top = X if parents is None else parents
    return LinearEngine(
        X=X,
        M=data.observed_mask(),
        F=np.vstack([top, state.Z]),
        W=state.W.copy(),
        H=state.H.copy(),
        role=state.role,
        tau=state.tau.copy(),
        eta=state.eta.copy(),
        nu=state.nu.copy(),
        psi=state.psi.copy(),
        latent_rows=np.arange(d, d + state.Z.shape[0]),
        ups=state.upsilon.copy(),
        latent=state.latent.copy(),
        learn_lam=learn_lam,
    )


def engine_state(eng: LinearEngine, like: DagState) -> DagState:
    d = like.d
    return DagState(
        P=like.P,
        W=eng.W.copy(),
        H=eng.H.copy(),
        tau=eng.tau.copy(),
        eta=eng.eta.copy(),
        nu=eng.nu.copy(),
        role=like.role.copy(),
        Z=eng.F[d:].copy(),
        upsilon=eng.ups.copy(),
        psi=eng.psi.copy(),
        latent=eng.latent.copy(),
        Y=None if like.Y is None else eng.F[:d].copy(),
    )


@dataclass
class DagChain:
    """Post-burn-in draws of a DAG chain; arrays have the sweep index first."""

    P: Permutation
    W: np.ndarray
    H: np.ndarray
    eta: np.ndarray
    psi: np.ndarray
    nu: np.ndarray
    lam2: np.ndarray
    loglik: np.ndarray
    final: DagState
    Z_mean: Optional[np.ndarray] = None

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def m(self) -> int:
        return self.W.shape[2] - 2 * self.d

    @property
    def n_samples(self) -> int:
        return self.W.shape[0]

    @property
    def B(self) -> np.ndarray:
        return self.W[:, :, : self.d]

    def draw(self, s: int) -> DagState:
        st = self.final.copy()
        st.W = self.W[s].copy()
        st.H = self.H[s].copy()
        st.eta = self.eta[s].copy()
        st.psi = self.psi[s].copy()
        st.nu = self.nu[s].copy()
        st.latent.lam2 = self.lam2[s].copy()
        return st

    def median_eta(self) -> np.ndarray:
        return np.median(self.eta[:, :, : self.d], axis=0)

    def median_nu(self) -> np.ndarray:
        return np.median(self.nu[:, : self.d], axis=0)

    def summary(self) -> dict:
        q = np.quantile(self.W, [0.025, 0.5, 0.975], axis=0)
        return {
            "order": list(self.P.order),
            "loglik_median": float(np.median(self.loglik)),
            "W_q025": q[0],
            "W_median": q[1],
            "W_q975": q[2],
            "eta_median": np.median(self.eta, axis=0),
            "nu_median": np.median(self.nu, axis=0),
            "psi_median": np.median(self.psi, axis=0),
        }


def run_dag_chain(
    data: Dataset,
    p: Permutation,
    m: int = 0,
    hp: Optional[Hyperparameters] = None,
    rng: RngLike = None,
    latent: Optional[LatentSpec] = None,
    fixed_cd=None,
    learn_lam: Optional[bool] = None,
    init: Optional[DagState] = None,
    dense: bool = False,
) -> DagChain:
    """Gibbs sampling of B, C_D, C_L and the signals under ordering ``p``.

    The Laplace rates of the driving signals are learned (Gamma(1, 1)
    hyperprior) in the pure DAG with sampled C_D unless ``learn_lam`` says
    otherwise.
    """
    hp = validate_hyperparameters(hp, "dag", dense=dense, latents=m)
    gen = as_generator(rng)
    d = data.d
    state = init if init is not None else init_from_ordering(p, d, m, hp, gen, data.n, latent, fixed_cd)
    if learn_lam is None:
        learn_lam = m == 0 and fixed_cd is None
    lam_mask = None
    if learn_lam:
        lam_mask = np.zeros(d + m, dtype=bool)
        lam_mask[:d] = state.latent.kind[:d] == 0
    eng = dag_engine(state, data, learn_lam=lam_mask)
    S = hp.n_samples
    K = 2 * d + m
    W = np.empty((S, d, K))
    H = np.empty((S, d, K))
    eta = np.empty((S, d, K))
    psi = np.empty((S, d))
    nu = np.empty((S, K))
    lam2 = np.empty((S, d + m))
    loglik = np.empty(S)
    z_sum = np.zeros_like(state.Z)
    for t in range(hp.n_burnin + S):
        eng.sweep(hp, gen)
        eng.check(t)
        s = t - hp.n_burnin
        if s < 0:
            continue
        W[s] = eng.W
        H[s] = eng.H
        eta[s] = eng.eta
        psi[s] = eng.psi
        nu[s] = eng.nu
        lam2[s] = eng.latent.lam2
        loglik[s] = eng.log_likelihood()
        z_sum += eng.F[d:]
    final = engine_state(eng, state)
    final.check_invariants()
    return DagChain(p, W, H, eta, psi, nu, lam2, loglik, final, z_sum / S)


def select_best_candidate(chains: Sequence[DagChain], data: Optional[Dataset] = None):
    """Index of the chain with the largest median training log-likelihood (ties: lowest index)."""
    if len(chains) == 0:
        raise ValueError("no candidate chains")
    medians = np.array([np.median(c.loglik) for c in chains])
    best = int(np.argmax(medians))
    return best, {"medians": medians.tolist(), "order": list(chains[best].P.order)}


def implied_mixing(state: DagState) -> np.ndarray:
    """Equivalent factor-model loadings (I - B)^-1 [diag(C_D) | C_L]."""
    d = state.d
    return np.linalg.solve(np.eye(d) - state.B, state.C)


def edge_list(chain: DagChain, names: Optional[list] = None, policy: str = "bound", alpha_m: float = 0.95) -> list[dict]:
    """Reported edges parent -> child with median weight, eta and 95% interval."""
    from .metrics import edge_decision

    d = chain.d
    names = names if names is not None else [f"x{i + 1}" for i in range(d)]
    eta_med = chain.median_eta()
    adj = edge_decision(eta_med, chain.median_nu(), alpha_m, policy)
    q = np.quantile(chain.B, [0.025, 0.5, 0.975], axis=0)
    out = []
    for i, j in zip(*np.nonzero(adj)):
        out.append(
            {
                "parent": names[j],
                "child": names[i],
                "weight_median": float(q[1, i, j]),
                "weight_q025": float(q[0, i, j]),
                "weight_q975": float(q[2, i, j]),
                "eta_median": float(eta_med[i, j]),
            }
        )
    return out
