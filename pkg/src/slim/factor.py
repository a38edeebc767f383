"""Gibbs sampler for the sparse factor model X = (Q*C) Z + noise."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels as kern
from .distributions import RngLike, as_generator
from .engine import LinearEngine
from .model import (
    ROLE_SLAB,
    ROLE_SPIKE_SLAB,
    Dataset,
    FactorState,
    Hyperparameters,
    LatentSpec,
    Permutation,
    validate_hyperparameters,
)
from .ordering import PermutationCandidateSet, tally_block

MODES = ("plain", "order_search", "missing_values")


def noise_shape(s_s: float, n_obs: float, n_active: int) -> float:
    """Shape of the noise-precision conditional."""
    return s_s + 0.5 * (n_obs + n_active)


def init_factor_state(
    d: int,
    n: int,
    n_factors: int,
    hp: Hyperparameters,
    rng: RngLike = None,
    latent: Optional[LatentSpec] = None,
    slab_columns: int = 0,
) -> FactorState:
    """Random starting point: dense small loadings, factors from the prior.

    The first ``slab_columns`` columns carry no spike (inclusion fixed at 1).
    """
    gen = as_generator(rng)
    latent = latent if latent is not None else LatentSpec.build(["laplace"] * n_factors, lam=hp.lam)
    if len(latent) != n_factors:
        raise ValueError("latent spec length does not match the number of factors")
    role = np.full((d, n_factors), ROLE_SPIKE_SLAB, dtype=np.int64)
    role[:, :slab_columns] = ROLE_SLAB
    C = 0.1 * gen.standard_normal((d, n_factors))
    ups = np.empty((n_factors, n))
    for a in range(n_factors):
        if latent.kind[a] == 0:
            ups[a] = gen.exponential(1.0 / latent.lam2[a], n)
        else:
            ups[a] = latent.sigma2[a] * latent.theta[a] / (2.0 * gen.gamma(latent.theta[a] / 2.0, 1.0, n))
    ups = np.clip(ups, kern.UPS_MIN, 1e6)
    Z = np.sqrt(ups) * gen.standard_normal((n_factors, n))
    eta = np.full((d, n_factors), hp.alpha_m)
    eta[role == ROLE_SLAB] = 1.0
    return FactorState(
        C=C,
        Z=Z,
        psi=np.ones(d),
        tau=np.ones((d, n_factors)),
        Q=np.ones((d, n_factors)),
        eta=eta,
        nu=np.full(n_factors, hp.beta_m),
        upsilon=ups,
        latent=latent,
        role=role,
        P=Permutation(tuple(gen.permutation(d))),
        Pf=Permutation(tuple(gen.permutation(n_factors))),
    )


def ica_initialize(state: FactorState, data: Dataset, seed: int = 0) -> FactorState:
    """Replace the loadings and factors of ``state`` by a FastICA solution.

    Only the first min(d, K) columns are set; extra columns keep their values.
    Gibbs moves along the rotation ridge of a square factor model are slow, so
    starting near an independent-components solution shortens burn-in a lot.
    """
    import warnings

    from sklearn.decomposition import FastICA

    k = min(data.d, state.n_factors)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ica = FastICA(n_components=k, whiten="unit-variance", random_state=seed, max_iter=1000)
        S = ica.fit_transform(data.filled().T).T
    out = state.copy()
    out.C[:, :k] = ica.mixing_
    out.Q[:, :k] = 1.0
    out.C[out.Q == 0] = 0.0
    out.C[(out.Q != 0) & (out.C == 0)] = 1e-12
    out.Z[:k] = S
    out.upsilon[:k] = np.maximum(S * S, 1e-6)
    return out


def _engine(state: FactorState, data: Dataset) -> LinearEngine:
    if state.C.shape[0] != data.d or state.Z.shape[1] != data.n:
        raise ValueError(
            f"state of shape C{state.C.shape}, Z{state.Z.shape} does not match data {data.d}x{data.n}"
        )
    return LinearEngine(
        X=data.filled(),
        M=data.observed_mask(),
        F=state.Z.copy(),
        W=state.C.copy(),
        H=state.Q.copy(),
        role=state.role,
        tau=state.tau.copy(),
        eta=state.eta.copy(),
        nu=state.nu.copy(),
        psi=state.psi.copy(),
        latent_rows=np.arange(state.n_factors),
        ups=state.upsilon.copy(),
        latent=state.latent.copy(),
    )


def _state(eng: LinearEngine, like: FactorState) -> FactorState:
    return FactorState(
        C=eng.W.copy(),
        Z=eng.F.copy(),
        psi=eng.psi.copy(),
        tau=eng.tau.copy(),
        Q=eng.H.copy(),
        eta=eng.eta.copy(),
        nu=eng.nu.copy(),
        upsilon=eng.ups.copy(),
        latent=eng.latent.copy(),
        role=like.role.copy(),
        P=like.P,
        Pf=like.Pf,
    )


def _single(step):
    def run(state: FactorState, data: Dataset, hp: Hyperparameters, rng: RngLike = None) -> FactorState:
        eng = _engine(state, data)
        step(eng, hp, as_generator(rng))
        out = _state(eng, state)
        out.check_invariants()
        return out

    run.__name__ = step.__name__
    return run


def update_noise_variances(state, data, hp, rng=None) -> FactorState:
    """Redraw every noise variance from its inverse-gamma conditional."""
    return _single(LinearEngine.update_psi)(state, data, hp, rng)


def update_factors_and_scales(state, data, hp, rng=None) -> FactorState:
    """Redraw each factor element and then its mixing variance."""
    return _single(LinearEngine.update_latent)(state, data, hp, rng)


def update_loadings_and_slab(state, data, hp, rng=None) -> FactorState:
    """Redraw active loadings and all slab variances; masked-out loadings stay 0."""
    return _single(LinearEngine.update_weights)(state, data, hp, rng)


def update_sparsity(state, data, hp, rng=None) -> FactorState:
    """Blocked redraw of masks (with their loadings), inclusion probabilities and column rates."""
    return _single(LinearEngine.update_sparsity)(state, data, hp, rng)


@dataclass
class FactorChain:
    """Post-burn-in draws of a factor-model chain.

    Per-sweep arrays have the sweep index first.  Factor rows are not stored
    per sweep (they scale with N); ``Z_mean`` is their posterior mean.
    """

    C: np.ndarray
    Q: np.ndarray
    eta: np.ndarray
    psi: np.ndarray
    nu: np.ndarray
    lam2: np.ndarray
    loglik: np.ndarray
    Z_mean: np.ndarray
    final: FactorState
    candidates: Optional[PermutationCandidateSet] = None
    burnin_candidates: Optional[PermutationCandidateSet] = None
    heldout_loglik: Optional[np.ndarray] = None
    mh_acceptance: float = float("nan")

    @property
    def n_samples(self) -> int:
        return self.C.shape[0]

    def draw(self, s: int) -> FactorState:
        """Loadings-level view of sweep ``s`` (factors taken from the final state)."""
        st = self.final.copy()
        st.C = self.C[s].copy()
        st.Q = self.Q[s].copy()
        st.eta = self.eta[s].copy()
        st.psi = self.psi[s].copy()
        st.nu = self.nu[s].copy()
        st.latent.lam2 = self.lam2[s].copy()
        return st


def heldout_log_density(X, M, W, F, psi) -> float:
    """Gaussian log density of the entries with M == 0 (finite values only)."""
    held = (M == 0) & np.isfinite(X)
    if not held.any():
        return 0.0
    mu = W @ F
    var = np.broadcast_to(psi[:, None], X.shape)
    r = X[held] - mu[held]
    return float(-0.5 * np.sum(kern.LOG_2PI + np.log(var[held]) + r * r / var[held]))


def run_factor_chain(
    data: Dataset,
    hp: Optional[Hyperparameters] = None,
    mode: str = "plain",
    rng: RngLike = None,
    n_factors: Optional[int] = None,
    latent: Optional[LatentSpec] = None,
    init: Optional[FactorState] = None,
    slab_columns: int = 0,
    candidate_fallback: bool = True,
    ica_init: bool = True,
) -> FactorChain:
    """Run ``n_burnin + n_samples`` sweeps and keep the post-burn-in draws.

    ``order_search`` follows every sweep with ``mh_perm_reps`` permutation
    steps and tallies accepted orderings after burn-in.  ``missing_values``
    records the held-out log density of the masked entries for each draw.
    The factor count defaults to d.  Unless ``init`` is given, the chain
    starts from a FastICA solution (``ica_init``) or a random state.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if mode == "missing_values" and data.mask is None:
        raise ValueError("missing_values mode needs a mask")
    hp = validate_hyperparameters(hp, "factor")
    gen = as_generator(rng)
    K = n_factors if n_factors is not None else data.d
    if K < 1:
        raise ValueError("need at least one factor")
    if init is not None:
        state = init
    else:
        state = init_factor_state(data.d, data.n, K, hp, gen, latent, slab_columns)
        if ica_init:
            state = ica_initialize(state, data, int(gen.integers(2**31)))
    eng = _engine(state, data)
    d, S = data.d, hp.n_samples
    out = dict(
        C=np.empty((S, d, K)), Q=np.empty((S, d, K)), eta=np.empty((S, d, K)),
        psi=np.empty((S, d)), nu=np.empty((S, K)), lam2=np.empty((S, K)), loglik=np.empty(S),
    )
    z_sum = np.zeros_like(eng.F)
    held = np.empty(S) if mode == "missing_values" else None
    Xfull = data.values

    search = mode == "order_search" and hp.mh_perm_reps > 0
    cset, burn_set = PermutationCandidateSet(), PermutationCandidateSet()
    order_row = np.array(state.P.order if state.P is not None else range(d), dtype=np.int64)
    order_col = np.array(state.Pf.order if state.Pf is not None else range(K), dtype=np.int64)
    accepted = np.zeros(hp.mh_perm_reps, dtype=np.bool_)
    visited = np.zeros((hp.mh_perm_reps, d), dtype=np.int64)
    n_acc = 0

    for t in range(hp.n_burnin + hp.n_samples):
        eng.sweep(hp, gen)
        eng.check(t)
        if search:
            kern.mh_permutations(eng.X, eng.M, eng.W, eng.F, eng.psi, order_row, order_col,
                                 hp.mh_perm_reps, gen, accepted, visited)
            tally_block(cset if t >= hp.n_burnin else burn_set, accepted, visited)
            if t >= hp.n_burnin:
                n_acc += int(accepted.sum())
        s = t - hp.n_burnin
        if s < 0:
            continue
        out["C"][s] = eng.W
        out["Q"][s] = eng.H
        out["eta"][s] = eng.eta
        out["psi"][s] = eng.psi
        out["nu"][s] = eng.nu
        out["lam2"][s] = eng.latent.lam2
        out["loglik"][s] = eng.log_likelihood()
        z_sum += eng.F
        if held is not None:
            held[s] = heldout_log_density(Xfull, eng.M, eng.W, eng.F, eng.psi)

    final = _state(eng, state)
    final.P = Permutation(tuple(order_row))
    final.Pf = Permutation(tuple(order_col))
    final.check_invariants()
    chain = FactorChain(
        **out, Z_mean=z_sum / S, final=final, heldout_loglik=held,
    )
    if mode == "order_search":
        if len(cset) == 0 and candidate_fallback:
            # chain sat on one ordering after burn-in; fall back to burn-in
            # acceptances, then to the ordering it sat on
            cset = burn_set if len(burn_set) else PermutationCandidateSet()
            if len(cset) == 0:
                cset.add(final.P)
        chain.candidates = cset
        chain.burnin_candidates = burn_set
        chain.mh_acceptance = n_acc / max(1, hp.n_samples * hp.mh_perm_reps)
    return chain
