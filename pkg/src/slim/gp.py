"""Gaussian-process priors over factor rows (correlated data) and parent functions (non-linear DAGs)."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .dag import dag_engine, engine_state, init_from_ordering
from .distributions import RngLike, as_generator, jittered_cholesky, LOG_2PI
from .engine import LinearEngine
from .factor import FactorChain, _engine as factor_engine, _state as factor_state, heldout_log_density, init_factor_state
from .model import (
    GAUSSIAN_PROCESS,
    ROLE_SLAB,
    ROLE_SPIKE_SLAB,
    Dataset,
    DagState,
    FactorState,
    Hyperparameters,
    LatentSpec,
    Permutation,
    validate_hyperparameters,
)

# added to the kernel diagonal wherever the prior is factorized or inverted
GP_NUGGET = 1e-6
SNIM_MAX_ENUMERATION = 6


@dataclass
class GpHyperState:
    """Inverse squared length scales per row, their shared rate and M-H tallies."""

    upsilon: np.ndarray
    kappa: float
    accepted: np.ndarray
    proposed: np.ndarray

    def __post_init__(self):
        self.upsilon = np.asarray(self.upsilon, dtype=float)
        if np.any(self.upsilon <= 0) or not self.kappa > 0:
            raise ValueError("length-scale parameters must be positive")

    @classmethod
    def from_prior(cls, m: int, hp: Hyperparameters, rng: RngLike = None) -> "GpHyperState":
        gen = as_generator(rng)
        kappa = gen.gamma(hp.k_s, 1.0 / hp.k_r)
        ups = gen.gamma(hp.u_s, 1.0 / kappa, m)
        return cls(np.maximum(ups, 1e-12), float(kappa), np.zeros(m, dtype=int), np.zeros(m, dtype=int))

    @property
    def acceptance_rate(self) -> np.ndarray:
        return self.accepted / np.maximum(self.proposed, 1)

    def copy(self) -> "GpHyperState":
        return GpHyperState(self.upsilon.copy(), self.kappa, self.accepted.copy(), self.proposed.copy())


def build_covariance(inputs, ups: float, other=None) -> np.ndarray:
    """exp(-ups * (a - b)**2) over scalar inputs; ``other`` gives the column inputs."""
    a = np.asarray(inputs, dtype=float).ravel()
    b = a if other is None else np.asarray(other, dtype=float).ravel()
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("covariance inputs must be finite")
    if not ups > 0:
        raise ValueError(f"inverse length scale must be positive, got {ups}")
    return np.exp(-ups * (a[:, None] - b[None, :]) ** 2)


def gp_log_density(z, K) -> float:
    """log N(z | 0, K + nugget)."""
    n = K.shape[0]
    L = jittered_cholesky(K + GP_NUGGET * np.eye(n))
    a = solve_triangular(L, z, lower=True)
    return float(-0.5 * (n * LOG_2PI + a @ a) - np.sum(np.log(np.diag(L))))


def posterior_covariance(K, U) -> np.ndarray:
    """(U + K^-1)^-1 computed as K - A^T A with A = L^-1 S K, L L^T = I + S K S, S = U^1/2.

    Algebraically equal to K - K (U^-1 + K)^-1 K but stays defined when some
    entries of U are zero.
    """
    U = np.asarray(U, dtype=float)
    s = np.sqrt(U)
    n = K.shape[0]
    L = jittered_cholesky(np.eye(n) + s[:, None] * K * s[None, :])
    A = solve_triangular(L, s[:, None] * K, lower=True)
    V = K - A.T @ A
    return 0.5 * (V + V.T)


def direct_posterior_covariance(K, U) -> np.ndarray:
    return np.linalg.inv(np.diag(U) + np.linalg.inv(K))


def gp_posterior(K, U, b):
    """Mean and covariance of a row with prior N(0, K) and likelihood exp(-z'Uz/2 + b'z)."""
    V = posterior_covariance(K, U)
    return V @ b, V


def _row_terms(eng: LinearEngine, k: int):
    w = eng.W[:, k]
    act = np.flatnonzero(w)
    if act.size == 0:
        return act, None, None, None
    wa = w[act]
    Ex = eng.E[act] + eng.M[act] * wa[:, None] * eng.F[k][None, :]
    U = (eng.M[act] * (wa * wa / eng.psi[act])[:, None]).sum(axis=0)
    b = ((wa / eng.psi[act])[:, None] * Ex).sum(axis=0)
    return act, Ex, U, b


def gp_row_update(eng: LinearEngine, k: int, K: np.ndarray, gen) -> None:
    """Redraw row k of F from its Gaussian conditional under prior N(0, K + nugget)."""
    n = K.shape[0]
    Kn = K + GP_NUGGET * np.eye(n)
    act, Ex, U, b = _row_terms(eng, k)
    if act.size == 0:
        z = jittered_cholesky(Kn) @ gen.standard_normal(n)
    else:
        mean, V = gp_posterior(Kn, U, b)
        z = mean + jittered_cholesky(V) @ gen.standard_normal(n)
        eng.E[act] = Ex - eng.M[act] * eng.W[act, k][:, None] * z[None, :]
    eng.F[k] = z


def sample_gp_row(row_index: int, state: FactorState, data: Dataset, K: np.ndarray, rng: RngLike = None) -> np.ndarray:
    """New draw of factor row ``row_index`` given everything else in ``state``."""
    eng = factor_engine(state, data)
    gp_row_update(eng, row_index, K, as_generator(rng))
    return eng.F[row_index].copy()


def kappa_shape(hp: Hyperparameters, m: int) -> float:
    return hp.k_s + m * hp.u_s


def update_gp_hyperparameters(state: GpHyperState, rows, inputs, hp: Hyperparameters, rng: RngLike = None,
                              proposal: Optional[np.ndarray] = None) -> GpHyperState:
    """Gibbs step for kappa, then an independence M-H step per row for upsilon.

    ``inputs`` is one input vector shared by all rows (time index) or one per
    row (parent values).  ``proposal`` forces the proposed upsilons.
    """
    gen = as_generator(rng)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    m = rows.shape[0]
    out = state.copy()
    out.kappa = float(gen.gamma(kappa_shape(hp, m), 1.0 / (hp.k_r + out.upsilon.sum())))
    inputs = np.asarray(inputs, dtype=float)
    for j in range(m):
        x = inputs if inputs.ndim == 1 else inputs[j]
        new = proposal[j] if proposal is not None else max(gen.gamma(hp.u_s, 1.0 / out.kappa), 1e-12)
        cur = out.upsilon[j]
        delta = gp_log_density(rows[j], build_covariance(x, new)) - gp_log_density(rows[j], build_covariance(x, cur))
        out.proposed[j] += 1
        if delta >= 0 or np.log(gen.random()) < delta:
            out.upsilon[j] = new
            out.accepted[j] += 1
    return out


def gp_predict(x_train, y_train, x_test, ups: float) -> np.ndarray:
    """GP posterior mean of the function at ``x_test`` given its values at ``x_train``."""
    K = build_covariance(x_train, ups) + GP_NUGGET * np.eye(len(x_train))
    L = jittered_cholesky(K)
    alpha = cho_solve((L, True), np.asarray(y_train, dtype=float))
    return build_covariance(x_test, ups, x_train) @ alpha


@dataclass
class CslimChain:
    factor: FactorChain
    gp: GpHyperState
    upsilon_trace: np.ndarray
    Z_samples: Optional[np.ndarray] = None


@dataclass
class SnimChain:
    """Post-burn-in draws of a non-linear DAG chain, including the parent functions Y."""

    P: Permutation
    W: np.ndarray
    H: np.ndarray
    eta: np.ndarray
    psi: np.ndarray
    nu: np.ndarray
    lam2: np.ndarray
    loglik: np.ndarray
    Y: np.ndarray
    gp_upsilon: np.ndarray
    X_train: np.ndarray
    final: DagState
    gp: GpHyperState

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def n_samples(self) -> int:
        return self.W.shape[0]

    @property
    def B(self) -> np.ndarray:
        return self.W[:, :, : self.d]

    def median_eta(self) -> np.ndarray:
        return np.median(self.eta[:, :, : self.d], axis=0)

    def median_nu(self) -> np.ndarray:
        return np.median(self.nu[:, : self.d], axis=0)

    def draw(self, s: int) -> DagState:
        st = self.final.copy()
        st.W = self.W[s].copy()
        st.H = self.H[s].copy()
        st.eta = self.eta[s].copy()
        st.psi = self.psi[s].copy()
        st.nu = self.nu[s].copy()
        st.latent.lam2 = self.lam2[s].copy()
        st.Y = self.Y[s].copy()
        return st

    def test_parents(self, s: int, X_test: np.ndarray) -> np.ndarray:
        """GP interpolation of every parent function at the test inputs for draw ``s``."""
        out = np.empty((self.d, X_test.shape[1]))
        for j in range(self.d):
            out[j] = gp_predict(self.X_train[j], self.Y[s, j], X_test[j], self.gp_upsilon[s, j])
        return out


def run_gp_chain(
    data: Dataset,
    mode: str = "cslim",
    m: Optional[int] = None,
    hp: Optional[Hyperparameters] = None,
    rng: RngLike = None,
    p: Optional[Permutation] = None,
    max_enumeration: int = SNIM_MAX_ENUMERATION,
    store_Z: bool = False,
):
    """``cslim``: factor chain whose factor rows have GP priors over the column index.
    ``snim``: non-linear DAG chain under ordering ``p``; without ``p`` every
    ordering is run (d <= ``max_enumeration``) and a dict order -> chain is returned.
    """
    gen = as_generator(rng)
    if mode == "cslim":
        return _run_cslim(data, m if m is not None else data.d, hp, gen, store_Z)
    if mode != "snim":
        raise ValueError(f"unknown GP mode {mode!r}")
    if p is not None:
        return _run_snim(data, p, hp, gen)
    if data.d > max_enumeration:
        raise ValueError(f"ordering enumeration limited to d <= {max_enumeration}; pass an ordering")
    return {order: _run_snim(data, Permutation(order), hp, gen) for order in itertools.permutations(range(data.d))}


def _run_cslim(data: Dataset, m: int, hp, gen, store_Z: bool) -> CslimChain:
    hp = validate_hyperparameters(hp, "factor")
    latent = LatentSpec(np.full(m, GAUSSIAN_PROCESS), np.ones(m), np.ones(m), np.ones(m))
    state = init_factor_state(data.d, data.n, m, hp, gen, latent)
    eng = factor_engine(state, data)
    gps = GpHyperState.from_prior(m, hp, gen)
    t_idx = np.arange(data.n, dtype=float)
    S = hp.n_samples
    d = data.d
    C = np.empty((S, d, m)); Q = np.empty((S, d, m)); eta = np.empty((S, d, m))
    psi = np.empty((S, d)); nu = np.empty((S, m)); loglik = np.empty(S)
    ups_trace = np.empty((S, m))
    held = np.empty(S) if data.mask is not None else None
    z_sum = np.zeros_like(eng.F)
    Zs = np.empty((S, m, data.n)) if store_Z else None

    def gp_rows(e: LinearEngine):
        nonlocal gps
        for k in range(m):
            gp_row_update(e, k, build_covariance(t_idx, gps.upsilon[k]), gen)
        gps = update_gp_hyperparameters(gps, e.F, t_idx, hp, gen)

    for t in range(hp.n_burnin + S):
        eng.sweep(hp, gen, extra=gp_rows)
        eng.check(t)
        s = t - hp.n_burnin
        if s < 0:
            continue
        C[s] = eng.W; Q[s] = eng.H; eta[s] = eng.eta; psi[s] = eng.psi; nu[s] = eng.nu
        loglik[s] = eng.log_likelihood()
        ups_trace[s] = gps.upsilon
        z_sum += eng.F
        if Zs is not None:
            Zs[s] = eng.F
        if held is not None:
            held[s] = heldout_log_density(data.values, eng.M, eng.W, eng.F, eng.psi)
    final = factor_state(eng, state)
    fc = FactorChain(C=C, Q=Q, eta=eta, psi=psi, nu=nu, lam2=np.ones((S, m)), loglik=loglik,
                     Z_mean=z_sum / S, final=final, heldout_loglik=held)
    return CslimChain(fc, gps, ups_trace, Zs)


def _run_snim(data: Dataset, p: Permutation, hp, gen) -> SnimChain:
    hp = validate_hyperparameters(hp, "dag")
    d = data.d
    X = data.filled()
    state = init_from_ordering(p, d, 0, hp, gen, data.n)
    state.Y = X.copy()
    lam_mask = state.latent.kind == 0
    eng = dag_engine(state, data, parents=state.Y, learn_lam=lam_mask)
    gps = GpHyperState.from_prior(d, hp, gen)
    S = hp.n_samples
    K = 2 * d
    W = np.empty((S, d, K)); H = np.empty((S, d, K)); eta = np.empty((S, d, K))
    psi = np.empty((S, d)); nu = np.empty((S, K)); lam2 = np.empty((S, d)); loglik = np.empty(S)
    Ys = np.empty((S, d, data.n)); gups = np.empty((S, d))
    has_child = lambda j: np.any(eng.role[:, j] != 0)
    # warm start: every supported edge stays in the model for the first half
    # of burn-in so the parent functions can take shape before edges are pruned
    role = eng.role.copy()
    free = role[:, :d] == ROLE_SPIKE_SLAB
    eng.role[:, :d][free] = ROLE_SLAB
    eng.H[:, :d][free] = 1.0
    eng.eta[:, :d][free] = 1.0
    eng.W[:, :d][free] = 1e-12
    eng.refresh()
    warm = hp.n_burnin // 2
    for t in range(hp.n_burnin + S):
        if t == warm:
            eng.role = role
        eng.update_psi(hp, gen)
        eng.update_latent(hp, gen)
        eng.update_weights(hp, gen)
        eng.update_sparsity(hp, gen)
        for j in range(d):
            if has_child(j):
                gp_row_update(eng, j, build_covariance(X[j], gps.upsilon[j]), gen)
        gps = update_gp_hyperparameters(gps, eng.F[:d], X, hp, gen)
        eng.check(t)
        s = t - hp.n_burnin
        if s < 0:
            continue
        W[s] = eng.W; H[s] = eng.H; eta[s] = eng.eta; psi[s] = eng.psi; nu[s] = eng.nu
        lam2[s] = eng.latent.lam2; loglik[s] = eng.log_likelihood()
        Ys[s] = eng.F[:d]; gups[s] = gps.upsilon
    final = engine_state(eng, state)
    final.check_invariants()
    return SnimChain(p, W, H, eta, psi, nu, lam2, loglik, Ys, gups, X, final, gps)
