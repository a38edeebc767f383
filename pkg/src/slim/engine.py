"""Mutable working copy of a linear model X ~ W F shared by the factor and DAG samplers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as kern
from .model import LatentSpec, SamplerError, Hyperparameters


@dataclass
class LinearEngine:
    """Arrays touched by one Gibbs sweep.

    ``F`` holds the regressors (K x N); the rows listed in ``latent_rows`` are
    sampled, the others (observed parents in a DAG) stay fixed.  ``ups`` has
    one row per latent row.  ``E`` is the masked residual and is kept in sync
    by the kernels.
    """

    X: np.ndarray
    M: np.ndarray
    F: np.ndarray
    W: np.ndarray
    H: np.ndarray
    role: np.ndarray
    tau: np.ndarray
    eta: np.ndarray
    nu: np.ndarray
    psi: np.ndarray
    latent_rows: np.ndarray
    ups: np.ndarray
    latent: LatentSpec
    learn_lam: Optional[np.ndarray] = None
    E: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("X", "M", "F", "W", "H", "tau", "eta", "nu", "psi", "ups"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        self.role = np.ascontiguousarray(self.role, dtype=np.int64)
        self.latent_rows = np.ascontiguousarray(self.latent_rows, dtype=np.int64)
        self.refresh()

    def refresh(self):
        self.E = np.ascontiguousarray(self.M * (self.X - self.W @ self.F))

    def update_psi(self, hp: Hyperparameters, gen):
        kern.update_psi(self.E, self.W, self.H, self.role, self.tau, self.M, hp.s_s, hp.s_r, gen, self.psi)

    def update_latent(self, hp: Hyperparameters, gen):
        lat = self.latent
        if len(self.latent_rows) == 0:
            return
        kern.update_latent(
            self.E, self.F, self.W, self.psi, self.M, self.latent_rows,
            lat.kind, lat.lam2, lat.theta, lat.sigma2, self.ups, gen,
        )
        if self.learn_lam is not None and np.any(self.learn_lam):
            # conjugate Gamma(1, 1) hyperprior on the Laplace rate
            n = self.ups.shape[1]
            for a in np.flatnonzero(self.learn_lam):
                lat.lam2[a] = gen.gamma(1.0 + n, 1.0 / (1.0 + self.ups[a].sum()))

    def update_weights(self, hp: Hyperparameters, gen):
        kern.update_weights(self.E, self.F, self.W, self.H, self.role, self.tau, self.psi, self.M, hp.t_s, hp.t_r, gen)

    def update_sparsity(self, hp: Hyperparameters, gen):
        kern.update_sparsity(
            self.E, self.F, self.W, self.H, self.role, self.tau, self.eta, self.nu, self.psi, self.M,
            hp.alpha_p, hp.alpha_m, hp.beta_p, hp.beta_m, gen,
        )

    def sweep(self, hp: Hyperparameters, gen, extra=None):
        """Noise, signals, weights, sparsity; ``extra`` runs after the signals."""
        self.update_psi(hp, gen)
        self.update_latent(hp, gen)
        if extra is not None:
            extra(self)
        self.update_weights(hp, gen)
        self.update_sparsity(hp, gen)

    def log_likelihood(self) -> float:
        return kern.log_likelihood(self.E, self.psi, self.M)

    def check(self, sweep: int):
        if not (np.all(np.isfinite(self.psi)) and np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.E))):
            raise SamplerError(f"non-finite state at sweep {sweep}")
        if not np.array_equal(self.W != 0, self.H != 0):
            raise AssertionError(f"weights and mask disagree at sweep {sweep}")
        if np.any(self.psi <= 0) or np.any(self.tau <= 0):
            raise AssertionError(f"non-positive variance at sweep {sweep}")
