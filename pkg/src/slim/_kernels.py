"""Compiled inner loops of the Gibbs sweeps.

All kernels work on a generic linear model  X ~ W F  where W is d x K and F is
K x N.  For the factor model F holds the factors; for the DAG F stacks the
observed parents over the driving and latent signals.  ``E`` is the masked
residual M * (X - W F) and is updated in place whenever W or F change.
Roles: 0 structurally zero, 1 spike and slab, 2 slab only, 3 frozen.
"""

import numpy as np
from numba import njit

LOG_2PI = np.log(2.0 * np.pi)
UPS_MIN = 1e-300
UPS_MAX = 1e300


@njit(cache=True)
def ig_draw(mu, lam, rng):
    y = rng.standard_normal()
    y = y * y
    t = mu * y / (2.0 * lam)
    x = mu / (1.0 + t + np.sqrt(t * t + 2.0 * t))
    if rng.random() <= mu / (mu + x):
        return x
    return mu * mu / x


@njit(cache=True)
def ig_fill(mu, lam, rng, out):
    for n in range(out.shape[0]):
        out[n] = ig_draw(mu, lam, rng)


@njit(cache=True)
def sigmoid(a):
    if a >= 0:
        return 1.0 / (1.0 + np.exp(-a))
    e = np.exp(a)
    return e / (1.0 + e)


@njit(cache=True)
def log_xi(b, S, tau, psi, prior_p):
    """Log posterior odds of inclusion for one weight, slab integrated out."""
    prec = S + 1.0 / tau
    return (
        np.log(prior_p)
        - np.log1p(-prior_p)
        - 0.5 * np.log(tau)
        - 0.5 * np.log(prec)
        + b * b / (2.0 * psi * prec)
    )


@njit(cache=True)
def _stats(E, F, M, w, i, k):
    # sum of squared regressors and the projection of the residual with w removed
    S = 0.0
    b = 0.0
    for n in range(E.shape[1]):
        f = F[k, n]
        m = M[i, n]
        S += m * f * f
        b += (E[i, n] + m * w * f) * f
    return S, b


@njit(cache=True)
def _shift(E, F, M, i, k, dw):
    if dw != 0.0:
        for n in range(E.shape[1]):
            E[i, n] -= M[i, n] * dw * F[k, n]


@njit(cache=True)
def update_psi(E, W, H, role, tau, M, s_s, s_r, rng, psi):
    d, N = E.shape
    K = W.shape[1]
    for i in range(d):
        ss = 0.0
        nobs = 0.0
        for n in range(N):
            ss += E[i, n] * E[i, n]
            nobs += M[i, n]
        quad = 0.0
        nact = 0
        for k in range(K):
            r = role[i, k]
            if H[i, k] != 0.0 and (r == 1 or r == 2):
                quad += W[i, k] * W[i, k] / tau[i, k]
                nact += 1
        shape = s_s + 0.5 * (nobs + nact)
        rate = s_r + 0.5 * ss + 0.5 * quad
        psi[i] = rate / rng.gamma(shape, 1.0)


@njit(cache=True)
def update_weights(E, F, W, H, role, tau, psi, M, t_s, t_r, rng):
    d = E.shape[0]
    K = W.shape[1]
    for i in range(d):
        for k in range(K):
            r = role[i, k]
            if r != 1 and r != 2:
                continue
            if H[i, k] != 0.0:
                w = W[i, k]
                S, b = _stats(E, F, M, w, i, k)
                prec = S + 1.0 / tau[i, k]
                wn = b / prec + np.sqrt(psi[i] / prec) * rng.standard_normal()
                if wn == 0.0:
                    wn = 1e-300
                _shift(E, F, M, i, k, wn - w)
                W[i, k] = wn
                rate = t_r + wn * wn / (2.0 * psi[i])
                tau[i, k] = rate / rng.gamma(t_s + 0.5, 1.0)
            else:
                tau[i, k] = t_r / rng.gamma(t_s, 1.0)


@njit(cache=True)
def update_sparsity(E, F, W, H, role, tau, eta, nu, psi, M, alpha_p, alpha_m, beta_p, beta_m, rng):
    d = E.shape[0]
    K = W.shape[1]
    a_on = alpha_p * alpha_m
    a_off = alpha_p * (1.0 - alpha_m)
    for k in range(K):
        n_u = 0.0
        n_tot = 0.0
        for i in range(d):
            if role[i, k] != 1:
                continue
            w = W[i, k]
            S, b = _stats(E, F, M, w, i, k)
            p_in = sigmoid(log_xi(b, S, tau[i, k], psi[i], alpha_m * nu[k]))
            if rng.random() < p_in:
                prec = S + 1.0 / tau[i, k]
                wn = b / prec + np.sqrt(psi[i] / prec) * rng.standard_normal()
                if wn == 0.0:
                    wn = 1e-300
                H[i, k] = 1.0
                eta[i, k] = rng.beta(a_on + 1.0, a_off)
                n_u += 1.0
            else:
                wn = 0.0
                H[i, k] = 0.0
                p_u = nu[k] * (1.0 - alpha_m) / (1.0 - nu[k] * alpha_m)
                if rng.random() < p_u:
                    eta[i, k] = rng.beta(a_on, a_off + 1.0)
                    n_u += 1.0
                else:
                    eta[i, k] = 0.0
            n_tot += 1.0
            _shift(E, F, M, i, k, wn - w)
            W[i, k] = wn
        nu[k] = rng.beta(beta_p * beta_m + n_u, beta_p * (1.0 - beta_m) + n_tot - n_u)


@njit(cache=True)
def update_latent(E, F, W, psi, M, rows, kind, lam2, theta, sigma2, ups, rng):
    """Redraw latent rows ``rows`` of F and their mixing variances.

    kind 0 Laplace, 1 Student-t; other kinds (GP rows) are skipped.
    """
    d, N = E.shape
    for a in range(rows.shape[0]):
        k = rows[a]
        if kind[a] != 0 and kind[a] != 1:
            continue
        for n in range(N):
            z = F[k, n]
            A = 0.0
            b = 0.0
            for i in range(d):
                w = W[i, k]
                if w == 0.0:
                    continue
                m = M[i, n]
                A += m * w * w / psi[i]
                b += w * (E[i, n] + m * w * z) / psi[i]
            prec = A + 1.0 / (ups[a, n] * sigma2[a])
            zn = b / prec + rng.standard_normal() / np.sqrt(prec)
            dz = zn - z
            for i in range(d):
                w = W[i, k]
                if w != 0.0:
                    E[i, n] -= M[i, n] * w * dz
            F[k, n] = zn
            if kind[a] == 0:
                az = max(abs(zn), 1e-12)
                v = 1.0 / ig_draw(np.sqrt(2.0 * lam2[a]) / az, 2.0 * lam2[a], rng)
            else:
                th = theta[a]
                rate = th / 2.0 + zn * zn / (2.0 * sigma2[a])
                v = rate / rng.gamma((th + 1.0) / 2.0, 1.0)
            ups[a, n] = min(max(v, UPS_MIN), UPS_MAX)


@njit(cache=True)
def log_likelihood(E, psi, M):
    d, N = E.shape
    ll = 0.0
    for i in range(d):
        c = -0.5 * (LOG_2PI + np.log(psi[i]))
        inv = 0.5 / psi[i]
        for n in range(N):
            if M[i, n] != 0.0:
                ll += c - E[i, n] * E[i, n] * inv
    return ll


@njit(cache=True)
def masked_log_likelihood(X, M, D, Z, psi, rank_row, rank_col):
    """Gaussian log-likelihood with D[i, j] removed when column j sits among the
    first d positions and after row i in the ordering."""
    d, N = X.shape
    K = D.shape[1]
    Dm = D.copy()
    for i in range(d):
        for j in range(K):
            if rank_col[j] < d and rank_col[j] > rank_row[i]:
                Dm[i, j] = 0.0
    ll = 0.0
    for i in range(d):
        c = -0.5 * (LOG_2PI + np.log(psi[i]))
        inv = 0.5 / psi[i]
        for n in range(N):
            if M[i, n] == 0.0:
                continue
            mu = 0.0
            for j in range(K):
                mu += Dm[i, j] * Z[j, n]
            r = X[i, n] - mu
            ll += c - r * r * inv
    return ll


@njit(cache=True)
def _transpose(order, rng):
    n = order.shape[0]
    a = rng.integers(0, n)
    b = rng.integers(0, n - 1)
    if b >= a:
        b += 1
    out = order.copy()
    out[a] = order[b]
    out[b] = order[a]
    return out


@njit(cache=True)
def _rank(order):
    r = np.empty_like(order)
    for pos in range(order.shape[0]):
        r[order[pos]] = pos
    return r


@njit(cache=True)
def mh_permutations(X, M, D, Z, psi, order_row, order_col, reps, rng, accepted, visited):
    """``reps`` M-H steps over (row order, column order).

    Each proposal transposes the row order, the column order, or both, with
    equal probability; the proposal is symmetric in every case.  Writes the
    acceptance flags and the row order after every step and updates the
    order arrays in place."""
    ll = masked_log_likelihood(X, M, D, Z, psi, _rank(order_row), _rank(order_col))
    for r in range(reps):
        move = rng.integers(0, 3)
        prow = _transpose(order_row, rng) if move != 1 else order_row.copy()
        pcol = _transpose(order_col, rng) if move != 0 else order_col.copy()
        ll_new = masked_log_likelihood(X, M, D, Z, psi, _rank(prow), _rank(pcol))
        delta = ll_new - ll
        if delta >= 0.0 or np.log(rng.random()) < delta:
            order_row[:] = prow
            order_col[:] = pcol
            ll = ll_new
            accepted[r] = True
        else:
            accepted[r] = False
        visited[r, :] = order_row
    return ll


@njit(cache=True)
def _chol_logpdf(x, mean, S):
    # in-place Cholesky of a small SPD matrix, returns log N(x | mean, S)
    d = x.shape[0]
    L = np.zeros((d, d))
    for j in range(d):
        s = S[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= 0.0:
            return -np.inf
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, d):
            s = S[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    y = np.empty(d)
    quad = 0.0
    logdet = 0.0
    for i in range(d):
        s = x[i] - mean[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
        quad += y[i] * y[i]
        logdet += np.log(L[i, i])
    return -0.5 * (d * LOG_2PI + quad) - logdet


@njit(cache=True)
def predictive_log_density(Xs, mean, C, psi, kind, lam2, theta, sigma2, n_rep, rng, ups_cap):
    """Per-column log of the Monte Carlo average of N(x | mean, C U Cᵀ + Ψ)
    over prior draws of the diagonal U."""
    d, N = Xs.shape
    L = C.shape[1]
    out = np.empty(N)
    vals = np.empty(n_rep)
    S = np.empty((d, d))
    u = np.empty(L)
    for n in range(N):
        for r in range(n_rep):
            for l in range(L):
                if kind[l] == 0:
                    v = rng.exponential(1.0 / lam2[l])
                elif kind[l] == 1:
                    v = sigma2[l] * theta[l] / (2.0 * rng.gamma(theta[l] / 2.0, 1.0))
                else:
                    v = 1.0
                u[l] = min(v, ups_cap)
            for i in range(d):
                for j in range(i + 1):
                    s = 0.0
                    for l in range(L):
                        s += C[i, l] * u[l] * C[j, l]
                    S[i, j] = s
                    S[j, i] = s
                S[i, i] += psi[i]
            vals[r] = _chol_logpdf(Xs[:, n], mean[:, n], S)
        mx = vals.max()
        if mx == -np.inf:
            out[n] = -np.inf
            continue
        acc = 0.0
        for r in range(n_rep):
            acc += np.exp(vals[r] - mx)
        out[n] = mx + np.log(acc / n_rep)
    return out
