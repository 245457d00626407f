"""Pure-numpy likelihood kernels.

Reference implementations of the hot numerical paths. The numba module
mirrors these signatures exactly; the backend module picks one of the two.

Conventions shared by all kernels:
  - ``bits`` is the (2^J, J) 0/1 pattern matrix, row c = binary digits of c
    with list 1 as the most significant bit.
  - ``pairs`` holds the two-list interaction coefficients in lexicographic
    order (1,2), (1,3), ..., (J-1,J).
  - gradients are laid out [d/dalpha_1..J, d/dpairs..., d/dtheta] with the
    shift derivative always in the last slot.
  - ``counts`` has length 2^J; for observed-only tables slot 0 must be 0.
"""

import numpy as np
from scipy.special import gammaln


def _eta(bits, alpha, pairs, shift):
    J = bits.shape[1]
    P = np.zeros((J, J))
    P[np.triu_indices(J, 1)] = pairs
    return shift + alpha[None, :] + bits @ P


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def cell_logprobs(bits, alpha, pairs, shift):
    """Log cell probabilities of the sequential capture model."""
    eta = _eta(bits, alpha, pairs, shift)
    return (bits * eta - np.logaddexp(0.0, eta)).sum(axis=1)


def cell_logprobs_grad(bits, alpha, pairs, shift):
    """Log cell probabilities and their parameter Jacobian."""
    nc, J = bits.shape
    eta = _eta(bits, alpha, pairs, shift)
    logp = (bits * eta - np.logaddexp(0.0, eta)).sum(axis=1)
    resid = bits - _sigmoid(eta)
    iu, ku = np.triu_indices(J, 1)
    dlogp = np.empty((nc, J + iu.size + 1))
    dlogp[:, :J] = resid
    dlogp[:, J:-1] = bits[:, iu] * resid[:, ku]
    dlogp[:, -1] = resid.sum(axis=1)
    return logp, dlogp


def incomplete_ll_grad(bits, counts, alpha, pairs, shift):
    """Observed-table log-likelihood with gamma profiled out.

    Returns (loglik, gradient, gamma_hat). The likelihood marginalizes the
    unobserved all-zero cell against a Poisson population size; profiling
    gives gamma_hat = N_obs / (1 - p_0). The gradient of the profiled
    objective needs no dgamma/dparam term (envelope theorem), only the
    partial at fixed gamma.
    """
    logp, dlogp = cell_logprobs_grad(bits, alpha, pairs, shift)
    p = np.exp(logp)
    nobs = counts[1:].sum()
    gamma = nobs / (1.0 - p[0])
    ll = (
        counts[1:] * (np.log(gamma) + logp[1:])
        - gamma * p[1:]
        - gammaln(counts[1:] + 1.0)
    ).sum()
    grad = counts[1:] @ dlogp[1:] + gamma * p[0] * dlogp[0]
    return ll, grad, gamma


def complete_ll_grad(bits, counts, alpha, pairs, shift):
    """Multinomial log-likelihood of a complete table, with its constant."""
    logp, dlogp = cell_logprobs_grad(bits, alpha, pairs, shift)
    n = counts.sum()
    ll = gammaln(n + 1.0) - gammaln(counts + 1.0).sum() + counts @ logp
    return ll, counts @ dlogp


def observed_ll(bits, counts, alpha, pairs, shift, gamma):
    """Observed-table log-likelihood at an explicit gamma."""
    logp = cell_logprobs(bits, alpha, pairs, shift)
    p = np.exp(logp)
    return (
        counts[1:] * (np.log(gamma) + logp[1:])
        - gamma * p[1:]
        - gammaln(counts[1:] + 1.0)
    ).sum()


def re_complete_ll(bits, counts, alpha, pairs, center, sigma, nodes, logw):
    """Complete-table log-likelihood with the shift integrated over
    N(center, sigma^2) by Gauss-Hermite quadrature."""
    n = counts.sum()
    const = gammaln(n + 1.0) - gammaln(counts + 1.0).sum()
    vals = np.empty(nodes.size)
    for q in range(nodes.size):
        theta_q = center + np.sqrt(2.0) * sigma * nodes[q]
        vals[q] = counts @ cell_logprobs(bits, alpha, pairs, theta_q)
    vals += logw
    vmax = vals.max()
    return const + vmax + np.log(np.exp(vals - vmax).sum())


def re_incomplete_ll(bits, counts, alpha, pairs, gamma, center, sigma, nodes, logw):
    """Observed-table log-likelihood with the shift integrated over
    N(center, sigma^2); the Poisson sum over the missing cell is applied
    in closed form inside the integral."""
    vals = np.empty(nodes.size)
    for q in range(nodes.size):
        theta_q = center + np.sqrt(2.0) * sigma * nodes[q]
        vals[q] = observed_ll(bits, counts, alpha, pairs, theta_q, gamma)
    vals += logw
    vmax = vals.max()
    return vmax + np.log(np.exp(vals - vmax).sum())
