"""Numba-compiled likelihood kernels.

Loop versions of the kernels in ``_kernels_numpy``, same signatures and
return values. Compiled lazily on first call; ``cache=True`` persists the
machine code across processes. No fastmath: results must track the numpy
backend to rounding error.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _softplus(x):
    # log(1 + e^x) without overflow
    if x > 30.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


@njit(cache=True)
def _fill_eta(bits, alpha, pairs, shift, eta):
    nc, J = bits.shape
    for c in range(nc):
        m = 0
        for k in range(J):
            eta[c, k] = shift + alpha[k]
        for i in range(J):
            for k in range(i + 1, J):
                coef = pairs[m]
                m += 1
                if bits[c, i] != 0.0:
                    eta[c, k] += coef


@njit(cache=True)
def cell_logprobs(bits, alpha, pairs, shift):
    nc, J = bits.shape
    eta = np.empty((nc, J))
    _fill_eta(bits, alpha, pairs, shift, eta)
    logp = np.zeros(nc)
    for c in range(nc):
        acc = 0.0
        for k in range(J):
            acc += bits[c, k] * eta[c, k] - _softplus(eta[c, k])
        logp[c] = acc
    return logp


@njit(cache=True)
def cell_logprobs_grad(bits, alpha, pairs, shift):
    nc, J = bits.shape
    npar = J + pairs.size + 1
    eta = np.empty((nc, J))
    _fill_eta(bits, alpha, pairs, shift, eta)
    logp = np.zeros(nc)
    dlogp = np.zeros((nc, npar))
    for c in range(nc):
        acc = 0.0
        tsum = 0.0
        for k in range(J):
            acc += bits[c, k] * eta[c, k] - _softplus(eta[c, k])
            r = bits[c, k] - _sigmoid(eta[c, k])
            dlogp[c, k] = r
            tsum += r
        m = 0
        for i in range(J):
            for k in range(i + 1, J):
                dlogp[c, J + m] = bits[c, i] * dlogp[c, k]
                m += 1
        dlogp[c, npar - 1] = tsum
        logp[c] = acc
    return logp, dlogp


@njit(cache=True)
def incomplete_ll_grad(bits, counts, alpha, pairs, shift):
    nc = bits.shape[0]
    npar = bits.shape[1] + pairs.size + 1
    logp, dlogp = cell_logprobs_grad(bits, alpha, pairs, shift)
    nobs = 0.0
    for c in range(1, nc):
        nobs += counts[c]
    p0 = math.exp(logp[0])
    gamma = nobs / (1.0 - p0)
    loggamma = math.log(gamma)
    ll = 0.0
    grad = np.zeros(npar)
    for c in range(1, nc):
        pc = math.exp(logp[c])
        ll += counts[c] * (loggamma + logp[c]) - gamma * pc - math.lgamma(counts[c] + 1.0)
        for m in range(npar):
            grad[m] += counts[c] * dlogp[c, m]
    for m in range(npar):
        grad[m] += gamma * p0 * dlogp[0, m]
    return ll, grad, gamma


@njit(cache=True)
def complete_ll_grad(bits, counts, alpha, pairs, shift):
    nc = bits.shape[0]
    npar = bits.shape[1] + pairs.size + 1
    logp, dlogp = cell_logprobs_grad(bits, alpha, pairs, shift)
    n = 0.0
    for c in range(nc):
        n += counts[c]
    ll = math.lgamma(n + 1.0)
    grad = np.zeros(npar)
    for c in range(nc):
        ll += counts[c] * logp[c] - math.lgamma(counts[c] + 1.0)
        for m in range(npar):
            grad[m] += counts[c] * dlogp[c, m]
    return ll, grad


@njit(cache=True)
def observed_ll(bits, counts, alpha, pairs, shift, gamma):
    nc = bits.shape[0]
    logp = cell_logprobs(bits, alpha, pairs, shift)
    loggamma = math.log(gamma)
    ll = 0.0
    for c in range(1, nc):
        pc = math.exp(logp[c])
        ll += counts[c] * (loggamma + logp[c]) - gamma * pc - math.lgamma(counts[c] + 1.0)
    return ll


@njit(cache=True)
def _logsumexp(vals):
    vmax = vals[0]
    for q in range(1, vals.size):
        if vals[q] > vmax:
            vmax = vals[q]
    acc = 0.0
    for q in range(vals.size):
        acc += math.exp(vals[q] - vmax)
    return vmax + math.log(acc)


@njit(cache=True)
def re_complete_ll(bits, counts, alpha, pairs, center, sigma, nodes, logw):
    nc = bits.shape[0]
    n = 0.0
    const = 0.0
    for c in range(nc):
        n += counts[c]
        const -= math.lgamma(counts[c] + 1.0)
    const += math.lgamma(n + 1.0)
    vals = np.empty(nodes.size)
    for q in range(nodes.size):
        theta_q = center + math.sqrt(2.0) * sigma * nodes[q]
        logp = cell_logprobs(bits, alpha, pairs, theta_q)
        acc = 0.0
        for c in range(nc):
            acc += counts[c] * logp[c]
        vals[q] = acc + logw[q]
    return const + _logsumexp(vals)


@njit(cache=True)
def re_incomplete_ll(bits, counts, alpha, pairs, gamma, center, sigma, nodes, logw):
    vals = np.empty(nodes.size)
    for q in range(nodes.size):
        theta_q = center + math.sqrt(2.0) * sigma * nodes[q]
        vals[q] = observed_ll(bits, counts, alpha, pairs, theta_q, gamma) + logw[q]
    return _logsumexp(vals)
