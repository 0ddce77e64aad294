"""Diagonal-covariance Gaussian mixture helpers shared by HMM states and GMMs."""
import numpy as np
from scipy.special import logsumexp

LOG_2PI = np.log(2.0 * np.pi)


def diag_log_gauss(X: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """log N(x_t; mu_k, diag(var_k)) for every frame/component pair, shape (T, K)."""
    X = np.atleast_2d(X)
    inv = 1.0 / variances
    D = X.shape[1]
    const = -0.5 * (D * LOG_2PI + np.log(variances).sum(axis=1))
    quad = (X**2) @ inv.T - 2.0 * X @ (means * inv).T + np.sum(means**2 * inv, axis=1)
    return const - 0.5 * quad


def mixture_log_components(X, weights, means, variances):
    """Per-component joint log-likelihoods ``log w_k + log N(x; k)``, shape (T, K)."""
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    return diag_log_gauss(X, means, variances) + logw


def mixture_loglik(X, weights, means, variances) -> np.ndarray:
    """Per-frame log-likelihood under a diagonal GMM."""
    return logsumexp(mixture_log_components(X, weights, means, variances), axis=1)


def posteriors(X, weights, means, variances):
    """Responsibilities (T, K) and per-frame log-likelihoods (T,)."""
    lc = mixture_log_components(X, weights, means, variances)
    ll = logsumexp(lc, axis=1)
    return np.exp(lc - ll[:, None]), ll


def m_step(X, resp, old_means, old_vars, var_floor, min_count=1e-8):
    """Weighted ML update of weights, means and (floored) variances.

    Components with (numerically) no responsibility keep their previous
    mean and variance.
    """
    counts = resp.sum(axis=0)
    means = np.array(old_means, dtype=np.float64, copy=True)
    variances = np.array(old_vars, dtype=np.float64, copy=True)
    live = counts > min_count
    for k in np.flatnonzero(live):
        r = resp[:, k]
        mu = (r @ X) / counts[k]
        means[k] = mu
        variances[k] = np.maximum((r @ (X - mu) ** 2) / counts[k], var_floor)
    weights = counts / counts.sum() if counts.sum() > 0 else np.full(len(counts), 1.0 / len(counts))
    return weights, means, variances, counts


def split_components(weights, means, variances, factor=0.2):
    """Double the component count: each mean moves by +/- factor*sigma, weights halve."""
    sd = np.sqrt(variances)
    new_w = np.repeat(weights / 2.0, 2)
    new_m = np.empty((2 * len(means), means.shape[1]))
    new_m[0::2] = means + factor * sd
    new_m[1::2] = means - factor * sd
    new_v = np.repeat(variances, 2, axis=0)
    return new_w, new_m, new_v
