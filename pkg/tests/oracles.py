"""Independent reference implementations used as test oracles.

Nothing here calls into the library's numerics: the incomplete gamma uses
its power series and Lentz's continued fraction, and the quasi-likelihoods
are plain per-block loops with dense inverses.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

EPS = 1e-16
MAX_TERMS = 10_000


def _gamma_series(a, x):
    term = total = 1.0 / a
    ap = a
    for _ in range(MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_p(a, x):
    """Lower regularized incomplete gamma ``P(a, x)``."""
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def chi2_cdf(x, k):
    return regularized_gamma_p(0.5 * k, 0.5 * x)


def chi2_quantile(p, k):
    """Bisection on the oracle cdf, to full double precision."""
    lo, hi = 0.0, 1.0
    while chi2_cdf(hi, k) < p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, k) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def naive_l1(means, lam, model, alpha, delta, reg):
    total = 0.0
    for j in range(1, len(means) - 1):
        x = means[j - 1]
        a = model.diffusion(x[None, :], np.asarray(alpha, float))[0]
        C = a @ a.T + reg * lam
        D = means[j + 1] - means[j]
        W = np.linalg.inv(2.0 / 3.0 * delta * C)
        total += D @ W @ D + np.log(np.linalg.det(C))
    return -0.5 * total


def naive_l2(means, lam, model, beta, alpha, delta, reg):
    total = 0.0
    for j in range(1, len(means) - 1):
        x = means[j - 1]
        a = model.diffusion(x[None, :], np.asarray(alpha, float))[0]
        C = a @ a.T + reg * lam
        b = model.drift(x[None, :], np.asarray(beta, float))[0]
        R = means[j + 1] - means[j] - delta * b
        total += R @ np.linalg.inv(delta * C) @ R
    return -0.5 * total


def grid_max(f, box, points):
    """Best value of ``f`` over a dense tensor grid on ``box``."""
    axes = [np.linspace(lo, hi, points) for lo, hi in box]
    best_x, best_v = None, -np.inf
    for x in itertools.product(*axes):
        v = f(np.array(x))
        if v > best_v:
            best_x, best_v = np.array(x), v
    return best_x, best_v


def central_gradient(f, x, rel_step=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2.0 * h)
    return g


def exact_ou_terminal(x0, t, n_paths, rng):
    """``X_t`` for ``dX = -X dt + dW`` from the Gaussian transition law."""
    mean = x0 * math.exp(-t)
    var = 0.5 * (1.0 - math.exp(-2.0 * t))
    return mean + math.sqrt(var) * rng.standard_normal(n_paths)


def ks_distance(sample, cdf):
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    F = np.array([cdf(v) for v in x])
    return max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n))
