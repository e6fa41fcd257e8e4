"""Brute-force reference implementations, independent of the package.

Likelihoods and posteriors are computed by enumerating every hidden state
path and multiplying the chain-rule factors directly, with densities from
scipy.stats.  Feasible up to M**N of a few thousand; used to freeze
expected values and to cross-check the scaled recursions.
"""

import itertools

import numpy as np
from scipy import stats


def _pdf(x, kind, loc, scale):
    """Joint density of one feature vector under independent features."""
    if kind == "lognormal":
        return float(np.prod(stats.lognorm.pdf(x, s=scale, scale=np.exp(loc))))
    return float(np.prod(stats.norm.pdf(x, loc=loc, scale=scale)))


def enumerate_paths(startp, trans, emit_loc, emit_scale, kind, events, features):
    """All path probabilities P(x, z | events) for a toy instance.

    Parameters use raw tables: ``startp`` (m, M), ``trans`` (m, m, M, M),
    ``emit_loc``/``emit_scale`` (m, M, K).  Returns (paths, probs).
    """
    n = len(events)
    n_states = startp.shape[1]
    paths = list(itertools.product(range(n_states), repeat=n))
    probs = np.empty(len(paths))
    dens = np.empty((n, n_states))
    for t in range(n):
        w = events[t]
        for j in range(n_states):
            dens[t, j] = _pdf(features[t], kind, emit_loc[w, j], emit_scale[w, j])
    for k, path in enumerate(paths):
        p = startp[events[0], path[0]] * dens[0, path[0]]
        for t in range(n - 1):
            p *= trans[events[t], events[t + 1], path[t], path[t + 1]] * dens[t + 1, path[t + 1]]
        probs[k] = p
    return paths, probs


def path_loglik(startp, trans, emit_loc, emit_scale, kind, events, features):
    _, probs = enumerate_paths(startp, trans, emit_loc, emit_scale, kind, events, features)
    return float(np.log(probs.sum()))


def path_posteriors(startp, trans, emit_loc, emit_scale, kind, events, features):
    """Exact gamma (N, M) and xi (N-1, M, M) by path enumeration."""
    paths, probs = enumerate_paths(startp, trans, emit_loc, emit_scale, kind, events, features)
    n = len(events)
    n_states = startp.shape[1]
    total = probs.sum()
    gamma = np.zeros((n, n_states))
    xi = np.zeros((max(n - 1, 0), n_states, n_states))
    for path, p in zip(paths, probs):
        for t, j in enumerate(path):
            gamma[t, j] += p
        for t in range(n - 1):
            xi[t, path[t], path[t + 1]] += p
    return gamma / total, xi / total


def path_backward(startp, trans, emit_loc, emit_scale, kind, events, features):
    """Exact unscaled backward table: beta[n, j] = P(x_{n+1..N} | z_n=j)."""
    n = len(events)
    n_states = startp.shape[1]
    beta = np.zeros((n, n_states))
    for t in range(n):
        for i in range(n_states):
            if t == n - 1:
                beta[t, i] = 1.0
                continue
            tail = 0.0
            for path in itertools.product(range(n_states), repeat=n - 1 - t):
                states = (i,) + path
                p = 1.0
                for k in range(len(path)):
                    w_prev, w_next = events[t + k], events[t + k + 1]
                    p *= trans[w_prev, w_next, states[k], states[k + 1]]
                    p *= _pdf(
                        features[t + k + 1],
                        kind,
                        emit_loc[w_next, states[k + 1]],
                        emit_scale[w_next, states[k + 1]],
                    )
                tail += p
            beta[t, i] = tail
    return beta
