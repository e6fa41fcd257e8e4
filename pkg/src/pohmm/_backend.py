"""Scaled forward/backward kernels with a numba fast path.

The recursions here are the per-sequence hot loops of the whole package:
everything else (re-estimation, scoring, goodness of fit, benchmarks) sits
on top of them.  Two interchangeable implementations are provided:

* explicit-loop kernels compiled with ``numba.njit`` (default), and
* vectorized pure-numpy fallbacks.

Set ``POHMM_NUMBA=0`` in the environment to force the numpy path.  The
active choice is reported by :data:`BACKEND`, and both implementations stay
importable (see ``benchmarks/backend_bench.py``).

All kernels work on *shifted* linear-space densities: at step ``n`` the
emission log densities ``logb[n]`` are offset by their row maximum before
exponentiation, which keeps every intermediate in a sane range while the
returned per-step log normalizers remain exact.  Conventions:

* ``alpha[n, j]``   = P(z_n = j | x_1..n, events), rows sum to 1
* ``logscale[n]``   = ln P(x_n | x_1..n-1, events); summing gives the loglik
* ``beta_sh[n, j]`` = backward variable scaled so that
  ``gamma[n] = alpha[n] * beta_sh[n] * exp(logscale[n] - max_j logb[n, j])``
"""

import os

import numpy as np


def _forward_py(startvec, trans_seq, logb):
    n, n_states = logb.shape
    alpha = np.empty((n, n_states))
    logscale = np.empty(n)
    shift = logb[0].max()
    work = startvec * np.exp(logb[0] - shift)
    tot = work.sum()
    if tot > 0.0:
        alpha[0] = work / tot
        logscale[0] = np.log(tot) + shift
    else:
        alpha[0] = 1.0 / n_states
        logscale[0] = -np.inf
    for t in range(1, n):
        shift = logb[t].max()
        work = (alpha[t - 1] @ trans_seq[t - 1]) * np.exp(logb[t] - shift)
        tot = work.sum()
        if tot > 0.0:
            alpha[t] = work / tot
            logscale[t] = np.log(tot) + shift
        else:
            alpha[t] = 1.0 / n_states
            logscale[t] = -np.inf
    return alpha, logscale


def _backward_py(trans_seq, logb, logscale):
    n, n_states = logb.shape
    beta = np.empty((n, n_states))
    shift = logb[n - 1].max()
    ctil = np.exp(logscale[n - 1] - shift)
    beta[n - 1] = 1.0 / ctil if ctil > 0.0 else 0.0
    shift_next = shift
    for t in range(n - 2, -1, -1):
        bnext = np.exp(logb[t + 1] - shift_next)
        v = trans_seq[t] @ (bnext * beta[t + 1])
        shift = logb[t].max()
        ctil = np.exp(logscale[t] - shift)
        beta[t] = v / ctil if ctil > 0.0 else 0.0
        shift_next = shift
    return beta


def _trans_stats_py(alpha, beta_sh, trans_seq, logb, logscale, events, n_events):
    n, n_states = logb.shape
    num = np.zeros((n_events, n_events, n_states, n_states))
    den = np.zeros((n_events, n_events, n_states))
    shifts = logb.max(axis=1)
    ctil = np.exp(logscale - shifts)
    for t in range(n - 1):
        psi = events[t]
        omega = events[t + 1]
        bnext = np.exp(logb[t + 1] - shifts[t + 1])
        xi = alpha[t][:, None] * trans_seq[t] * (bnext * beta_sh[t + 1])[None, :]
        num[psi, omega] += xi
        den[psi, omega] += alpha[t] * beta_sh[t] * ctil[t]
    return num, den


def _forward_loop(startvec, trans_seq, logb):
    n, n_states = logb.shape
    alpha = np.empty((n, n_states))
    logscale = np.empty(n)

    shift = logb[0, 0]
    for j in range(1, n_states):
        if logb[0, j] > shift:
            shift = logb[0, j]
    tot = 0.0
    for j in range(n_states):
        alpha[0, j] = startvec[j] * np.exp(logb[0, j] - shift)
        tot += alpha[0, j]
    if tot > 0.0:
        for j in range(n_states):
            alpha[0, j] /= tot
        logscale[0] = np.log(tot) + shift
    else:
        for j in range(n_states):
            alpha[0, j] = 1.0 / n_states
        logscale[0] = -np.inf

    for t in range(1, n):
        shift = logb[t, 0]
        for j in range(1, n_states):
            if logb[t, j] > shift:
                shift = logb[t, j]
        tot = 0.0
        for j in range(n_states):
            acc = 0.0
            for i in range(n_states):
                acc += alpha[t - 1, i] * trans_seq[t - 1, i, j]
            alpha[t, j] = acc * np.exp(logb[t, j] - shift)
            tot += alpha[t, j]
        if tot > 0.0:
            for j in range(n_states):
                alpha[t, j] /= tot
            logscale[t] = np.log(tot) + shift
        else:
            for j in range(n_states):
                alpha[t, j] = 1.0 / n_states
            logscale[t] = -np.inf
    return alpha, logscale


def _backward_loop(trans_seq, logb, logscale):
    n, n_states = logb.shape
    beta = np.empty((n, n_states))

    shift_next = logb[n - 1, 0]
    for j in range(1, n_states):
        if logb[n - 1, j] > shift_next:
            shift_next = logb[n - 1, j]
    ctil = np.exp(logscale[n - 1] - shift_next)
    for j in range(n_states):
        beta[n - 1, j] = 1.0 / ctil if ctil > 0.0 else 0.0

    for t in range(n - 2, -1, -1):
        shift = logb[t, 0]
        for j in range(1, n_states):
            if logb[t, j] > shift:
                shift = logb[t, j]
        ctil = np.exp(logscale[t] - shift)
        for i in range(n_states):
            acc = 0.0
            for j in range(n_states):
                acc += (
                    trans_seq[t, i, j]
                    * np.exp(logb[t + 1, j] - shift_next)
                    * beta[t + 1, j]
                )
            beta[t, i] = acc / ctil if ctil > 0.0 else 0.0
        shift_next = shift
    return beta


def _trans_stats_loop(alpha, beta_sh, trans_seq, logb, logscale, events, n_events):
    n, n_states = logb.shape
    num = np.zeros((n_events, n_events, n_states, n_states))
    den = np.zeros((n_events, n_events, n_states))
    for t in range(n - 1):
        psi = events[t]
        omega = events[t + 1]
        shift = logb[t, 0]
        for j in range(1, n_states):
            if logb[t, j] > shift:
                shift = logb[t, j]
        shift_next = logb[t + 1, 0]
        for j in range(1, n_states):
            if logb[t + 1, j] > shift_next:
                shift_next = logb[t + 1, j]
        ctil = np.exp(logscale[t] - shift)
        for i in range(n_states):
            den[psi, omega, i] += alpha[t, i] * beta_sh[t, i] * ctil
            for j in range(n_states):
                num[psi, omega, i, j] += (
                    alpha[t, i]
                    * trans_seq[t, i, j]
                    * np.exp(logb[t + 1, j] - shift_next)
                    * beta_sh[t + 1, j]
                )
    return num, den


def _want_numba():
    flag = os.environ.get("POHMM_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


NUMBA_AVAILABLE = False
if _want_numba():
    try:
        from numba import njit

        _jit = njit(cache=True, nogil=True)
        forward_pass = _jit(_forward_loop)
        backward_pass = _jit(_backward_loop)
        trans_stats = _jit(_trans_stats_loop)
        NUMBA_AVAILABLE = True
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - exercised only without numba
        forward_pass = _forward_py
        backward_pass = _backward_py
        trans_stats = _trans_stats_py
        BACKEND = "numpy"
else:
    forward_pass = _forward_py
    backward_pass = _backward_py
    trans_stats = _trans_stats_py
    BACKEND = "numpy"


IMPLEMENTATIONS = {
    "numpy": (_forward_py, _backward_py, _trans_stats_py),
}
if NUMBA_AVAILABLE:
    IMPLEMENTATIONS["numba"] = (forward_pass, backward_pass, trans_stats)
