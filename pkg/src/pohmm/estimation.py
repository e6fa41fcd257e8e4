"""Parameter estimation: initialization, EM updates, smoothing, fit loop.

Estimation follows the modified Baum-Welch cycle: expectation (forward/
backward posteriors), maximization (closed-form re-estimates of start,
transition, and emission cells), regularization (marginalization plus
frequency-weighted smoothing), and an epsilon stopping rule on the total
log likelihood.  A candidate update whose likelihood improvement falls
below epsilon is not adopted, so the recorded likelihood trace is
nondecreasing whether or not smoothing is enabled.

Initialization is observation-based and deterministic: uniform start and
transition tables, per-event-type data moments, and state locations spread
over ``location +- h * scale`` so state 0 is always the low-location
("active") state in every fitted model.
"""

from dataclasses import dataclass, field

import numpy as np

from .emissions import SCALE_FLOOR
from .event_chain import event_frequencies, fit_event_chain
from .model import (
    NumericalError,
    PohmmParams,
    _emission_logdensity,
    _step_tables,
    copy_params,
    marginalize,
)
from ._backend import backward_pass, forward_pass, trans_stats

# Responsibility mass below this keeps the previous cell value.
MASS_EPS = 1e-12


@dataclass
class FitConfig:
    """Estimation settings.

    ``bandwidth`` controls the initial spread of state locations (in
    scale units); ``pseudocount`` is the additive smoothing applied when
    fitting the event chain.
    """

    n_states: int = 2
    kind: str = "lognormal"
    epsilon: float = 1e-6
    max_iter: int = 1000
    bandwidth: float = 2.0
    smoothing: bool = True
    pseudocount: float = 0.0

    def __post_init__(self):
        if self.n_states < 1:
            raise ValueError("n_states must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.kind not in ("lognormal", "normal"):
            raise ValueError(f"unknown emission kind: {self.kind!r}")


@dataclass
class FitReport:
    """Per-fit diagnostics; ``loglik_trace`` covers the adopted models only."""

    loglik_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_loglik: float = np.nan


def dof(n_states, n_events, n_features):
    """Free parameters after normalization constraints."""
    if min(n_states, n_events, n_features) < 1:
        raise ValueError("all dimensions must be >= 1")
    m, M, K = n_events, n_states, n_features
    return m * (M - 1) + m * m * M * (M - 1) + m * M * K


def _check_sequences(seqs, alphabet, kind):
    if not seqs:
        raise ValueError("no sequences")
    m = alphabet.size
    n_features = seqs[0].n_features
    for seq in seqs:
        if seq.n_features != n_features:
            raise ValueError("feature dimension mismatch across sequences")
        if seq.events.min() < 0 or seq.events.max() >= m:
            raise ValueError("symbol out of alphabet")
        if kind == "lognormal" and np.any(seq.features <= 0):
            raise ValueError("domain: log-normal emissions require positive values")
    return n_features


def init_params(seqs, alphabet, config):
    """Observation-based deterministic initialization.

    Start and transition tables are uniform (maximum entropy).  Emission
    locations per event type are spread around the observed per-type
    moments: state ``j`` (0-based) sits at
    ``loc[w] + (2 h j / (M - 1) - h) * scale[w]`` for M >= 2, so states are
    ordered low-to-high.  Event types with no observations use the pooled
    moments over all data.
    """
    K = _check_sequences(seqs, alphabet, config.kind)
    m, M = alphabet.size, config.n_states

    y = np.concatenate([s.features for s in seqs], axis=0)
    if config.kind == "lognormal":
        y = np.log(y)
    ids = np.concatenate([s.events for s in seqs])

    pooled_loc = y.mean(axis=0)
    pooled_scale = np.maximum(y.std(axis=0), SCALE_FLOOR)
    loc_by_event = np.empty((m, K))
    scale_by_event = np.empty((m, K))
    for w in range(m):
        rows = y[ids == w]
        if rows.shape[0] == 0:
            loc_by_event[w] = pooled_loc
            scale_by_event[w] = pooled_scale
        else:
            loc_by_event[w] = rows.mean(axis=0)
            scale_by_event[w] = np.maximum(rows.std(axis=0), SCALE_FLOOR)

    if M == 1:
        offsets = np.zeros(1)
    else:
        j = np.arange(M, dtype=np.float64)
        offsets = 2.0 * config.bandwidth * j / (M - 1) - config.bandwidth
    emit_loc = loc_by_event[:, None, :] + offsets[None, :, None] * scale_by_event[:, None, :]
    emit_scale = np.broadcast_to(scale_by_event[:, None, :], (m, M, K)).copy()

    chain = fit_event_chain([s.events for s in seqs], alphabet, config.pseudocount)
    params = PohmmParams(
        alphabet=alphabet,
        n_states=M,
        kind=config.kind,
        startp=np.full((m, M), 1.0 / M),
        trans=np.full((m, m, M, M), 1.0 / M),
        emit_loc=emit_loc,
        emit_scale=emit_scale,
        event_chain=chain,
    )
    marginalize(params)
    return params


@dataclass
class _SuffStats:
    loglik: float
    start_sum: np.ndarray   # (m, M) summed gamma_1 per starting event type
    start_cnt: np.ndarray   # (m,) sequences starting with each event type
    trans_num: np.ndarray   # (m, m, M, M) summed xi
    trans_den: np.ndarray   # (m, m, M) summed gamma restricted to the pair
    w: np.ndarray           # (m, M) summed gamma per event type
    wy: np.ndarray          # (m, M, K) summed gamma * y
    wy2: np.ndarray         # (m, M, K) summed gamma * y^2
    occupancy: np.ndarray   # (M,) time-summed gamma over all sequences
    total_steps: int


def _estep(params, seqs):
    """Accumulate expected statistics over all sequences."""
    m, M, K = params.n_events, params.n_states, params.n_features
    stats = _SuffStats(
        loglik=0.0,
        start_sum=np.zeros((m, M)),
        start_cnt=np.zeros(m),
        trans_num=np.zeros((m, m, M, M)),
        trans_den=np.zeros((m, m, M)),
        w=np.zeros((m, M)),
        wy=np.zeros((m, M, K)),
        wy2=np.zeros((m, M, K)),
        occupancy=np.zeros(M),
        total_steps=0,
    )
    for seq in seqs:
        logb = _emission_logdensity(params, seq)
        startvec, trans_seq = _step_tables(params, seq)
        alpha, logscale = forward_pass(startvec, trans_seq, logb)
        beta_sh = backward_pass(trans_seq, logb, logscale)

        shifts = logb.max(axis=1)
        gamma = alpha * beta_sh * np.exp(logscale - shifts)[:, None]
        gamma /= gamma.sum(axis=1, keepdims=True)

        stats.loglik += float(logscale.sum())
        stats.start_sum[seq.events[0]] += gamma[0]
        stats.start_cnt[seq.events[0]] += 1.0
        if seq.n > 1:
            num, den = trans_stats(
                alpha, beta_sh, trans_seq, logb, logscale, seq.events, m
            )
            stats.trans_num += num
            stats.trans_den += den

        y = np.log(seq.features) if params.kind == "lognormal" else seq.features
        for w in np.unique(seq.events):
            rows = seq.events == w
            g = gamma[rows]
            stats.w[w] += g.sum(axis=0)
            stats.wy[w] += g.T @ y[rows]
            stats.wy2[w] += g.T @ (y[rows] ** 2)
        stats.occupancy += gamma.sum(axis=0)
        stats.total_steps += seq.n
    return stats


def _mstep(params, stats, smoothing, freqs):
    """Closed-form re-estimates; cells without support keep prior values."""
    new = copy_params(params)

    seen = stats.start_cnt > 0
    new.startp[seen] = stats.start_sum[seen] / stats.start_cnt[seen, None]
    new.startp[seen] /= new.startp[seen].sum(axis=1, keepdims=True)

    den = stats.trans_den
    rows = den > MASS_EPS  # (m, m, M) rows with responsibility mass
    ratio = np.divide(
        stats.trans_num,
        den[..., None],
        out=np.zeros_like(stats.trans_num),
        where=rows[..., None],
    )
    new.trans[rows] = ratio[rows]
    sums = new.trans.sum(axis=3, keepdims=True)
    np.divide(new.trans, sums, out=new.trans, where=sums > 0)

    cell = stats.w > MASS_EPS  # (m, M) emission cells with mass
    loc = np.divide(
        stats.wy, stats.w[..., None], out=np.zeros_like(stats.wy), where=cell[..., None]
    )
    var = np.divide(
        stats.wy2, stats.w[..., None], out=np.zeros_like(stats.wy2), where=cell[..., None]
    )
    var = var - loc**2
    new.emit_loc[cell] = loc[cell]
    new.emit_scale[cell] = np.sqrt(np.maximum(var[cell], 0.0))
    new.emit_scale = np.maximum(new.emit_scale, SCALE_FLOOR)

    marginalize(new)
    if smoothing:
        new = smooth(new, freqs)
    return new


def smooth(params, freqs):
    """Blend conditional parameters toward the marginals by event frequency.

    Start and emission cells for event type ``w`` use weight
    ``f(w) / (1 + f(w))`` on the conditional value.  Transition cells for
    the pair ``(p, w)`` blend the conditional table with the one-sided
    marginals using weights ``1 / (f(p,w) + f(w))`` and ``1 / (f(p,w) +
    f(p))``; the two-sided marginal gets weight 0.  For rare symbols the
    one-sided weights can exceed a total of 1 and are capped
    proportionally; pairs whose symbols were never seen at all fall back
    outright along the marginal hierarchy.
    """
    if params.marginals is None:
        marginalize(params)
    marg = params.marginals
    new = copy_params(params)

    fsym = np.asarray(freqs.symbol, dtype=np.float64)
    fpair = np.asarray(freqs.pair, dtype=np.float64)
    w_sym = fsym / (1.0 + fsym)

    new.startp = w_sym[:, None] * params.startp + (1.0 - w_sym)[:, None] * marg.startp
    new.startp /= new.startp.sum(axis=1, keepdims=True)

    wv = w_sym[:, None, None]
    new.emit_loc = wv * params.emit_loc + (1.0 - wv) * marg.emit_loc[None]
    new.emit_scale = np.maximum(
        wv * params.emit_scale + (1.0 - wv) * marg.emit_scale[None], SCALE_FLOOR
    )

    den_prev = fpair + fsym[None, :]   # f(p,w) + f(w), weights a[i,j|p]
    den_next = fpair + fsym[:, None]   # f(p,w) + f(p), weights a[i,j|w]
    w_prev = np.divide(1.0, den_prev, out=np.zeros_like(den_prev), where=den_prev > 0)
    w_next = np.divide(1.0, den_next, out=np.zeros_like(den_next), where=den_next > 0)
    tot = w_prev + w_next
    over = tot > 1.0
    w_prev[over] /= tot[over]
    w_next[over] /= tot[over]
    w_cond = 1.0 - w_prev - w_next

    new.trans = (
        w_cond[:, :, None, None] * params.trans
        + w_prev[:, :, None, None] * marg.trans_by_prev[:, None, :, :]
        + w_next[:, :, None, None] * marg.trans_by_next[None, :, :, :]
    )
    dead = (den_prev <= 0) & (den_next <= 0)  # both symbols unseen
    if dead.any():
        new.trans[dead] = marg.trans
    prev_only_dead = (den_prev <= 0) & ~dead
    if prev_only_dead.any():
        p_idx = np.nonzero(prev_only_dead)[0]
        new.trans[prev_only_dead] = marg.trans_by_prev[p_idx]
    next_only_dead = (den_next <= 0) & ~dead
    if next_only_dead.any():
        w_idx = np.nonzero(next_only_dead)[1]
        new.trans[next_only_dead] = marg.trans_by_next[w_idx]
    new.trans /= new.trans.sum(axis=3, keepdims=True)

    marginalize(new)
    return new


def _diagnose_nonfinite(params, seqs):
    """Name the first offending (state, event-type) cell for error messages."""
    bad = ~np.isfinite(params.emit_loc) | ~np.isfinite(params.emit_scale)
    if bad.any():
        w, j = np.argwhere(bad.any(axis=2))[0]
        return int(j), params.alphabet.symbols[int(w)]
    for seq in seqs:
        try:
            logb = _emission_logdensity(params, seq)
        except ValueError:
            continue
        rows = ~np.isfinite(logb)
        if rows.any():
            n, j = np.argwhere(rows)[0]
            w = seq.events[n]
            label = params.alphabet.symbols[int(w)] if w >= 0 else "<novel>"
            return int(j), label
    return None, None


def em_step(params, seqs, smoothing=False, freqs=None):
    """One expectation/maximization/regularization cycle.

    Returns the updated parameters and the total log likelihood of the
    *input* parameters (the value the E-step evaluates).
    """
    _check_sequences(seqs, params.alphabet, params.kind)
    if smoothing and freqs is None:
        freqs = event_frequencies([s.events for s in seqs], params.n_events)
    stats = _estep(params, seqs)
    if not np.isfinite(stats.loglik):
        j, label = _diagnose_nonfinite(params, seqs)
        raise NumericalError(
            f"non-finite log likelihood (emission cell state={j}, event={label!r})"
        )
    new = _mstep(params, stats, smoothing, freqs)
    # Occupancy lags one iteration; fit() refreshes it on the final model.
    new.state_stationary = stats.occupancy / stats.total_steps
    return new, stats.loglik


def fit(seqs, alphabet, config=None):
    """Estimate model parameters by the modified Baum-Welch loop.

    Deterministic given the inputs: initialization is observation-based
    and each iteration either adopts an update improving the total log
    likelihood by at least ``config.epsilon`` or stops.  Returns the
    fitted parameters and a :class:`FitReport`.
    """
    config = config or FitConfig()
    _check_sequences(seqs, alphabet, config.kind)
    freqs = event_frequencies([s.events for s in seqs], alphabet.size)

    params = init_params(seqs, alphabet, config)
    stats = _estep(params, seqs)
    if not np.isfinite(stats.loglik):
        j, label = _diagnose_nonfinite(params, seqs)
        raise NumericalError(
            f"non-finite log likelihood at initialization "
            f"(emission cell state={j}, event={label!r})"
        )
    trace = [stats.loglik]
    converged = False
    iterations = 0

    for _ in range(config.max_iter):
        candidate = _mstep(params, stats, config.smoothing, freqs)
        iterations += 1
        cand_stats = _estep(candidate, seqs)
        if not np.isfinite(cand_stats.loglik):
            j, label = _diagnose_nonfinite(candidate, seqs)
            raise NumericalError(
                f"non-finite log likelihood at iteration {iterations} "
                f"(emission cell state={j}, event={label!r})"
            )
        delta = cand_stats.loglik - stats.loglik
        if delta < config.epsilon:
            converged = True
            if delta >= 0.0:
                params, stats = candidate, cand_stats
                trace.append(stats.loglik)
            break
        params, stats = candidate, cand_stats
        trace.append(stats.loglik)

    params.state_stationary = stats.occupancy / stats.total_steps
    report = FitReport(
        loglik_trace=trace,
        iterations=iterations,
        converged=converged,
        final_loglik=trace[-1],
    )
    return params, report
