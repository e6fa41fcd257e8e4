"""Core model: parameter container, scaled inference, sampling, marginals.

The model couples an observed event-type chain with hidden states: the
starting, transition, and emission parameters are all conditioned on the
event type active at each step.  Scoring a sequence therefore walks the
standard scaled forward/backward recursions with per-step tables selected
by the observed event ids.

Event ids below zero mark types never seen during training.  Those steps
fall back to the marginal tables (event type summed out): the marginal
start vector and emission cell when the current type is novel, and the
one-sided marginal transition tables when either endpoint of a transition
is novel.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from ._backend import backward_pass, forward_pass
from .emissions import LOG_2PI, SCALE_FLOOR, EmissionParams
from .event_chain import EventAlphabet, EventChain

ROW_SUM_TOL = 1e-9


class NumericalError(RuntimeError):
    """Raised when inference or estimation produces non-finite values."""


@dataclass
class ObservationSequence:
    """Aligned event ids and feature vectors.

    ``events`` holds dense ids into the model alphabet; ``-1`` marks a
    label outside it.  ``features`` is an (N, K) float array.
    """

    events: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.events = np.asarray(self.events, dtype=np.int64)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        self.features = feats
        if self.events.ndim != 1 or self.features.ndim != 2:
            raise ValueError("events must be 1-D and features 2-D")
        if self.events.shape[0] != self.features.shape[0]:
            raise ValueError("events and features must have equal length")
        if self.events.shape[0] == 0:
            raise ValueError("empty sequence")

    @property
    def n(self):
        return self.events.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]


@dataclass
class MarginalTables:
    """Event-type-marginalized parameter tables cached on the model."""

    startp: np.ndarray       # (M,)
    trans_by_prev: np.ndarray  # (m, M, M): a[i,j | prev event]
    trans_by_next: np.ndarray  # (m, M, M): a[i,j | next event]
    trans: np.ndarray        # (M, M): both event types summed out
    emit_loc: np.ndarray     # (M, K) moment-matched location
    emit_scale: np.ndarray   # (M, K) moment-matched scale


@dataclass
class PohmmParams:
    """Complete parameter set of an event-conditioned hidden Markov model.

    Shapes, with ``m`` event types, ``M`` hidden states, ``K`` features:

    * ``startp``: (m, M), ``startp[w, j]`` = P(z_1 = j | event w)
    * ``trans``: (m, m, M, M), ``trans[p, w, i, j]`` = P(j | i, prev p, next w)
    * ``emit_loc`` / ``emit_scale``: (m, M, K)

    Treat instances as immutable once fitted; scoring operations never
    write to them and may run concurrently.
    """

    alphabet: EventAlphabet
    n_states: int
    kind: str
    startp: np.ndarray
    trans: np.ndarray
    emit_loc: np.ndarray
    emit_scale: np.ndarray
    event_chain: EventChain
    state_stationary: np.ndarray = None
    marginals: MarginalTables = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m, M = self.alphabet.size, self.n_states
        self.startp = np.asarray(self.startp, dtype=np.float64)
        self.trans = np.asarray(self.trans, dtype=np.float64)
        self.emit_loc = np.asarray(self.emit_loc, dtype=np.float64)
        self.emit_scale = np.asarray(self.emit_scale, dtype=np.float64)
        if self.startp.shape != (m, M):
            raise ValueError("startp must have shape (m, M)")
        if self.trans.shape != (m, m, M, M):
            raise ValueError("trans must have shape (m, m, M, M)")
        if self.emit_loc.shape != self.emit_scale.shape or self.emit_loc.shape[:2] != (m, M):
            raise ValueError("emission tables must have shape (m, M, K)")
        if self.state_stationary is None:
            self.state_stationary = np.full(M, 1.0 / M)
        else:
            self.state_stationary = np.asarray(self.state_stationary, dtype=np.float64)

    @property
    def n_events(self):
        return self.alphabet.size

    @property
    def n_features(self):
        return self.emit_loc.shape[2]

    def emission(self, state, event=None):
        """Emission parameters of one cell; ``event=None`` gives the marginal."""
        if event is None:
            marg = ensure_marginals(self)
            return EmissionParams(self.kind, marg.emit_loc[state], marg.emit_scale[state])
        return EmissionParams(self.kind, self.emit_loc[event, state], self.emit_scale[event, state])

    def validate(self):
        """Check stochasticity and finiteness of every table."""
        tables = {
            "startp": self.startp,
            "trans": self.trans,
            "emit_loc": self.emit_loc,
            "emit_scale": self.emit_scale,
        }
        for name, arr in tables.items():
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"non-finite values in {name}")
        if np.any(self.startp < 0) or np.any(self.trans < 0):
            raise ValueError("probabilities must be nonnegative")
        if np.any(np.abs(self.startp.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ValueError("startp rows must sum to 1")
        if np.any(np.abs(self.trans.sum(axis=3) - 1.0) > ROW_SUM_TOL):
            raise ValueError("trans rows must sum to 1")
        return self


def marginalize(params):
    """Compute the event-type-marginalized tables and cache them.

    Returns the HMM-shaped triple: start vector (M,), transition matrix
    (M, M), and the list of M moment-matched emission cells.  Weighting
    uses the event chain: starting probabilities weight the marginal
    start, transition probabilities weight the one- and two-sided
    marginal transitions, and the stationary frequencies weight the
    emission mixture moments.
    """
    chain = params.event_chain
    ev_start = chain.start          # pi[w]
    ev_trans = chain.trans          # a[p, w]
    ev_stat = chain.stationary      # Pi[w]

    startp = ev_start @ params.startp.reshape(params.n_events, -1)
    startp = startp.reshape(params.n_states)
    tot = startp.sum()
    if tot > 0:
        startp = startp / tot

    # a[i,j|p] = sum_w a[i,j|p,w] a[p,w]; rows inherit stochasticity.
    trans_by_prev = np.einsum("pwij,pw->pij", params.trans, ev_trans)

    # a[i,j] = (1/m) sum_p sum_w a[i,j|p,w] a[p,w]
    trans_marg = np.einsum("pwij,pw->ij", params.trans, ev_trans) / params.n_events
    trans_marg = trans_marg / trans_marg.sum(axis=1, keepdims=True)

    # a[i,j|w] = sum_p a[i,j|p,w] a[p,w] / sum_p a[p,w]; when no predecessor
    # ever reaches w the denominator vanishes and we fall back to a[i,j].
    col_mass = ev_trans.sum(axis=0)
    trans_by_next = np.empty_like(trans_by_prev)
    for w in range(params.n_events):
        if col_mass[w] > 0:
            trans_by_next[w] = np.einsum("pij,p->ij", params.trans[:, w], ev_trans[:, w])
            trans_by_next[w] /= col_mass[w]
        else:
            trans_by_next[w] = trans_marg

    row_sums = trans_by_prev.sum(axis=2, keepdims=True)
    row_sums[row_sums <= 0] = 1.0
    trans_by_prev = trans_by_prev / row_sums
    row_sums = trans_by_next.sum(axis=2, keepdims=True)
    row_sums[row_sums <= 0] = 1.0
    trans_by_next = trans_by_next / row_sums

    # Moment-matched mixture location and scale per state.
    emit_loc = np.einsum("w,wjk->jk", ev_stat, params.emit_loc)
    spread = (params.emit_loc - emit_loc[None, :, :]) ** 2 + params.emit_scale**2
    emit_var = np.einsum("w,wjk->jk", ev_stat, spread)
    emit_scale = np.maximum(np.sqrt(emit_var), SCALE_FLOOR)

    params.marginals = MarginalTables(
        startp=startp,
        trans_by_prev=trans_by_prev,
        trans_by_next=trans_by_next,
        trans=trans_marg,
        emit_loc=emit_loc,
        emit_scale=emit_scale,
    )
    cells = [
        EmissionParams(params.kind, emit_loc[j], emit_scale[j])
        for j in range(params.n_states)
    ]
    return startp, trans_marg, cells


def ensure_marginals(params):
    if params.marginals is None:
        marginalize(params)
    return params.marginals


def to_marginal_hmm(params):
    """Materialize the marginalized model as a single-event-type instance."""
    marg = ensure_marginals(params)
    alphabet = EventAlphabet(("*",))
    chain = EventChain(start=np.ones(1), trans=np.ones((1, 1)), stationary=np.ones(1))
    return PohmmParams(
        alphabet=alphabet,
        n_states=params.n_states,
        kind=params.kind,
        startp=marg.startp[None, :].copy(),
        trans=marg.trans[None, None, :, :].copy(),
        emit_loc=marg.emit_loc[None, :, :].copy(),
        emit_scale=marg.emit_scale[None, :, :].copy(),
        event_chain=chain,
        state_stationary=params.state_stationary.copy(),
    )


def _emission_logdensity(params, seq):
    """Per-step, per-state emission log densities, with marginal fallback."""
    feats = seq.features
    if feats.shape[1] != params.n_features:
        raise ValueError("feature dimension mismatch")
    if params.kind == "lognormal":
        if np.any(feats <= 0):
            raise ValueError("domain: log-normal emissions require positive values")
        y = np.log(feats)
        jac = y.sum(axis=1)
    else:
        y = feats
        jac = None

    ev = seq.events
    known = ev >= 0
    idx = np.where(known, ev, 0)
    loc = params.emit_loc[idx]      # (N, M, K)
    scale = params.emit_scale[idx]
    if not known.all():
        marg = ensure_marginals(params)
        loc = loc.copy()
        scale = scale.copy()
        loc[~known] = marg.emit_loc
        scale[~known] = marg.emit_scale

    z = (y[:, None, :] - loc) / scale
    logb = -0.5 * (z * z).sum(axis=2) - np.log(scale).sum(axis=2)
    logb -= 0.5 * params.n_features * LOG_2PI
    if jac is not None:
        logb -= jac[:, None]
    return logb


def _step_tables(params, seq):
    """Start vector and per-transition matrices, resolving novel events."""
    ev = seq.events
    if ev[0] >= 0:
        startvec = params.startp[ev[0]]
    else:
        startvec = ensure_marginals(params).startp

    n = seq.n
    if n == 1:
        return startvec, np.empty((0, params.n_states, params.n_states))

    prev, nxt = ev[:-1], ev[1:]
    trans_seq = params.trans[np.clip(prev, 0, None), np.clip(nxt, 0, None)]
    prev_known, nxt_known = prev >= 0, nxt >= 0
    if not (prev_known.all() and nxt_known.all()):
        marg = ensure_marginals(params)
        trans_seq = trans_seq.copy()
        only_prev = prev_known & ~nxt_known
        only_next = ~prev_known & nxt_known
        neither = ~prev_known & ~nxt_known
        if only_prev.any():
            trans_seq[only_prev] = marg.trans_by_prev[prev[only_prev]]
        if only_next.any():
            trans_seq[only_next] = marg.trans_by_next[nxt[only_next]]
        if neither.any():
            trans_seq[neither] = marg.trans
    return startvec, trans_seq


def forward(params, seq):
    """Scaled forward pass.

    Returns
    -------
    alpha : (N, M) ndarray
        Per-step filtered state posteriors (each row sums to 1).
    scale : (N,) ndarray
        Per-step normalizers; ``sum(log(scale))`` is the log likelihood.
    loglik : float
    """
    logb = _emission_logdensity(params, seq)
    startvec, trans_seq = _step_tables(params, seq)
    alpha, logscale = forward_pass(startvec, trans_seq, logb)
    return alpha, np.exp(logscale), float(logscale.sum())


def forward_increments(params, seq):
    """Per-step log-likelihood increments ln P(x_1..n) - ln P(x_1..n-1).

    These are the per-step log normalizers of the forward pass, so the
    incremental extension of a sequence by one event costs one recursion
    step and the increments sum to the full-sequence log likelihood.
    """
    logb = _emission_logdensity(params, seq)
    startvec, trans_seq = _step_tables(params, seq)
    _, logscale = forward_pass(startvec, trans_seq, logb)
    return logscale


def sequence_loglik(params, seq):
    """Log likelihood of the emissions given the observed event types."""
    return float(forward_increments(params, seq).sum())


def backward(params, seq, scale=None):
    """Scaled backward pass, using the forward normalizers.

    The returned table satisfies ``beta[N-1] = 1 / scale[N-1]`` and, for
    every step, ``sum_j alpha[n, j] * beta[n, j] * scale[n] = 1``.
    """
    logb = _emission_logdensity(params, seq)
    startvec, trans_seq = _step_tables(params, seq)
    if scale is None:
        _, logscale = forward_pass(startvec, trans_seq, logb)
    else:
        logscale = np.log(np.asarray(scale, dtype=np.float64))
    beta_sh = backward_pass(trans_seq, logb, logscale)
    shifts = logb.max(axis=1)
    return beta_sh * np.exp(-shifts)[:, None]


@dataclass
class PosteriorTables:
    """Posterior state and transition probabilities for one sequence."""

    loglik: float
    gamma: np.ndarray   # (N, M)
    xi: np.ndarray      # (N-1, M, M)
    scale: np.ndarray   # (N,)
    log_scale: np.ndarray = None

    def __post_init__(self):
        if self.log_scale is None:
            self.log_scale = np.log(self.scale)


def posteriors(params, seq):
    """Full posterior tables: gamma, xi, per-step normalizers, loglik."""
    logb = _emission_logdensity(params, seq)
    startvec, trans_seq = _step_tables(params, seq)
    alpha, logscale = forward_pass(startvec, trans_seq, logb)
    beta_sh = backward_pass(trans_seq, logb, logscale)

    shifts = logb.max(axis=1)
    ctil = np.exp(logscale - shifts)
    gamma = alpha * beta_sh * ctil[:, None]
    gamma /= gamma.sum(axis=1, keepdims=True)

    if seq.n > 1:
        btil = np.exp(logb[1:] - shifts[1:, None])
        xi = alpha[:-1, :, None] * trans_seq * (btil * beta_sh[1:])[:, None, :]
        xi /= xi.sum(axis=(1, 2), keepdims=True)
    else:
        xi = np.empty((0, params.n_states, params.n_states))

    return PosteriorTables(
        loglik=float(logscale.sum()),
        gamma=gamma,
        xi=xi,
        scale=np.exp(logscale),
        log_scale=logscale,
    )


def predict_states(params, seq):
    """Most likely hidden state per step (posterior argmax, ties -> lowest)."""
    return np.argmax(posteriors(params, seq).gamma, axis=1)


def sample(params, n, rng, events=None):
    """Generate a sequence of length ``n`` together with its hidden states.

    Events are drawn from the model's event chain unless ``events`` is
    given, in which case those ids (all within the alphabet) are used
    verbatim.
    """
    if n == 0:
        return None, np.empty(0, dtype=np.int64)
    if events is None:
        events = params.event_chain.sample(n, rng)
    else:
        events = np.asarray(events, dtype=np.int64)
        if events.shape[0] != n:
            raise ValueError("provided events must have length n")
        if events.min() < 0 or events.max() >= params.n_events:
            raise ValueError("symbol out of alphabet")

    M = params.n_states
    states = np.empty(n, dtype=np.int64)
    u = rng.random(n)
    start_cdf = np.cumsum(params.startp[events[0]])
    states[0] = min(np.searchsorted(start_cdf, u[0] * start_cdf[-1], side="right"), M - 1)
    for t in range(1, n):
        row = np.cumsum(params.trans[events[t - 1], events[t], states[t - 1]])
        states[t] = min(np.searchsorted(row, u[t] * row[-1], side="right"), M - 1)

    loc = params.emit_loc[events, states]
    scl = params.emit_scale[events, states]
    feats = loc + scl * rng.standard_normal((n, params.n_features))
    if params.kind == "lognormal":
        feats = np.exp(feats)
    return ObservationSequence(events=events, features=feats), states


# -- serialization -----------------------------------------------------------

FORMAT_NAME = "pohmm-model"
FORMAT_VERSION = 1


def to_dict(params):
    """Plain-python representation of the model (marginals recomputed on load)."""
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": params.kind,
        "states": params.n_states,
        "alphabet": list(params.alphabet.symbols),
        "features": params.n_features,
        "start": params.startp.tolist(),
        "trans": params.trans.tolist(),
        "emission_loc": params.emit_loc.tolist(),
        "emission_scale": params.emit_scale.tolist(),
        "event_chain": {
            "start": params.event_chain.start.tolist(),
            "trans": params.event_chain.trans.tolist(),
            "stationary": params.event_chain.stationary.tolist(),
        },
        "state_stationary": params.state_stationary.tolist(),
    }


def from_dict(doc):
    if doc.get("format") != FORMAT_NAME:
        raise ValueError("not a model document")
    chain = EventChain(
        start=doc["event_chain"]["start"],
        trans=doc["event_chain"]["trans"],
        stationary=doc["event_chain"]["stationary"],
    )
    params = PohmmParams(
        alphabet=EventAlphabet(tuple(doc["alphabet"])),
        n_states=int(doc["states"]),
        kind=doc["kind"],
        startp=doc["start"],
        trans=doc["trans"],
        emit_loc=doc["emission_loc"],
        emit_scale=doc["emission_scale"],
        event_chain=chain,
        state_stationary=doc["state_stationary"],
    )
    marginalize(params)
    return params


def dumps(params):
    """Serialize to a deterministic JSON string (shortest round-trip floats)."""
    return json.dumps(to_dict(params), sort_keys=True, indent=1)


def save(params, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(params))
        fh.write("\n")


def load(path):
    with open(path, "r", encoding="utf-8") as fh:
        return from_dict(json.load(fh))


def copy_params(params):
    """Deep copy of all tables (marginals cache dropped; recompute as needed)."""
    return replace(
        params,
        startp=params.startp.copy(),
        trans=params.trans.copy(),
        emit_loc=params.emit_loc.copy(),
        emit_scale=params.emit_scale.copy(),
        state_stationary=params.state_stationary.copy(),
        marginals=None,
    )
