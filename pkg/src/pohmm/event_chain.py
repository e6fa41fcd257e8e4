"""Event-type alphabet and the observed first-order Markov chain over it.

Event types (key names, message kinds, ...) form their own process,
independent of the hidden dynamics.  This module estimates that chain:
starting probabilities, the row-stochastic transition matrix, and the
empirical stationary frequencies, pooled over all training sequences.
"""

from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class EventAlphabet:
    """Ordered set of distinct event-type labels with dense integer ids."""

    symbols: tuple
    index: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        symbols = tuple(str(s) for s in self.symbols)
        if not symbols:
            raise ValueError("alphabet must contain at least one symbol")
        if len(set(symbols)) != len(symbols):
            raise ValueError("alphabet symbols must be unique")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "index", {s: i for i, s in enumerate(symbols)})

    @classmethod
    def from_labels(cls, labels):
        """Build an alphabet from any iterable of labels, sorted for determinism."""
        return cls(tuple(sorted(set(str(s) for s in labels))))

    @property
    def size(self):
        return len(self.symbols)

    def encode(self, labels):
        """Map labels to ids; labels outside the alphabet become -1."""
        return np.array([self.index.get(str(s), -1) for s in labels], dtype=np.int64)

    def decode(self, ids):
        return [self.symbols[i] if i >= 0 else None for i in np.asarray(ids)]

    def __contains__(self, label):
        return str(label) in self.index

    def __len__(self):
        return len(self.symbols)


@dataclass
class EventChain:
    """First-order Markov chain over event types.

    Attributes
    ----------
    start : (m,) ndarray
        Probability of each event type at the first step.
    trans : (m, m) ndarray
        Row-stochastic transition matrix between event types.
    stationary : (m,) ndarray
        Empirical symbol frequencies pooled over the training sequences.
    """

    start: np.ndarray
    trans: np.ndarray
    stationary: np.ndarray

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=np.float64)
        self.trans = np.asarray(self.trans, dtype=np.float64)
        self.stationary = np.asarray(self.stationary, dtype=np.float64)
        m = self.start.shape[0]
        if self.trans.shape != (m, m) or self.stationary.shape != (m,):
            raise ValueError("inconsistent chain table shapes")
        if np.any(self.start < 0) or np.any(self.trans < 0) or np.any(self.stationary < 0):
            raise ValueError("chain probabilities must be nonnegative")
        for name, vec in (("start", self.start), ("stationary", self.stationary)):
            if abs(vec.sum() - 1.0) > ROW_SUM_TOL:
                raise ValueError(f"{name} probabilities must sum to 1")
        if np.any(np.abs(self.trans.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ValueError("transition rows must sum to 1")

    @property
    def size(self):
        return self.start.shape[0]

    def sample(self, n, rng):
        """Draw an event-id sequence of length ``n``."""
        if n <= 0:
            return np.empty(0, dtype=np.int64)
        out = np.empty(n, dtype=np.int64)
        start_cdf = np.cumsum(self.start)
        trans_cdf = np.cumsum(self.trans, axis=1)
        u = rng.random(n)
        out[0] = np.searchsorted(start_cdf, u[0] * start_cdf[-1], side="right")
        out[0] = min(out[0], self.size - 1)
        for t in range(1, n):
            row = trans_cdf[out[t - 1]]
            k = np.searchsorted(row, u[t] * row[-1], side="right")
            out[t] = min(k, self.size - 1)
        return out


def _check_sequences(sequences, m):
    if not sequences:
        raise ValueError("no sequences")
    checked = []
    for seq in sequences:
        ids = np.asarray(seq, dtype=np.int64)
        if ids.size == 0:
            continue
        if ids.min() < 0 or ids.max() >= m:
            raise ValueError("symbol out of alphabet")
        checked.append(ids)
    if not checked:
        raise ValueError("no sequences")
    return checked


def fit_event_chain(sequences, alphabet, pseudocount=0.0):
    """Estimate the event-type chain from encoded id sequences.

    ``start`` and ``trans`` receive an additive ``pseudocount`` so novel
    test-time transitions keep finite probability; ``stationary`` is the
    exact pooled symbol frequency, never smoothed.  Rows of ``trans`` for
    symbols never seen as a predecessor fall back to uniform.
    """
    if pseudocount < 0:
        raise ValueError("pseudocount must be nonnegative")
    m = alphabet.size
    checked = _check_sequences(sequences, m)

    first = np.zeros(m)
    counts = np.zeros(m)
    pairs = np.zeros((m, m))
    for ids in checked:
        first[ids[0]] += 1.0
        counts += np.bincount(ids, minlength=m)
        if ids.size > 1:
            np.add.at(pairs, (ids[:-1], ids[1:]), 1.0)

    start = first + pseudocount
    tot = start.sum()
    start = start / tot if tot > 0 else np.full(m, 1.0 / m)

    trans = pairs + pseudocount
    row_tot = trans.sum(axis=1, keepdims=True)
    empty = row_tot[:, 0] <= 0
    row_tot[empty] = 1.0
    trans = trans / row_tot
    trans[empty] = 1.0 / m

    stationary = counts / counts.sum()
    return EventChain(start=start, trans=trans, stationary=stationary)


@dataclass(frozen=True)
class Frequencies:
    """Pooled event-type counts used by parameter smoothing.

    ``symbol[w]`` counts occurrences of event type ``w``; ``pair[p, w]``
    counts occurrences of ``p`` immediately followed by ``w``.
    """

    symbol: np.ndarray
    pair: np.ndarray


def event_frequencies(sequences, alphabet_or_size):
    """Count symbol and adjacent-pair frequencies over encoded sequences."""
    m = alphabet_or_size if isinstance(alphabet_or_size, int) else alphabet_or_size.size
    checked = _check_sequences(sequences, m)
    symbol = np.zeros(m)
    pair = np.zeros((m, m))
    for ids in checked:
        symbol += np.bincount(ids, minlength=m)
        if ids.size > 1:
            np.add.at(pair, (ids[:-1], ids[1:]), 1.0)
    return Frequencies(symbol=symbol, pair=pair)
