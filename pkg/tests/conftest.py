"""Shared fixtures: random toy model instances and sequence builders."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pohmm import EventAlphabet, EventChain, ObservationSequence, PohmmParams, marginalize

SYMBOLS = "abcdefgh"


def random_chain(m, rng):
    start = rng.dirichlet(np.ones(m))
    trans = rng.dirichlet(np.ones(m), size=m)
    stationary = rng.dirichlet(np.ones(m))
    return EventChain(start=start, trans=trans, stationary=stationary)


def random_params(m, n_states, rng, kind="lognormal", n_features=1, spread=2.0):
    """Random valid parameter tables over m event types and n_states states."""
    alphabet = EventAlphabet(tuple(SYMBOLS[:m]))
    startp = rng.dirichlet(np.ones(n_states), size=m)
    trans = rng.dirichlet(np.ones(n_states), size=(m, m, n_states))
    loc = rng.normal(0.0, spread, size=(m, n_states, n_features))
    scale = rng.uniform(0.3, 1.5, size=(m, n_states, n_features))
    params = PohmmParams(
        alphabet=alphabet,
        n_states=n_states,
        kind=kind,
        startp=startp,
        trans=trans,
        emit_loc=loc,
        emit_scale=scale,
        event_chain=random_chain(m, rng),
    )
    marginalize(params)
    return params


def random_sequence(params, n, rng):
    """Sequence with event ids drawn uniformly and features from the cells."""
    m = params.n_events
    events = rng.integers(0, m, size=n)
    states = rng.integers(0, params.n_states, size=n)
    feats = params.emit_loc[events, states] + params.emit_scale[
        events, states
    ] * rng.standard_normal((n, params.n_features))
    if params.kind == "lognormal":
        feats = np.exp(feats)
    return ObservationSequence(events=events, features=feats)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
