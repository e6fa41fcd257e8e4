"""Parameter-recovery simulation scenarios.

Four train/generate pairings probe estimator consistency:

1. event-conditioned model on its own data, smoothing off
2. same, smoothing on
3. event-conditioned model on event-free (HMM) data with uniformly random
   event types; the *marginalized* estimates are compared to the generator
4. event-free (single-symbol) fit on event-conditioned data; estimates are
   compared against the event-conditional truth, where the bias shows

For every parameter cell the report carries the studentized residual
across replicates: (mean estimate - target) / (std / sqrt(R)).  Hidden
state decoding accuracy against the generating state paths is reported
per sequence length.
"""

from dataclasses import dataclass

import numpy as np

from .estimation import FitConfig, fit
from .event_chain import EventAlphabet, EventChain
from .model import (
    ObservationSequence,
    PohmmParams,
    marginalize,
    predict_states,
    sample,
    to_marginal_hmm,
)
from .util import parallel_map

DEFAULT_N_GRID = (128, 512, 2048, 4096)
DEFAULT_REPLICATES = 100

# Generator fixture: second-scale Gaussian intervals, two states separated
# by 3 scale units with uneven occupancy (the second state is visited ~25%
# of the time), three event types whose conditional locations are offset
# around each state's base.  The uneven occupancy gives the rare state's
# cells few observations at small N, so the estimator's finite-sample bias
# is visible at N=128 and gone by N=4096; second-scale units keep the
# smoothing pull toward the marginal far below 1e-2 per cell at N=4096.
DEFAULT_BASES = (0.100, 0.220)
DEFAULT_OFFSETS = (-0.006, 0.0, 0.006)
DEFAULT_SCALE = 0.040
DEFAULT_TRANS_ROWS = ((0.8, 0.2), (0.6, 0.4))


def make_generator(
    bases=DEFAULT_BASES,
    offsets=DEFAULT_OFFSETS,
    scale=DEFAULT_SCALE,
    trans_rows=DEFAULT_TRANS_ROWS,
    kind="normal",
):
    """Build the data-generating model used by the scenarios.

    States are ordered by location (matching the fitted models' ordering),
    the start table and the event chain are uniform, and ``trans_rows``
    (an M x M row-stochastic matrix) is shared by every event-type pair.
    """
    n_states = len(bases)
    m = len(offsets)
    labels = tuple(chr(ord("a") + i) for i in range(m))
    loc = np.add.outer(np.array(offsets), np.array(bases))[:, :, None]  # (m, M, 1)
    chain = EventChain(
        start=np.full(m, 1.0 / m),
        trans=np.full((m, m), 1.0 / m),
        stationary=np.full(m, 1.0 / m),
    )
    trans = np.broadcast_to(
        np.asarray(trans_rows, dtype=np.float64), (m, m, n_states, n_states)
    ).copy()
    params = PohmmParams(
        alphabet=EventAlphabet(labels),
        n_states=n_states,
        kind=kind,
        startp=np.full((m, n_states), 1.0 / n_states),
        trans=trans,
        emit_loc=loc,
        emit_scale=np.full((m, n_states, 1), scale),
        event_chain=chain,
    )
    marginalize(params)
    return params


@dataclass
class ScenarioReport:
    scenario: int
    n_grid: tuple
    replicates: int
    rows: list       # dicts: N, group, parameter, residual, stderr, target, estimate
    accuracy: dict   # N -> mean hidden-state decoding accuracy

    def residuals(self, n, group):
        return np.array(
            [r["residual"] for r in self.rows if r["N"] == n and r["group"] == group]
        )

    def mean_abs_residual(self, n, group):
        res = self.residuals(n, group)
        return float(np.mean(np.abs(res)))


def _studentize(estimates, target):
    """(mean - target) / stderr across replicates, elementwise."""
    est = np.asarray(estimates, dtype=np.float64)
    mean = est.mean(axis=0)
    std = est.std(axis=0, ddof=1)
    stderr = std / np.sqrt(est.shape[0])
    bias = mean - target
    out = np.zeros_like(mean)
    nonzero = stderr > 0
    out[nonzero] = bias[nonzero] / stderr[nonzero]
    out[~nonzero & (np.abs(bias) > 1e-12)] = np.inf
    return out, stderr, mean


def _emit_rows(rows, n, group, residual, stderr, mean, target, labels):
    flat_r = np.ravel(residual)
    flat_s = np.ravel(stderr)
    flat_m = np.ravel(mean)
    flat_t = np.ravel(target)
    for lab, r, s, m_, t in zip(labels, flat_r, flat_s, flat_m, flat_t):
        rows.append(
            {
                "group": group,
                "parameter": lab,
                "N": n,
                "residual": float(r),
                "stderr": float(s),
                "estimate": float(m_),
                "target": float(t),
            }
        )


def _cell_labels(prefix, shape, symbols=None):
    labels = []
    for idx in np.ndindex(*shape):
        parts = ",".join(str(i) for i in idx)
        if symbols is not None:
            parts = f"{symbols[idx[0]]},{','.join(str(i) for i in idx[1:])}"
        labels.append(f"{prefix}[{parts}]")
    return labels


def run_scenario(
    scenario,
    n_grid=DEFAULT_N_GRID,
    replicates=DEFAULT_REPLICATES,
    theta_o=None,
    rng=None,
    max_iter=500,
):
    """Run one scenario over a grid of sequence lengths.

    Each replicate draws one length-N sample from the generator, fits the
    scenario's model on it, and records the parameter estimates plus the
    hidden-state decoding accuracy.  Deterministic given ``rng``.
    """
    if scenario not in (1, 2, 3, 4):
        raise ValueError("scenario must be 1..4")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    theta_o = theta_o or make_generator()
    rng = rng or np.random.default_rng(0)
    hmm_o = to_marginal_hmm(theta_o)
    m = theta_o.n_events

    smoothing = scenario == 2
    if scenario == 4:
        fit_alphabet = EventAlphabet(("*",))
    else:
        fit_alphabet = theta_o.alphabet
    config = FitConfig(
        n_states=theta_o.n_states,
        kind=theta_o.kind,
        smoothing=smoothing,
        max_iter=max_iter,
    )

    streams = rng.spawn(len(n_grid) * replicates)

    def one_replicate(args):
        n, stream = args
        if scenario == 3:
            seq, states = sample(hmm_o, n, stream)
            events = stream.integers(0, m, size=n)
            seq = ObservationSequence(events=events, features=seq.features)
        else:
            seq, states = sample(theta_o, n, stream)
            if scenario == 4:
                seq = ObservationSequence(
                    events=np.zeros(n, dtype=np.int64), features=seq.features
                )
        fitted, _ = fit([seq], fit_alphabet, config)
        accuracy = float(np.mean(predict_states(fitted, seq) == states))
        if scenario == 3:
            marg = fitted.marginals
            tables = (marg.emit_loc, marg.emit_scale, marg.trans, marg.startp)
        else:
            tables = (fitted.emit_loc, fitted.emit_scale, fitted.trans, fitted.startp)
        return tables, accuracy

    rows = []
    accuracy = {}
    for gi, n in enumerate(n_grid):
        batch = [(n, streams[gi * replicates + r]) for r in range(replicates)]
        results = parallel_map(one_replicate, batch)
        accuracy[n] = float(np.mean([acc for _, acc in results]))

        locs = np.stack([t[0] for t, _ in results])
        scales = np.stack([t[1] for t, _ in results])
        trans = np.stack([t[2] for t, _ in results])
        starts = np.stack([t[3] for t, _ in results])

        symbols = theta_o.alphabet.symbols
        if scenario == 3:
            targets = {
                "emission_loc": (locs, hmm_o.emit_loc[0], _cell_labels("loc", locs.shape[1:])),
                "emission_scale": (scales, hmm_o.emit_scale[0], _cell_labels("scale", scales.shape[1:])),
                "transition": (trans, hmm_o.trans[0, 0], _cell_labels("a", trans.shape[1:])),
                "start": (starts, hmm_o.startp[0], _cell_labels("pi", starts.shape[1:])),
            }
        elif scenario == 4:
            # The single-symbol fit is compared against every conditional
            # cell of the generator: the one estimate must answer for all
            # event types, which is where the bias appears.
            shape = (locs.shape[0],) + theta_o.emit_loc.shape
            locs_b = np.broadcast_to(locs[:, 0][:, None, :, :], shape)
            scales_b = np.broadcast_to(scales[:, 0][:, None, :, :], shape)
            targets = {
                "emission_loc": (locs_b, theta_o.emit_loc, _cell_labels("loc", theta_o.emit_loc.shape, symbols)),
                "emission_scale": (scales_b, theta_o.emit_scale, _cell_labels("scale", theta_o.emit_scale.shape, symbols)),
            }
        else:
            targets = {
                "emission_loc": (locs, theta_o.emit_loc, _cell_labels("loc", locs.shape[1:], symbols)),
                "emission_scale": (scales, theta_o.emit_scale, _cell_labels("scale", scales.shape[1:], symbols)),
                "transition": (trans, theta_o.trans, _cell_labels("a", trans.shape[1:], symbols)),
                "start": (starts, theta_o.startp, _cell_labels("pi", starts.shape[1:], symbols)),
            }
        for group, (est, target, labels) in targets.items():
            residual, stderr, mean = _studentize(est, target)
            _emit_rows(rows, n, group, residual, stderr, mean, target, labels)

    return ScenarioReport(
        scenario=scenario,
        n_grid=tuple(n_grid),
        replicates=replicates,
        rows=rows,
        accuracy=accuracy,
    )
