"""Monte Carlo goodness of fit for the first timing feature.

The test statistic is the area between the empirical CDF of the observed
intervals and the model CDF of the fitted model's marginal emission
mixture (a compromise between Kolmogorov-Smirnov and Cramer-von Mises).
Significance comes from surrogate data: refit the model on samples drawn
from itself, collect their area statistics, and report the biased p-value

    p = (#{ |A_s - <A_s>| > |A - <A_s>| } + 1) / (S + 1).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import estimation
from .model import ObservationSequence, sample as sample_model
from .util import parallel_map

GRID_POINTS = 2048


@dataclass
class GofResult:
    """Observed area statistic, surrogate statistics, and biased p-value."""

    area: float
    surrogate_areas: np.ndarray
    p_value: float

    @property
    def n_surrogates(self):
        return len(self.surrogate_areas)


def _mixture_weights(params):
    """Component weights Pi[w] * Pi[j] over (event type, state) cells."""
    w = params.event_chain.stationary[:, None] * params.state_stationary[None, :]
    return w / w.sum()


def marginal_density(params, feature=0):
    """Exact marginal mixture density of one feature (default: intervals).

    Unlike the moment-matched fallback cell used during scoring, this is
    the full mixture over (event type, state) components weighted by the
    stationary event and state frequencies.
    """
    weights = _mixture_weights(params)
    loc = params.emit_loc[:, :, feature]
    scale = params.emit_scale[:, :, feature]
    lognormal = params.kind == "lognormal"

    def density(x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        out = np.zeros_like(x)
        pos = x > 0 if lognormal else np.ones_like(x, dtype=bool)
        y = np.log(x[pos]) if lognormal else x[pos]
        z = (y[:, None, None] - loc) / scale
        comp = np.exp(-0.5 * z * z) / (scale * np.sqrt(2.0 * np.pi))
        if lognormal:
            comp = comp / x[pos, None, None]
        out[pos] = (comp * weights).sum(axis=(1, 2))
        return out

    return density


def marginal_cdf(params, feature=0):
    """CDF of the marginal mixture of one feature."""
    weights = _mixture_weights(params)
    loc = params.emit_loc[:, :, feature]
    scale = params.emit_scale[:, :, feature]
    lognormal = params.kind == "lognormal"

    def cdf(x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        out = np.zeros_like(x)
        pos = x > 0 if lognormal else np.ones_like(x, dtype=bool)
        y = np.log(x[pos]) if lognormal else x[pos]
        z = (y[:, None, None] - loc) / scale
        out[pos] = (ndtr(z) * weights).sum(axis=(1, 2))
        return out

    return cdf


def area_statistic(values, model_cdf):
    """Area between the empirical step CDF of ``values`` and ``model_cdf``.

    Integrates |F_data - F_model| on a 2048-point grid spanning half the
    smallest to twice the largest observation (log-spaced for positive
    data, linear otherwise).
    """
    values = np.sort(np.asarray(values, dtype=np.float64))
    if values.size == 0:
        raise ValueError("no observations")
    lo, hi = values[0], values[-1]
    if lo > 0:
        grid = np.geomspace(lo * 0.5, hi * 2.0, GRID_POINTS)
    else:
        span = hi - lo if hi > lo else 1.0
        grid = np.linspace(lo - 0.5 * span, hi + 0.5 * span, GRID_POINTS)
    empirical = np.searchsorted(values, grid, side="right") / values.size
    return float(np.trapezoid(np.abs(empirical - model_cdf(grid)), grid))


def monte_carlo_gof(seq, alphabet, config, n_surrogates, rng, resample_events=True):
    """Surrogate-data goodness of fit for one observation sequence.

    Fits the model on the first timing feature, then fits ``n_surrogates``
    models on equal-length samples generated from the fitted model
    (event types resampled from the fitted chain unless
    ``resample_events=False``, which reuses the observed types).  Each
    surrogate's area statistic is computed against its own data.  A
    surrogate whose fit fails is redrawn once before erroring out.
    """
    if n_surrogates < 1:
        raise ValueError("n_surrogates must be >= 1")
    seq0 = ObservationSequence(seq.events, seq.features[:, :1])
    fitted, _ = estimation.fit([seq0], alphabet, config)
    area = area_statistic(seq0.features[:, 0], marginal_cdf(fitted))

    streams = rng.spawn(n_surrogates)

    def one_surrogate(stream):
        for attempt in range(2):
            events = None if resample_events else seq0.events
            surr, _ = sample_model(fitted, seq0.n, stream, events=events)
            try:
                refit, _ = estimation.fit([surr], alphabet, config)
            except Exception:
                if attempt == 1:
                    raise
                continue
            return area_statistic(surr.features[:, 0], marginal_cdf(refit))
        raise AssertionError("unreachable")

    surrogate_areas = np.array(parallel_map(one_surrogate, streams))
    center = surrogate_areas.mean()
    more_extreme = np.sum(np.abs(surrogate_areas - center) > abs(area - center))
    p_value = (int(more_extreme) + 1) / (n_surrogates + 1)
    return GofResult(area=area, surrogate_areas=surrogate_areas, p_value=p_value)
