"""Per-(state, event-type) emission distributions.

One distribution kind per model, either log-normal or normal, with
independent features.  The log-normal density is

    f(x; eta, rho) = exp(-(ln x - eta)^2 / (2 rho^2)) / (x rho sqrt(2 pi))

with log-mean ``eta`` and log-standard-deviation ``rho``.  Scales are
floored at :data:`SCALE_FLOOR` so a cell that captures a single
observation cannot collapse to zero variance.
"""

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)

# Variance-collapse floor, in log-space units for the log-normal kind.
SCALE_FLOOR = 1e-4

KINDS = ("lognormal", "normal")


class EmissionParams:
    """Location/scale parameters for one (state, event type) cell.

    Parameters
    ----------
    kind : {"lognormal", "normal"}
    loc : array_like, shape (K,)
        Log-means (log-normal) or means (normal), one per feature.
    scale : array_like, shape (K,)
        Log-standard-deviations or standard deviations; clamped to
        ``SCALE_FLOOR``.
    """

    __slots__ = ("kind", "loc", "scale")

    def __init__(self, kind, loc, scale):
        if kind not in KINDS:
            raise ValueError(f"unknown emission kind: {kind!r}")
        self.kind = kind
        self.loc = np.atleast_1d(np.asarray(loc, dtype=np.float64))
        self.scale = np.maximum(
            np.atleast_1d(np.asarray(scale, dtype=np.float64)), SCALE_FLOOR
        )
        if self.loc.shape != self.scale.shape or self.loc.ndim != 1:
            raise ValueError("loc and scale must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(self.loc)) and np.all(np.isfinite(self.scale))):
            raise ValueError("emission parameters must be finite")

    @property
    def n_features(self):
        return self.loc.shape[0]

    def __repr__(self):
        return f"EmissionParams({self.kind!r}, loc={self.loc!r}, scale={self.scale!r})"

    def __eq__(self, other):
        return (
            isinstance(other, EmissionParams)
            and self.kind == other.kind
            and np.array_equal(self.loc, other.loc)
            and np.array_equal(self.scale, other.scale)
        )


def log_density(x, params):
    """Joint log density of a feature vector (or rows of vectors).

    Features are independent given the cell, so the result sums the
    per-feature log densities.  Accepts a single (K,) vector or an (n, K)
    batch; returns a scalar or an (n,) array accordingly.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != params.n_features:
        raise ValueError("feature dimension mismatch")
    if params.kind == "lognormal":
        if np.any(x2 <= 0):
            raise ValueError("domain: log-normal emissions require positive values")
        y = np.log(x2)
        jac = y.sum(axis=1)
    else:
        y = x2
        jac = 0.0
    z = (y - params.loc) / params.scale
    out = -0.5 * (z * z).sum(axis=1) - np.log(params.scale).sum()
    out -= 0.5 * params.n_features * LOG_2PI
    out -= jac
    return float(out[0]) if single else out


def weighted_mle(xs, weights, kind):
    """Closed-form weighted maximum-likelihood location/scale estimate.

    Location is the weighted mean of ``ln x`` (log-normal) or ``x``
    (normal); squared scale is the weighted mean squared deviation about
    that location, floored at ``SCALE_FLOOR``.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[0] != xs.shape[0]:
        raise ValueError("weights and observations must have equal length")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    wsum = weights.sum()
    if wsum <= 0:
        raise ValueError("degenerate responsibility mass")
    if kind == "lognormal":
        if np.any(xs <= 0):
            raise ValueError("domain: log-normal emissions require positive values")
        y = np.log(xs)
    else:
        y = xs
    loc = weights @ y / wsum
    var = weights @ (y - loc) ** 2 / wsum
    return EmissionParams(kind, loc, np.sqrt(np.maximum(var, 0.0)))


def sample(params, count, rng):
    """Draw ``count`` i.i.d. feature vectors, shape (count, K)."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    draws = params.loc + params.scale * rng.standard_normal((count, params.n_features))
    if params.kind == "lognormal":
        draws = np.exp(draws)
    return draws
