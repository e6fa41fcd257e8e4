"""Identification, verification, and continuous verification.

A population holds one fitted model per user.  A query sequence is scored
under every model; identification takes the maximum-likelihood model,
static verification min-max normalizes the claimed model's log likelihood
against the population and sweeps a threshold (ROC/EER), and continuous
verification ranks the per-event likelihood increments of all models in a
sliding window of rank penalties.

Distance baselines (Manhattan and scaled Manhattan on fixed-length timing
vectors) and the cross-fold benchmark harness live here too.  The HMM
baseline is not a separate code path: it is the same model fitted with
every event label mapped to one symbol.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import estimation
from .dataset import LabeledSequence
from .event_chain import EventAlphabet
from .model import forward_increments, sequence_loglik
from .util import parallel_map

HMM_SYMBOL = "*"
DEFAULT_WINDOW = 25
MAD_FLOOR = 1e-9


@dataclass
class Population:
    """User ids (sorted) with one fitted model per user."""

    models: dict

    def __post_init__(self):
        self.users = tuple(sorted(self.models))
        if not self.users:
            raise ValueError("population must contain at least one model")
        ref = self.models[self.users[0]]
        for u in self.users:
            mod = self.models[u]
            if mod.n_states != ref.n_states or mod.kind != ref.kind:
                raise ValueError("population models must share states and kind")

    @property
    def size(self):
        return len(self.users)

    def __getitem__(self, user):
        return self.models[user]


def fit_population(samples, config=None, event_free=False):
    """Fit one model per user from labeled training sequences.

    ``samples`` maps user id to a list of :class:`LabeledSequence`.  Each
    user's alphabet comes from their own training labels.  With
    ``event_free=True`` every label maps to a single shared symbol, which
    yields the plain HMM baseline through the identical code path.
    """
    config = config or estimation.FitConfig()

    def fit_one(user):
        seqs = samples[user]
        if event_free:
            alphabet = EventAlphabet((HMM_SYMBOL,))
            encoded = [
                LabeledSequence(s.user, s.session, (HMM_SYMBOL,) * s.n, s.features).encode(alphabet)
                for s in seqs
            ]
        else:
            alphabet = EventAlphabet.from_labels(
                [lab for s in seqs for lab in s.labels]
            )
            encoded = [s.encode(alphabet) for s in seqs]
        params, _ = estimation.fit(encoded, alphabet, config)
        return user, params

    return Population(models=dict(parallel_map(fit_one, sorted(samples))))


def _raw_logliks(query, population):
    """Full-sequence log likelihood under every model, ordered by user id.

    A model that fails to score is excluded with a warning (score -inf).
    """
    out = np.empty(population.size)
    for k, user in enumerate(population.users):
        model = population.models[user]
        try:
            out[k] = sequence_loglik(model, query.encode(model.alphabet))
        except Exception as exc:  # noqa: BLE001 - scoring must degrade per-model
            warnings.warn(f"model {user!r} failed to score: {exc}")
            out[k] = -np.inf
    return out


def identify(query, population):
    """Maximum-likelihood user id; ties resolve to the smallest id."""
    scores = _raw_logliks(query, population)
    if not np.isfinite(scores).any():
        raise ValueError("no model could score the query")
    return population.users[int(np.argmax(scores))]


def normalize_scores(logliks):
    """Min-max normalize a population's log likelihoods into [0, 1]."""
    lo, hi = np.min(logliks), np.max(logliks)
    if hi == lo:
        return np.full_like(np.asarray(logliks, dtype=np.float64), 0.5)
    return (np.asarray(logliks, dtype=np.float64) - lo) / (hi - lo)


def verification_scores(query, claimed, population):
    """Population-normalized score of the claimed user's model."""
    if population.size < 2:
        raise ValueError("min-max normalization needs at least 2 models")
    if claimed not in population.models:
        raise ValueError(f"unknown claimed user: {claimed!r}")
    scores = normalize_scores(_raw_logliks(query, population))
    return float(scores[population.users.index(claimed)])


@dataclass
class RocCurve:
    """Threshold sweep with interpolated equal error rate."""

    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float


def roc_eer(genuine_scores, impostor_scores):
    """ROC over the union of scores; higher scores mean more genuine.

    At threshold t a score is accepted when ``score >= t``, so FAR is
    nonincreasing and FRR nondecreasing; the EER interpolates linearly
    between the bracketing thresholds.
    """
    gen = np.sort(np.asarray(genuine_scores, dtype=np.float64))
    imp = np.sort(np.asarray(impostor_scores, dtype=np.float64))
    if gen.size == 0 or imp.size == 0:
        raise ValueError("need both genuine and impostor scores")
    thresholds = np.concatenate(
        [[-np.inf], np.unique(np.concatenate([gen, imp])), [np.inf]]
    )
    far = (imp.size - np.searchsorted(imp, thresholds, side="left")) / imp.size
    frr = np.searchsorted(gen, thresholds, side="left") / gen.size

    diff = far - frr  # nonincreasing: starts at +1, ends at -1
    idx = int(np.nonzero(diff <= 0)[0][0])
    if idx == 0:
        eer = float(far[0])
    else:
        k = idx - 1
        denom = diff[k] - diff[idx]
        lam = diff[k] / denom if denom > 0 else 0.0
        eer = float(far[k] + lam * (far[idx] - far[k]))
    return RocCurve(thresholds=thresholds, far=far, frr=frr, eer=eer)


@dataclass
class PenaltyTrace:
    """Per-event rank penalties and their sliding-window accumulation."""

    ranks: np.ndarray
    window: int
    cumulative: np.ndarray
    threshold: float = None
    rejection_index: int = None


def _windowed(ranks, window):
    csum = np.concatenate([[0], np.cumsum(ranks)])
    lo = np.maximum(np.arange(1, len(ranks) + 1) - window, 0)
    return csum[1:] - csum[lo]


def _rank_matrix(increments):
    """Per-step rank of every model (0 = highest increment; ties by id order)."""
    n_models, n = increments.shape
    ranks = np.empty((n_models, n), dtype=np.int64)
    for t in range(n):
        order = np.argsort(-increments[:, t], kind="stable")
        ranks[order, t] = np.arange(n_models)
    return ranks


def _increment_matrix(query, population):
    rows = []
    for user in population.users:
        model = population.models[user]
        rows.append(forward_increments(model, query.encode(model.alphabet)))
    return np.vstack(rows)


def continuous_penalty(query, claimed, population, window=DEFAULT_WINDOW, threshold=None):
    """Rank-penalty trace of the claimed model over one query sequence.

    Each event's likelihood increment is ranked against every model in the
    population (rank 0 = best); the claimed model's rank is the penalty.
    The cumulative penalty sums ranks over the trailing ``window`` events.
    If ``threshold`` is given, the first index (1-based) whose cumulative
    penalty exceeds it is recorded as the rejection index.
    """
    if population.size < 2:
        raise ValueError("continuous verification needs at least 2 models")
    if claimed not in population.models:
        raise ValueError(f"unknown claimed user: {claimed!r}")
    increments = _increment_matrix(query, population)
    ranks = _rank_matrix(increments)[population.users.index(claimed)]
    cumulative = _windowed(ranks, window)
    rejection = None
    if threshold is not None:
        above = np.nonzero(cumulative > threshold)[0]
        rejection = int(above[0]) + 1 if above.size else None
    return PenaltyTrace(
        ranks=ranks,
        window=window,
        cumulative=cumulative,
        threshold=threshold,
        rejection_index=rejection,
    )


@dataclass
class AmrtResult:
    """Average maximum rejection time over (impostor query, model) pairs."""

    amrt: float
    mrt_std: float
    per_user: dict
    thresholds: dict
    mrts: list = field(repr=False, default_factory=list)


def amrt(population, genuine_queries, impostor_queries, window=DEFAULT_WINDOW):
    """Maximum rejection times with per-user genuine-safe thresholds.

    For each user the threshold is the largest windowed penalty their own
    genuine queries incur (so the genuine user is never rejected; this is
    asserted).  Each impostor query's MRT against that user is the first
    event index whose windowed penalty exceeds the threshold, or the query
    length if it never does.
    """
    mrts = []
    per_user = {}
    thresholds = {}
    for user in population.users:
        gen = genuine_queries.get(user, [])
        if not gen:
            raise ValueError(f"user {user!r} has no genuine query")
        gen_traces = [continuous_penalty(q, user, population, window) for q in gen]
        threshold = max(float(t.cumulative.max()) for t in gen_traces)
        thresholds[user] = threshold
        for t in gen_traces:
            assert not np.any(t.cumulative > threshold), "genuine user rejected"
        user_mrts = []
        for query in impostor_queries.get(user, []):
            trace = continuous_penalty(query, user, population, window, threshold=threshold)
            mrt = trace.rejection_index if trace.rejection_index is not None else query.n
            user_mrts.append(mrt)
        if user_mrts:
            per_user[user] = float(np.mean(user_mrts))
            mrts.extend(user_mrts)
    if not mrts:
        raise ValueError("no impostor queries supplied")
    return AmrtResult(
        amrt=float(np.mean(mrts)),
        mrt_std=float(np.std(mrts)),
        per_user=per_user,
        thresholds=thresholds,
        mrts=mrts,
    )


def mean_absolute_deviation(vectors):
    """Per-feature mean absolute deviation over a stack of vectors."""
    arr = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    return np.abs(arr - arr.mean(axis=0)).mean(axis=0)


def manhattan_scores(query_vec, template_vecs, scaled=False, global_mad=None):
    """Negative (optionally MAD-scaled) Manhattan distance to the template mean."""
    query = np.asarray(query_vec, dtype=np.float64)
    templates = np.atleast_2d(np.asarray(template_vecs, dtype=np.float64))
    if templates.shape[1] != query.shape[0]:
        raise ValueError("dimension mismatch between query and templates")
    diff = np.abs(query - templates.mean(axis=0))
    if scaled:
        if global_mad is None:
            raise ValueError("scaled Manhattan requires the dataset-wide MAD")
        mad = np.asarray(global_mad, dtype=np.float64)
        if mad.shape != query.shape:
            raise ValueError("dimension mismatch between query and MAD vector")
        diff = diff / np.maximum(mad, MAD_FLOOR)
    return float(-diff.sum())


# -- cross-fold benchmark harness --------------------------------------------

SEQUENCE_DETECTORS = ("pohmm", "hmm")
VECTOR_DETECTORS = ("manhattan", "scaled_manhattan")


@dataclass
class DetectorMetrics:
    name: str
    acc_mean: float
    acc_ci: float
    eer_mean: float
    eer_ci: float
    per_user: dict
    roc: RocCurve
    amrt: float = None
    amrt_std: float = None


@dataclass
class BenchmarkReport:
    users: tuple
    folds: int
    detectors: dict


def _ci_half_width(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(1.96 * values.std(ddof=1) / np.sqrt(values.size))


def flatten_vectors(seq):
    """Fallback fixed-length vector: feature columns concatenated."""
    return seq.features.flatten(order="F")


def evaluate_split(train_samples, query_samples, config=None, detectors=SEQUENCE_DETECTORS):
    """Fixed train/test split evaluation of the sequence detectors.

    Models are fitted once on ``train_samples``; every sequence in
    ``query_samples`` is scored against the whole population under every
    claimed user.  Returns per-detector metrics, as used by the
    session-split password protocol.
    """
    config = config or estimation.FitConfig()
    users = tuple(sorted(train_samples))
    populations = {}
    if "pohmm" in detectors:
        populations["pohmm"] = fit_population(train_samples, config)
    if "hmm" in detectors:
        populations["hmm"] = fit_population(train_samples, config, event_free=True)

    out = {}
    for det in detectors:
        gen_scores = {u: [] for u in users}
        imp_scores = {u: [] for u in users}
        hits = {u: [] for u in users}
        for q_user in users:
            for query in query_samples[q_user]:
                raw = _raw_logliks(query, populations[det])
                hits[q_user].append(users[int(np.argmax(raw))] == q_user)
                norm = normalize_scores(raw)
                for k, claimed in enumerate(users):
                    bucket = gen_scores if claimed == q_user else imp_scores
                    bucket[claimed].append(float(norm[k]))
        per_user = {
            u: {
                "acc": float(np.mean(hits[u])),
                "eer": roc_eer(gen_scores[u], imp_scores[u]).eer,
            }
            for u in users
        }
        accs = [per_user[u]["acc"] for u in users]
        eers = [per_user[u]["eer"] for u in users]
        out[det] = DetectorMetrics(
            name=det,
            acc_mean=float(np.mean(accs)),
            acc_ci=_ci_half_width(accs),
            eer_mean=float(np.mean(eers)),
            eer_ci=_ci_half_width(eers),
            per_user=per_user,
            roc=roc_eer(
                [s for u in users for s in gen_scores[u]],
                [s for u in users for s in imp_scores[u]],
            ),
        )
    return out


def run_benchmark(
    samples,
    config=None,
    window=DEFAULT_WINDOW,
    vectors=None,
    detectors=SEQUENCE_DETECTORS + VECTOR_DETECTORS,
    folds=None,
):
    """Stratified cross-fold evaluation of all detectors.

    ``samples`` maps user id to an equal-size list of labeled sequences.
    Fold ``f`` holds out sample ``f`` of every user as the query and
    trains on the rest.  ``vectors`` optionally supplies the fixed-length
    vectors for the distance detectors, aligned with ``samples``; by
    default the sequence features are flattened (requires equal lengths).
    """
    config = config or estimation.FitConfig()
    users = tuple(sorted(samples))
    counts = {u: len(samples[u]) for u in users}
    n_folds = folds or min(counts.values())
    if n_folds < 2:
        raise ValueError("need at least 2 samples per user")
    use_vectors = any(d in VECTOR_DETECTORS for d in detectors)
    if use_vectors and vectors is None:
        vectors = {u: [flatten_vectors(s) for s in samples[u]] for u in users}

    acc_hits = {d: {u: [] for u in users} for d in detectors}
    gen_scores = {d: {u: [] for u in users} for d in detectors}
    imp_scores = {d: {u: [] for u in users} for d in detectors}
    mrt_pool = {d: [] for d in detectors if d in SEQUENCE_DETECTORS}

    for fold in range(n_folds):
        train = {u: [s for i, s in enumerate(samples[u]) if i != fold] for u in users}
        queries = {u: samples[u][fold] for u in users}

        populations = {}
        if "pohmm" in detectors:
            populations["pohmm"] = fit_population(train, config)
        if "hmm" in detectors:
            populations["hmm"] = fit_population(train, config, event_free=True)

        if use_vectors:
            train_vecs = {
                u: [v for i, v in enumerate(vectors[u]) if i != fold] for u in users
            }
            query_vecs = {u: vectors[u][fold] for u in users}
            template_means = {u: np.mean(train_vecs[u], axis=0) for u in users}
            global_mad = mean_absolute_deviation(
                np.vstack([v for u in users for v in train_vecs[u]])
            )

        for det in detectors:
            for q_user in users:
                if det in SEQUENCE_DETECTORS:
                    raw = _raw_logliks(queries[q_user], populations[det])
                else:
                    query = query_vecs[q_user]
                    raw = np.array(
                        [
                            manhattan_scores(
                                query,
                                train_vecs[u],
                                scaled=det == "scaled_manhattan",
                                global_mad=global_mad if det == "scaled_manhattan" else None,
                            )
                            for u in users
                        ]
                    )
                predicted = users[int(np.argmax(raw))]
                acc_hits[det][q_user].append(predicted == q_user)
                norm = normalize_scores(raw)
                for k, claimed in enumerate(users):
                    bucket = gen_scores if claimed == q_user else imp_scores
                    bucket[det][claimed].append(float(norm[k]))

        for det in mrt_pool:
            genuine = {u: [queries[u]] for u in users}
            impostors = {
                u: [queries[v] for v in users if v != u] for u in users
            }
            result = amrt(populations[det], genuine, impostors, window)
            mrt_pool[det].extend(result.mrts)

    report = {}
    for det in detectors:
        per_user = {}
        for u in users:
            per_user[u] = {
                "acc": float(np.mean(acc_hits[det][u])),
                "eer": roc_eer(gen_scores[det][u], imp_scores[det][u]).eer,
            }
        accs = [per_user[u]["acc"] for u in users]
        eers = [per_user[u]["eer"] for u in users]
        pooled = roc_eer(
            [s for u in users for s in gen_scores[det][u]],
            [s for u in users for s in imp_scores[det][u]],
        )
        metrics = DetectorMetrics(
            name=det,
            acc_mean=float(np.mean(accs)),
            acc_ci=_ci_half_width(accs),
            eer_mean=float(np.mean(eers)),
            eer_ci=_ci_half_width(eers),
            per_user=per_user,
            roc=pooled,
        )
        if det in mrt_pool:
            metrics.amrt = float(np.mean(mrt_pool[det]))
            metrics.amrt_std = float(np.std(mrt_pool[det]))
        report[det] = metrics
    return BenchmarkReport(users=users, folds=n_folds, detectors=report)
