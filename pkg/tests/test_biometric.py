"""Identification, verification scores, ROC/EER, continuous penalties, AMRT."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pohmm.biometric import (
    Population,
    amrt,
    continuous_penalty,
    fit_population,
    identify,
    manhattan_scores,
    mean_absolute_deviation,
    normalize_scores,
    roc_eer,
    run_benchmark,
    verification_scores,
)
from pohmm.dataset import LabeledSequence
from pohmm.estimation import FitConfig
from pohmm.event_chain import EventAlphabet, EventChain
from pohmm.model import PohmmParams, marginalize

from synthetic import synthetic_population_samples


def _point_model(loc, scale=0.25):
    """Single-state, single-event-type model centered at exp(loc)."""
    chain = EventChain(start=[1.0], trans=[[1.0]], stationary=[1.0])
    params = PohmmParams(
        alphabet=EventAlphabet(("x",)),
        n_states=1,
        kind="lognormal",
        startp=[[1.0]],
        trans=np.ones((1, 1, 1, 1)),
        emit_loc=np.full((1, 1, 1), loc),
        emit_scale=np.full((1, 1, 1), scale),
        event_chain=chain,
    )
    marginalize(params)
    return params


def _query(values):
    return LabeledSequence("q", "s", ("x",) * len(values), np.asarray(values)[:, None])


def test_identify_single_user():
    pop = Population({"alice": _point_model(0.0)})
    assert identify(_query([5.0, 0.4]), pop) == "alice"


def test_identify_prefers_matching_model():
    pop = Population({"low": _point_model(0.0), "high": _point_model(3.0)})
    assert identify(_query([np.exp(0.1), np.exp(-0.2)]), pop) == "low"
    assert identify(_query([np.exp(3.1), np.exp(2.9)]), pop) == "high"


def test_identify_identical_models_is_chance_by_tie_rule():
    # Exact copies tie on every query; the smallest id always wins, which
    # is chance accuracy (1/U) over balanced queries.
    pop = Population({u: _point_model(1.0) for u in ("a", "b", "c")})
    hits = sum(identify(_query([np.exp(1.0) + 0.1 * k]), pop) == true
               for k, true in enumerate(("a", "b", "c")))
    assert hits == 1


def test_normalize_scores_arithmetic():
    assert_allclose(normalize_scores([-10.0, -5.0, -2.0]), [0.0, 0.625, 1.0])
    assert_allclose(normalize_scores([3.0, 3.0]), [0.5, 0.5])


def test_verification_scores_extremes_and_errors():
    pop = Population({"low": _point_model(0.0), "high": _point_model(3.0)})
    q = _query([np.exp(0.05), np.exp(-0.05)])
    assert verification_scores(q, "low", pop) == 1.0
    assert verification_scores(q, "high", pop) == 0.0
    with pytest.raises(ValueError, match="unknown claimed user"):
        verification_scores(q, "nobody", pop)
    with pytest.raises(ValueError, match="at least 2"):
        verification_scores(q, "low", Population({"low": _point_model(0.0)}))


def test_roc_eer_hand_example():
    roc = roc_eer([0.9, 0.8, 0.7], [0.6, 0.75, 0.4])
    assert_allclose(roc.eer, 1 / 3)


def test_roc_eer_separated_and_identical():
    assert roc_eer([0.8, 0.9], [0.1, 0.2]).eer == 0.0
    scores = [0.1, 0.4, 0.4, 0.7, 0.9]
    assert abs(roc_eer(scores, scores).eer - 0.5) <= 0.2


def test_roc_monotonicity(rng):
    gen = rng.normal(1.0, 0.5, size=40)
    imp = rng.normal(0.0, 0.5, size=60)
    roc = roc_eer(gen, imp)
    assert np.all(np.diff(roc.far) <= 1e-12)
    assert np.all(np.diff(roc.frr) >= -1e-12)
    assert 0.0 <= roc.eer <= 1.0


def test_continuous_penalty_claimed_always_best():
    pop = Population({"low": _point_model(0.0), "high": _point_model(3.0)})
    q = _query(np.exp(np.full(30, 0.0)))
    trace = continuous_penalty(q, "low", pop, window=25)
    assert np.all(trace.ranks == 0)
    assert np.all(trace.cumulative == 0)


def test_continuous_penalty_worst_of_five_steady_state():
    models = {f"m{k}": _point_model(float(k)) for k in range(4)}
    models["claimed"] = _point_model(9.0)
    pop = Population(models)
    q = _query(np.exp(np.full(80, 0.0)))
    trace = continuous_penalty(q, "claimed", pop, window=25)
    assert np.all(trace.ranks == 4)
    assert trace.cumulative[-1] == 4 * 25
    assert trace.cumulative[0] == 4


def test_continuous_penalty_tie_order_deterministic():
    pop = Population({"a": _point_model(1.0), "b": _point_model(1.0), "c": _point_model(2.0)})
    q = _query(np.exp(np.full(10, 1.0)))
    ta = continuous_penalty(q, "a", pop)
    tb = continuous_penalty(q, "b", pop)
    assert np.all(ta.ranks == 0)
    assert np.all(tb.ranks == 1)


def test_window_accumulation():
    pop = Population({"a": _point_model(0.0), "b": _point_model(0.01)})
    q = _query(np.exp(np.zeros(10)))
    trace = continuous_penalty(q, "b", pop, window=3)
    # rank of b is 1 on every event; window of 3 caps the sum
    assert trace.cumulative.tolist() == [1, 2, 3, 3, 3, 3, 3, 3, 3, 3]


def test_amrt_identical_impostor_never_detected():
    pop = Population({"a": _point_model(0.0), "b": _point_model(4.0)})
    genuine = _query(np.exp(np.full(20, 0.0)))
    res = amrt(pop, {"a": [genuine], "b": [_query(np.exp(np.full(20, 4.0)))]},
               {"a": [genuine], "b": []})
    assert res.per_user["a"] == 20.0


def test_amrt_immediate_rejection():
    pop = Population({"a": _point_model(0.0), "b": _point_model(4.0)})
    gen_a = _query(np.exp(np.full(20, 0.0)))     # always rank 0 under a
    imp_a = _query(np.exp(np.full(20, 4.0)))     # always rank 1 under a
    res = amrt(pop, {"a": [gen_a], "b": [imp_a]}, {"a": [imp_a], "b": []})
    assert res.thresholds["a"] == 0.0
    assert res.per_user["a"] == 1.0
    assert res.amrt == 1.0


def test_manhattan_arithmetic():
    assert manhattan_scores([4.0], [[1.0], [3.0]]) == -2.0
    assert manhattan_scores([2.0], [[1.0], [3.0]]) == 0.0
    with pytest.raises(ValueError, match="dimension mismatch"):
        manhattan_scores([1.0, 2.0], [[1.0]])
    with pytest.raises(ValueError, match="dataset-wide MAD"):
        manhattan_scores([1.0], [[1.0]], scaled=True)


def test_scaled_manhattan_ranking_invariant_under_feature_scaling(rng):
    templates = {u: rng.normal(0, 1, size=(4, 6)) for u in "abc"}
    queries = rng.normal(0, 1, size=(5, 6))
    all_vecs = np.vstack(list(templates.values()))
    mad = mean_absolute_deviation(all_vecs)
    c = 3.7
    mad_scaled = mean_absolute_deviation(all_vecs * c)
    for q in queries:
        plain = [manhattan_scores(q, templates[u], scaled=True, global_mad=mad) for u in "abc"]
        scaled = [
            manhattan_scores(q * c, templates[u] * c, scaled=True, global_mad=mad_scaled)
            for u in "abc"
        ]
        assert np.argsort(plain).tolist() == np.argsort(scaled).tolist()
        assert_allclose(plain, scaled, rtol=1e-9)


def test_population_validation():
    with pytest.raises(ValueError):
        Population({})
    a = _point_model(0.0)
    chain = EventChain(start=[1.0], trans=[[1.0]], stationary=[1.0])
    b3 = PohmmParams(
        alphabet=EventAlphabet(("x",)), n_states=3, kind="lognormal",
        startp=np.full((1, 3), 1 / 3), trans=np.full((1, 1, 3, 3), 1 / 3),
        emit_loc=np.zeros((1, 3, 1)), emit_scale=np.ones((1, 3, 1)),
        event_chain=chain,
    )
    with pytest.raises(ValueError, match="share"):
        Population({"a": a, "b": b3})


def test_benchmark_smoke_on_synthetic_population():
    samples, _ = synthetic_population_samples(seed=11, n_users=4, samples_per_user=3, length=40)
    cfg = FitConfig(n_states=2, max_iter=60)
    report = run_benchmark(samples, config=cfg, window=10)
    assert set(report.detectors) == {"pohmm", "hmm", "manhattan", "scaled_manhattan"}
    for det in report.detectors.values():
        assert 0.0 <= det.acc_mean <= 1.0
        assert 0.0 <= det.eer_mean <= 0.75
    assert report.detectors["pohmm"].amrt is not None
    # event-aware model should identify these users essentially perfectly
    assert report.detectors["pohmm"].acc_mean >= 0.75
