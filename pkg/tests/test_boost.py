import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facekit import boost, haar, synth
from facekit.boost import (
    Cascade,
    CascadeTrainTargets,
    FeatureCache,
    Stage,
    WeakClassifier,
    adaboost_round,
    classify_window,
    initial_weights,
    stage_threshold_for,
    stages_passed,
    strong_scores,
    train_cascade,
    train_stage_from_values,
    train_stump,
)
from facekit.haar import HaarFeature, build_integral


def _stump_oracle(values, labels, weights):
    """Every midpoint and polarity, errors summed directly; ties to smallest thr then +1."""
    distinct = sorted(set(values.tolist()))
    best = None
    for a, b in zip(distinct[:-1], distinct[1:]):
        thr = 0.5 * (a + b)
        for pol in (1, -1):
            pred = np.where(pol * values >= pol * thr, 1, -1)
            err = float(weights[pred != labels].sum())
            if best is None or err < best[2]:
                best = (thr, pol, err)
    return best


@st.composite
def stump_problems(draw):
    n = draw(st.integers(2, 30))
    values = np.array(draw(st.lists(st.integers(-5, 5), min_size=n, max_size=n)), dtype=np.float64)
    labels = np.array(draw(st.lists(st.sampled_from([1, -1]), min_size=n, max_size=n)))
    labels[0], labels[1] = 1, -1
    # dyadic weights sum exactly, so the oracle and the cumulative sums agree bit for bit
    counts = np.array(draw(st.lists(st.integers(1, 8), min_size=n, max_size=n)), dtype=np.float64)
    scale = 2.0 ** math.ceil(math.log2(counts.sum()))
    counts[-1] += scale - counts.sum()
    return values, labels, counts / scale


@settings(max_examples=150, deadline=None)
@given(stump_problems())
def test_stump_matches_brute_force(problem):
    values, labels, weights = problem
    got = train_stump(values, labels, weights)
    want = _stump_oracle(values, labels, weights)
    if want is None:
        assert got == (values[0], 1, float(weights[labels == -1].sum()))
    else:
        assert got == want


def test_stump_polarity_minus_one():
    values = np.array([1.0, 2.0, 3.0, 4.0])
    labels = np.array([1, 1, -1, -1])
    thr, pol, err = train_stump(values, labels, np.full(4, 0.25))
    assert (thr, pol, err) == (2.5, -1, 0.0)


def test_stump_rejects_bad_weights():
    with pytest.raises(ValueError):
        train_stump([1, 2], [1, -1], [0.3, 0.3])
    with pytest.raises(ValueError):
        train_stump([1, 2], [1, 1], [0.5, 0.5])
    with pytest.raises(ValueError):
        train_stump([1, 2], [1, 0], [0.5, 0.5])


def test_feature_cache_agrees_with_per_column_stumps(rng):
    values = rng.normal(size=(40, 25)).round(1)
    labels = np.where(rng.random(40) < 0.4, 1, -1)
    labels[:2] = [1, -1]
    w = initial_weights(labels)
    j, thr, pol, err = FeatureCache(values, chunk=7).best_stump(labels, w)
    per = [train_stump(values[:, k], labels, w) for k in range(25)]
    errs = [e for _, _, e in per]
    assert err == pytest.approx(min(errs), abs=1e-15)
    assert j == int(np.argmin(np.round(errs, 12)))
    assert (thr, pol) == per[j][:2]


def test_initial_weights_balance_classes():
    labels = np.array([1, 1, -1, -1, -1, -1])
    w = initial_weights(labels)
    assert w[labels == 1].sum() == pytest.approx(0.5)
    assert w[labels == -1].sum() == pytest.approx(0.5)


def test_adaboost_round_reweights_by_beta(rng):
    values = rng.normal(size=(50, 4))
    labels = np.where(values[:, 2] + 0.8 * rng.normal(size=50) > 0, 1, -1)
    w = initial_weights(labels)
    weak, new_w = adaboost_round(FeatureCache(values), labels, w)
    eps = weak.error
    beta = eps / (1 - eps)
    assert weak.alpha == pytest.approx(math.log(1 / beta))
    correct = np.where(weak.votes(values[:, weak.feature_index]), 1, -1) == labels
    expect = np.where(correct, w * beta, w)
    assert np.allclose(new_w, expect / expect.sum(), rtol=1e-12)
    # after re-weighting the chosen stump has error exactly one half
    assert new_w[~correct].sum() == pytest.approx(0.5)


def test_perfect_stump_clamps_epsilon():
    values = np.array([[0.0], [1.0], [2.0], [3.0]])
    labels = np.array([-1, -1, 1, 1])
    weak, new_w = adaboost_round(FeatureCache(values), labels, initial_weights(labels))
    assert weak.error == 0.0
    assert math.isfinite(weak.alpha) and weak.alpha == pytest.approx(math.log((1 - 1e-10) / 1e-10))
    assert np.all(np.isfinite(new_w)) and new_w.sum() == pytest.approx(1.0)


def test_strong_classifier_training_error_falls_to_zero(rng):
    # XOR-like quadrants need several stumps
    x = rng.uniform(-1, 1, size=(200, 2))
    labels = np.where((x[:, 0] > 0.2) | (x[:, 1] > 0.5), 1, -1)
    cache = FeatureCache(x)
    w = initial_weights(labels)
    weaks, errors = [], []
    for _ in range(10):
        weak, w = adaboost_round(cache, labels, w)
        weaks.append(weak)
        scores = strong_scores(weaks, x)
        pred = np.where(scores >= 0.5 * sum(k.alpha for k in weaks), 1, -1)
        errors.append(float(np.mean(pred != labels)))
    assert errors[-1] == 0.0


def test_stage_threshold_for():
    scores = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0])
    assert stage_threshold_for(scores, 1.0, 100.0) == 0.0
    assert stage_threshold_for(scores, 0.8, 100.0) == 2.0
    assert stage_threshold_for(scores, 0.5, 3.0) == 3.0  # never raised above the start
    for d in np.linspace(0.05, 1.0, 20):
        t = stage_threshold_for(scores, d, 100.0)
        assert np.mean(scores >= t) >= d - 1e-12
        # any larger score level would lose the rate
        higher = scores[scores > t]
        if len(higher):
            assert np.mean(scores >= higher.min()) < d


def test_stage_meets_detection_target(rng):
    pos = rng.normal(1.0, 1.0, size=(200, 8))
    neg = rng.normal(0.0, 1.0, size=(400, 8))
    targets = CascadeTrainTargets(d_min=0.98, f_max=0.3, max_weaks_per_stage=30)
    stage, rep = train_stage_from_values(pos, neg, targets)
    assert np.mean(stage.passes(pos)) >= 0.98
    assert rep.n_weaks == len(stage.weaks)
    assert rep.false_positive_rate == np.mean(stage.passes(neg))
    if rep.met_target:
        assert rep.false_positive_rate <= 0.3


def test_min_weaks_per_stage_is_honoured():
    pos = np.array([[5.0, 1.0]] * 10)
    neg = np.array([[0.0, 1.0]] * 10)
    targets = CascadeTrainTargets(d_min=1.0, f_max=0.5, max_weaks_per_stage=3, min_weaks_per_stage=3)
    stage, _ = train_stage_from_values(pos, neg, targets)
    assert len(stage.weaks) == 3


def _toy_cascade():
    feats = [HaarFeature("edge-horizontal", 0, 0, 24, 12), HaarFeature("four-rect", 2, 2, 5, 5),
             HaarFeature("line-vertical", 0, 3, 8, 10)]
    stages = [Stage([WeakClassifier(0, 0.5, 1, 1.0)], 1.0),
              Stage([WeakClassifier(1, -0.25, -1, 0.7), WeakClassifier(2, 0.1, 1, 0.4)], 0.5)]
    return Cascade(24, stages, feats)


def test_cascade_dict_round_trip():
    c = _toy_cascade()
    d = c.to_dict()
    assert set(d) == {"base_window", "stages", "features"}
    assert d["stages"][1]["weaks"][0] == {"feature": 1, "threshold": -0.25, "polarity": -1, "alpha": 0.7}
    back = Cascade.from_dict(d)
    assert back.to_dict() == d


def test_cascade_from_dict_validates():
    d = _toy_cascade().to_dict()
    d["stages"][0]["weaks"][0]["feature"] = 9
    with pytest.raises(ValueError):
        Cascade.from_dict(d)
    d = _toy_cascade().to_dict()
    d["stages"][0]["weaks"][0]["polarity"] = 0
    with pytest.raises(ValueError):
        Cascade.from_dict(d)


def test_compact_reindexes_by_first_use():
    feats = [HaarFeature("four-rect", i, 0, 1, 1) for i in range(5)]
    c = Cascade(24, [Stage([WeakClassifier(3, 0, 1, 1), WeakClassifier(1, 0, 1, 1)], 1),
                     Stage([WeakClassifier(3, 0, 1, 1)], 1)], feats)
    k = c.compact()
    assert k.features == [feats[3], feats[1]]
    assert [w.feature_index for s in k.stages for w in s.weaks] == [0, 1, 0]


def test_classify_window_short_circuits(monkeypatch, rng):
    c = _toy_cascade()
    # a flat window gives every feature value 0, so stage 0 (needs > 0.5) rejects
    ii = build_integral(np.full((30, 30), 50, np.uint8))
    calls = []
    real = haar.eval_feature

    def counting(*args, **kwargs):
        calls.append(args[0])
        return real(*args, **kwargs)

    monkeypatch.setattr(haar, "eval_feature", counting)
    accepted, passed = classify_window(c, ii, 0, 0)
    assert (accepted, passed) == (False, 0)
    assert len(calls) == 1


def test_vectorised_scan_matches_scalar_path(rng):
    c = _toy_cascade()
    img = rng.integers(0, 256, (48, 48), dtype=np.uint8)
    img[:20] //= 3
    ii = build_integral(img)
    for scale in (1.0, 1.25, 1.5625):
        size = haar.round_half_up(24 * scale)
        oy, ox = np.mgrid[0:48 - size + 1:3, 0:48 - size + 1:3]
        got = stages_passed(c, ii, ox.ravel(), oy.ravel(), scale)
        want = [classify_window(c, ii, x, y, scale)[1] for x, y in zip(ox.ravel(), oy.ravel())]
        assert got.tolist() == want


def test_training_values_and_scanning_agree_bit_for_bit():
    pos, neg = synth.face_corpus(60, 120, seed=3)
    targets = CascadeTrainTargets(max_stages=3, max_weaks_per_stage=4)
    c, _ = train_cascade(pos, neg, targets, max_features=500, seed=1)
    windows = np.concatenate([pos[:20], neg[:20]])
    values = haar.window_features(windows, c.features)
    by_values = c.accepts_values(values)
    # lay the windows side by side and scan at the base scale
    strip = np.concatenate(list(windows), axis=1)
    ii = build_integral(strip)
    ox = np.arange(len(windows)) * 24
    by_scan = stages_passed(c, ii, ox, np.zeros_like(ox)) == len(c.stages)
    assert by_scan.tolist() == by_values.tolist()
    # stage scores too, not just the decisions
    for st_ in c.stages:
        for i, x in enumerate(ox):
            inv = float(haar.window_inv_sigma(ii, x, 0, 24))
            score = np.zeros(1)
            for wk in st_.weaks:
                v = haar.eval_feature(c.features[wk.feature_index], ii, int(x), 0, 1.0, inv)
                score = boost._accumulate(score, wk.alpha, wk.votes(v))
            assert score[0] == st_.scores(values[i:i + 1])[0]


def test_overall_rates_are_products_of_stage_rates():
    # scene windows are hard enough that several stages get trained
    pos, neg = synth.scene_windows(200, 800, np.random.default_rng(5))
    targets = CascadeTrainTargets(d_min=0.99, f_max=0.5, f_overall=1e-4, max_stages=6)
    c, rep = train_cascade(pos, neg, targets, max_features=1500, seed=0)
    assert len(rep.stages) >= 2
    assert rep.overall_fpr == pytest.approx(math.prod(s.false_positive_rate for s in rep.stages), rel=1e-12)
    # bootstrapping: stage k trains on exactly the negatives stages < k accept
    for prev, cur in zip(rep.stages, rep.stages[1:]):
        assert cur.n_negatives == round(prev.false_positive_rate * prev.n_negatives)
    values = haar.window_features(neg, c.features)
    assert np.mean(c.accepts_values(values)) == rep.overall_fpr


def test_cascade_stops_when_negatives_run_out():
    pos, neg = synth.face_corpus(100, 200, seed=0)
    c, rep = train_cascade(pos, neg, CascadeTrainTargets(f_overall=1e-6, max_stages=6), max_features=800)
    assert rep.negatives_exhausted
    assert rep.overall_fpr == 0.0
    assert len(c.stages) < 6


def test_accept_and_reject_all():
    vals = np.zeros((5, 0))
    assert boost.accept_all_cascade().accepts_values(vals).all()
    assert not boost.reject_all_cascade().accepts_values(vals).any()


def test_targets_validate():
    with pytest.raises(ValueError):
        CascadeTrainTargets(d_min=0.0)
    with pytest.raises(ValueError):
        CascadeTrainTargets(f_max=1.0)
    with pytest.raises(ValueError):
        CascadeTrainTargets(max_weaks_per_stage=2, min_weaks_per_stage=3)


def test_sample_features_is_seeded_and_ordered():
    feats = haar.enumerate_features(8)
    a = boost.sample_features(feats, 50, seed=4)
    assert a == boost.sample_features(feats, 50, seed=4)
    idx = [feats.index(f) for f in a]
    assert idx == sorted(idx) and len(set(idx)) == 50
    assert boost.sample_features(feats, None) == feats
