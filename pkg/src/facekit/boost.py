"""Discrete AdaBoost over Haar-feature decision stumps and attentional cascade training."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import haar
from .haar import BASE_WINDOW, HaarFeature, IntegralImage

log = logging.getLogger(__name__)

EPS_FLOOR = 1e-10


@dataclass
class WeakClassifier:
    """Decision stump voting 1 when ``polarity * value >= polarity * threshold``."""

    feature_index: int
    threshold: float
    polarity: int
    alpha: float
    error: float = field(default=float("nan"), compare=False)

    def votes(self, values):
        p = self.polarity
        return p * np.asarray(values) >= p * self.threshold


@dataclass
class Stage:
    weaks: list[WeakClassifier]
    threshold: float

    def scores(self, values: np.ndarray) -> np.ndarray:
        """Weighted vote sums for rows of a (n_samples x n_features) value matrix."""
        score = np.zeros(len(values))
        for wk in self.weaks:
            score = _accumulate(score, wk.alpha, wk.votes(values[:, wk.feature_index]))
        return score

    def passes(self, values: np.ndarray) -> np.ndarray:
        return self.scores(values) >= self.threshold


def _accumulate(score, alpha, vote):
    # Single place where votes are summed so training and scanning agree bit for bit.
    return score + alpha * np.asarray(vote, dtype=np.float64)


@dataclass
class Cascade:
    base_window: int
    stages: list[Stage]
    features: list[HaarFeature]

    def accepts_values(self, values: np.ndarray) -> np.ndarray:
        """Acceptance mask for samples given base-window feature values (no short-circuit)."""
        ok = np.ones(len(values), dtype=bool)
        for st in self.stages:
            ok &= st.passes(values)
        return ok

    def compact(self) -> "Cascade":
        """Copy keeping only the features some stage refers to, re-indexed in first-use order."""
        remap: dict[int, int] = {}
        stages = []
        for st in self.stages:
            weaks = []
            for wk in st.weaks:
                idx = remap.setdefault(wk.feature_index, len(remap))
                weaks.append(WeakClassifier(idx, wk.threshold, wk.polarity, wk.alpha, wk.error))
            stages.append(Stage(weaks, st.threshold))
        feats = [None] * len(remap)
        for old, new in remap.items():
            feats[new] = self.features[old]
        return Cascade(self.base_window, stages, feats)

    def to_dict(self) -> dict:
        return {
            "base_window": self.base_window,
            "stages": [
                {
                    "threshold": st.threshold,
                    "weaks": [
                        {"feature": wk.feature_index, "threshold": wk.threshold,
                         "polarity": wk.polarity, "alpha": wk.alpha}
                        for wk in st.weaks
                    ],
                }
                for st in self.stages
            ],
            "features": [f.to_dict() for f in self.features],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Cascade":
        features = [HaarFeature.from_dict(f) for f in d["features"]]
        stages = []
        for st in d["stages"]:
            weaks = []
            for wk in st["weaks"]:
                idx = int(wk["feature"])
                if not 0 <= idx < len(features):
                    raise ValueError(f"weak classifier refers to missing feature {idx}")
                pol = int(wk["polarity"])
                if pol not in (1, -1):
                    raise ValueError(f"polarity must be +1 or -1, got {pol}")
                weaks.append(WeakClassifier(idx, float(wk["threshold"]), pol, float(wk["alpha"])))
            stages.append(Stage(weaks, float(st["threshold"])))
        return cls(int(d["base_window"]), stages, features)


def accept_all_cascade(base_window: int = BASE_WINDOW) -> Cascade:
    return Cascade(base_window, [Stage([], 0.0)], [])


def reject_all_cascade(base_window: int = BASE_WINDOW) -> Cascade:
    return Cascade(base_window, [Stage([], 1.0)], [])


# ---------------------------------------------------------------------------
# stumps


def _check_weights(labels, weights):
    labels = np.asarray(labels)
    weights = np.asarray(weights, dtype=np.float64)
    if labels.shape != weights.shape:
        raise ValueError("labels and weights must have the same length")
    if not np.all((labels == 1) | (labels == -1)):
        raise ValueError("labels must be +1 or -1")
    if not (np.any(labels == 1) and np.any(labels == -1)):
        raise ValueError("need at least one positive and one negative sample")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be non-negative and sum to 1")
    return labels, weights


def _best_stumps(sorted_vals, sorted_labels, sorted_w):
    """Best (threshold, polarity, error) per column of pre-sorted value matrices.

    Thresholds are midpoints between adjacent distinct values. Within a column,
    ties go to the smallest threshold and then to polarity +1. Columns with a
    single distinct value get error = inf.
    """
    wp = np.where(sorted_labels == 1, sorted_w, 0.0)
    wn = np.where(sorted_labels == 1, 0.0, sorted_w)
    cp = np.cumsum(wp, axis=0)[:-1]
    cn = np.cumsum(wn, axis=0)[:-1]
    tp = wp.sum(axis=0)
    tn = wn.sum(axis=0)
    err_plus = cp + (tn - cn)
    err_minus = cn + (tp - cp)
    err = np.minimum(err_plus, err_minus)
    err[sorted_vals[:-1] >= sorted_vals[1:]] = np.inf
    best = np.argmin(err, axis=0)
    cols = np.arange(err.shape[1])
    e = err[best, cols]
    pol = np.where(err_minus[best, cols] < err_plus[best, cols], -1, 1)
    thr = 0.5 * (sorted_vals[best, cols] + sorted_vals[best + 1, cols])
    return thr, pol, e


def train_stump(values, labels, weights) -> tuple[float, int, float]:
    """Minimum weighted-error stump on one feature.

    A feature with a single distinct value has no midpoint; it returns that
    value as threshold with polarity +1 (every sample voted positive).
    """
    labels, weights = _check_weights(labels, weights)
    values = np.asarray(values, dtype=np.float64)
    if len(values) != len(labels):
        raise ValueError("values and labels must have the same length")
    order = np.argsort(values, kind="stable")
    thr, pol, err = _best_stumps(values[order][:, None], labels[order][:, None], weights[order][:, None])
    if not np.isfinite(err[0]):
        return float(values[0]), 1, float(weights[labels == -1].sum())
    return float(thr[0]), int(pol[0]), float(err[0])


class FeatureCache:
    """Feature values for a fixed sample set, column-sorted once for repeated stump search."""

    def __init__(self, values: np.ndarray, chunk: int = 2048):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.order = np.argsort(self.values, axis=0, kind="stable")
        self.sorted = np.take_along_axis(self.values, self.order, axis=0)
        self.chunk = chunk

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def best_stump(self, labels, weights):
        """(feature, threshold, polarity, error) over all features; lowest index wins ties."""
        best = (None, 0.0, 1, np.inf)
        for lo in range(0, self.n_features, self.chunk):
            hi = min(lo + self.chunk, self.n_features)
            order = self.order[:, lo:hi]
            thr, pol, err = _best_stumps(self.sorted[:, lo:hi], labels[order], weights[order])
            j = int(np.argmin(err))
            if err[j] < best[3]:
                best = (lo + j, float(thr[j]), int(pol[j]), float(err[j]))
        if best[0] is None:
            raise ValueError("every feature is constant over the sample set")
        return best


def adaboost_round(cache: FeatureCache, labels, weights) -> tuple[WeakClassifier, np.ndarray]:
    """One discrete AdaBoost round with Viola-Jones beta re-weighting."""
    labels, weights = _check_weights(labels, weights)
    j, thr, pol, err = cache.best_stump(labels, weights)
    eps = min(max(err, EPS_FLOOR), 0.5 - EPS_FLOOR)
    beta = eps / (1.0 - eps)
    weak = WeakClassifier(j, thr, pol, math.log(1.0 / beta), err)
    predicted = np.where(weak.votes(cache.values[:, j]), 1, -1)
    correct = predicted == labels
    new_w = np.where(correct, weights * beta, weights)
    return weak, new_w / new_w.sum()


def initial_weights(labels) -> np.ndarray:
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = len(labels) - n_pos
    return np.where(labels == 1, 0.5 / n_pos, 0.5 / n_neg)


def strong_scores(weaks, values) -> np.ndarray:
    return Stage(list(weaks), 0.0).scores(values)


# ---------------------------------------------------------------------------
# stages and cascades


@dataclass
class CascadeTrainTargets:
    d_min: float = 0.995
    f_max: float = 0.5
    f_overall: float = 0.001
    max_stages: int = 10
    max_weaks_per_stage: int = 50
    min_weaks_per_stage: int = 1

    def __post_init__(self):
        if not 0.0 < self.d_min <= 1.0:
            raise ValueError("d_min must lie in (0, 1]")
        if not 0.0 < self.f_max < 1.0:
            raise ValueError("f_max must lie in (0, 1)")
        if not 0.0 < self.f_overall < 1.0:
            raise ValueError("f_overall must lie in (0, 1)")
        if self.max_stages < 1 or self.max_weaks_per_stage < 1:
            raise ValueError("max_stages and max_weaks_per_stage must be >= 1")
        if not 1 <= self.min_weaks_per_stage <= self.max_weaks_per_stage:
            raise ValueError("min_weaks_per_stage must lie in [1, max_weaks_per_stage]")


@dataclass
class StageReport:
    n_weaks: int
    false_positive_rate: float
    detection_rate: float
    n_positives: int
    n_negatives: int
    met_target: bool


@dataclass
class CascadeTrainReport:
    stages: list[StageReport] = field(default_factory=list)
    overall_fpr: float = 1.0
    overall_detection_rate: float = 1.0
    negatives_exhausted: bool = False


def stage_threshold_for(scores: np.ndarray, d_min: float, start: float) -> float:
    """Largest threshold <= ``start`` keeping at least ``d_min`` of ``scores`` at or above it."""
    need = math.ceil(d_min * len(scores) - 1e-9)
    if need <= 0:
        return start
    kth = np.sort(scores)[::-1][need - 1]
    return float(min(start, kth))


def train_stage_from_values(pos_values, neg_values, targets: CascadeTrainTargets,
                            val_pos_values=None) -> tuple[Stage, StageReport]:
    """Boost one stage until its FPR on ``neg_values`` drops to ``f_max``.

    After each round the threshold starts at half the total vote and is lowered
    just enough for ``d_min`` of the validation positives to pass.
    """
    pos_values = np.asarray(pos_values)
    neg_values = np.asarray(neg_values)
    if len(pos_values) == 0 or len(neg_values) == 0:
        raise ValueError("stage training needs positives and negatives")
    if val_pos_values is None:
        val_pos_values = pos_values
    cache = FeatureCache(np.vstack([pos_values, neg_values]))
    labels = np.concatenate([np.ones(len(pos_values), int), -np.ones(len(neg_values), int)])
    weights = initial_weights(labels)

    weaks: list[WeakClassifier] = []
    stage = Stage([], 0.0)
    fpr = 1.0
    while len(weaks) < targets.max_weaks_per_stage:
        weak, weights = adaboost_round(cache, labels, weights)
        weaks.append(weak)
        stage = Stage(list(weaks), 0.0)
        half = 0.5 * sum(w.alpha for w in weaks)
        stage.threshold = stage_threshold_for(stage.scores(val_pos_values), targets.d_min, half)
        fpr = float(stage.passes(neg_values).mean())
        if fpr <= targets.f_max and len(weaks) >= targets.min_weaks_per_stage:
            break
    dr = float(stage.passes(val_pos_values).mean())
    report = StageReport(len(weaks), fpr, dr, len(pos_values), len(neg_values), fpr <= targets.f_max)
    if not report.met_target:
        log.warning("stage hit the %d-weak budget at FPR %.3f", targets.max_weaks_per_stage, fpr)
    return stage, report


def train_stage(positives, negatives, targets: CascadeTrainTargets, features,
                validation_positives=None) -> tuple[Stage, StageReport]:
    """Train a stage on base-size window stacks; weak indices refer to ``features``."""
    base = np.asarray(positives).shape[-1]
    pv = haar.window_features(positives, features, base)
    nv = haar.window_features(negatives, features, base)
    vv = None if validation_positives is None else haar.window_features(validation_positives, features, base)
    return train_stage_from_values(pv, nv, targets, vv)


def sample_features(features, max_features: int | None, seed: int = 0):
    """Deterministic subset of at most ``max_features``, kept in enumeration order."""
    if max_features is None or len(features) <= max_features:
        return list(features)
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(features), size=max_features, replace=False))
    return [features[i] for i in keep]


def train_cascade(positives, negatives, targets: CascadeTrainTargets, features=None,
                  max_features: int | None = 4000, seed: int = 0) -> tuple[Cascade, CascadeTrainReport]:
    """Train an attentional cascade with bootstrapped negatives.

    ``positives`` and ``negatives`` are stacks of base-size windows. Stage k sees
    only the samples that every earlier stage accepts. When ``features`` is not
    given, a seeded subset of ``max_features`` of the full enumeration is used.
    """
    positives = np.asarray(positives)
    negatives = np.asarray(negatives)
    if len(positives) == 0 or len(negatives) == 0:
        raise ValueError("cascade training needs positives and negatives")
    base = positives.shape[-1]
    if features is None:
        features = sample_features(haar.enumerate_features(base), max_features, seed)
    pv = haar.window_features(positives, features, base)
    nv = haar.window_features(negatives, features, base)

    stages: list[Stage] = []
    report = CascadeTrainReport()
    pos_alive = np.ones(len(pv), dtype=bool)
    neg_alive = np.ones(len(nv), dtype=bool)
    while len(stages) < targets.max_stages:
        if not neg_alive.any():
            report.negatives_exhausted = True
            break
        stage, srep = train_stage_from_values(pv[pos_alive], nv[neg_alive], targets)
        stages.append(stage)
        report.stages.append(srep)
        pos_alive &= stage.passes(pv)
        neg_alive &= stage.passes(nv)
        report.overall_fpr = float(neg_alive.mean())
        report.overall_detection_rate = float(pos_alive.mean())
        log.info("stage %d: %d weaks, stage FPR %.3f, overall FPR %.4f, DR %.4f",
                 len(stages), srep.n_weaks, srep.false_positive_rate,
                 report.overall_fpr, report.overall_detection_rate)
        if report.overall_fpr <= targets.f_overall:
            break
        if not pos_alive.any():
            break
    if not neg_alive.any():
        report.negatives_exhausted = True
    return Cascade(base, stages, list(features)).compact(), report


# ---------------------------------------------------------------------------
# evaluation on images


def classify_window(c: Cascade, ii: IntegralImage, ox: int, oy: int,
                    scale: float = 1.0) -> tuple[bool, int]:
    """Run the cascade on one window, stopping at the first failing stage."""
    size = c.base_window if scale == 1.0 else haar.round_half_up(c.base_window * scale)
    if ox < 0 or oy < 0 or ox + size > ii.width or oy + size > ii.height:
        raise IndexError(f"window ({ox}, {oy}, {size}) outside {ii.width}x{ii.height} image")
    inv = float(haar.window_inv_sigma(ii, ox, oy, size))
    for k, st in enumerate(c.stages):
        score = np.zeros(1)
        for wk in st.weaks:
            v = haar.eval_feature(c.features[wk.feature_index], ii, ox, oy, scale, inv, c.base_window)
            score = _accumulate(score, wk.alpha, wk.votes(v))
        if score[0] < st.threshold:
            return False, k
    return True, len(c.stages)


def stages_passed(c: Cascade, ii: IntegralImage, ox, oy, scale: float = 1.0) -> np.ndarray:
    """Vectorised short-circuit cascade over many windows of one scale.

    Returns, per window, how many stages it passed; a window is accepted when
    this equals ``len(c.stages)``.
    """
    ox = np.asarray(ox, dtype=np.intp)
    oy = np.asarray(oy, dtype=np.intp)
    size = c.base_window if scale == 1.0 else haar.round_half_up(c.base_window * scale)
    table = ii.table.astype(np.int64)
    inv = haar.window_inv_sigma(ii, ox, oy, size)
    passed = np.zeros(len(ox), dtype=np.intp)
    alive = np.arange(len(ox))
    scaled = {}
    for st in c.stages:
        if len(alive) == 0:
            break
        ax, ay, ainv = ox[alive], oy[alive], inv[alive]
        score = np.zeros(len(alive))
        for wk in st.weaks:
            if wk.feature_index not in scaled:
                sf = c.features[wk.feature_index].scaled(scale, size)
                scaled[wk.feature_index] = (sf.corners(), sf.area_ratio)
            (dy, dx, coef), ratio = scaled[wk.feature_index]
            raw = (table[ay[:, None] + dy, ax[:, None] + dx] * coef).sum(axis=1)
            v = raw * ainv * ratio
            score = _accumulate(score, wk.alpha, wk.votes(v))
        ok = score >= st.threshold
        alive = alive[ok]
        passed[alive] += 1
    return passed
