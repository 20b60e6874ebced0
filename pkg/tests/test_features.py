import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from facekit.features import (
    FeatureConfig,
    Histogram,
    binary_histogram,
    build_feature_vector,
    gray_histogram,
    histograms,
    split_halves,
)
from facekit.imgio import BinaryImage, GrayImage, binarize, otsu_threshold

images = arrays(np.uint8, st.tuples(st.integers(2, 17), st.integers(2, 17)))


@settings(max_examples=80, deadline=None)
@given(images, st.sampled_from(["vertical", "horizontal"]))
def test_whole_is_sum_of_halves(px, axis):
    img = GrayImage(px)
    a, b = split_halves(img, axis)
    assert gray_histogram(img) == gray_histogram(a) + gray_histogram(b)
    t = otsu_threshold(img)
    assert binary_histogram(binarize(img, t)) == binary_histogram(binarize(a, t)) + binary_histogram(binarize(b, t))


@settings(max_examples=40, deadline=None)
@given(images)
def test_histogram_counts_match_bincount_oracle(px):
    h = gray_histogram(GrayImage(px))
    oracle = [int((px == v).sum()) for v in range(256)]
    assert h.bins.tolist() == oracle
    assert h.total == px.size


def test_split_halves_odd_sizes():
    img = GrayImage(np.arange(15, dtype=np.uint8).reshape(3, 5))
    left, right = split_halves(img, "vertical")
    assert left.width == 3 and right.width == 2
    top, bottom = split_halves(img, "horizontal")
    assert top.height == 2 and bottom.height == 1
    b = BinaryImage(np.ones((2, 3), np.uint8))
    assert isinstance(split_halves(b)[0], BinaryImage)
    with pytest.raises(ValueError):
        split_halves(GrayImage(np.zeros((3, 1), np.uint8)), "vertical")
    with pytest.raises(ValueError):
        split_halves(img, "diagonal")


def test_layout_and_length():
    assert FeatureConfig().layout() == ["whole-gray", "left-gray", "right-gray"]
    assert FeatureConfig().length() == 768
    cfg = FeatureConfig(use_binary=True, axis="horizontal")
    assert cfg.layout() == ["whole-gray", "top-gray", "bottom-gray",
                            "whole-binary", "top-binary", "bottom-binary"]
    assert cfg.length() == 3 * 256 + 3 * 2
    assert FeatureConfig(use_halves=False).length() == 256
    with pytest.raises(ValueError):
        FeatureConfig(use_whole=False, use_halves=False)
    assert FeatureConfig.from_dict(cfg.to_dict()) == cfg


@settings(max_examples=40, deadline=None)
@given(images, st.booleans(), st.sampled_from(["vertical", "horizontal"]))
def test_feature_blocks_sum_to_one(px, binary, axis):
    cfg = FeatureConfig(use_binary=binary, axis=axis)
    fv = build_feature_vector(GrayImage(px), cfg)
    assert len(fv.values) == cfg.length()
    assert fv.layout == tuple(cfg.layout())
    pos = 0
    for name in fv.layout:
        n = 2 if name.endswith("binary") else 256
        assert abs(fv.values[pos:pos + n].sum() - 1.0) <= 1e-9
        pos += n


def test_binary_uses_one_threshold_for_all_regions():
    px = np.array([[10, 10, 200, 200], [10, 90, 200, 200]], dtype=np.uint8)
    hists = histograms(GrayImage(px), FeatureConfig(use_binary=True))
    t = otsu_threshold(GrayImage(px))
    assert hists["left-binary"] == binary_histogram(binarize(GrayImage(px[:, :2]), t))
    fixed = histograms(GrayImage(px), FeatureConfig(use_binary=True, threshold=50))
    assert fixed["left-binary"].bins.tolist() == [3, 1]


def test_histogram_csv():
    h = Histogram(np.array([1, 3]))
    assert h.to_csv() == "bin,count,frequency\n0,1,0.25\n1,3,0.75\n"
    rows = gray_histogram(GrayImage(np.zeros((2, 2), np.uint8))).to_csv().splitlines()
    assert len(rows) == 257 and rows[1] == "0,4,1.0"
