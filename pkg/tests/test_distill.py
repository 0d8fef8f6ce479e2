import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _util import brute_chamfer, brute_in_box, ref_awid, ref_napc, ref_prd_cls, ref_prd_reg
from rainsim.errors import ArgumentError, LabelError
from rainsim.distill import (
    DEFAULT_WEIGHTS,
    InstancePair,
    LossWeights,
    PredictionSet,
    awid_loss,
    chamfer_distance,
    combine_prd,
    density_similarity,
    instance_similarity,
    loss_report,
    napc_loss,
    noise_ratio,
    points_in_box,
    prd_cls_loss,
    prd_loss,
    prd_reg_loss,
    shape_similarity,
    smooth_l1,
    total_loss,
    weighted_instance_loss,
)
from rainsim.pointcloud import PointCloud

TANH1 = float(mpmath.tanh(1))
ONE_MINUS_TANH2 = float(1 - mpmath.tanh(2))


def preds(cs=(), cr=(), bs=(), br=(), dets=()):
    return PredictionSet(list(cs), list(cr), np.reshape(bs, (-1, 7)), np.reshape(br, (-1, 7)), list(dets))


def test_weights_defaults():
    w = LossWeights()
    assert (w.lambda1, w.lambda2, w.threshold) == (15, 0.2, 0.5)
    assert (w.eta1, w.eta2, w.eta3, w.epsilon) == (2.0, 0.5, 2.0, 1e-6)


def test_weights_reject_bad_epsilon():
    with pytest.raises(ArgumentError):
        LossWeights(epsilon=0.0)


# -- Similarities ----------------------------------------------------------


def test_density_examples():
    assert abs(density_similarity(100, 100) - 1.0) < 1e-12
    assert density_similarity(0, 50) == 0.0
    assert density_similarity(10, 20) == pytest.approx(float(mpmath.tanh(mpmath.mpf(10) / (10 + mpmath.mpf("1e-6")))), rel=1e-15)
    assert abs(density_similarity(10, 20) - 0.761594) < 1e-6
    assert abs(TANH1 - 0.761594) < 1e-6


def test_chamfer_examples():
    assert chamfer_distance([[0, 0, 0]], [[1, 0, 0]]) == 2.0
    assert chamfer_distance([[0, 0, 0], [2, 0, 0]], [[1, 0, 0]]) == 2.0
    with pytest.raises(ArgumentError):
        chamfer_distance([], [[1, 0, 0]])


def test_shape_examples():
    a = np.random.default_rng(0).normal(size=(30, 3))
    assert shape_similarity(a, a) == 1.0
    assert shape_similarity([[0, 0, 0]], [[1, 0, 0]]) == pytest.approx(ONE_MINUS_TANH2, rel=1e-12)
    far = shape_similarity([[0, 0, 0]], [[1e6, 0, 0]])
    assert 0.0 < far < 1e-300


def test_instance_similarity_examples():
    a = np.random.default_rng(1).normal(size=(25, 3))
    assert instance_similarity(InstancePair(0, a, a, [0.0], [0.0])) == pytest.approx(1.0, abs=1e-12)
    assert instance_similarity(InstancePair(0, a, np.zeros((0, 3)), [0.0], [0.0])) == 0.0
    # 10 sunny points at the origin, 20 rainy at (1,0,0): d_CD = 2
    s = instance_similarity(InstancePair(0, np.zeros((10, 3)), np.tile([1.0, 0, 0], (20, 1)), [0.0], [0.0]))
    assert s == pytest.approx(math.tanh(10 / (10 + 1e-6)) * ONE_MINUS_TANH2, rel=1e-12)
    assert abs(s - 0.027397) < 1e-6


def test_feature_dim_mismatch():
    with pytest.raises(ArgumentError):
        InstancePair(0, np.zeros((1, 3)), np.zeros((1, 3)), [1.0, 2.0], [1.0])


counts = st.integers(0, 10**6)


@settings(max_examples=300, deadline=None)
@given(counts, counts)
def test_density_bounds_and_symmetry(a, b):
    v = density_similarity(a, b)
    assert 0.0 <= v < 1.0
    assert v == density_similarity(b, a)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000))
def test_density_monotone_in_min_for_fixed_gap(m1, m2, gap):
    lo, hi = sorted((m1, m2))
    assert density_similarity(lo, lo + gap) <= density_similarity(hi, hi + gap)


pts = arrays(np.float64, st.tuples(st.integers(1, 30), st.just(3)), elements=st.floats(-20, 20))


@settings(max_examples=100, deadline=None)
@given(pts, pts)
def test_chamfer_symmetric_and_matches_brute(a, b):
    d = chamfer_distance(a, b)
    assert d == chamfer_distance(b, a)
    assert d == pytest.approx(brute_chamfer(a, b), abs=1e-9)
    s = shape_similarity(a, b)
    assert 0.0 < s <= 1.0


# -- Smooth L1 and AWID ----------------------------------------------------


def test_smooth_l1_examples():
    assert smooth_l1([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert smooth_l1([0.5], [0.0]) == 0.125
    assert smooth_l1([2.0], [0.0]) == 1.5
    with pytest.raises(ArgumentError):
        smooth_l1([1.0, 2.0], [1.0])


def test_awid_examples():
    a = np.random.default_rng(2).normal(size=(10, 3))
    assert awid_loss([InstancePair(0, a, a + 0.1, [1.0, 2.0], [1.0, 2.0])]) == 0.0
    assert weighted_instance_loss([0.5], [[0.5]], [[0.0]]) == 0.0625
    assert awid_loss([]) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_awid_matches_reference_and_is_monotone(seed, n):
    rng = np.random.default_rng(seed)
    pairs = [
        InstancePair(k, rng.normal(size=(rng.integers(0, 20), 3)), rng.normal(size=(rng.integers(0, 20), 3)),
                     rng.normal(size=5), rng.normal(size=5) * 2)
        for k in range(n)
    ]
    loss = awid_loss(pairs)
    assert loss >= 0
    assert loss == pytest.approx(ref_awid(pairs), abs=1e-9)
    sims = [instance_similarity(p) for p in pairs]
    fs, fr = [p.feat_sunny for p in pairs], [p.feat_rainy for p in pairs]
    zeroed = list(sims)
    zeroed[int(rng.integers(n))] = 0.0
    assert weighted_instance_loss(zeroed, fs, fr) <= weighted_instance_loss(sims, fs, fr)


# -- Response distillation -------------------------------------------------


def test_prd_cls_examples():
    assert prd_cls_loss(preds([0.3, -1.0], [0.3, -1.0])) == 0.0
    assert prd_cls_loss(preds([0.0], [1.0])) == 1.0
    assert prd_cls_loss(preds([-2.0], [7.0])) == 0.0
    assert prd_cls_loss(preds()) == 0.0


def test_prd_cls_divides_by_all_positions():
    assert prd_cls_loss(preds([0.0, -5.0], [1.0, 3.0])) == 0.5


def test_prd_reg_examples():
    b = np.array([[1, 2, 0, 4, 1.8, 1.5, 0.3]])
    assert prd_reg_loss(preds(bs=b, br=b)) == 0.0
    t = b.copy()
    s = b.copy()
    t[0, 6], s[0, 6] = math.pi - 0.01, -math.pi + 0.01
    assert prd_reg_loss(preds(bs=t, br=s)) == pytest.approx(0.5 * 0.02**2 / 7, rel=1e-9)
    s = b.copy()
    s[0, 0] += 0.5
    assert prd_reg_loss(preds(bs=b, br=s)) == pytest.approx(0.125 / 7, rel=1e-14)


def test_prd_reg_mismatch():
    with pytest.raises(ArgumentError):
        preds(bs=np.zeros((2, 7)), br=np.zeros((1, 7)))


def test_prd_combination_constants():
    assert combine_prd(0.0, 0.0) == 0.0
    assert combine_prd(1.0, 0.0) == 15.0
    assert combine_prd(0.0, 1.0) == 0.2
    assert prd_loss(preds([0.0], [1.0])) == 15.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 30))
def test_prd_matches_reference(seed, n):
    rng = np.random.default_rng(seed)
    cs, cr = rng.normal(size=n) * 3, rng.normal(size=n) * 3
    bs, br = rng.normal(size=(n, 7)) * 2, rng.normal(size=(n, 7)) * 2
    bs[:, 6] = rng.uniform(-4, 4, n)
    p = preds(cs, cr, bs, br)
    assert prd_cls_loss(p) == pytest.approx(ref_prd_cls(cs, cr), abs=1e-9)
    assert prd_reg_loss(p) == pytest.approx(ref_prd_reg(bs, br), abs=1e-9)
    same = preds(cs, cs, bs, bs)
    assert prd_loss(same) == 0.0


# -- Noise-aware correction ------------------------------------------------


def labelled(xyz, labels):
    xyz = np.asarray(xyz, float).reshape(-1, 3)
    return PointCloud(xyz, np.full(len(xyz), 0.5), np.asarray(labels, np.int8))


def test_points_in_box_examples():
    unit = [0, 0, 0, 1, 1, 1, 0]
    assert points_in_box(unit, PointCloud.empty()) == (0, 0)
    assert points_in_box(unit, labelled([[0.5, 0, 0]], [0])) == (0, 1)
    box = [0, 0, 0, 4, 2, 2, 0]
    xyz = [[0, 0, 0], [1, 0.5, 0.5], [-1.5, -0.9, 0], [1.9, 0, 0.9], [0.3, 0.2, -0.4],
           [5, 0, 0], [0, 3, 0], [0, 0, 2], [-3, -3, -3]]
    assert points_in_box(box, labelled(xyz, [1, 1, 1, 0, 0, 1, 0, 1, 0])) == (3, 2)


def test_points_in_box_unlabelled():
    with pytest.raises(LabelError):
        points_in_box([0, 0, 0, 1, 1, 1, 0], PointCloud(np.zeros((1, 3)), np.ones(1)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_points_in_box_matches_brute(seed):
    rng = np.random.default_rng(seed)
    box = np.r_[rng.normal(size=3), rng.uniform(0.5, 4, 3), rng.uniform(-math.pi, math.pi)]
    xyz = box[:3] + rng.uniform(-3, 3, (200, 3))
    lab = rng.integers(0, 2, 200)
    inside = brute_in_box(box, xyz)
    assert points_in_box(box, labelled(xyz, lab)) == (int((inside & (lab == 1)).sum()), int((inside & (lab == 0)).sum()))


def test_noise_ratio_examples():
    assert noise_ratio(0, 10) == 0.0
    assert noise_ratio(10, 0) == pytest.approx(1e7)
    assert noise_ratio(5, 5) == pytest.approx(0.9999998, abs=1e-9)


def test_napc_examples():
    box = [0, 0, 0, 2, 2, 2, 0]
    clear = labelled([[0, 0, 0], [0.5, 0.5, 0]], [0, 0])
    assert napc_loss([(box, 0.9)], clear) == 0.0
    noisy = labelled([[0, 0, 0], [0.5, 0.5, 0]], [1, 1])
    assert napc_loss([(box, 0.8)], noisy) == pytest.approx(0.8, abs=1e-12)
    # box A: 10 noise, 10 clear -> ratio ~1, tanh ~0.761594; box B: clear only
    xyz = np.r_[np.tile([0.0, 0, 0], (20, 1)), np.tile([10.0, 0, 0], (3, 1))]
    cloud = labelled(xyz, [1] * 10 + [0] * 10 + [0] * 3)
    v = napc_loss([(box, 0.5), ([10, 0, 0, 2, 2, 2, 0], 0.9)], cloud)
    assert v == pytest.approx(0.5 * math.tanh(10 / (10 + 1e-6)) / 2, rel=1e-12)
    assert round(v, 6) == 0.190399
    assert napc_loss([], cloud) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_napc_matches_reference(seed):
    rng = np.random.default_rng(seed)
    xyz = rng.uniform(-5, 5, (150, 3))
    lab = rng.integers(0, 2, 150)
    dets = [(np.r_[rng.uniform(-3, 3, 3), rng.uniform(0.5, 4, 3), rng.uniform(-3, 3)], rng.uniform()) for _ in range(4)]
    assert napc_loss(dets, labelled(xyz, lab)) == pytest.approx(ref_napc(dets, xyz, lab), abs=1e-9)


# -- Total -----------------------------------------------------------------


def test_total_examples():
    assert total_loss(0, 0, 0, 0, 0) == 0.0
    assert total_loss(0, 0, 1, 0, 0) == 2.0
    assert total_loss(1, 1, 1, 1, 1) == 6.5
    with pytest.raises(ArgumentError):
        total_loss(0, float("nan"), 0, 0, 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=5), st.integers(0, 4), st.floats(-10, 10))
def test_total_linear(comp, k, delta):
    coef = (1.0, 1.0, DEFAULT_WEIGHTS.eta1, DEFAULT_WEIGHTS.eta2, DEFAULT_WEIGHTS.eta3)
    bumped = list(comp)
    bumped[k] += delta
    assert total_loss(*bumped) - total_loss(*comp) == pytest.approx(coef[k] * delta, abs=1e-9)


def test_loss_report_keys():
    a = np.zeros((3, 3))
    rep = loss_report([InstancePair(0, a, a, [1.0], [2.0])], preds([0.0], [1.0], dets=[([0, 0, 0, 1, 1, 1, 0], 0.5)]),
                      PointCloud.empty())
    assert set(rep) == {"ins", "rsp_cls", "rsp_reg", "rsp", "napc", "total"}
    assert rep["rsp"] == 15.0
    assert rep["total"] == pytest.approx(2.0 * rep["ins"] + 0.5 * 15.0)
