import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import gaussian_bundle
from fairthresh import objective as obj
from fairthresh.data import CELLS, GroupedLogits
from fairthresh.errors import ConfigError, EmptyCellError, EmptyGroupError
from fairthresh.objective import Constraint, ObjectiveSpec, RateSet

SEP = [(-1.0, 1.0), (-1.0, 1.0), (1.0, 1.0), (1.0, 1.0)]
ASYM = [(-1.2, 1.1), (-0.4, 1.6), (0.9, 0.8), (1.7, 1.3)]
KINDS = ["EOp", "PE", "EOd", "DP"]


def phi(z):
    return 0.5 * (1 + math.erf(z / math.sqrt(2)))


def test_rates_far_left():
    r = obj.rates(gaussian_bundle(SEP), (-1e6, -1e6))
    for a in (0, 1):
        assert r.tp[a] == pytest.approx(1, abs=1e-6)
        assert r.fp[a] == pytest.approx(1, abs=1e-6)


def test_rates_erf_oracle():
    r = obj.rates(gaussian_bundle(SEP), (0.0, 0.0))
    for a in (0, 1):
        assert r.tp[a] == pytest.approx(phi(1.0), abs=1e-12)
        assert r.fp[a] == pytest.approx(1 - phi(1.0), abs=1e-12)
        assert r.tp[a] == pytest.approx(0.84134, abs=1e-5)
        assert r.fp[a] == pytest.approx(0.15866, abs=1e-5)


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_complements_exact(t0, t1):
    r = obj.rates(gaussian_bundle(ASYM), (t0, t1))
    for a in (0, 1):
        assert r.tp[a] + r.fn[a] == 1.0
        assert r.fp[a] + r.tn[a] == 1.0


def test_perf_loss_cases():
    counts = dict(zip(CELLS, (5, 5, 5, 5)))
    assert obj.perf_loss(RateSet(tp=(1.0, 1.0), fp=(0.0, 0.0)), counts) == 0.0
    assert obj.perf_loss(RateSet(tp=(0.5, 0.5), fp=(0.5, 0.5)), counts) == pytest.approx(0.25)
    # n00, n01, n10, n11 = 2, 1, 1, 4; FP = (0.2, 0.1), FN = (0.3, 0.4)
    counts = dict(zip(CELLS, (2, 1, 1, 4)))
    r = RateSet(tp=(0.7, 0.6), fp=(0.2, 0.1))
    expected = (2 / 8 * 0.2 + 1 / 8 * 0.1 + 1 / 8 * 0.3 + 4 / 8 * 0.4) ** 2
    assert obj.perf_loss(r, counts) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.09)


def test_fair_loss_cases():
    assert obj.fair_loss("EOp", RateSet(tp=(0.6, 0.6), fp=(0.1, 0.3))) == 0.0
    r = RateSet(tp=(0.5, 0.6), fp=(0.1, 0.3))
    assert obj.fair_loss("EOd", r) == pytest.approx(0.05)
    counts = dict(zip(CELLS, (10, 10, 10, 10)))
    assert obj.fair_loss("DP", RateSet(tp=(0.8, 0.6), fp=(0.2, 0.4)), counts) == pytest.approx(0.0, abs=1e-30)


def test_dp_uses_group_size():
    counts = dict(zip(CELLS, (30, 10, 10, 50)))
    r = RateSet(tp=(0.9, 0.5), fp=(0.2, 0.1))
    sel0 = (0.9 * 10 + 0.2 * 30) / 40
    sel1 = (0.5 * 50 + 0.1 * 10) / 60
    assert obj.fair_loss("DP", r, counts) == pytest.approx((sel1 - sel0) ** 2, rel=1e-14)


def test_selection_rate_empty_group():
    with pytest.raises(EmptyGroupError):
        obj.selection_rate(RateSet((0.5, 0.5), (0.5, 0.5)), dict(zip(CELLS, (1, 0, 1, 0))), 1)


def test_total_loss_lambda_zero():
    b = gaussian_bundle(ASYM, (30, 70, 50, 20))
    theta = (0.3, -0.2)
    spec = ObjectiveSpec.parse("DP+EOd", 0.0)
    assert obj.total_loss(b, theta, spec) == obj.perf_loss(obj.rates(b, theta), b)


def test_symmetric_fairness_zero(symmetric_bundle):
    for kind in KINDS:
        breakdown = obj.loss_breakdown(symmetric_bundle, (0.4, 0.4), ObjectiveSpec.parse(kind, 3.0))
        assert breakdown["fair"][kind] == 0.0


def test_total_loss_recomputed_with_scipy():
    counts = (40, 60, 55, 45)
    b = gaussian_bundle(ASYM, counts)
    n = dict(zip(CELLS, counts))
    N = sum(counts)
    F = {c: (lambda t, p=p: stats.norm.cdf(t, *p)) for c, p in zip(CELLS, ASYM)}
    tp = [1 - F[(1, a)](0.0) for a in (0, 1)]
    fp = [1 - F[(0, a)](0.0) for a in (0, 1)]
    perf = sum(n[(0, a)] / N * fp[a] + n[(1, a)] / N * (1 - tp[a]) for a in (0, 1))
    expected = perf ** 2 + 1.0 * (tp[1] - tp[0]) ** 2
    assert obj.total_loss(b, (0.0, 0.0), ObjectiveSpec.parse("EOp", 1.0)) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(0, 100), st.floats(0, 100))
def test_loss_invariants(t0, t1, lam_a, lam_b):
    b = gaussian_bundle(ASYM, (30, 70, 50, 20))
    theta = (t0, t1)
    r = obj.rates(b, theta)
    assert obj.fair_loss("EOd", r) == obj.fair_loss("EOp", r) + obj.fair_loss("PE", r)
    lo, hi = sorted((lam_a, lam_b))
    for kind in KINDS:
        l_lo = obj.total_loss(b, theta, ObjectiveSpec.parse(kind, lo))
        l_hi = obj.total_loss(b, theta, ObjectiveSpec.parse(kind, hi))
        assert 0 <= l_lo <= l_hi


def test_rates_nonincreasing():
    b = gaussian_bundle(ASYM)
    grid = np.linspace(-6, 6, 500)
    r = obj.rates(b, (grid, grid))
    for a in (0, 1):
        assert np.all(np.diff(r.tp[a]) <= 0)
        assert np.all(np.diff(r.fp[a]) <= 0)


def test_perfect_eop_manifold():
    b = gaussian_bundle(ASYM)
    t1 = 0.7
    t0 = b.f(1, 0).inv_cdf(b.f(1, 1).cdf(t1))
    assert obj.fair_loss("EOp", obj.rates(b, (t0, t1))) < 1e-18
    assert obj.fair_loss("EOp", obj.rates(b, (t0 + 0.1, t1))) > 1e-6


@pytest.mark.parametrize("kind", KINDS)
def test_residual_gradients_fd(kind):
    b = gaussian_bundle(ASYM, (30, 70, 50, 20))
    spec = ObjectiveSpec.parse(kind, 2.0)
    theta = np.array([0.2, -0.3])
    perf, terms = obj.residuals(b, theta, spec)
    h = 1e-6
    for a in (0, 1):
        e = np.eye(2)[a] * h
        p_plus, t_plus = obj.residuals(b, theta + e, spec)
        p_minus, t_minus = obj.residuals(b, theta - e, spec)
        assert getattr(perf, f"d_theta{a}") == pytest.approx((p_plus.value - p_minus.value) / (2 * h), rel=1e-6)
        for t, tp_, tm in zip(terms, t_plus, t_minus):
            assert getattr(t, f"d_theta{a}") == pytest.approx((tp_.value - tm.value) / (2 * h), rel=1e-6)
    assert sum(t.lam * t.value ** 2 for t in terms) == pytest.approx(
        obj.total_loss(b, theta, spec) - perf.value ** 2, rel=1e-12)


def test_spec_parsing():
    spec = ObjectiveSpec.parse("dp+EOD", 5)
    assert [c.kind for c in spec.constraints] == ["DP", "EOd"]
    assert spec.label == "DP+EOd"
    doc = {"constraints": [{"kind": "EOd", "lambda": 1000.0}]}
    spec = ObjectiveSpec.from_json(json.dumps(doc))
    assert spec.to_dict() == doc
    assert ObjectiveSpec().label == "accuracy"


@pytest.mark.parametrize("bad", [("XX", 1.0), ("EOp", -1.0), ("EOp", float("inf")), ("EOp", float("nan"))])
def test_bad_constraints(bad):
    with pytest.raises(ConfigError):
        Constraint(*bad)


def test_bad_spec_json():
    with pytest.raises(ConfigError):
        ObjectiveSpec.from_json("{not json")
    with pytest.raises(ConfigError):
        ObjectiveSpec.from_json('{"items": []}')


def test_fit_bundle_empty_cell():
    data = GroupedLogits(np.arange(30.0), np.array([0, 1] * 15), np.zeros(30, dtype=int))
    with pytest.raises(EmptyCellError) as info:
        obj.fit_bundle(data)
    assert info.value.cell == (0, 1)
    assert "y=0, a=1" in str(info.value)


def test_bundle_round_trip():
    b = gaussian_bundle(ASYM, (30, 70, 50, 20))
    back = obj.DensityBundle.from_dict(json.loads(json.dumps(b.to_dict())))
    assert back.counts == b.counts
    assert obj.total_loss(back, (0.1, 0.2), ObjectiveSpec.parse("EOd", 3)) == \
        obj.total_loss(b, (0.1, 0.2), ObjectiveSpec.parse("EOd", 3))


def test_bundle_requires_positive_counts():
    with pytest.raises(EmptyCellError):
        gaussian_bundle(ASYM, (0, 1, 1, 1))
