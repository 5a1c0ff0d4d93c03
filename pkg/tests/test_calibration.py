import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from synthcal.calibration import (CalibrationConfig, CalibrationRecord, calibrate, miscoverage_curve,
                                  miscoverage_general, miscoverage_simple, prefix_statistics,
                                  real_confidence_set, select_k, synthetic_set)
from synthcal.errors import DomainError
from synthcal.intervals import IntervalConfig, box_from_coordinates, clt_interval, contains_set
from synthcal.simulator import make_preset, make_source, simulate_dataset
from synthcal.stats import RngStream, sample_stats

Z_75 = 0.6744897501960817432022270145413071853869


def rec(qid, real, syn, dims=1):
    return CalibrationRecord(qid, np.asarray(real, float), np.asarray(syn, float), dims)


def binary_real(mean, n=100):
    ones = int(round(mean * n))
    return [1.0] * ones + [0.0] * (n - ones)


def onehot(codes, d):
    out = np.zeros((len(codes), d))
    out[np.arange(len(codes)), np.asarray(codes) - 1] = 1
    return out


def brute_select(curve, t):
    best = 0
    for k in range(len(curve)):
        if all(curve[i] <= t for i in range(k + 1)):
            best = k
    return best


class TestSelectK:
    def test_examples(self):
        assert select_k([0, 0.00, 0.03, 0.01, 0.06, 0.02], 0.05) == 3
        assert select_k([0.0] * 11, 0.05) == 10
        assert select_k([0, 0.2, 0, 0], 0.05) == 0

    def test_tie_passes(self):
        assert select_k([0, 0.05, 0.05], 0.05) == 2

    def test_contract(self):
        with pytest.raises(DomainError):
            select_k([0.1, 0.0], 0.05)

    @given(st.lists(st.sampled_from([0.0, 0.01, 0.025, 0.05, 0.07, 0.2]), min_size=0, max_size=40),
           st.sampled_from([0.025, 0.05, 0.1]))
    def test_matches_brute_force(self, tail, t):
        curve = [0.0] + tail
        assert select_k(curve, t) == brute_select(curve, t)


class TestSimpleMetric:
    cfg = CalibrationConfig(alpha=0.1, budget=5, dilation=2.0, constructor="clt")

    def test_k0_is_zero(self):
        r = [rec("a", [0.0, 1.0], [1, 1, 1, 1, 1])]
        assert miscoverage_simple(r, 0, self.cfg) == 0.0

    def test_one_in_one_out(self):
        r = [rec("a", [1.0, 1.0], [1, 1, 1, 1, 1]), rec("b", [0.0, 1.0], [1, 1, 1, 1, 1])]
        assert miscoverage_simple(r, 3, self.cfg) == 0.5

    def test_three_record_fixture(self):
        recs = [rec("a", binary_real(0.5), [1, 0, 1, 0, 1]),
                rec("b", binary_real(0.9), [1, 1, 1, 1, 1]),
                rec("c", binary_real(0.4), [0, 0, 1, 0, 0])]
        icfg = IntervalConfig(alpha=0.1, dilation=2.0)
        # independent per-record evaluation with the scalar constructor
        misses = []
        for r in recs:
            s = clt_interval(sample_stats(r.synthetic_responses[:5]), icfg)
            misses.append(not s.lower[0] <= r.real_responses.mean() <= s.upper[0])
        assert misses == [False, True, False]
        assert miscoverage_simple(recs, 5, self.cfg) == pytest.approx(1 / 3)

    def test_rejects_vectors(self):
        r = [rec("a", onehot([1, 2], 3), onehot([1, 2, 3, 1, 2], 3), dims=3)]
        with pytest.raises(DomainError):
            calibrate(r, self.cfg)

    def test_rejects_short_stream(self):
        with pytest.raises(DomainError):
            calibrate([rec("a", [1.0], [1, 1])], self.cfg)


class TestGeneralMetric:
    def test_real_set_halfwidth(self):
        r = rec("a", binary_real(0.5, 400), [1])
        s = real_confidence_set(r, 0.5)
        assert s.halfwidths[0] == pytest.approx(Z_75 * 0.025, abs=1e-12)
        assert round(s.halfwidths[0], 7) == 0.0168622

    def test_real_set_point_and_growth(self):
        assert real_confidence_set(rec("a", [1.0] * 10, [1]), 0.5).halfwidths[0] == 0.0
        r = rec("a", binary_real(0.5, 400), [1])
        widths = [real_confidence_set(r, g).halfwidths[0] for g in (0.5, 0.9, 0.99, 0.9999)]
        assert widths == sorted(widths) and len(set(widths)) == 4

    def test_k0_zero_and_counting(self):
        cfg = CalibrationConfig(alpha=0.2, budget=4, gamma=0.5, dilation=2.0, method="general")
        recs = [rec(str(i), binary_real(0.5, 400), [1, 0, 1, 0]) for i in range(3)]
        recs.append(rec("x", binary_real(0.5, 400), [1, 1, 1, 1]))
        assert miscoverage_general(recs, 0, cfg) == 0.0
        assert miscoverage_general(recs, 4, cfg) == 0.25

    def test_proportion_box_fixture(self):
        d = 5
        real = onehot([1, 2, 3, 4, 5] * 80, d)
        spread = rec("spread", real, onehot([1, 2, 3, 4, 5] * 10, d), dims=d)
        stuck = rec("stuck", real, onehot([1] * 50, d), dims=d)
        cfg = CalibrationConfig(alpha=0.1, budget=50, gamma=0.5, dilation=8.0, method="general",
                                constructor="box")
        # hand check coordinate-wise containment
        icfg = IntervalConfig(alpha=0.1, dilation=8.0)
        for r, expect in ((spread, True), (stuck, False)):
            syn = box_from_coordinates([sample_stats(r.synthetic_responses[:, i]) for i in range(d)],
                                       icfg, 0.9)
            assert contains_set(syn, real_confidence_set(r, 0.5)) is expect
        assert miscoverage_general([spread, stuck], 50, cfg) == 0.5


class TestCalibrate:
    def test_all_zero_curve(self):
        recs = [rec(str(i), [1.0] * 20, [1.0] * 30) for i in range(4)]
        res = calibrate(recs, CalibrationConfig(alpha=0.1, budget=30, dilation=3.0))
        assert res.k_hat == 30 and res.kappa_hat == 10.0
        assert np.all(res.curve == 0)

    def test_thresholds(self):
        recs = [rec("a", [1.0] * 20, [1.0] * 3)]
        assert calibrate(recs, CalibrationConfig(alpha=0.2, budget=3, gamma=0.5, method="general")).threshold == pytest.approx(0.1)
        assert calibrate(recs, CalibrationConfig(alpha=0.2, budget=3)).threshold == pytest.approx(0.1)
        assert calibrate(recs, CalibrationConfig(alpha=0.1, budget=3)).threshold == pytest.approx(0.05)

    def test_zero_k_hat_warns(self):
        recs = [rec("a", [0.0] * 5 + [1.0] * 5, [1.0] * 3)]
        with pytest.warns(UserWarning, match="k_hat = 0"):
            calibrate(recs, CalibrationConfig(alpha=0.1, budget=3))

    def test_min_k_warm_up(self):
        recs = [rec("a", [0.0] * 5 + [1.0] * 5, [1.0] * 10)]
        res = calibrate(recs, CalibrationConfig(alpha=0.1, budget=10, min_k=4))
        assert res.curve[:4].tolist() == [0, 0, 0, 0] and res.curve[4] == 1.0
        assert res.k_hat == 3

    def test_synthetic_set_universe(self):
        r = rec("a", [1.0], [1, 0])
        cfg = CalibrationConfig(alpha=0.1, budget=2)
        assert synthetic_set(r, 0, cfg).lower == (0.0,)
        assert synthetic_set(r, 0, replace(cfg, method="general")).is_universe


def _sim_records(seed, m=60, K=40, kappa=5):
    st_ = RngStream(seed)
    pop = make_preset("beta-logistic")
    src = make_source("beta-logistic", pop, kappa, st_.substream(0).generator())
    return simulate_dataset(pop, src, m, 50, K + 10, st_.substream(1).generator()).records


@given(st.integers(0, 10_000), st.sampled_from(["clt", "kl", "bernstein"]),
       st.sampled_from(["simple", "general"]))
def test_calibration_properties(seed, constructor, method):
    recs = _sim_records(seed)
    cfg = CalibrationConfig(alpha=0.2, budget=40, dilation=4.0, constructor=constructor,
                            method=method, min_k=3)
    res = calibrate(recs, cfg)
    c, k = res.curve, res.k_hat
    assert c[0] == 0 and np.all((c >= 0) & (c <= 1))
    assert np.all(c[:k + 1] <= res.threshold)
    assert k == cfg.budget or c[k + 1] > res.threshold
    # permutation invariance
    perm = np.random.default_rng(seed).permutation(len(recs))
    res2 = calibrate([recs[i] for i in perm], cfg)
    assert res2.k_hat == k and np.array_equal(res2.curve, c)
    # only the first K synthetic responses matter
    trunc = [rec(r.question_id, r.real_responses, r.synthetic_responses[:40]) for r in recs]
    assert np.array_equal(calibrate(trunc, cfg).curve, c)
    # determinism
    assert calibrate(recs, cfg).curve.tobytes() == c.tobytes()


@given(st.lists(st.sampled_from([0.0, 1.0]), min_size=1, max_size=30))
def test_prefix_statistics_match_sample_stats(values):
    mean, std = prefix_statistics(values, len(values), (0.0, 1.0))
    for k in range(1, len(values) + 1):
        s = sample_stats(values[:k], (0.0, 1.0))
        assert mean[k - 1, 0] == pytest.approx(s.mean, abs=1e-12)
        assert std[k - 1, 0] == pytest.approx(s.std, abs=1e-12)


@given(st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=30))
def test_prefix_statistics_nonbinary(values):
    mean, std = prefix_statistics(values, len(values), (-1.0, 1.0))
    for k in range(1, len(values) + 1):
        s = sample_stats(values[:k], (-1.0, 1.0))
        assert mean[k - 1, 0] == pytest.approx(s.mean, abs=1e-9)
        assert std[k - 1, 0] == pytest.approx(s.std, abs=1e-6)


def test_curve_uses_constructor_widths():
    # wider constructors never miss more often than narrower ones at the same k
    recs = _sim_records(3, m=100, K=60)
    base = CalibrationConfig(alpha=0.1, budget=60, dilation=2.0)
    g1 = miscoverage_curve(recs, base)
    g2 = miscoverage_curve(recs, replace(base, dilation=8.0))
    assert np.all(g2 <= g1)
    assert math.isclose(float(g1[0]), 0.0)
