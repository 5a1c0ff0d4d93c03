import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from synthcal.errors import DegenerateSyntheticError, DomainError
from synthcal.stats import (RngStream, SampleStats, chi2_bernoulli, empirical_quantile,
                            kl_bernoulli, kl_bernoulli_array, normal_quantile, sample_stats)

# Reference values from 40-digit mpmath evaluations.
Z_975 = 1.959963984540054235524594430520551527956
KL_06_04 = 0.08109302162163285838933467494037608746981
KL_00_03 = 0.356674943938732378912638711241184477964

probs = st.floats(min_value=0.0, max_value=1.0)
open_probs = st.floats(min_value=1e-9, max_value=1 - 1e-9)


class TestNormalQuantile:
    def test_median_is_zero(self):
        assert normal_quantile(0.5) == 0.0

    def test_upper_975(self):
        assert normal_quantile(0.975) == pytest.approx(Z_975, abs=1e-12)
        assert round(normal_quantile(0.975), 6) == 1.959964

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            normal_quantile(p)

    @given(st.floats(min_value=1e-300, max_value=1 - 1e-16))
    def test_matches_high_precision_oracle(self, p):
        with mpmath.workdps(60):
            ref = mpmath.findroot(lambda x: mpmath.ncdf(x) - mpmath.mpf(p), normal_quantile(p))
        assert abs(normal_quantile(p) - float(ref)) <= 1e-8

    @given(st.floats(min_value=1e-12, max_value=0.5))
    def test_antisymmetric(self, p):
        assume(1 - (1 - p) == p)  # only pairs (p, 1 - p) that are exactly representable
        assert abs(normal_quantile(p) + normal_quantile(1 - p)) <= 1e-8


class TestKL:
    def test_identical(self):
        assert kl_bernoulli(0.5, 0.5) == 0.0

    def test_examples(self):
        assert kl_bernoulli(0.6, 0.4) == pytest.approx(KL_06_04, abs=1e-14)
        assert round(kl_bernoulli(0.6, 0.4), 7) == 0.0810930
        assert kl_bernoulli(0.0, 0.3) == pytest.approx(KL_00_03, abs=1e-14)

    def test_infinite_at_mismatched_boundary(self):
        assert kl_bernoulli(0.3, 0.0) == math.inf
        assert kl_bernoulli(0.3, 1.0) == math.inf
        assert kl_bernoulli(1.0, 1.0) == 0.0

    def test_pinsker_bulk(self):
        rng = np.random.default_rng(11)
        q = rng.random(10_000)
        p = rng.uniform(1e-6, 1 - 1e-6, 10_000)
        assert np.all(kl_bernoulli_array(q, p) >= 2 * (q - p) ** 2 - 1e-15)

    @given(probs, open_probs)
    def test_pinsker(self, q, p):
        assert kl_bernoulli(q, p) >= 2 * (q - p) ** 2 - 1e-15

    @given(probs, open_probs)
    def test_zero_iff_equal(self, q, p):
        if abs(q - p) > 1e-6:
            assert kl_bernoulli(q, p) > 0
        assert kl_bernoulli(p, p) <= 1e-12

    @given(probs, open_probs)
    def test_array_matches_scalar(self, q, p):
        assert float(kl_bernoulli_array(q, p)) == pytest.approx(kl_bernoulli(q, p), rel=1e-12, abs=1e-15)


class TestChi2:
    def test_example(self):
        assert chi2_bernoulli(0.4, 0.6) == pytest.approx(0.04 / 0.24, abs=1e-15)
        assert round(chi2_bernoulli(0.4, 0.6), 7) == 0.1666667

    @given(open_probs)
    def test_equal_means(self, p):
        assert chi2_bernoulli(p, p) == 0.0

    def test_degenerate(self):
        with pytest.raises(DegenerateSyntheticError):
            chi2_bernoulli(0.5, 1.0)


class TestQuantile:
    def test_examples(self):
        assert empirical_quantile([0.1, 0.2, 0.3, 0.4], 0.5) == 0.2
        assert empirical_quantile([0.1, 0.2, 0.3, 0.4], 0.9) == 0.4
        assert empirical_quantile([7.0], 0.99) == 7.0

    def test_exact_grid_levels(self):
        x = np.arange(10) / 10
        assert empirical_quantile(x, 0.7) == 0.6

    def test_empty(self):
        with pytest.raises(DomainError):
            empirical_quantile([], 0.5)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50),
           st.floats(0.001, 0.999), st.floats(0.001, 0.999))
    def test_monotone_and_observed(self, xs, a, b):
        lo, hi = sorted((a, b))
        qa, qb = empirical_quantile(xs, lo), empirical_quantile(xs, hi)
        assert qa <= qb
        assert qa in xs
        # inf definition: F(q) >= level and no smaller sample qualifies
        arr = np.array(xs)
        assert np.mean(arr <= qa) >= lo
        smaller = arr[arr < qa]
        assert smaller.size == 0 or np.mean(arr <= smaller.max()) < lo


class TestSampleStats:
    def test_binary(self):
        s = sample_stats([1, 0, 1, 1], (0, 1))
        assert s.count == 4 and s.mean == 0.75
        assert s.std == pytest.approx(math.sqrt(0.1875), abs=1e-15)
        assert round(s.std, 7) == 0.4330127

    def test_constant(self):
        s = sample_stats([0.3, 0.3, 0.3], (0, 1))
        assert s.mean == pytest.approx(0.3) and s.std == 0.0

    def test_nonbinary_uses_unbiased(self):
        s = sample_stats([-1, 0, 1], (-1, 1))
        assert s.std == pytest.approx(1.0)

    def test_errors(self):
        with pytest.raises(DomainError):
            sample_stats([], (0, 1))
        with pytest.raises(DomainError):
            sample_stats([0.5, 2.0], (0, 1))
        with pytest.raises(DomainError):
            SampleStats(-1, 0.0, 0.0)

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=40))
    def test_mean_in_range(self, xs):
        s = sample_stats(xs, (-5, 5))
        assert -5 - 1e-12 <= s.mean <= 5 + 1e-12


class TestRngStream:
    def test_reproducible_bytes(self):
        a = RngStream(2024, 7).generator().random(1000)
        b = RngStream(2024, 7).generator().random(1000)
        assert a.tobytes() == b.tobytes()

    def test_distinct_streams(self):
        a = RngStream(2024, 1).generator().random(10_000)
        b = RngStream(2024, 2).generator().random(10_000)
        assert a.tobytes() != b.tobytes()
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.05

    def test_substreams(self):
        root = RngStream(5)
        assert root.substream(3).key == (0, 3)
        x = root.substream(3).generator().integers(1 << 30, size=4)
        y = RngStream(5).substream(3).generator().integers(1 << 30, size=4)
        assert np.array_equal(x, y)

    def test_frozen_draws(self):
        # platform-independent: PCG64 + SeedSequence are fully specified
        draws = RngStream(0, 0).generator().integers(0, 2**32, size=3, dtype=np.uint64)
        again = np.random.Generator(np.random.PCG64(np.random.SeedSequence(0, spawn_key=(0,))))
        assert draws.tolist() == again.integers(0, 2**32, size=3, dtype=np.uint64).tolist()

    def test_seed_range(self):
        with pytest.raises(DomainError):
            RngStream(-1)
