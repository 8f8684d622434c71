import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwm import transform as T

mp.mp.dps = 50


def mp_quantile(p):
    """High-precision standard-normal quantile via erfinv."""
    return float(mp.sqrt(2) * mp.erfinv(2 * mp.mpf(p) - 1))


def mp_cdf(x):
    return float(mp.ncdf(x))


COSTS = [1 / 5, 1 / 40, 1 / 80]


class TestCwtFromInterest:
    def test_zero_at_exp_minus_inverse_cost(self):
        for c in COSTS:
            assert T.cwt_from_interest(math.exp(-1 / c), c) == pytest.approx(0.0, abs=1e-9)

    def test_exact_value(self):
        assert T.cwt_from_interest(math.exp(-1), 1 / 40) == pytest.approx(39.0, abs=1e-12)

    @pytest.mark.parametrize("c", COSTS + [3.0])
    def test_one_at_half(self, c):
        assert T.cwt_from_interest(math.exp(-1 / (2 * c)), c) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("r", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, r):
        with pytest.raises(ValueError):
            T.cwt_from_interest(r, 1 / 40)

    def test_overflow_near_one(self):
        with pytest.raises(OverflowError):
            T.cwt_from_interest(np.nextafter(1.0, 0.0), 1e-300)

    def test_monotone(self):
        r = np.linspace(1e-6, 1 - 1e-6, 2001)
        assert np.all(np.diff(T.cwt_from_interest(r, 1 / 40)) > 0)

    def test_range_above_minus_one(self):
        r = np.logspace(-300, -1e-6, 500)
        assert np.all(T.cwt_from_interest(r, 1 / 40) > -1)


class TestInterestFromCwt:
    def test_zero_watch(self):
        assert T.interest_from_cwt(0.0, 1 / 40) == pytest.approx(float(mp.exp(-40)), rel=1e-13)

    def test_nineteen(self):
        assert T.interest_from_cwt(19.0, 1 / 40) == pytest.approx(float(mp.exp(-2)), rel=1e-14)

    @pytest.mark.parametrize("r", [0.1, 0.5, 0.9])
    def test_inverse_pair(self, r):
        w = T.cwt_from_interest(r, 1 / 40)
        assert T.interest_from_cwt(w, 1 / 40) == pytest.approx(r, abs=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            T.interest_from_cwt(-0.5, 1 / 40)

    @pytest.mark.parametrize("c", COSTS)
    def test_inverse_grid(self, c):
        r = np.logspace(-6, np.log10(1 - 1e-6), 400)
        w = T.cwt_from_interest(r, c)
        ok = w >= 0
        back = T.interest_from_cwt(w[ok], c)
        assert np.max(np.abs(back - r[ok])) <= 1e-10

    @pytest.mark.parametrize("c", COSTS)
    def test_derivative_matches_finite_difference(self, c):
        for w in [0.5, 3.0, 30.0, 400.0]:
            h = 1e-6 * (1 + abs(w))
            fd = (T.interest_from_cwt(w + h, c) - T.interest_from_cwt(w - h, c)) / (2 * h)
            r = T.interest_from_cwt(w, c)
            analytic = r / (c * (w + 1) ** 2)
            assert analytic == pytest.approx(fd, rel=1e-6)


class TestProbitLabel:
    def test_median_point(self):
        c = 1 / 40
        w = 1 / (c * math.log(2)) - 1
        assert T.probit_label(w, c) == pytest.approx(0.0, abs=1e-12)

    def test_nineteen(self):
        expected = mp_quantile(mp.exp(-2))
        assert T.probit_label(19.0, 1 / 40) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(-1.1015, abs=1e-4)

    def test_thirty(self):
        expected = mp_quantile(mp.exp(mp.mpf(-40) / 31))
        assert T.probit_label(30.0, 1 / 40) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(-0.5972, abs=1e-4)

    def test_deep_tail_against_oracle(self):
        # r = exp(-80) at w=0, c=1/80, and far below double range for small c
        assert T.probit_label(0.0, 1 / 80) == pytest.approx(mp_quantile(mp.exp(-80)), rel=1e-10)
        x = T.probit_label(0.0, 1 / 715)  # log r = -715: exp(log r) is subnormal
        assert float(mp.log(mp.ncdf(x))) == pytest.approx(-715.0, rel=1e-12)

    def test_saturation_clamped(self):
        before = T.saturation_count()
        assert T.probit_label(0.0, 1e-5) == -T.PROBIT_CLAMP
        assert T.saturation_count() == before + 1

    @pytest.mark.parametrize("c", COSTS)
    def test_consistency_with_cdf(self, c):
        w = np.concatenate([np.linspace(0, 5, 51), np.logspace(0.7, 3, 60)])
        lhs = T.normal_cdf(T.probit_label(w, c))
        assert np.max(np.abs(lhs - T.interest_from_cwt(w, c))) <= 1e-9

    @pytest.mark.parametrize("c", COSTS)
    def test_monotone(self, c):
        w = np.linspace(0, 1000, 5001)
        assert np.all(np.diff(T.probit_label(w, c)) > 0)

    def test_derivative(self):
        c = 1 / 40
        for w in [0.5, 1.0, 19.0, 100.0]:
            h = 1e-6 * (1 + w)
            fd = (T.probit_label(w + h, c) - T.probit_label(w - h, c)) / (2 * h)
            assert T.probit_label_derivative(w, c) == pytest.approx(fd, rel=1e-6)


class TestNormalKernels:
    def test_cdf_symmetry(self):
        assert T.normal_cdf(0.0) == 0.5

    def test_quantile_median(self):
        assert T.normal_quantile(0.5) == 0.0

    def test_cdf_196(self):
        assert T.normal_cdf(1.96) == pytest.approx(mp_cdf(1.96), abs=1e-15)
        assert T.normal_cdf(1.96) == pytest.approx(0.9750021, abs=1e-7)

    def test_cdf_accuracy(self):
        xs = np.linspace(-8, 8, 321)
        ref = np.array([mp_cdf(x) for x in xs])
        assert np.max(np.abs(T.normal_cdf(xs) - ref)) <= 1e-12

    def test_pdf(self):
        assert T.normal_pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
        assert T.normal_pdf(1.3) == pytest.approx(float(mp.npdf(1.3)), rel=1e-14)

    def test_quantile_roundtrip(self):
        p = np.concatenate([np.logspace(-15, -1, 60), np.linspace(0.1, 0.9, 41),
                            1 - np.logspace(-15, -1, 60)])
        assert np.max(np.abs(T.normal_cdf(T.normal_quantile(p)) - p)) <= 1e-10

    @pytest.mark.parametrize("p", [0.0, 1.0, -1.0, 2.0])
    def test_quantile_domain(self, p):
        with pytest.raises(ValueError):
            T.normal_quantile(p)

    def test_quantile_from_log_matches_direct(self):
        p = np.logspace(-200, -1, 50)
        np.testing.assert_allclose(T.normal_quantile_from_log(np.log(p)), T.normal_quantile(p), rtol=1e-13)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=1e-15, max_value=1 - 1e-15))
    def test_quantile_inverse_property(self, p):
        assert abs(T.normal_cdf(T.normal_quantile(p)) - p) <= 1e-10


class TestPredictWatchTime:
    def test_limits(self):
        assert T.predict_watch_time(-1e6, 1 / 40, 30.0) == 0.0
        assert T.predict_watch_time(1e6, 1 / 40, 30.0) == 30.0
        assert T.predict_watch_time(-np.inf, 1 / 40, 30.0) == 0.0
        assert T.predict_watch_time(np.inf, 1 / 40, 30.0) == 30.0

    def test_median_clipped(self):
        raw = 40 / math.log(2) - 1
        assert raw == pytest.approx(56.708, abs=1e-3)
        assert T.predict_watch_time(0.0, 1 / 40, 30.0) == 30.0
        assert T.predict_watch_time(0.0, 1 / 40, 100.0) == pytest.approx(raw, rel=1e-14)

    def test_inverts_probit_label(self):
        assert T.predict_watch_time(-1.1015, 1 / 40, 30.0) == pytest.approx(19.0, abs=1e-2)
        x = T.probit_label(19.0, 1 / 40)
        assert T.predict_watch_time(x, 1 / 40, 30.0) == pytest.approx(19.0, abs=1e-9)

    def test_monotone_and_bounded(self):
        s = np.linspace(-10, 10, 4001)
        out = T.predict_watch_time(s, 1 / 40, 45.0)
        assert np.all(np.diff(out) >= 0)
        assert out.min() >= 0 and out.max() <= 45.0

    def test_bad_duration(self):
        with pytest.raises(ValueError):
            T.predict_watch_time(0.0, 1 / 40, 0.0)


def test_cost_params_validation():
    assert T.CostParams().cost_c == 1 / 40
    with pytest.raises(ValueError):
        T.CostParams(0.0, 2.0)
    with pytest.raises(ValueError):
        T.CostParams(1 / 40, -1.0)
