import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdkp_waves.grid_spectral import Grid2D
from fdkp_waves.symbols import (
    SymbolError,
    approximation_slope,
    build_table,
    cone_indicator,
    eval_m,
    eval_mtilde,
    eval_n,
    kp_coefficient,
)

BETA = 7 / 3


def mp_m(k1, k2, beta):
    mp.mp.dps = 40
    k1, k2, beta = mp.mpf(k1), mp.mpf(k2), mp.mpf(beta)
    k = mp.sqrt(k1**2 + k2**2)
    return mp.sqrt((1 + beta * k**2) * mp.tanh(k) / k) * mp.sqrt(1 + 2 * k2**2 / k1**2)


class TestPointValues:
    def test_origin(self):
        assert eval_m(0.0, 0.0, BETA) == 1.0
        assert eval_n(0.0, 0.0, BETA) == 0.0

    def test_unit_k1_against_high_precision(self, derived):
        assert eval_m(1.0, 0.0, BETA) == pytest.approx(derived["m_1_0_beta73"], abs=1e-12)

    def test_mtilde_example(self):
        assert eval_mtilde(1.0, 0.0, BETA) == pytest.approx(2.0, abs=1e-14)
        assert kp_coefficient(BETA) == pytest.approx(1.0)

    def test_undefined_on_k1_axis(self):
        with pytest.raises(SymbolError):
            eval_m(0.0, 0.5, BETA)
        with pytest.raises(SymbolError):
            eval_mtilde(0.0, 0.0, BETA)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(1e-6, 20.0), st.floats(-20.0, 20.0), st.floats(0.34, 10.0))
    def test_matches_mpmath(self, k1, k2, beta):
        exact = mp_m(k1, k2, beta)
        assert eval_m(k1, k2, beta) == pytest.approx(float(exact), rel=1e-13)
        assert eval_n(k1, k2, beta) == pytest.approx(float(exact - 1), rel=1e-11, abs=1e-300)

    @pytest.mark.parametrize("k", [1e-8, 1e-5, 1e-3, 0.04, 0.06, 0.3])
    def test_n_small_wavenumber_without_cancellation(self, k):
        exact = float(mp_m(k, 0.0, BETA) - 1)
        assert eval_n(k, 0.0, BETA) == pytest.approx(exact, rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(1e-4, 50.0), st.floats(-50.0, 50.0))
    def test_m_at_least_one(self, k1, k2):
        assert eval_m(k1, k2, BETA) >= 1.0 - 1e-14


class TestCone:
    def test_examples(self):
        assert cone_indicator(0.0, 0.0, 0.3) == 1.0
        assert cone_indicator(0.2, 0.05, 0.3) == 1.0
        assert cone_indicator(0.2, 0.07, 0.3) == 0.0
        assert cone_indicator(0.31, 0.0, 0.3) == 0.0
        assert cone_indicator(-0.2, -0.05, 0.3) == 1.0

    def test_vectorised(self):
        out = cone_indicator(np.array([0.1, 0.5]), np.array([0.0, 0.0]), 0.3)
        assert out.tolist() == [1.0, 0.0]


class TestApproximation:
    @pytest.mark.parametrize("delta", [0.05, 0.1, 0.2])
    def test_cubic_error_bound(self, delta):
        k1 = np.linspace(-delta, delta, 201)
        k1 = k1[k1 != 0][:, None]
        r = np.linspace(-delta, delta, 201)[None, :]
        k2 = r * k1
        keep = k1**2 + k2**2 <= delta**2
        n = np.vectorize(lambda a, b: eval_n(a, b, BETA))(k1, k2)
        nt = r**2 + kp_coefficient(BETA) * k1**2
        worst = np.max(np.abs(n - nt)[keep])
        assert worst <= 4 * delta**3

    def test_slope_near_four(self):
        # The leading error terms are r^2 k1^2 and k1^4, so the decay is quartic, which also
        # satisfies the cubic bound.
        slope, maxima = approximation_slope(BETA)
        assert slope >= 3.0
        assert maxima[0] > maxima[1] > maxima[2]


class TestTable:
    def test_checks_pass_on_reference_grid(self):
        t = build_table(Grid2D(128, 128, 100.0, 100.0), BETA, 0.3)
        assert t.n_min_offcone > 0
        lo, hi = t.ratio_range
        assert 0.9 < lo <= 1.0 <= hi < 1.1
        assert t.ratio_constant < 1.0
        assert np.count_nonzero(t.chi) > 0

    def test_zero_row(self):
        t = build_table(Grid2D(32, 32, 50.0, 50.0), BETA, 0.3)
        for arr in (t.m, t.mt, t.n, t.nt, t.chi, t.off_inv_n, t.ratio_sqrt):
            assert not np.any(arr[0])

    def test_n_equals_m_minus_one(self):
        t = build_table(Grid2D(64, 64, 50.0, 50.0), BETA, 0.3)
        live = t.m > 0
        assert np.max(np.abs((t.n - (t.m - 1))[live])) < 1e-13

    def test_arrays_read_only(self):
        t = build_table(Grid2D(16, 16, 10.0, 10.0), BETA, 0.3)
        with pytest.raises(ValueError):
            t.m[1, 1] = 0.0

    @pytest.mark.parametrize("beta, delta, eps", [(0.2, 0.3, None), (BETA, 0.0, None), (BETA, 0.7, None),
                                                  (BETA, 0.3, 1.5)])
    def test_parameter_errors(self, beta, delta, eps):
        with pytest.raises(SymbolError):
            build_table(Grid2D(16, 16, 10.0, 10.0), beta, delta, eps)

    def test_scaled_cone_matches_kp_variables(self):
        eps = 0.1
        coarse = Grid2D(64, 64, 100.0, 100.0)
        fine = coarse.scaled(eps)
        t = build_table(coarse, BETA, 0.3, eps)
        direct = build_table(fine, BETA, 0.3).chi
        differ = t.chi_scaled != direct
        # only exact edge points |k2| = delta |k1| may fall either way under rounding
        k1 = np.broadcast_to(fine.k1, differ.shape)[differ]
        k2 = np.broadcast_to(fine.k2, differ.shape)[differ]
        assert np.allclose(np.abs(k2), 0.3 * np.abs(k1), rtol=1e-12, atol=0)

    def test_diagnostics_keys(self):
        d = build_table(Grid2D(16, 16, 10.0, 10.0), BETA, 0.3).diagnostics()
        assert {"n_min_offcone", "ratio_min", "ratio_max", "cone_modes"} <= set(d)
        assert math.isfinite(d["ratio_constant"])
