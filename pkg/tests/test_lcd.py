import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from weylzeros import dists, lcd
from weylzeros.errors import ConfigError, ResourceBudgetError


class TestXiNorm:
    def test_rademacher_closed_form(self):
        for w in (0.1, 0.25, 0.77, 3.3):
            expect = lcd.dist_to_int(2 * w) ** 2 / 2
            assert lcd.xi_norm_sq(w, dists.rademacher()) == pytest.approx(expect, abs=1e-14)

    def test_integer_w_rademacher(self):
        assert lcd.xi_norm_sq(1.0, dists.rademacher()) == 0.0
        assert lcd.xi_norm_sq(3.0, dists.rademacher()) == 0.0

    def test_quarter_value(self):
        assert lcd.xi_norm_sq(0.25, dists.rademacher()) == pytest.approx(0.125)

    def test_gaussian_against_density_quadrature(self):
        # E ||w Y||^2 with Y ~ N(0, 2) by direct integration against the density
        for w in (0.3, 0.9):
            def f(y):
                return lcd.dist_to_int(w * y) ** 2 * math.exp(-y * y / 4) / math.sqrt(4 * math.pi)
            oracle = sum(
                quad(f, lo, hi, limit=400)[0]
                for lo, hi in [(-12, -4), (-4, 0), (0, 4), (4, 12)]
            )
            assert lcd.xi_norm_sq(w, dists.gaussian()) == pytest.approx(oracle, abs=1e-8)

    def test_uniform_against_density_quadrature(self):
        # Y = difference of two uniform_sym draws: triangular on (-2 sqrt(3), 2 sqrt(3))
        s = 2 * math.sqrt(3.0)
        for w in (0.4, 1.1):
            def f(y):
                return lcd.dist_to_int(w * y) ** 2 * (1 - abs(y) / s) / s
            oracle = quad(f, -s, 0, limit=400)[0] + quad(f, 0, s, limit=400)[0]
            assert lcd.xi_norm_sq(w, dists.uniform_sym()) == pytest.approx(oracle, abs=1e-8)

    def test_zero_weight_exact(self):
        for d in (dists.gaussian(), dists.uniform_sym(), dists.rademacher()):
            assert lcd.xi_norm_sq(0.0, d) == 0.0


class TestCharBound:
    def test_zero_phase(self):
        assert lcd.char_bound(np.ones((5, 1)), [0.0], dists.rademacher()) == 1.0

    def test_lattice_degeneracy(self):
        v = np.array([[1.0], [2.0], [3.0]])
        assert lcd.char_bound(v, [2 * math.pi], dists.rademacher()) == pytest.approx(1.0)

    def test_always_at_most_one(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal((40, 2))
        for _ in range(20):
            eta = rng.standard_normal(2) * 10
            b = lcd.char_bound(v, eta, dists.rademacher())
            assert 0.0 < b <= 1.0

    def test_quadratic_regime(self):
        # small phases: bound ~ exp(-2 sum phase^2) = exp(-eta^T V eta N / (2 pi)^2 ...)
        w = lcd.weyl_weights(30.0, 1200, 30.0, d=2)
        eta = np.array([0.03, 0.0])
        phases = w @ eta / (2 * math.pi)
        expect = math.exp(-2.0 * float((phases**2).sum()))
        assert lcd.char_bound(w, eta, dists.rademacher()) == pytest.approx(expect, rel=1e-6)


@given(st.floats(-30, 30))
@settings(max_examples=80, deadline=None)
def test_objective_symmetry(d):
    v = lcd.sk_weights(16)
    fwd = float((lcd.dist_to_int(d * v) ** 2).sum())
    bwd = float((lcd.dist_to_int(-d * v) ** 2).sum())
    assert fwd == pytest.approx(bwd, abs=1e-12)


class TestSkObjective:
    def test_d_equals_one(self):
        n = 64
        expect = (n / 2) * (math.sqrt(2) - 1) ** 2
        assert lcd.sk_objective(n, 1.0) == pytest.approx(expect)

    def test_zero(self):
        assert lcd.sk_objective(64, 0.0) == 0.0

    def test_scanner_matches_oracle_pointwise(self):
        n = 64
        v = lcd.sk_weights(n)
        ds = np.linspace(0.5, 6.0, 2001)
        scan = (lcd.dist_to_int(np.outer(ds, v)) ** 2).sum(axis=1)
        oracle = lcd.sk_objective(n, ds)
        assert np.abs(scan - oracle).max() < 1e-12
        assert np.argmin(scan) == np.argmin(oracle)

    def test_odd_n_rejected(self):
        with pytest.raises(ConfigError):
            lcd.sk_objective(63, 1.0)


class TestLcdSearch:
    def test_integer_lattice(self):
        q = lcd.LCDQuery(weights=np.ones(100), r=0.5, D_max=3.0, tau=1e-6,
                         scan_step=0.25)
        res = lcd.lcd_search(q)
        assert res.d_star == pytest.approx(1.0)
        assert res.min_objective == pytest.approx(0.0, abs=1e-12)

    def test_no_crossing_is_inf(self):
        q = lcd.LCDQuery(weights=lcd.sk_weights(64), r=0.5, D_max=0.55,
                         tau=0.5, scan_step=1e-3)
        res = lcd.lcd_search(q)
        assert math.isinf(res.d_star)
        assert res.min_objective > 0.5

    def test_liouville_scaling(self):
        # min objective over |D| <= R decays no faster than c n / R^2, c >= 0.01
        n = 256
        v = lcd.sk_weights(n)
        for r_max in (2.0, 5.0, 10.0, 20.0):
            ds = np.arange(0.5, r_max, 5e-4)
            obj = lcd.sk_objective(n, ds)
            assert obj.min() >= 0.01 * n / r_max**2

    def test_budget_guard(self):
        with pytest.raises(ResourceBudgetError):
            lcd.lcd_search(
                lcd.LCDQuery(weights=np.ones((2000, 2)), r=0.5, D_max=1000.0,
                             tau=1.0, scan_step=1e-5)
            )

    def test_excluded_indices(self):
        v = np.array([0.5, 1.0, 1.0, 1.0])
        q = lcd.LCDQuery(weights=v, r=0.9, D_max=1.1, tau=1e-9, scan_step=0.1,
                         excluded=(0,))
        res = lcd.lcd_search(q)
        assert res.d_star == pytest.approx(1.0)  # the 0.5 weight is dropped
        with pytest.raises(ConfigError):
            lcd.LCDQuery(weights=v, r=0.9, D_max=1.1, tau=1.0, scan_step=0.1,
                         excluded=(0, 1, 2, 3))

    def test_2d_search_runs(self):
        rng = np.random.default_rng(1)
        v = rng.standard_normal((30, 2))
        q = lcd.LCDQuery(weights=v, r=0.3, D_max=2.0, tau=1e-6, scan_step=0.05)
        res = lcd.lcd_search(q)
        assert res.min_objective > 0.0
        assert res.certified_lower_bound <= res.min_objective


def test_weyl_weights_shapes():
    w1 = lcd.weyl_weights(30.0, 1200, 30.0)
    assert w1.ndim == 1 and w1.max() > 0.5
    w2 = lcd.weyl_weights(30.0, 1200, 30.0, d=2)
    assert w2.shape == (w1.size, 2)
    assert (w1**2).sum() == pytest.approx(30.0, rel=1e-10)
