import numpy as np
import pytest

from vgx.asymptotics import (ConstantBudget, classify, compare, predict,
                             sub_time_factor, sub_time_factor_oracle,
                             sub_time_factor_printed)
from vgx.models import FOU, LampertiFBM, OperatorFBM, Regime
from vgx.qp import SymmetricPD
from vgx.tails import mvn_tail

SMALL = ConstantBudget(lambdas=(1.0, 2.0), h=0.02, N=20_000, seed=0)


class TestTimeFactor:
    def test_beta_one_is_inverse_tau(self):
        assert sub_time_factor(1.0, 1.0) == pytest.approx(1.0)
        assert sub_time_factor_printed(1.0, 1.0) == pytest.approx(1.0)
        assert sub_time_factor(1.0, 2.0) == pytest.approx(0.5)

    def test_quadrature_oracle_agrees(self):
        for beta, tau in [(1.5, 2.0), (2.0, 0.5), (3.0, 1.7)]:
            want = sub_time_factor_oracle(beta, tau)
            assert sub_time_factor(beta, tau) == pytest.approx(want, rel=1e-8)

    def test_printed_variant_disagrees_off_diagonal(self):
        # the two exponent conventions only coincide when tau_w = 1
        got = sub_time_factor(1.5, 2.0)
        alt = sub_time_factor_printed(1.5, 2.0)
        assert abs(got - alt) > 0.1
        assert sub_time_factor(1.5, 1.0) == pytest.approx(
            sub_time_factor_printed(1.5, 1.0))


class TestClassify:
    def test_regimes_by_index(self):
        b = [1.0, 1.0]
        assert classify(FOU(0.5 * np.eye(2)), b).regime == Regime.STATIONARY
        assert classify(OperatorFBM(0.75 * np.eye(2), np.eye(2)),
                        b).regime == Regime.SUP
        assert classify(OperatorFBM(0.5 * np.eye(2), np.eye(2)),
                        b).regime == Regime.CRITICAL
        assert classify(OperatorFBM(0.4 * np.eye(2), np.eye(2)),
                        b).regime == Regime.SUB

    def test_skew_lamperti(self):
        H = np.array([[0.75, 0.2], [0.0, 0.6]])
        ls = classify(LampertiFBM(H, np.eye(2)), [1.0, 1.0])
        assert ls.regime == Regime.STATIONARY_SKEW


class TestPredict:
    def test_sup_closed_constant(self):
        m = OperatorFBM(0.75 * np.eye(2), np.eye(2))
        p = predict(m, [1.0, 1.0], 4.0)
        assert p.regime == Regime.SUP
        assert p.constant_kind == "closed_boundary"
        assert p.u_power == 0.0
        # value = C_w * tail at the endpoint covariance
        tail = mvn_tail(SymmetricPD(m.sigma(1.0)), [1.0, 1.0], 4.0).value
        assert p.value == pytest.approx(p.constant * tail, rel=1e-12)

    def test_rescale_invariance(self):
        # P{X > u b} only depends on u b, so (2b, u/2) must match (b, u)
        m = OperatorFBM(0.75 * np.eye(2), np.eye(2))
        a = predict(m, [1.0, 1.0], 4.0)
        b = predict(m, [2.0, 2.0], 2.0)
        assert a.value == pytest.approx(b.value, rel=1e-9)

    def test_decreasing_in_u(self):
        m = OperatorFBM(0.75 * np.eye(2), np.eye(2))
        vals = [predict(m, [1.0, 1.0], u).value for u in (3.0, 4.0, 5.0)]
        assert vals[0] > vals[1] > vals[2]

    def test_override_skips_estimation(self):
        m = FOU(0.5 * np.eye(2))
        p = predict(m, [1.0, 1.0], 3.0, constant_override=0.8)
        assert p.constant == 0.8
        assert p.constant_stderr == 0.0
        assert p.constant_kind == "override"
        tail = mvn_tail(SymmetricPD(np.eye(2)), [1.0, 1.0], 3.0).value
        # u_power = 2/alpha = 2 for the index-1/2 stationary model
        assert p.u_power == pytest.approx(2.0)
        assert p.value == pytest.approx(0.8 * 9.0 * tail, rel=1e-12)

    def test_sub_reports_both_conventions(self):
        m = OperatorFBM(0.4 * np.eye(2), np.eye(2))
        p = predict(m, [1.0, 1.0], 4.0, budget=SMALL)
        assert p.regime == Regime.SUB
        assert np.isfinite(p.alt_value)
        f = p.details["time_factor"]
        g = p.details["time_factor_printed"]
        assert p.alt_value == pytest.approx(p.value * g / f, rel=1e-12)

    def test_sub_exponent_sign(self):
        # beta > alpha shortens the effective interval: negative u power
        m = OperatorFBM(0.4 * np.eye(2), np.eye(2))
        p = predict(m, [1.0, 1.0], 4.0, constant_override=0.5)
        assert p.u_power == pytest.approx(2.0 / 0.8 - 2.0 / 1.0)
        assert p.u_power > 0  # alpha = 0.8 < beta = 1: still positive here

    def test_skew_closed_constant(self):
        H = np.array([[0.75, 0.2], [0.0, 0.6]])
        m = LampertiFBM(H, np.eye(2))
        p = predict(m, [1.0, 1.0], 4.0)
        assert p.constant_kind == "closed_skew"
        assert p.constant_stderr == 0.0
        assert p.u_power == pytest.approx(2.0)


class TestCompare:
    def test_stationary_ratio_near_one(self):
        m = FOU(0.5 * np.eye(2))
        rep = compare(m, [1.0, 1.0], us=(2.0, 2.5), N=40_000,
                      grid_points=100, seed=0, budget=SMALL)
        assert rep.regime == Regime.STATIONARY
        assert len(rep.rows) == 2
        for r in rep.rows:
            assert r.empirical > 0
            assert 0.3 < r.ratio < 3.0
        assert np.isfinite(rep.trend_intercept)

    def test_row_ratio_consistency(self):
        m = OperatorFBM(0.75 * np.eye(2), np.eye(2))
        rep = compare(m, [1.0, 1.0], us=(2.5, 3.0), N=40_000,
                      grid_points=60, seed=1, budget=SMALL)
        for r in rep.rows:
            assert r.ratio == pytest.approx(r.empirical / r.predicted,
                                            rel=1e-12)

    def test_threshold_cap_limits_replicates(self):
        # per-u replicate budget shrinks as 1/u, so the call stays bounded
        m = OperatorFBM(0.75 * np.eye(2), np.eye(2))
        rep = compare(m, [1.0, 1.0], us=(4.0,), N=10**9, grid_points=40,
                      seed=2, budget=SMALL)
        assert rep.rows[0].empirical >= 0
