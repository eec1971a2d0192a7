import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfmonitor.channel import crandn, draw_channels, uplink_training
from cfmonitor.precoding import build_data_precoder, hermitian, load_powers
from cfmonitor.scenario import ScenarioRealization, SystemParams
from cfmonitor.spectral import (
    REPORT_HEADER,
    ExpectationPlan,
    GeometryBank,
    SharePolicy,
    append_reports,
    build_bank,
    evaluate,
    jamming_at_mn,
    jamming_at_ur,
    log2det_hpd,
    msp_estimate,
    se_cpu_case1,
    se_cpu_case2,
    se_ur,
    signaling_load,
    task_rng,
)
from cfmonitor.transmission import (
    MonitoringConfig,
    aggregate_cpu,
    build_jamming,
    equal_power_config,
    receive,
)

PLAN = ExpectationPlan(n_inner=100, n_outer=400, n_geom=4, n_mc=3000)


@pytest.fixture(scope="module")
def unit():
    p = SystemParams(M=3, N=4, Nt=3, Nr=2, tau=60, tau_r=8, tau_t=8)
    return ScenarioRealization.from_betas(
        p, beta_tr=1.0, beta_mr=np.array([1.0, 0.5, 2.0]), beta_tm=np.array([1.0, 0.7, 1.3]),
        beta_mm=np.array([[0, 0.4, 0.9], [0.4, 0, 0.2], [0.9, 0.2, 0]]),
        rho_r=2.0, rho_t=3.0, rho_J=1.5)


@pytest.fixture(scope="module")
def bank(unit):
    return build_bank(unit, PLAN, np.random.default_rng(5), kind="ZF")


class TestLog2Det:
    def test_matches_slogdet(self, rng):
        A = crandn(rng, (20, 4, 4))
        X = A @ hermitian(A) + np.eye(4)
        np.testing.assert_allclose(log2det_hpd(X), np.linalg.slogdet(X)[1] / np.log(2))


class TestJammingTerms:
    def test_ur_term_against_simulated_slots(self, unit):
        # oracle: measured per-antenna jamming power at the UR over 4e4 slots
        rng = np.random.default_rng(11)
        gamma = uplink_training(draw_channels(unit, rng, inter_mn=False), unit, rng).gamma_mr
        cfg = MonitoringConfig.from_shares([0, 1, 0], np.array([[0.3, 0.6], [0, 0], [0.5, 0.1]]),
                                           gamma, unit.params.N)
        ch = draw_channels(unit, rng, n=40_000)
        up = uplink_training(ch, unit, rng)
        W = build_data_precoder(up.Ghat_tr, "MRT")
        rx = receive(ch, W, load_powers(2), build_jamming(cfg, up.Ghat_mr, up.gamma_mr),
                     cfg, unit, rng)
        measured = np.mean(np.abs(rx.jam_r) ** 2, axis=0) / unit.rho_J
        np.testing.assert_allclose(measured, jamming_at_ur(unit, cfg, gamma), rtol=0.04)

    def test_mn_term_against_simulated_slots(self, unit):
        rng = np.random.default_rng(12)
        gamma = uplink_training(draw_channels(unit, rng, inter_mn=False), unit, rng).gamma_mr
        cfg = equal_power_config([1, 0, 1], gamma, unit.params.N, 2)
        ch = draw_channels(unit, rng, n=40_000)
        up = uplink_training(ch, unit, rng)
        W = build_data_precoder(up.Ghat_tr, "MRT")
        rx = receive(ch, W, load_powers(2), build_jamming(cfg, up.Ghat_mr, up.gamma_mr),
                     cfg, unit, rng)
        measured = np.mean(np.abs(rx.jam_m) ** 2, axis=(0, 2)) / unit.rho_J
        predicted = jamming_at_mn(unit, cfg, gamma)
        np.testing.assert_allclose(measured[[0, 2]], predicted[[0, 2]], rtol=0.04)

    def test_cpu_noise_covariance(self, unit):
        # E{(n_c + i_c)(n_c + i_c)^H | V} = sum_m (1 + rho_J J_m) V_m^H V_m
        rng = np.random.default_rng(13)
        gamma = uplink_training(draw_channels(unit, rng, inter_mn=False), unit, rng).gamma_mr
        cfg = equal_power_config([1, 0, 1], gamma, unit.params.N, 2)
        V = crandn(rng, (3, 4, 2))
        ch = draw_channels(unit, rng, n=40_000)
        up = uplink_training(ch, unit, rng)
        W = build_data_precoder(up.Ghat_tr, "MRT")
        rx = receive(ch, W, load_powers(2), build_jamming(cfg, up.Ghat_mr, up.gamma_mr),
                     cfg, unit, rng)
        z = aggregate_cpu(cfg, np.broadcast_to(V, (40_000, 3, 4, 2)), rx)
        e = z.n_c + z.i_c
        measured = np.einsum("ki,kj->ij", e, e.conj()) / len(e)
        s = 1 + unit.rho_J * jamming_at_mn(unit, cfg, gamma)
        predicted = sum(s[m] * hermitian(V[m]) @ V[m] for m in (0, 2))
        scale = np.abs(predicted).max()
        np.testing.assert_allclose(measured / scale, predicted / scale, atol=0.03)

    def test_estimation_error_term(self, bank):
        # error leakage V^H (B - Bhat) Lam^{1/2} has covariance ~ err_m E{V_m^H V_m}
        diff = bank.X - bank.Xhat
        measured = np.einsum("kmij,kmhj->mih", diff, diff.conj()) / bank.n
        predicted = bank.err[:, None, None] * bank.Qbar
        for m in range(3):
            tr_m, tr_p = np.trace(measured[m]).real, np.trace(predicted[m]).real
            assert tr_m == pytest.approx(tr_p, rel=0.15)

    def test_silent_jammers(self, unit):
        cfg = MonitoringConfig(np.ones(3, int), np.full((3, 2), 0.1))
        assert np.all(jamming_at_ur(unit, cfg, np.ones(3)) == 0)
        assert np.all(jamming_at_mn(unit, cfg, np.ones(3)) == 0)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_monotone_in_power(self, a, b):
        real = ScenarioRealization.from_betas(SystemParams(M=2, N=3, Nr=2, Nt=2), 1.0,
                                              np.ones(2), np.ones(2), rho_J=1.0)
        lo, hi = sorted((a, b))
        gamma = np.array([0.5, 0.8])
        base = np.array([[0.05, 0.1], [0.0, 0.0]])
        I_lo = jamming_at_ur(real, MonitoringConfig(np.array([0, 1]), lo * base), gamma)
        I_hi = jamming_at_ur(real, MonitoringConfig(np.array([0, 1]), hi * base), gamma)
        assert np.all(I_lo <= I_hi + 1e-15)


class TestBank:
    def test_perfect_csi_identity(self, unit):
        b = build_bank(unit, PLAN, np.random.default_rng(1), kind="ZF", monitor_csi="perfect")
        np.testing.assert_array_equal(b.Xhat, b.X)
        np.testing.assert_array_equal(b.err, 0)

    def test_bad_csi_mode(self, unit):
        with pytest.raises(ValueError):
            build_bank(unit, PLAN, np.random.default_rng(1), monitor_csi="genie")

    def test_derived_moments(self, bank):
        np.testing.assert_allclose(bank.Xbar, bank.X.mean(axis=0))
        m, l = 0, 2
        direct = np.mean(bank.X[:, m] @ hermitian(bank.X[:, l]), axis=0)
        np.testing.assert_allclose(bank.XX[m, l], direct, atol=1e-12)

    def test_zf_diagonal_effective_channel(self, bank):
        off = bank.a_sq[:, 0, 1]
        diag = bank.a_sq[:, 0, 0]
        assert np.mean(off) < 0.2 * np.mean(diag)


class TestSpectralEfficiency:
    def test_se_ur_hand_instance(self, unit, bank):
        cfg = MonitoringConfig(np.ones(3, int), np.zeros((3, 2)))
        # no jamming: SINR_n = rho lam |a_nn|^2 / (1 + rho sum_{n'!=n} lam |a_nn'|^2)
        a = bank.a_sq
        lam = 0.5
        sinr = np.stack([unit.rho_t * lam * a[:, n, n]
                         / (1 + unit.rho_t * lam * (a[:, n].sum(-1) - a[:, n, n]))
                         for n in range(2)], axis=-1)
        expected = unit.params.prelog * np.mean(np.log2(1 + sinr.sum(-1)))
        assert se_ur(bank, cfg) == pytest.approx(expected, rel=1e-12)

    def test_case2_scalar_hand_instance(self):
        p = SystemParams(M=2, N=2, Nt=1, Nr=1, tau=40, tau_r=5, tau_t=5)
        real = ScenarioRealization.from_betas(p, 1.0, np.ones(2), np.ones(2), rho_t=2.0,
                                              rho_J=0.0)
        X = np.array([[1.0, 0.5], [3.0, 0.5]]).reshape(2, 2, 1, 1).astype(complex)
        Q = np.array([[2.0, 1.0], [4.0, 1.0]]).reshape(2, 2, 1, 1).astype(complex)
        b = GeometryBank(real=real, kind="MRT", lam=np.ones(1), gamma_mr=np.ones(2),
                         a_sq=np.ones((2, 1, 1)), Xhat=X, X=X, Q=Q, err=np.zeros(2))
        cfg = MonitoringConfig(np.array([1, 0]), np.zeros((2, 1)))
        # node 0: mean X = 2, var X = 1, mean Q = 3 -> SINR = 2*4 / (3 + 2*1)
        assert se_cpu_case2(b, cfg) == pytest.approx(p.prelog * np.log2(1 + 8 / 5))
        both = MonitoringConfig(np.array([1, 1]), np.zeros((2, 1)))
        # sum D = X0 + X1: mean 2.5, var 1, Qbar sum = 4
        assert se_cpu_case2(b, both) == pytest.approx(p.prelog * np.log2(1 + 2 * 6.25 / 6))

    def test_case1_perfect_csi_scalar(self):
        p = SystemParams(M=1, N=2, Nt=1, Nr=1, tau=40, tau_r=5, tau_t=5)
        real = ScenarioRealization.from_betas(p, 1.0, np.ones(1), np.ones(1), rho_t=2.0)
        X = np.array([1.0, 2.0]).reshape(2, 1, 1, 1).astype(complex)
        Q = np.array([0.5, 4.0]).reshape(2, 1, 1, 1).astype(complex)
        b = GeometryBank(real=real, kind="MRT", lam=np.ones(1), gamma_mr=np.ones(1),
                         a_sq=np.ones((2, 1, 1)), Xhat=X, X=X, Q=Q, err=np.zeros(1))
        cfg = MonitoringConfig(np.array([1]), np.zeros((1, 1)))
        expected = p.prelog * np.mean(np.log2(1 + 2 * np.array([1 / 0.5, 4 / 4.0])))
        assert se_cpu_case1(b, cfg) == pytest.approx(expected)

    def test_no_observers(self, bank):
        cfg = equal_power_config([0, 0, 0], bank.gamma_mr, 4, 2)
        rep = evaluate(bank, cfg)
        assert rep.se_c1 == 0 and rep.se_c2 == 0 and rep.msp1 == 0

    def test_jamming_lowers_ur_rate(self, bank):
        quiet = MonitoringConfig(np.array([1, 0, 1]), np.zeros((3, 2)))
        loud = equal_power_config([1, 0, 1], bank.gamma_mr, 4, 2)
        assert se_ur(bank, loud) < se_ur(bank, quiet)
        assert se_cpu_case1(bank, loud) < se_cpu_case1(bank, quiet)

    def test_case1_at_least_case2(self, bank):
        cfg = equal_power_config([1, 1, 0], bank.gamma_mr, 4, 2)
        assert se_cpu_case1(bank, cfg) >= se_cpu_case2(bank, cfg) - 1e-9

    def test_report_consistency(self, bank):
        cfg = equal_power_config([1, 0, 1], bank.gamma_mr, 4, 2)
        rep = evaluate(bank, cfg)
        assert rep.msp1 == int(rep.se_c1 >= rep.se_r)
        assert rep.msp("case2") == rep.msp2
        assert 0 <= rep.p1 <= 1 and rep.prelog == bank.prelog


class TestMSPEstimate:
    def test_deterministic_and_map_invariant(self, small_params):
        policy = SharePolicy(np.array([1, 0, 1]), np.full((3, 2), 0.5 / 2))
        a = msp_estimate(small_params, policy, PLAN, seed=3)
        b = msp_estimate(small_params, policy, PLAN, seed=3,
                         map_fn=lambda f, xs: [f(x) for x in reversed(list(xs))][::-1])
        assert a.msp == b.msp and [r.se_r for r in a.reports] == [r.se_r for r in b.reports]
        assert a.n == PLAN.n_geom

    def test_task_streams_differ(self):
        x = task_rng(1, 0, 0).standard_normal(3)
        np.testing.assert_array_equal(x, task_rng(1, 0, 0).standard_normal(3))
        assert not np.array_equal(x, task_rng(1, 1, 0).standard_normal(3))
        assert not np.array_equal(x, task_rng(1, 0, 1).standard_normal(3))

    def test_rejects_empty_run(self, small_params):
        with pytest.raises(ValueError):
            msp_estimate(small_params, SharePolicy(np.ones(3, int), np.zeros((3, 2))), PLAN,
                         n_geom=0)

    @pytest.mark.parametrize("kw", [dict(n_inner=50), dict(n_outer=10), dict(n_geom=0)])
    def test_plan_floors(self, kw):
        with pytest.raises(ValueError):
            ExpectationPlan(**kw)

    def test_fast_scaling(self):
        plan = ExpectationPlan().scaled(10)
        assert plan.n_outer >= 100 and plan.n_geom == 50


class TestOutputs:
    def test_report_csv(self, tmp_path, bank):
        cfg = equal_power_config([1, 0, 1], bank.gamma_mr, 4, 2)
        rep = evaluate(bank, cfg)
        path = tmp_path / "r.csv"
        append_reports(path, [rep], [cfg])
        append_reports(path, [rep], [cfg], start_id=1)
        rows = list(csv.reader(path.open()))
        assert tuple(rows[0]) == REPORT_HEADER and len(rows) == 3
        assert rows[1][1] == rows[2][1] and rows[2][0] == "1"

    @settings(max_examples=10, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 8), st.integers(3, 6))
    def test_signaling(self, Nr, M_o, pilots):
        p = SystemParams(Nr=Nr, Nt=Nr, tau=200, tau_r=pilots * Nr, tau_t=pilots * Nr)
        assert signaling_load(p, M_o, "case1") == ((200 - 2 * pilots * Nr) * Nr, Nr * Nr * M_o)
        assert signaling_load(p, M_o, "case2")[1] == 0

    def test_signaling_rejects_negative(self, params):
        with pytest.raises(ValueError):
            signaling_load(params, -1)


class TestRankDeficient:
    def test_more_streams_than_observing_antennas(self):
        p = SystemParams(M=2, N=2, Nt=3, Nr=3, tau=60, tau_r=8, tau_t=8)
        real = ScenarioRealization.from_betas(p, 1.0, np.ones(2), np.ones(2), rho_r=5.0,
                                              rho_t=4.0, rho_J=1.0)
        b = build_bank(real, ExpectationPlan(n_outer=100, n_mc=1000),
                       np.random.default_rng(0), kind="ZF")
        one = MonitoringConfig(np.array([1, 0]), np.zeros((2, 3)))
        se = se_cpu_case1(b, one)
        assert np.isfinite(se) and se > 0
        # regularized solve converges to the pseudo-inverse value
        obs_Q = b.Q[:, 0] + 1e-9 * np.eye(3)
        s = 1 + b.err[0] * real.rho_t
        D = b.Xhat[:, 0]
        ups = real.rho_t * hermitian(D) @ np.linalg.solve(s * obs_Q, D)
        expected = p.prelog * np.mean(log2det_hpd(np.eye(3) + ups))
        assert se == pytest.approx(expected, rel=1e-5)
