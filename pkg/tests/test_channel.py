import numpy as np
import pytest

from wncs.channel import (
    ChannelConfig,
    db_to_linear,
    draw_channel,
    mmse_error_cov,
    required_power,
    snr,
    transmit_ul,
)
from wncs.mathkit import RngStream


def scalar_v_oracle(p, s, oh, n0w):
    return s * n0w / (p * s * oh * oh + n0w)


class TestConfig:
    def test_db_defaults(self):
        cfg = ChannelConfig.from_db(gamma0_db=20.0, pmax_dbm=30.0)
        assert cfg.gamma0 == pytest.approx(100.0)
        assert cfg.Pmax == pytest.approx(1000.0)

    def test_28_2_dbm(self):
        assert db_to_linear(28.2) == pytest.approx(660.693, rel=1e-5)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ChannelConfig(N0=0.0)


class TestDrawChannel:
    def test_norm_moment(self):
        rng = RngStream(0).substream("h")
        n = 100_000
        norms = np.empty(n)
        for i in range(n):
            H = draw_channel(rng, 2, 0.02)
            norms[i] = np.sum(H * H)
        # E||H||_F^2 = D^2 sigma^2 = 0.08
        assert norms.mean() == pytest.approx(0.08, abs=0.003)

    def test_degenerate_variance(self):
        H = draw_channel(RngStream(1), 2, 1e-30)
        assert np.max(np.abs(H)) < 1e-10

    def test_determinism(self):
        H1 = draw_channel(RngStream(3).substream("c"), 2, 0.02)
        H2 = draw_channel(RngStream(3).substream("c"), 2, 0.02)
        assert np.array_equal(H1, H2)


class TestSnr:
    def test_unit_case(self):
        cfg = ChannelConfig()
        H = np.array([[1.0, 0.0], [0.0, 0.0]])
        assert snr(1.0, H, cfg) == pytest.approx(1.0)

    def test_zero_power(self):
        assert snr(0.0, np.ones((2, 2)), ChannelConfig()) == 0.0

    def test_average_channel_at_rr_power(self):
        # p = 28.2 dBm on an average channel (||H||^2 = 0.08) misses the
        # 20 dB threshold: fixed-power round-robin transmissions can fail
        cfg = ChannelConfig()
        H = np.sqrt(0.08 / 4.0) * np.ones((2, 2))
        gamma = snr(db_to_linear(28.2), H, cfg)
        assert gamma == pytest.approx(52.855, rel=1e-3)
        assert gamma < cfg.gamma0

    def test_linear_in_power(self):
        cfg = ChannelConfig()
        H = np.array([[0.3, -0.1], [0.2, 0.05]])
        assert snr(2.0 * 7.7, H, cfg) == 2.0 * snr(7.7, H, cfg)


class TestRequiredPower:
    def test_unit_boundary(self):
        cfg = ChannelConfig()
        g2 = cfg.gamma0 * cfg.N0 * cfg.omega
        H = np.array([[np.sqrt(g2)]])
        assert required_power(H, cfg) == pytest.approx(1.0)

    def test_infeasible_deep_fade(self):
        cfg = ChannelConfig()
        H = np.array([[np.sqrt(0.08), 0.0], [0.0, 0.0]])  # p_req = 1250 > 1000
        assert required_power(H, cfg) is None

    def test_feasible_case(self):
        cfg = ChannelConfig()
        H = np.array([[np.sqrt(0.2)]])
        assert required_power(H, cfg) == pytest.approx(500.0)

    def test_zero_channel(self):
        assert required_power(np.zeros((2, 2)), ChannelConfig()) is None

    def test_returned_power_always_meets_threshold(self):
        cfg = ChannelConfig()
        rng = RngStream(17).substream("req")
        for _ in range(2000):
            H = draw_channel(rng, 2, 0.02)
            p = required_power(H, cfg)
            if p is not None:
                assert snr(p, H, cfg) >= cfg.gamma0
                assert p <= cfg.Pmax


class TestMmse:
    def test_scalar_half(self):
        cfg = ChannelConfig(gamma0=1.0)
        G, V = mmse_error_cov(1.0, [[1.0]], [[1.0]], [[1.0]], cfg)
        assert G[0, 0] == pytest.approx(0.5)
        assert V[0, 0] == pytest.approx(0.5)

    def test_scalar_analytic_over_power_grid(self):
        cfg = ChannelConfig(gamma0=1.0)
        for p in np.linspace(0.0, 50.0, 100):
            _, V = mmse_error_cov(p, [[0.7]], [[1.0]], [[2.0]], cfg)
            assert V[0, 0] == pytest.approx(scalar_v_oracle(p, 2.0, 0.7, 1.0), abs=1e-10)

    def test_variance_decreasing_in_power(self):
        cfg = ChannelConfig(gamma0=1.0)
        vs = [mmse_error_cov(p, [[0.5]], [[1.0]], [[1.0]], cfg)[1][0, 0] for p in (0, 1, 5, 50)]
        assert all(a > b for a, b in zip(vs, vs[1:]))

    def test_zero_power_returns_prior(self):
        cfg = ChannelConfig()
        S = np.array([[2.0, 0.3], [0.3, 1.0]])
        G, V = mmse_error_cov(0.0, np.ones((2, 2)), np.eye(2), S, cfg)
        assert np.allclose(G, 0.0)
        assert np.allclose(V, S)

    def test_never_exceeds_prior(self):
        cfg = ChannelConfig()
        rng = np.random.default_rng(0)
        for _ in range(200):
            D = int(rng.integers(1, 4))
            A = rng.normal(size=(D, D))
            S = A @ A.T
            H = rng.normal(size=(D, D))
            p = rng.uniform(0.0, 1000.0)
            _, V = mmse_error_cov(p, H, np.eye(D), S, cfg)
            gap = np.linalg.eigvalsh(S - V)
            assert gap.min() >= -1e-10 * max(1.0, np.abs(S).max())

    def test_rejects_indefinite_prior(self):
        with pytest.raises(ValueError, match="semi-definite"):
            mmse_error_cov(1.0, np.eye(2), np.eye(2), np.diag([1.0, -1.0]), ChannelConfig())


class TestTransmit:
    def test_zero_power(self):
        cfg = ChannelConfig()
        S = np.eye(2)
        out = transmit_ul(np.array([1.0, -1.0]), 0.0, np.ones((2, 2)), np.eye(2), S,
                          cfg, RngStream(0).substream("rx"))
        assert np.allclose(out.x_tilde, 0.0)
        assert np.allclose(out.V_cov, S)
        assert out.gamma == 0.0
        assert not out.success

    def test_noiseless_limit_recovers_state(self):
        cfg = ChannelConfig(N0=1e-12, gamma0=1.0)
        x = np.array([0.4, -0.9])
        H = np.array([[1.0, 0.2], [-0.3, 0.8]])  # invertible
        out = transmit_ul(x, 1.0, H, np.eye(2), 10.0 * np.eye(2), cfg,
                          RngStream(1).substream("rx"))
        assert np.allclose(out.x_tilde, x, atol=1e-6)
        assert np.max(np.abs(out.V_cov)) < 1e-6

    def test_success_flag_matches_threshold(self):
        cfg = ChannelConfig()
        H = np.array([[1.0, 0.0], [0.0, 1.0]])
        rng = RngStream(2).substream("rx")
        hit = transmit_ul(np.zeros(2), 100.0, H, np.eye(2), np.eye(2), cfg, rng)
        miss = transmit_ul(np.zeros(2), 10.0, H, np.eye(2), np.eye(2), cfg, rng)
        assert hit.success and hit.gamma >= cfg.gamma0
        assert not miss.success and miss.gamma < cfg.gamma0

    def test_mean_decode_matches_deterministic_part(self):
        cfg = ChannelConfig(gamma0=1.0)
        x = np.array([0.8, -0.5])
        H = np.array([[0.9, 0.1], [-0.2, 0.7]])
        S = np.eye(2)
        p = 4.0
        G, V = mmse_error_cov(p, H, np.eye(2), S, cfg)
        rng = RngStream(3).substream("rx")
        n = 10_000
        acc = np.zeros(2)
        for _ in range(n):
            acc += transmit_ul(x, p, H, np.eye(2), S, cfg, rng).x_tilde
        expected = G @ (np.sqrt(p) * H @ x)
        assert np.linalg.norm(acc / n - expected) <= 3.0 * np.sqrt(np.trace(V) / n)

    def test_rejects_out_of_range_power(self):
        cfg = ChannelConfig()
        with pytest.raises(ValueError):
            transmit_ul(np.zeros(2), 2000.0, np.eye(2), np.eye(2), np.eye(2), cfg,
                        RngStream(0))
