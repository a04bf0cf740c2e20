import numpy as np
import pytest

from procache.channel import (
    ChannelConfig,
    DiscreteCostChannel,
    download_cost_mw,
    initial_mobility_state,
    max_cost_mw,
    noise_power_dbm,
    pathloss_db,
    required_snr_db,
    sample_cost,
    sample_shadow_db,
    walk_distance,
)

CFG = ChannelConfig()


def test_noise_power_defaults():
    assert noise_power_dbm(CFG) == pytest.approx(-99.0, abs=1e-12)


def test_noise_power_is_psd_at_unit_bandwidth():
    cfg = ChannelConfig(bandwidth_hz=1.0, noise_figure_db=0.0)
    assert noise_power_dbm(cfg) == pytest.approx(-174.0, abs=1e-12)


def test_noise_power_doubling_bandwidth():
    doubled = ChannelConfig(bandwidth_hz=2 * CFG.bandwidth_hz)
    assert noise_power_dbm(doubled) - noise_power_dbm(CFG) == pytest.approx(
        10 * np.log10(2), abs=1e-12
    )


def test_pathloss_hand_values():
    # 36.7*log10(100) + 22.7 + 26*log10(2.5) = 73.4 + 22.7 + 10.346
    assert pathloss_db(100.0, 0.0, CFG) == pytest.approx(106.449, abs=0.01)
    assert pathloss_db(50.0, 0.0, CFG) == pytest.approx(95.401, abs=0.01)


def test_pathloss_shadow_additivity():
    assert pathloss_db(120.0, 4.0, CFG) - pathloss_db(120.0, 0.0, CFG) == pytest.approx(
        4.0, abs=1e-12
    )


def test_pathloss_distance_range_check():
    with pytest.raises(ValueError):
        pathloss_db(10.0, 0.0, CFG)
    with pytest.raises(ValueError):
        pathloss_db(1000.0, 0.0, CFG)


def test_required_snr():
    assert required_snr_db(CFG) == pytest.approx(10 * np.log10(3), abs=1e-12)
    assert required_snr_db(CFG) == pytest.approx(4.771, abs=1e-3)


def test_download_cost_hand_chain():
    # -99 + 4.771 + 106.446 - 17 = -4.782 dBm -> 0.3325 mW
    assert download_cost_mw(100.0, 0.0, CFG) == pytest.approx(0.3326, abs=5e-4)


def test_download_cost_monotone_in_distance():
    d = np.linspace(CFG.d_min_m, CFG.d_max_m, 64)
    costs = download_cost_mw(d, 0.0, CFG)
    assert np.all(np.diff(costs) > 0)
    assert np.all(costs > 0)


def test_download_cost_deterministic():
    a = download_cost_mw(137.5, 1.25, CFG)
    b = download_cost_mw(137.5, 1.25, CFG)
    assert a == b


def test_max_cost_caps_samples():
    cmax = max_cost_mw(CFG)
    rng = np.random.default_rng(7)
    d = rng.uniform(CFG.d_min_m, CFG.d_max_m, size=20000)
    shadow = sample_shadow_db(rng, CFG, size=20000)
    assert np.all(download_cost_mw(d, shadow, CFG) <= cmax)


def test_shadow_truncation_bounds():
    rng = np.random.default_rng(3)
    s = sample_shadow_db(rng, CFG, size=200_000)
    cap = CFG.shadow_trunc_sigmas * CFG.shadow_sigma_db
    assert np.all(np.abs(s) <= cap)
    assert abs(s.mean()) < 0.05


def test_sample_cost_deterministic_when_degenerate():
    cfg = ChannelConfig(shadow_sigma_db=0.0, d_min_m=100.0, d_max_m=100.0 + 1e-9)
    rng = np.random.default_rng(0)
    c, _ = sample_cost(rng, None, cfg)
    assert c == pytest.approx(download_cost_mw(100.0, 0.0, cfg), rel=1e-9)


def test_walk_forced_inward_at_boundaries():
    cfg = ChannelConfig(mobility="random_walk")
    rng = np.random.default_rng(1)
    assert walk_distance(rng, 50.0, cfg) == 55.0
    assert walk_distance(rng, 250.0, cfg) == 245.0


def test_walk_stays_in_range():
    cfg = ChannelConfig(mobility="random_walk")
    rng = np.random.default_rng(5)
    # one thousand chains of one thousand steps: a million walk steps
    d = rng.uniform(cfg.d_min_m, cfg.d_max_m, size=1000)
    for _ in range(1000):
        up = rng.random(1000) < cfg.walk_p_away
        step = np.where(up, cfg.walk_step_m, -cfg.walk_step_m)
        step = np.where(d <= cfg.d_min_m, cfg.walk_step_m, step)
        step = np.where(d >= cfg.d_max_m, -cfg.walk_step_m, step)
        d = np.clip(d + step, cfg.d_min_m, cfg.d_max_m)
        assert d.min() >= cfg.d_min_m and d.max() <= cfg.d_max_m


def test_iid_mean_cost_stable_across_seeds():
    means = []
    for seed in (11, 22):
        rng = np.random.default_rng(seed)
        d = rng.uniform(CFG.d_min_m, CFG.d_max_m, size=1_000_000)
        shadow = sample_shadow_db(rng, CFG, size=1_000_000)
        means.append(download_cost_mw(d, shadow, CFG).mean())
    assert means[0] == pytest.approx(means[1], rel=0.01)
    assert np.isfinite(means).all()


def test_mobility_state_round_trip():
    cfg = ChannelConfig(mobility="random_walk")
    rng = np.random.default_rng(9)
    state = initial_mobility_state(rng, cfg)
    assert cfg.d_min_m <= state <= cfg.d_max_m
    cost, state2 = sample_cost(rng, state, cfg)
    assert cost > 0 and abs(state2 - state) == cfg.walk_step_m
    assert initial_mobility_state(rng, CFG) is None


def test_discrete_channel():
    ch = DiscreteCostChannel(values=(0.5, 2.0), probs=(0.75, 0.25))
    assert ch.mean == pytest.approx(0.875)
    assert ch.max_cost() == 2.0
    rng = np.random.default_rng(2)
    draws = ch.sample(rng, size=50_000)
    assert set(np.unique(draws)) == {0.5, 2.0}
    assert draws.mean() == pytest.approx(0.875, abs=0.01)
    with pytest.raises(ValueError):
        DiscreteCostChannel(values=(1.0,), probs=(0.5,))
