"""Per-slot download cost from an LTE-style urban-micro link budget.

The cost of downloading one content in a slot is the transmit power (mW)
needed to hit a fixed spectral efficiency over the current pathloss and
shadowing, i.e. the Shannon formula inverted for signal power. Distance
follows either an i.i.d. uniform draw per slot (user hops between micro
base stations) or a bounded random walk (mobile user with memory).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PATHLOSS_DIST_COEFF = 36.7
PATHLOSS_CONST_DB = 22.7
PATHLOSS_FREQ_COEFF = 26.0

MOBILITY_IID = "iid_uniform"
MOBILITY_WALK = "random_walk"


@dataclass(frozen=True)
class ChannelConfig:
    noise_psd_dbm_per_hz: float = -174.0
    noise_figure_db: float = 5.0
    bandwidth_hz: float = 10e6
    center_freq_ghz: float = 2.5
    tx_gain_dbi: float = 17.0
    rx_gain_dbi: float = 0.0
    spectral_eff_bps_per_hz: float = 2.0
    shadow_sigma_db: float = 4.0
    # Shadowing is truncated (resampled) at +/- this many sigmas so that the
    # cost is bounded; C_max below is exact under the truncation.
    shadow_trunc_sigmas: float = 3.0
    d_min_m: float = 50.0
    d_max_m: float = 250.0
    mobility: str = MOBILITY_IID
    walk_step_m: float = 5.0
    walk_p_away: float = 0.5

    def __post_init__(self):
        if not self.d_min_m < self.d_max_m:
            raise ValueError("need d_min < d_max")
        if self.bandwidth_hz <= 0 or self.spectral_eff_bps_per_hz <= 0:
            raise ValueError("bandwidth and spectral efficiency must be positive")
        if self.mobility not in (MOBILITY_IID, MOBILITY_WALK):
            raise ValueError(f"unknown mobility model {self.mobility!r}")
        if self.shadow_sigma_db < 0 or self.shadow_trunc_sigmas <= 0:
            raise ValueError("invalid shadowing parameters")


def noise_power_dbm(cfg: ChannelConfig) -> float:
    """Thermal noise power over the configured bandwidth, adding the noise figure."""
    return (
        cfg.noise_psd_dbm_per_hz
        + 10.0 * np.log10(cfg.bandwidth_hz)
        + cfg.noise_figure_db
    )


def required_snr_db(cfg: ChannelConfig) -> float:
    """SNR needed for the configured spectral efficiency (Shannon inversion)."""
    return 10.0 * np.log10(2.0 ** cfg.spectral_eff_bps_per_hz - 1.0)


def pathloss_db(d, shadow_db, cfg: ChannelConfig):
    """Urban-micro NLOS pathloss at distance d meters plus the shadowing term."""
    d = np.asarray(d, dtype=float)
    if np.any(d < cfg.d_min_m) or np.any(d > cfg.d_max_m):
        raise ValueError(f"distance outside [{cfg.d_min_m}, {cfg.d_max_m}] m")
    pl = (
        PATHLOSS_DIST_COEFF * np.log10(d)
        + PATHLOSS_CONST_DB
        + PATHLOSS_FREQ_COEFF * np.log10(cfg.center_freq_ghz)
        + shadow_db
    )
    return pl if pl.shape else float(pl)


def download_cost_mw(d, shadow_db, cfg: ChannelConfig):
    """Per-content download cost in mW at the given distance and shadowing."""
    c_dbm = (
        noise_power_dbm(cfg)
        + required_snr_db(cfg)
        + pathloss_db(d, shadow_db, cfg)
        - cfg.tx_gain_dbi
        - cfg.rx_gain_dbi
    )
    out = 10.0 ** (np.asarray(c_dbm) / 10.0)
    return out if out.shape else float(out)


def max_cost_mw(cfg: ChannelConfig) -> float:
    """Largest possible cost: cell edge with the shadowing at its truncation cap."""
    return download_cost_mw(
        cfg.d_max_m, cfg.shadow_trunc_sigmas * cfg.shadow_sigma_db, cfg
    )


def sample_shadow_db(rng: np.random.Generator, cfg: ChannelConfig, size=None):
    """Zero-mean normal shadowing in dB, resampled beyond the truncation cap."""
    cap = cfg.shadow_trunc_sigmas * cfg.shadow_sigma_db
    if cfg.shadow_sigma_db == 0.0:
        return 0.0 if size is None else np.zeros(size)
    x = rng.normal(0.0, cfg.shadow_sigma_db, size=size)
    if size is None:
        while abs(x) > cap:
            x = rng.normal(0.0, cfg.shadow_sigma_db)
        return float(x)
    bad = np.abs(x) > cap
    while np.any(bad):
        x[bad] = rng.normal(0.0, cfg.shadow_sigma_db, size=int(bad.sum()))
        bad = np.abs(x) > cap
    return x


def initial_mobility_state(rng: np.random.Generator, cfg: ChannelConfig) -> float | None:
    """Mobility state before the first slot: a distance for the walk, else None."""
    if cfg.mobility == MOBILITY_WALK:
        return float(rng.uniform(cfg.d_min_m, cfg.d_max_m))
    return None


def walk_distance(rng: np.random.Generator, d: float, cfg: ChannelConfig) -> float:
    """One random-walk step; at the boundary only the inward direction exists."""
    step = cfg.walk_step_m
    if d <= cfg.d_min_m:
        return d + step
    if d >= cfg.d_max_m:
        return d - step
    if rng.random() < cfg.walk_p_away:
        return min(d + step, cfg.d_max_m)
    return max(d - step, cfg.d_min_m)


def sample_cost(
    rng: np.random.Generator, mobility_state: float | None, cfg: ChannelConfig
) -> tuple[float, float | None]:
    """Draw one slot's download cost and the updated mobility state."""
    if cfg.mobility == MOBILITY_IID:
        d = float(rng.uniform(cfg.d_min_m, cfg.d_max_m))
        state = None
    else:
        if mobility_state is None:
            raise ValueError("random_walk mobility needs a distance state")
        d = walk_distance(rng, mobility_state, cfg)
        state = d
    shadow = sample_shadow_db(rng, cfg)
    return download_cost_mw(d, shadow, cfg), state


@dataclass(frozen=True)
class DiscreteCostChannel:
    """Synthetic i.i.d. cost channel on finitely many levels.

    Used by the exact DP oracle and by closed-form test instances, where the
    cost distribution must be enumerable.
    """

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.size == 0 or v.size != p.size:
            raise ValueError("values and probs must be nonempty and equal length")
        if np.any(v <= 0):
            raise ValueError("costs must be strictly positive")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probs must form a distribution")

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def max_cost(self) -> float:
        return max(self.values)

    def sample(self, rng: np.random.Generator, size=None):
        idx = rng.choice(len(self.values), size=size, p=self.probs)
        vals = np.asarray(self.values)[idx]
        return float(vals) if size is None else vals
