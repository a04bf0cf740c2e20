"""Lower bounds on the achievable average download cost.

Two relaxations admit exact threshold policies computed by dynamic-programming
recursions over the cost distribution: unlimited cache capacity (per-lifetime
download thresholds) and non-causal knowledge of the access times (thresholds
indexed by the gap to the next access). Their rollout estimates bracket every
implementable scheme from below.

The cost distribution has no usable closed form (uniform distance through a
log-pathloss plus truncated log-normal shadowing), so all expectations run
over an empirical sample pool.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelConfig, DiscreteCostChannel, initial_mobility_state, sample_cost
from .content import AccessModel
from .engine import Env, SimResult, Stream, draw_stream, simulate
from .errors import ImpossibleStateError


@dataclass
class ChannelStats:
    """Empirical cost distribution with prefix sums for conditional means."""

    sample_pool: np.ndarray
    mean_cost: float = field(init=False)
    _prefix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pool = np.sort(np.asarray(self.sample_pool, dtype=float))
        if pool.size == 0:
            raise ValueError("sample pool must be nonempty")
        self.sample_pool = pool
        self.mean_cost = float(pool.mean())
        self._prefix = np.concatenate([[0.0], np.cumsum(pool)])

    @classmethod
    def from_samples(cls, samples) -> "ChannelStats":
        return cls(np.asarray(samples, dtype=float))

    def cdf(self, t: float) -> float:
        """P(C <= t)."""
        k = np.searchsorted(self.sample_pool, t, side="right")
        return k / self.sample_pool.size

    def cond_mean_below(self, t: float) -> float:
        """E[C | C <= t]; zero when no mass lies below t."""
        k = int(np.searchsorted(self.sample_pool, t, side="right"))
        if k == 0:
            return 0.0
        return float(self._prefix[k] / k)

    def expected_min(self, t: float) -> float:
        """E[min(C, t)] = P(C<=t) E[C|C<=t] + P(C>t) t."""
        n = self.sample_pool.size
        k = int(np.searchsorted(self.sample_pool, t, side="right"))
        return float((self._prefix[k] + (n - k) * t) / n)


def estimate_channel_stats(
    channel: ChannelConfig | DiscreteCostChannel, n_samples: int, seed
) -> ChannelStats:
    """Draw an i.i.d.-in-steady-state cost pool from the channel model.

    Under random-walk mobility the pool is the marginal along one long walk,
    which is what the stationary recursions need.
    """
    rng = np.random.default_rng(seed)
    if isinstance(channel, DiscreteCostChannel):
        return ChannelStats(channel.sample(rng, size=n_samples))
    state = initial_mobility_state(rng, channel)
    if state is None:
        # vectorized i.i.d. draws; sample_cost is the scalar reference path
        from .channel import download_cost_mw, sample_shadow_db

        d = rng.uniform(channel.d_min_m, channel.d_max_m, size=n_samples)
        shadow = sample_shadow_db(rng, channel, size=n_samples)
        return ChannelStats(download_cost_mw(d, shadow, channel))
    samples = np.empty(n_samples)
    for i in range(n_samples):
        samples[i], state = sample_cost(rng, state, channel)
    return ChannelStats(samples)


@dataclass
class UcThresholds:
    """Per-lifetime download thresholds of the unlimited-cache relaxation.

    by_lifetime[L] applies to a content with remaining lifetime L under IRM
    access; by_elapsed_grid[L, E] (when present) additionally conditions on
    the elapsed time since the last access for bounded inter-access times.
    """

    by_lifetime: np.ndarray                   # (k_max+1,), index 0 unused
    by_elapsed_grid: np.ndarray | None = None  # (k_max+1, d_max)

    @property
    def k_max(self) -> int:
        return self.by_lifetime.size - 1

    def value(self, lifetime: int, elapsed: int | None = None) -> float:
        if not 1 <= lifetime <= self.k_max:
            raise ValueError(f"lifetime {lifetime} out of range")
        if self.by_elapsed_grid is None or elapsed is None:
            return float(self.by_lifetime[lifetime])
        if elapsed >= self.by_elapsed_grid.shape[1]:
            raise ImpossibleStateError(
                f"elapsed={elapsed} beyond the bounded inter-access grid"
            )
        return float(self.by_elapsed_grid[lifetime, elapsed])


def lbuc_thresholds_irm(stats: ChannelStats, k_max: int, p_a: float) -> UcThresholds:
    """Unlimited-cache thresholds under IRM access.

    T_1 = 0 and T_{L+1} = p_a E[C] + (1-p_a) E[min(C, T_L)]; the second term
    is the expected future cost of leaving the content outside one more slot.
    """
    vals = np.zeros(k_max + 1)
    for L in range(1, k_max):
        vals[L + 1] = p_a * stats.mean_cost + (1.0 - p_a) * stats.expected_min(vals[L])
    return UcThresholds(by_lifetime=vals)


def lbuc_thresholds_general(
    stats: ChannelStats, k_max: int, access: AccessModel
) -> UcThresholds:
    """Unlimited-cache thresholds on the (lifetime, elapsed) grid.

    Needs a bounded inter-access model; the grid spans elapsed values
    0..D_max-1 (larger values cannot occur). The recursion steps the elapsed
    index forward because deferring a download moves the state to E+1.
    """
    if access.kind != "bounded":
        raise ValueError("the grid recursion needs a bounded access model")
    d_max = access.d_max
    hazard = np.array([access.hazard(e) for e in range(d_max)])
    grid = np.zeros((k_max + 1, d_max))
    for L in range(1, k_max):
        for e in range(d_max):
            p_e = hazard[e]
            if p_e >= 1.0:
                cont = 0.0
            else:
                cont = (1.0 - p_e) * stats.expected_min(grid[L, e + 1])
            grid[L + 1, e] = p_e * stats.mean_cost + cont
    irm_like = grid[:, 0].copy()
    return UcThresholds(by_lifetime=irm_like, by_elapsed_grid=grid)


@dataclass
class NckThresholds:
    """Thresholds of the non-causal relaxation, indexed by slots-to-access.

    by_gap[G-1] is the threshold with G slots left; the sequence is stored up
    to numerical convergence and held constant beyond (geometric gaps are
    unbounded under IRM).
    """

    by_gap: np.ndarray

    def for_gap(self, gap: int) -> float:
        if gap < 1:
            raise ValueError("the gap-indexed threshold needs gap >= 1")
        return float(self.by_gap[min(gap, self.by_gap.size) - 1])

    def for_gaps(self, gaps: np.ndarray) -> np.ndarray:
        idx = np.minimum(np.asarray(gaps, dtype=np.int64), self.by_gap.size) - 1
        return self.by_gap[idx]


def lbnck_thresholds(
    stats: ChannelStats, g_max: int | None = None, rel_tol: float = 1e-6
) -> NckThresholds:
    """Gap recursion T_1 = E[C], T_G = E[min(C, T_{G-1})].

    Stops at g_max or once successive values differ by less than
    rel_tol * E[C], whichever comes first.
    """
    if g_max is not None and g_max < 1:
        raise ValueError("g_max must be >= 1")
    cap = g_max if g_max is not None else 100_000
    vals = [stats.mean_cost]
    while len(vals) < cap:
        nxt = stats.expected_min(vals[-1])
        converged = abs(vals[-1] - nxt) < rel_tol * stats.mean_cost
        vals.append(nxt)
        if converged and g_max is None:
            break
    return NckThresholds(by_gap=np.asarray(vals))


class UcBoundDriver:
    """Unlimited-cache policy: download lifetime L whenever C <= T_L."""

    unlimited_cache = True

    def __init__(self, env: Env, thresholds: UcThresholds):
        self.env = env
        self.th = thresholds
        if thresholds.k_max < env.k_max:
            raise ValueError("threshold table shorter than the lifetime range")

    def decide(self, outside, inside, cost, elapsed, active, rng):
        k1 = outside.shape[1]
        if self.th.by_elapsed_grid is not None:
            e = np.minimum(elapsed, self.th.by_elapsed_grid.shape[1] - 1)
            th_rows = self.th.by_elapsed_grid[:k1, e].T  # (n, k1)
        else:
            th_rows = np.broadcast_to(self.th.by_lifetime[:k1], outside.shape)
        fire = (cost[:, None] <= th_rows) & active[:, None]
        dl = np.where(fire, outside, 0).astype(np.int64)
        return dl, np.zeros_like(dl)


def rollout_lbuc(
    env: Env, thresholds: UcThresholds, t_slots: int, seed, n_traj: int = 1
) -> SimResult:
    """Monte Carlo estimate of the unlimited-cache bound."""
    stream = draw_stream(env, n_traj, t_slots, seed)
    return simulate_lbuc(env, stream, thresholds)


def simulate_lbuc(env: Env, stream: Stream, thresholds: UcThresholds) -> SimResult:
    return simulate(env, stream, UcBoundDriver(env, thresholds))


def rollout_lbnck(
    env: Env,
    thresholds: NckThresholds,
    b: int,
    t_slots: int,
    seed,
    n_traj: int = 1,
) -> SimResult:
    """Monte Carlo estimate of the non-causal bound with cache capacity b."""
    stream = draw_stream(env, n_traj, t_slots, seed)
    return simulate_lbnck(env, stream, thresholds, b)


def simulate_lbnck(
    env: Env, stream: Stream, thresholds: NckThresholds, b: int | None = None
) -> SimResult:
    """Replay a stream under the non-causal policy.

    Contents expiring before the next access never exist for this policy;
    of the survivors, the first b per inter-access interval may be cached
    early (all pending ones download together once C drops below the gap
    threshold), and whatever remains is bought at the access slot.
    """
    if b is None:
        b = env.b
    T, n = stream.access.shape
    k1 = env.k_max + 1
    lifetimes = np.arange(k1)[None, :]
    pool_quota = np.full(n, b, dtype=np.int64)
    pool_pending = np.zeros(n, dtype=np.int64)
    rest = np.zeros(n, dtype=np.int64)
    mu_sum = np.zeros(n)

    for t in range(T):
        gap = stream.next_access[t] - t
        survivors = (
            (stream.new_counts[t] * (lifetimes >= gap[:, None] + 1)).sum(axis=1)
        ).astype(np.int64)
        acc = stream.access[t]
        cost = stream.cost[t]
        pro = ~acc

        take = np.where(pro, np.minimum(pool_quota, survivors), 0)
        pool_pending += take
        pool_quota -= take
        rest += np.where(pro, survivors - take, 0)

        th = thresholds.for_gaps(np.maximum(gap, 1))
        fire = pro & (cost <= th)
        mu = np.where(fire, pool_pending * cost, 0.0)
        pool_pending = np.where(fire, 0, pool_pending)

        mu = np.where(acc, (pool_pending + rest + survivors) * cost, mu)
        pool_quota = np.where(acc, b, pool_quota)
        pool_pending = np.where(acc, 0, pool_pending)
        rest = np.where(acc, 0, rest)
        mu_sum += mu

    return SimResult(j=mu_sum / T, n_slots=T)
