"""Vectorized rollout engine.

Environment randomness (content arrivals, user accesses, channel costs) is
policy-independent, so it is pre-drawn into a Stream; simulating a scheme is
then a deterministic pass over the stream. Evaluating several schemes on the
same stream gives common random numbers for paired comparisons, and a
(seed, config) pair fully determines every trajectory.

State is kept as per-trajectory count vectors indexed by remaining lifetime,
one row per trajectory, so a batch of rollouts advances with a fixed number
of numpy operations per slot.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import (
    ChannelConfig,
    DiscreteCostChannel,
    MOBILITY_IID,
    MOBILITY_WALK,
    download_cost_mw,
    max_cost_mw,
    sample_shadow_db,
)
from .content import AccessModel, ContentGenConfig, REGIME_LONG, REGIME_SHORT
from .policy import LFA, LISO, Params, build_pair_index, sigmoid


@dataclass(frozen=True)
class Env:
    """Everything that defines one caching problem instance."""

    b: int
    content: ContentGenConfig
    access: AccessModel
    channel: ChannelConfig | DiscreteCostChannel

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("cache capacity must be >= 0")

    @property
    def k_max(self) -> int:
        return self.content.k_max

    @property
    def c_max(self) -> float:
        if isinstance(self.channel, DiscreteCostChannel):
            return self.channel.max_cost()
        return max_cost_mw(self.channel)


@dataclass
class Stream:
    """Pre-drawn environment randomness for a batch of trajectories.

    Arrays are indexed [slot, trajectory]; new_counts additionally by
    remaining lifetime. elapsed is the decision-time value (0 on access
    slots); next_access[t] is the index of the first access slot >= t and
    may point past the horizon (accesses are extended beyond T so that the
    gap is always defined).
    """

    new_counts: np.ndarray  # (T, n, k_max+1) int16
    access: np.ndarray      # (T, n) bool
    cost: np.ndarray        # (T, n) float64
    elapsed: np.ndarray     # (T, n) int32
    next_access: np.ndarray  # (T, n) int64

    @property
    def n_slots(self) -> int:
        return self.new_counts.shape[0]

    @property
    def n_traj(self) -> int:
        return self.new_counts.shape[1]


def draw_stream(env: Env, n: int, t_slots: int, seed) -> Stream:
    """Draw the environment randomness for n trajectories of t_slots slots."""
    rng = np.random.default_rng(seed)
    content = env.content
    k1 = env.k_max + 1
    T = t_slots

    # Content arrivals.
    sizes = rng.integers(1, content.m_max + 1, size=(T, n))
    new_counts = np.zeros((T, n, k1), dtype=np.int16)
    if content.mode == "iid":
        support = np.asarray(content.lifetime_support)
        draws = support[rng.integers(0, support.size, size=(T, n, content.m_max))]
        present = np.arange(content.m_max)[None, None, :] < sizes[:, :, None]
        for v in support:
            new_counts[:, :, v] = ((draws == v) & present).sum(axis=2)
    else:
        long0 = rng.random(n) >= content.stationary_short_prob()
        flips = rng.random((T, n))
        is_long = np.empty((T, n), dtype=bool)
        prev = long0
        for t in range(T):
            stay = np.where(prev, content.p2, content.p1)
            is_long[t] = np.where(flips[t] < stay, prev, ~prev)
            prev = is_long[t]
        lifetimes = np.where(is_long, content.long_lifetime, content.short_lifetime)
        rows = np.broadcast_to(np.arange(n)[None, :], (T, n))
        slots = np.broadcast_to(np.arange(T)[:, None], (T, n))
        np.add.at(new_counts, (slots.ravel(), rows.ravel(), lifetimes.ravel()),
                  sizes.ravel().astype(np.int16))

    # User accesses and decision-time elapsed counters.
    access_u = rng.random((T, n))
    access = np.empty((T, n), dtype=bool)
    elapsed = np.empty((T, n), dtype=np.int32)
    e_run = np.zeros(n, dtype=np.int32)
    if env.access.kind == "irm":
        access[:] = access_u < env.access.p_a
        for t in range(T):
            e_run = np.where(access[t], 0, e_run + 1)
            elapsed[t] = e_run
    else:
        hazard = np.array([env.access.hazard(e) for e in range(env.access.d_max)])
        for t in range(T):
            access[t] = access_u[t] < hazard[e_run]
            e_run = np.where(access[t], 0, e_run + 1).astype(np.int32)
            elapsed[t] = e_run

    # Channel costs.
    if isinstance(env.channel, DiscreteCostChannel):
        cost = env.channel.sample(rng, size=(T, n)).astype(np.float64)
    else:
        ch = env.channel
        if ch.mobility == MOBILITY_IID:
            d = rng.uniform(ch.d_min_m, ch.d_max_m, size=(T, n))
        else:
            d0 = rng.uniform(ch.d_min_m, ch.d_max_m, size=n)
            up = rng.random((T, n)) < ch.walk_p_away
            d = np.empty((T, n))
            prev_d = d0
            for t in range(T):
                stepped = np.where(up[t], prev_d + ch.walk_step_m,
                                   prev_d - ch.walk_step_m)
                stepped = np.where(prev_d <= ch.d_min_m, prev_d + ch.walk_step_m,
                                   stepped)
                stepped = np.where(prev_d >= ch.d_max_m, prev_d - ch.walk_step_m,
                                   stepped)
                prev_d = np.clip(stepped, ch.d_min_m, ch.d_max_m)
                d[t] = prev_d
        shadow = sample_shadow_db(rng, ch, size=(T, n))
        cost = download_cost_mw(d, shadow, ch)

    # First access at or beyond every slot (extended past the horizon).
    if env.access.kind == "irm":
        beyond = T + rng.geometric(env.access.p_a, size=n) - 1
    else:
        beyond = np.full(n, -1, dtype=np.int64)
        e_tail = e_run.astype(np.int64)
        t_ext = T
        while np.any(beyond < 0):
            pending = beyond < 0
            hz = np.zeros(n)
            for i in np.nonzero(pending)[0]:
                hz[i] = env.access.hazard(int(e_tail[i]))
            hit = (rng.random(n) < hz) & pending
            beyond[hit] = t_ext
            e_tail = np.where(hit, 0, e_tail + 1)
            t_ext += 1
    next_access = np.empty((T, n), dtype=np.int64)
    nxt = beyond.astype(np.int64)
    for t in range(T - 1, -1, -1):
        nxt = np.where(access[t], t, nxt)
        next_access[t] = nxt

    return Stream(new_counts, access, cost, elapsed, next_access)


def shift_down(counts: np.ndarray) -> np.ndarray:
    """Decrement every lifetime by one slot; lifetime-1 contents expire."""
    out = np.zeros_like(counts)
    out[:, 1:-1] = counts[:, 2:]
    return out


def sorted_pairing_batch(
    inside: np.ndarray, outside: np.ndarray, b: int
) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise swap pairing: cache ascending (zero-padded) vs outside descending."""
    n = inside.shape[0]
    if b == 0:
        empty = np.zeros((n, 0), dtype=np.int64)
        return empty, empty
    csum = inside.cumsum(axis=1)
    rank = np.arange(1, b + 1)[None, :] - (b - csum[:, -1])[:, None]
    ls = 1 + (csum[:, 1:, None] < rank[:, None, :]).sum(axis=1)
    ls = np.where(rank <= 0, 0, ls)
    dsum = outside[:, ::-1].cumsum(axis=1)[:, ::-1]
    Ls = (dsum[:, 1:, None] >= np.arange(1, b + 1)[None, None, :]).sum(axis=1)
    return ls.astype(np.int64), Ls.astype(np.int64)


def scatter_counts(target: np.ndarray, values: np.ndarray, mask: np.ndarray) -> None:
    """Add one unit at (row, values[row, j]) for every masked pairing slot."""
    if not mask.any():
        return
    rows = np.broadcast_to(
        np.arange(target.shape[0])[:, None], values.shape
    )
    np.add.at(target, (rows[mask], values[mask]), 1)


class ThresholdDriver:
    """LISO/LFA policy over the swap pairing, deterministic or randomized.

    flat_matrix optionally carries one parameter vector per trajectory row
    (finite-difference exploration); otherwise the canonical parameters are
    shared by all rows. With collect_grads the driver accumulates the
    score-function gradient of every performed composite action into
    self.grad, one row per trajectory.
    """

    unlimited_cache = False

    def __init__(
        self,
        env: Env,
        params: Params,
        flat_matrix: np.ndarray | None = None,
        randomized: bool = False,
        eta: float | None = None,
        collect_grads: bool = False,
    ):
        self.env = env
        self.params = params
        self.kind = params.kind
        self.k_max = params.k_max
        self.c_max = params.c_max
        self.npairs = params.flat().size if params.kind == LISO else params.weights.shape[1]
        self.pair_index = build_pair_index(self.k_max)
        self.flat_matrix = None if flat_matrix is None else np.asarray(flat_matrix, float)
        self.randomized = randomized
        if randomized and (eta is None or eta <= 0):
            raise ValueError("randomized mode needs eta > 0")
        self.eta = eta
        self.collect_grads = collect_grads
        self.grad: np.ndarray | None = None

    def _pair_thresholds(self, phi: np.ndarray):
        """(n, npairs) thresholds and, for LFA, the clamp-gate mask."""
        if self.kind == LISO:
            if self.flat_matrix is None:
                th = np.broadcast_to(self.params.values, (phi.shape[0], self.npairs))
            else:
                th = self.flat_matrix
            return th, None
        if self.flat_matrix is None:
            raw = phi @ self.params.weights
        else:
            w3 = self.flat_matrix.reshape(-1, self.k_max + 1, self.npairs)
            raw = np.einsum("nk,nkp->np", phi, w3)
        gate = (raw > 0.0) & (raw < self.c_max)
        return np.clip(raw, 0.0, self.c_max), gate

    def decide(self, outside, inside, cost, elapsed, active, rng):
        n, k1 = outside.shape
        b = self.env.b
        dl = np.zeros((n, k1), dtype=np.int64)
        dc = np.zeros((n, k1), dtype=np.int64)
        if self.collect_grads and self.grad is None:
            self.grad = np.zeros((n, self.params.dim))
        if b == 0 or not active.any():
            return dl, dc
        phi = inside / b
        phi[:, 0] = (b - inside.sum(axis=1)) / b
        ls, Ls = sorted_pairing_batch(inside, outside, b)
        valid = ls < Ls
        pidx = self.pair_index[ls, Ls]
        th_pairs, gate = self._pair_thresholds(phi)
        rows2d = np.broadcast_to(np.arange(n)[:, None], (n, b))
        th = np.where(valid, th_pairs[rows2d, np.where(valid, pidx, 0)], -np.inf)
        if self.randomized:
            prob = np.where(valid, sigmoid(self.eta * (th - cost[:, None])), 0.0)
            fire = (rng.random((n, b)) < prob) & active[:, None]
        else:
            fire = valid & (cost[:, None] <= th) & active[:, None]
        stopped = ~fire
        n_swaps = np.where(stopped.any(axis=1), stopped.argmax(axis=1), b)
        performed = np.arange(b)[None, :] < n_swaps[:, None]
        scatter_counts(dl, Ls, performed)
        scatter_counts(dc, ls, performed & (ls > 0))
        if self.randomized and self.collect_grads:
            self._accumulate_grads(
                phi, gate, pidx, prob, performed, n_swaps, valid, active
            )
        return dl, dc

    def _accumulate_grads(self, phi, gate, pidx, prob, performed, n_swaps, valid, active):
        n, b = performed.shape
        rows_acc, cols_acc = np.nonzero(performed)
        terms = self.eta * (1.0 - prob[rows_acc, cols_acc])
        failed = (n_swaps < b) & active
        if failed.any():
            rows_f = np.nonzero(failed)[0]
            cols_f = n_swaps[rows_f]
            ok = valid[rows_f, cols_f]
            rows_f, cols_f = rows_f[ok], cols_f[ok]
            rows_acc = np.concatenate([rows_acc, rows_f])
            terms = np.concatenate([terms, -self.eta * prob[rows_f, cols_f]])
            cols_acc = np.concatenate([cols_acc, cols_f])
        if rows_acc.size == 0:
            return
        pairs = pidx[rows_acc, cols_acc]
        if self.kind == LISO:
            np.add.at(self.grad, (rows_acc, pairs), terms)
        else:
            gated = terms * gate[rows_acc, pairs]
            for i in range(self.k_max + 1):
                np.add.at(
                    self.grad,
                    (rows_acc, i * self.npairs + pairs),
                    gated * phi[rows_acc, i],
                )


class ReactiveDriver:
    """No proactive action ever."""

    unlimited_cache = False

    def decide(self, outside, inside, cost, elapsed, active, rng):
        zeros = np.zeros_like(outside)
        return zeros, zeros.copy()


class RandomCacheDriver:
    """Download outside contents with probability p_r while capacity remains."""

    unlimited_cache = False

    def __init__(self, env: Env, p_r: float):
        self.env = env
        self.p_r = p_r

    def decide(self, outside, inside, cost, elapsed, active, rng):
        n, k1 = outside.shape
        dl = np.zeros((n, k1), dtype=np.int64)
        dc = np.zeros((n, k1), dtype=np.int64)
        if self.env.b == 0 or self.p_r == 0.0:
            return dl, dc
        # successes per lifetime, then admit from the longest lifetime down
        # until the free capacity is used up
        wins = rng.binomial(outside, self.p_r)
        wins[~active] = 0
        room = np.maximum(self.env.b - inside.sum(axis=1), 0)
        rev = wins[:, ::-1]
        above = (rev.cumsum(axis=1) - rev)[:, ::-1]
        take = np.clip(room[:, None] - above, 0, wins)
        return take.astype(np.int64), dc


@dataclass
class SlotRecord:
    """One slot of a recorded batch run (used by equivalence tests)."""

    outside_pre: np.ndarray
    inside_pre: np.ndarray
    access: np.ndarray
    cost: np.ndarray
    elapsed: np.ndarray
    downloads: np.ndarray
    discards: np.ndarray
    mu: np.ndarray


@dataclass
class SimResult:
    j: np.ndarray                 # (n,) average cost per trajectory, mW
    n_slots: int
    mu: np.ndarray | None = None  # (T, n) per-slot costs when collected
    grad: np.ndarray | None = None
    records: list[SlotRecord] = field(default_factory=list)

    @property
    def j_mean(self) -> float:
        return float(self.j.mean())

    @property
    def j_stderr(self) -> float:
        if self.j.size < 2:
            return 0.0
        return float(self.j.std(ddof=1) / np.sqrt(self.j.size))


def simulate(
    env: Env,
    stream: Stream,
    driver,
    policy_seed=None,
    collect_mu: bool = False,
    record: bool = False,
) -> SimResult:
    """Run every trajectory of the stream under one scheme.

    Slot order: arrivals join the outside pool, the access/cost/elapsed draws
    are read, the driver acts on non-access rows (access rows are forced to
    the full flush), the download cost is charged, and lifetimes decrement.
    """
    T, n = stream.access.shape
    k1 = env.k_max + 1
    outside = np.zeros((n, k1), dtype=np.int64)
    inside = np.zeros((n, k1), dtype=np.int64)
    mu_all = np.zeros((T, n)) if (collect_mu or record) else None
    mu_sum = np.zeros(n)
    rng = np.random.default_rng(policy_seed)
    records: list[SlotRecord] = []

    for t in range(T):
        outside += stream.new_counts[t]
        acc = stream.access[t]
        cost = stream.cost[t]
        dl, dc = driver.decide(outside, inside, cost, stream.elapsed[t], ~acc, rng)
        dl[acc] = 0
        dc[acc] = 0
        mu = np.where(acc, outside.sum(axis=1), dl.sum(axis=1)) * cost
        mu_sum += mu
        if mu_all is not None:
            mu_all[t] = mu
        if record:
            records.append(SlotRecord(outside.copy(), inside.copy(), acc.copy(),
                                      cost.copy(), stream.elapsed[t].copy(),
                                      dl.copy(), dc.copy(), mu.copy()))
        inside = inside + dl - dc
        outside = outside + dc - dl
        inside[acc] = 0
        outside[acc] = 0
        if not driver.unlimited_cache and np.any(inside.sum(axis=1) > env.b):
            raise AssertionError("cache capacity violated by a driver")
        inside = shift_down(inside)
        outside = shift_down(outside)

    return SimResult(
        j=mu_sum / T,
        n_slots=T,
        mu=mu_all if collect_mu else None,
        grad=getattr(driver, "grad", None),
        records=records,
    )
