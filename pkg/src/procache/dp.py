"""Exact average-cost solver for tiny caching instances.

Brute-force oracle for desk-scale verification: it enumerates the reachable
(outside, inside, access-flag) states under every legal action, runs relative
value iteration with the cost level folded in as i.i.d. side information, and
exposes the optimal action per (state, cost level). Used to confirm the
piecewise-constant-in-cost structure of optimal actions and the value
ordering between comparable states, and to provide exact expectations for
estimator tests.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import DiscreteCostChannel
from .content import ContentGenConfig
from .errors import NumericalError
from .multiset import LifetimeMultiset
from .policy import Params, sigmoid, sorted_pairing

Counts = tuple[int, ...]           # per-lifetime multiplicities, index 0 unused
StateKey = tuple[Counts, Counts, bool]  # (outside, inside, accessed)


@dataclass(frozen=True)
class DpInstance:
    content: ContentGenConfig
    p_a: float
    b: int
    channel: DiscreteCostChannel
    tol: float = 1e-9
    max_iters: int = 200_000

    def __post_init__(self):
        if self.content.mode != "iid":
            raise ValueError("the oracle assumes i.i.d. content generation")
        if not (0.0 < self.p_a <= 1.0):
            raise ValueError("p_a must be in (0, 1]")

    @property
    def k_max(self) -> int:
        return self.content.k_max


def _new_content_outcomes(cfg: ContentGenConfig) -> list[tuple[Counts, float]]:
    """Exact distribution of one slot's arrivals as count vectors."""
    support = cfg.lifetime_support
    k1 = max(support) + 1
    outcomes: dict[Counts, float] = {}
    for m in range(1, cfg.m_max + 1):
        p_m = 1.0 / cfg.m_max
        for combo in itertools.combinations_with_replacement(support, m):
            counts = [0] * k1
            for life in combo:
                counts[life] += 1
            mult = math.factorial(m)
            for c in counts:
                mult //= math.factorial(c)
            prob = p_m * mult / len(support) ** m
            key = tuple(counts)
            outcomes[key] = outcomes.get(key, 0.0) + prob
    return sorted(outcomes.items())


def _sub_multisets(counts: Counts) -> list[Counts]:
    ranges = [range(c + 1) for c in counts]
    return [tuple(pick) for pick in itertools.product(*ranges)]


def _decrement(counts: Counts) -> Counts:
    return (0,) + counts[2:] + (0,) if len(counts) > 1 else counts


def _union(a: Counts, b: Counts) -> Counts:
    return tuple(x + y for x, y in zip(a, b))


def _minus(a: Counts, b: Counts) -> Counts:
    return tuple(x - y for x, y in zip(a, b))


def _size(a: Counts) -> int:
    return sum(a)


@dataclass
class DpSolution:
    instance: DpInstance
    states: list[StateKey]
    state_index: dict[StateKey, int]
    rho: float
    gain: np.ndarray          # (n_states,) cost-level-marginalized relative values
    values: np.ndarray        # (n_states, n_levels) relative action values at optimum
    policy: list[list[tuple[Counts, Counts]]]  # [state][level] -> (download, discard)
    iterations: int

    def optimal_action(self, state: StateKey, level: int) -> tuple[Counts, Counts]:
        return self.policy[self.state_index[state]][level]


def _enumerate_actions(
    outside: Counts, inside: Counts, accessed: bool, b: int
) -> list[tuple[int, Counts, Counts, Counts, Counts]]:
    """All legal (n_downloads, dl, dc, post_outside, post_inside) tuples.

    Actions are sorted by download count first so that the value-iteration
    argmin resolves ties toward the cheaper-slope action (the convention the
    threshold-structure check relies on).
    """
    if accessed:
        k1 = len(outside)
        zero = tuple([0] * k1)
        return [(_size(outside), outside, inside, zero, zero)]
    acts = []
    cache_used = _size(inside)
    for dl in _sub_multisets(outside):
        n_dl = _size(dl)
        for dc in _sub_multisets(inside):
            if cache_used + n_dl - _size(dc) > b:
                continue
            post_inside = _decrement(_minus(_union(inside, dl), dc))
            post_outside = _decrement(_minus(_union(outside, dc), dl))
            acts.append((n_dl, dl, dc, post_outside, post_inside))
    acts.sort(key=lambda a: (a[0], a[1], a[2]))
    return acts


def dp_oracle(instance: DpInstance) -> DpSolution:
    """Relative value iteration on the exact finite chain."""
    cfg = instance.content
    k1 = cfg.k_max + 1
    arrivals = _new_content_outcomes(cfg)
    levels = np.asarray(instance.channel.values)
    level_probs = np.asarray(instance.channel.probs)
    p_a = instance.p_a

    # Reachable states from the empty just-accessed start, under any policy.
    zero = tuple([0] * k1)
    start: StateKey = (zero, zero, True)
    states: list[StateKey] = []
    state_index: dict[StateKey, int] = {}
    aftermath_index: dict[tuple[Counts, Counts], int] = {}
    aftermaths: list[tuple[Counts, Counts]] = []
    # per state: action arrays built during BFS
    act_ndl: list[np.ndarray] = []
    act_aft: list[np.ndarray] = []
    act_pairs: list[list[tuple[Counts, Counts]]] = []

    queue = [start]
    state_index[start] = 0
    states.append(start)
    while queue:
        o, i, acc = queue.pop()
        acts = _enumerate_actions(o, i, acc, instance.b)
        ndl = np.array([a[0] for a in acts], dtype=np.int64)
        aft = np.empty(len(acts), dtype=np.int64)
        for j, (_, dl, dc, post_o, post_i) in enumerate(acts):
            key = (post_o, post_i)
            if key not in aftermath_index:
                aftermath_index[key] = len(aftermaths)
                aftermaths.append(key)
                for counts, _prob in arrivals:
                    for u_next in (False, True):
                        if p_a >= 1.0 and not u_next:
                            continue  # zero-probability branch
                        if p_a <= 0.0 and u_next:
                            continue
                        succ = (_union(key[0], counts), key[1], u_next)
                        if succ not in state_index:
                            state_index[succ] = len(states)
                            states.append(succ)
                            queue.append(succ)
            aft[j] = aftermath_index[key]
        sidx = state_index[(o, i, acc)]
        while len(act_ndl) <= sidx:
            act_ndl.append(None)
            act_aft.append(None)
            act_pairs.append(None)
        act_ndl[sidx] = ndl
        act_aft[sidx] = aft
        act_pairs[sidx] = [(a[1], a[2]) for a in acts]

    n_states = len(states)
    n_aft = len(aftermaths)

    # successor index tables: aftermath x arrival -> state, per next access flag
    n_arr = len(arrivals)
    arr_probs = np.array([p for _, p in arrivals])
    succ0 = np.zeros((n_aft, n_arr), dtype=np.int64)
    succ1 = np.zeros((n_aft, n_arr), dtype=np.int64)
    for a, (post_o, post_i) in enumerate(aftermaths):
        for r, (counts, _p) in enumerate(arrivals):
            o_next = _union(post_o, counts)
            if p_a < 1.0:
                succ0[a, r] = state_index[(o_next, post_i, False)]
            if p_a > 0.0:
                succ1[a, r] = state_index[(o_next, post_i, True)]

    # flatten the per-state action lists for segmented minimization
    starts = np.zeros(n_states + 1, dtype=np.int64)
    for s in range(n_states):
        starts[s + 1] = starts[s] + act_ndl[s].size
    flat_ndl = np.concatenate(act_ndl).astype(float)
    flat_aft = np.concatenate(act_aft)

    gain = np.zeros(n_states)
    rho = 0.0
    for iteration in range(1, instance.max_iters + 1):
        if p_a >= 1.0:
            phi = gain[succ1] @ arr_probs
        elif p_a <= 0.0:
            phi = gain[succ0] @ arr_probs
        else:
            phi = (p_a * gain[succ1] + (1.0 - p_a) * gain[succ0]) @ arr_probs
        w = phi[flat_aft]
        t_new = np.zeros(n_states)
        for z, (c_z, p_z) in enumerate(zip(levels, level_probs)):
            q = flat_ndl * c_z + w
            t_new += p_z * np.minimum.reduceat(q, starts[:-1])
        diff = t_new - gain
        span = float(diff.max() - diff.min())
        rho = float(0.5 * (diff.max() + diff.min()))
        gain = t_new - t_new[0]
        if span < instance.tol:
            break
    else:
        raise NumericalError(
            f"relative value iteration did not converge in {instance.max_iters} sweeps"
        )

    # optimal actions and relative action values per (state, level)
    if p_a >= 1.0:
        phi = gain[succ1] @ arr_probs
    elif p_a <= 0.0:
        phi = gain[succ0] @ arr_probs
    else:
        phi = (p_a * gain[succ1] + (1.0 - p_a) * gain[succ0]) @ arr_probs
    w = phi[flat_aft]
    values = np.zeros((n_states, levels.size))
    policy: list[list[tuple[Counts, Counts]]] = []
    for s in range(n_states):
        lo, hi = starts[s], starts[s + 1]
        per_level = []
        for z, c_z in enumerate(levels):
            q = flat_ndl[lo:hi] * c_z + w[lo:hi]
            best = int(np.argmin(q))
            values[s, z] = q[best]
            per_level.append(act_pairs[s][best])
        policy.append(per_level)

    return DpSolution(
        instance=instance,
        states=states,
        state_index=state_index,
        rho=rho,
        gain=gain,
        values=values,
        policy=policy,
        iterations=iteration,
    )


def better_state(a: StateKey, b: StateKey) -> bool:
    """Partial order between states: same pool and flag, better split.

    a is at least as good as b when the combined content pools agree, the
    access flags agree, a's cache dominates b's, and a's outside pool is
    dominated by b's.
    """
    (ao, ai, au), (bo, bi, bu) = a, b
    if au != bu:
        return False
    if _union(ao, ai) != _union(bo, bi):
        return False
    ms_ao, ms_bo = (LifetimeMultiset.from_counts(x) for x in (ao, bo))
    ms_ai, ms_bi = (LifetimeMultiset.from_counts(x) for x in (ai, bi))
    return ms_ao.le(ms_bo) and ms_bi.le(ms_ai)


def randomized_policy_expected_cost(
    instance: DpInstance, params: Params, eta: float, t_slots: int
) -> float:
    """Exact E[(1/T) sum of costs] for the sigmoid-randomized threshold policy.

    Forward enumeration over the state distribution from the empty
    just-accessed start; used as the ground truth that the likelihood-ratio
    estimator must match in expectation (via finite differences in the
    parameters).
    """
    cfg = instance.content
    k1 = cfg.k_max + 1
    arrivals = _new_content_outcomes(cfg)
    levels = np.asarray(instance.channel.values)
    level_probs = np.asarray(instance.channel.probs)
    p_a = instance.p_a
    b = instance.b

    # composite action distribution per (state, level): prefixes of the pairing
    def action_distribution(o: Counts, i: Counts, c: float):
        inside_ms = LifetimeMultiset.from_counts(i)
        outside_ms = LifetimeMultiset.from_counts(o)
        phi = np.zeros(k1)
        if b > 0:
            for life in range(1, k1):
                phi[life] = inside_ms.count(life) / b
            phi[0] = (b - inside_ms.size) / b
        else:
            phi[0] = 1.0
        pair_th = params.pair_thresholds(phi)
        pairing = sorted_pairing(inside_ms, outside_ms, b)
        probs: list[float] = []
        for l, L in pairing:
            if l >= L:
                break
            probs.append(float(sigmoid(eta * (pair_th[params._pair_index[l, L]] - c))))
        out = []  # (probability, n_downloads, dl, dc)
        stay = 1.0
        for n_sw in range(len(probs) + 1):
            p_here = stay * (1.0 - probs[n_sw]) if n_sw < len(probs) else stay
            dl = [0] * k1
            dc = [0] * k1
            for l, L in pairing[:n_sw]:
                dl[L] += 1
                if l > 0:
                    dc[l] += 1
            out.append((p_here, n_sw, tuple(dl), tuple(dc)))
            if n_sw < len(probs):
                stay *= probs[n_sw]
        return out

    # initial distribution: arrivals plus the access coin
    dist: dict[StateKey, float] = {}
    for counts, p_arr in arrivals:
        for u, p_u in ((True, p_a), (False, 1.0 - p_a)):
            if p_u == 0.0:
                continue
            key = (counts, tuple([0] * k1), u)
            dist[key] = dist.get(key, 0.0) + p_arr * p_u

    total_cost = 0.0
    for _ in range(t_slots):
        nxt: dict[StateKey, float] = {}
        for (o, i, acc), p_state in dist.items():
            if p_state == 0.0:
                continue
            for c_z, p_z in zip(levels, level_probs):
                p_sz = p_state * p_z
                if acc:
                    total_cost += p_sz * _size(o) * c_z
                    post = (tuple([0] * k1), tuple([0] * k1))
                    _push_next(nxt, post, p_sz, arrivals, p_a)
                else:
                    for p_act, n_dl, dl, dc in action_distribution(o, i, c_z):
                        if p_act == 0.0:
                            continue
                        total_cost += p_sz * p_act * n_dl * c_z
                        post = (
                            _decrement(_minus(_union(o, dc), dl)),
                            _decrement(_minus(_union(i, dl), dc)),
                        )
                        _push_next(nxt, post, p_sz * p_act, arrivals, p_a)
        dist = nxt
    return total_cost / t_slots


def _push_next(dist, post, prob, arrivals, p_a):
    post_o, post_i = post
    for counts, p_arr in arrivals:
        o_next = _union(post_o, counts)
        if p_a > 0.0:
            key = (o_next, post_i, True)
            dist[key] = dist.get(key, 0.0) + prob * p_arr * p_a
        if p_a < 1.0:
            key = (o_next, post_i, False)
            dist[key] = dist.get(key, 0.0) + prob * p_arr * (1.0 - p_a)
