import numpy as np
import pytest

from procache.content import (
    AccessModel,
    ContentGenConfig,
    REGIME_LONG,
    REGIME_SHORT,
    SystemState,
    advance_regime,
    generate_contents,
    initial_regime,
    sample_access,
    step,
)
from procache.errors import CapacityError, ImpossibleStateError
from procache.multiset import EMPTY, LifetimeMultiset


def ms(*elems):
    return LifetimeMultiset(elems)


# --- content generation -------------------------------------------------------

def test_generate_degenerate():
    cfg = ContentGenConfig(m_max=1, lifetime_support=(5,))
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert generate_contents(rng, cfg) == ms(5)


def test_generate_mean_size_matches_uniform():
    cfg = ContentGenConfig(m_max=8, lifetime_support=(5, 10, 15))
    rng = np.random.default_rng(42)
    total = 0
    n = 1_000_000
    for _ in range(n):
        total += int(rng.integers(1, cfg.m_max + 1))
    assert total / n == pytest.approx(4.5, abs=0.01)
    # the full generator draws sizes from the same distribution
    sizes = [generate_contents(rng, cfg).size for _ in range(200_000)]
    assert np.mean(sizes) == pytest.approx(4.5, abs=0.02)
    support = set()
    for _ in range(100):
        support.update(generate_contents(rng, cfg).elements())
    assert support <= {5, 10, 15}


def test_generate_regime_lifetimes():
    cfg = ContentGenConfig(m_max=4, mode="regime", short_lifetime=5, long_lifetime=15)
    rng = np.random.default_rng(1)
    for _ in range(50):
        out = generate_contents(rng, cfg, regime=REGIME_LONG)
        assert set(out.elements()) == {15}
        out = generate_contents(rng, cfg, regime=REGIME_SHORT)
        assert set(out.elements()) == {5}
    with pytest.raises(ValueError):
        generate_contents(rng, cfg, regime=None)


def test_advance_regime_absorbing_and_forced():
    rng = np.random.default_rng(2)
    stay = ContentGenConfig(m_max=1, mode="regime", p1=1.0, p2=1.0)
    assert advance_regime(rng, REGIME_SHORT, stay) == REGIME_SHORT
    flip = ContentGenConfig(m_max=1, mode="regime", p1=0.0, p2=0.0)
    assert advance_regime(rng, REGIME_SHORT, flip) == REGIME_LONG
    assert advance_regime(rng, REGIME_LONG, flip) == REGIME_SHORT


def test_regime_symmetric_long_run_fraction():
    cfg = ContentGenConfig(m_max=1, mode="regime", p1=0.5, p2=0.5)
    rng = np.random.default_rng(3)
    # symmetric chain: the state is an i.i.d. fair coin after mixing
    regime = initial_regime(rng, cfg)
    hits = 0
    n = 1_000_000
    for _ in range(n):
        regime = advance_regime(rng, regime, cfg)
        hits += regime == REGIME_SHORT
    assert hits / n == pytest.approx(0.5, abs=0.01)


def test_stationary_short_prob():
    cfg = ContentGenConfig(m_max=1, mode="regime", p1=0.9, p2=0.5)
    # stationary: pi_short * (1-p1) = pi_long * (1-p2)
    pi_s = cfg.stationary_short_prob()
    assert pi_s * (1 - cfg.p1) == pytest.approx((1 - pi_s) * (1 - cfg.p2))


# --- user access ----------------------------------------------------------------

def test_sample_access_irm_always():
    model = AccessModel(kind="irm", p_a=1.0)
    rng = np.random.default_rng(4)
    assert all(sample_access(rng, e, model) for e in range(5))


def test_sample_access_irm_frequency():
    model = AccessModel(kind="irm", p_a=0.25)
    rng = np.random.default_rng(5)
    hits = sum(sample_access(rng, 0, model) for _ in range(1_000_000))
    assert hits / 1e6 == pytest.approx(0.25, abs=0.002)


def test_sample_access_bounded_deterministic_gap():
    model = AccessModel(kind="bounded", inter_access_pmf=(0.0, 0.0, 1.0))  # D = 3
    rng = np.random.default_rng(6)
    assert model.hazard(0) == 0.0
    assert model.hazard(1) == 0.0
    assert model.hazard(2) == 1.0
    assert sample_access(rng, 2, model)
    assert not sample_access(rng, 0, model)


def test_sample_access_bounded_hazard_normalization():
    model = AccessModel(kind="bounded", inter_access_pmf=(0.5, 0.25, 0.25))
    # P(D=2 | D>1) = 0.25 / 0.5
    assert model.hazard(1) == pytest.approx(0.5)
    assert model.hazard(2) == pytest.approx(1.0)


def test_sample_access_impossible_elapsed():
    model = AccessModel(kind="bounded", inter_access_pmf=(1.0,))
    rng = np.random.default_rng(7)
    with pytest.raises(ImpossibleStateError):
        sample_access(rng, 1, model)


def test_access_model_validation():
    with pytest.raises(ValueError):
        AccessModel(kind="irm", p_a=0.0)
    with pytest.raises(ValueError):
        AccessModel(kind="bounded", inter_access_pmf=(0.5, 0.4))


# --- slot dynamics ---------------------------------------------------------------

def test_step_proactive_swap():
    state = SystemState(outside=ms(5, 3), inside=ms(2), elapsed=1, accessed=False)
    nxt = step(state, (ms(5), EMPTY), False, EMPTY, b=2)
    assert nxt.inside == ms(4, 1)
    assert nxt.outside == ms(2)
    assert nxt.elapsed == 2 and not nxt.accessed


def test_step_access_flushes():
    state = SystemState(outside=ms(9, 4), inside=ms(6), elapsed=0, accessed=True)
    nxt = step(state, (state.outside, state.inside), False, ms(10), b=1)
    assert nxt.inside == EMPTY
    assert nxt.outside == ms(10)
    assert nxt.elapsed == 1


def test_step_both_expire():
    state = SystemState(outside=ms(1), inside=ms(1), elapsed=3, accessed=False)
    nxt = step(state, (EMPTY, EMPTY), False, EMPTY, b=1)
    assert nxt.inside == EMPTY and nxt.outside == EMPTY


def test_step_validations():
    state = SystemState(outside=ms(5), inside=ms(2), elapsed=1, accessed=False)
    with pytest.raises(ValueError):
        step(state, (ms(4), EMPTY), False, EMPTY, b=5)  # not in outside
    with pytest.raises(ValueError):
        step(state, (EMPTY, ms(3)), False, EMPTY, b=5)  # not in cache
    with pytest.raises(CapacityError):
        step(state, (ms(5), EMPTY), False, EMPTY, b=1)
    accessed = SystemState(outside=ms(5), inside=ms(2), elapsed=0, accessed=True)
    with pytest.raises(ValueError):
        step(accessed, (EMPTY, EMPTY), False, EMPTY, b=5)  # forced flush


def test_state_invariant():
    with pytest.raises(ValueError):
        SystemState(elapsed=1, accessed=True)
    with pytest.raises(ValueError):
        SystemState(elapsed=0, accessed=False)


def test_step_conservation_no_expiry():
    # no lifetime-1 contents and no access: total count is conserved plus arrivals
    rng = np.random.default_rng(8)
    for _ in range(200):
        outside = LifetimeMultiset(rng.integers(2, 9, size=rng.integers(0, 6)))
        inside = LifetimeMultiset(rng.integers(2, 9, size=rng.integers(0, 3)))
        b = inside.size + int(rng.integers(0, 3))
        state = SystemState(outside=outside, inside=inside, elapsed=1, accessed=False)
        dl_pool = list(outside.elements())
        rng.shuffle(dl_pool)
        dl = LifetimeMultiset(dl_pool[: int(rng.integers(0, len(dl_pool) + 1))])
        room = b - inside.size + int(rng.integers(0, inside.size + 1))
        dc_pool = list(inside.elements())
        rng.shuffle(dc_pool)
        dc = LifetimeMultiset(dc_pool[: max(0, inside.size + dl.size - room)])
        if inside.size + dl.size - dc.size > b:
            continue
        new = LifetimeMultiset(rng.integers(1, 9, size=rng.integers(0, 4)))
        nxt = step(state, (dl, dc), False, new, b=b)
        assert nxt.inside.size + nxt.outside.size == (
            inside.size + outside.size + new.size
        )


def _random_legal_action(rng, state, b):
    dl_elems = []
    room = b - state.inside.size
    for life in state.outside.elements():
        if room > 0 and rng.random() < 0.3:
            dl_elems.append(life)
            room -= 1
    dc_elems = [life for life in state.inside.elements() if rng.random() < 0.2]
    return LifetimeMultiset(dl_elems), LifetimeMultiset(dc_elems)


def test_capacity_invariant_random_rollout():
    """10^5 random legal steps never exceed the cache capacity."""
    cfg = ContentGenConfig(m_max=3, lifetime_support=(1, 2, 3, 5))
    model = AccessModel(kind="irm", p_a=0.2)
    rng = np.random.default_rng(9)
    b = 4
    state = SystemState()
    for _ in range(100_000):
        if state.accessed:
            action = (state.outside, state.inside)
        else:
            action = _random_legal_action(rng, state, b)
        state = step(
            state, action, sample_access(rng, state.elapsed, model),
            generate_contents(rng, cfg), b,
        )
        assert state.inside.size <= b


def _simple_actions(state, b):
    """All single swaps (l|L) legal in the state, plus the no-op."""
    acts = [(0, 0)]
    cache_lifetimes = set(state.inside.elements()) | ({0} if state.inside.size < b else set())
    for L in set(state.outside.elements()):
        for l in cache_lifetimes:
            if l < L:
                acts.append((l, L))
    return acts


def _apply_simple(state, act, b):
    l, L = act
    dl = EMPTY if L == 0 else ms(L)
    dc = EMPTY if l == 0 else ms(l)
    return step(state, (dl, dc), False, EMPTY, b)


def _better(a, b_state):
    return (
        a.outside.union(a.inside) == b_state.outside.union(b_state.inside)
        and a.outside.le(b_state.outside)
        and b_state.inside.le(a.inside)
    )


def test_better_state_order_preserved_by_matched_actions():
    """For comparable states, the better one can match any simple action.

    Exhaustive over states with at most 4 contents and lifetimes <= 3:
    whenever s >= s' and s' performs a simple action, some simple action of s
    (possibly the no-op) downloads no more contents and keeps s >= s'.
    """
    from itertools import product

    b = 2
    pools = []
    for counts in product(range(3), repeat=3):  # multiset of all contents
        if 0 < sum(counts) <= 4:
            pools.append(LifetimeMultiset.from_counts((0,) + counts))
    states = []
    for pool in pools:
        elems = pool.elements()
        n = len(elems)
        for mask in range(2**n):
            inside = [elems[i] for i in range(n) if mask >> i & 1]
            if len(inside) > b:
                continue
            outside = [elems[i] for i in range(n) if not mask >> i & 1]
            states.append(
                SystemState(
                    outside=LifetimeMultiset(outside),
                    inside=LifetimeMultiset(inside),
                    elapsed=1,
                    accessed=False,
                )
            )
    by_pool = {}
    for s in states:
        by_pool.setdefault(s.outside.union(s.inside), []).append(s)
    checked = 0
    for group in by_pool.values():
        for s in group:
            for sp in group:
                if not _better(s, sp):
                    continue
                for act in _simple_actions(sp, b):
                    target = _apply_simple(sp, act, b)
                    n_dl = 0 if act[1] == 0 else 1
                    ok = any(
                        (0 if cand[1] == 0 else 1) <= n_dl
                        and _better(_apply_simple(s, cand, b), target)
                        for cand in _simple_actions(s, b)
                    )
                    assert ok, (s, sp, act)
                    checked += 1
    assert checked > 100
