"""Content, user-access, and cache-state dynamics.

One slot of the caching process: new contents arrive with random lifetimes,
the user either accesses (consuming everything relevant) or not, the cache
manager may download/discard contents, and every surviving lifetime ticks
down by one.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ImpossibleStateError
from .multiset import EMPTY, LifetimeMultiset

REGIME_SHORT = "short"
REGIME_LONG = "long"


@dataclass(frozen=True)
class ContentGenConfig:
    """Per-slot content generation model.

    The number of new contents is uniform on {1..m_max}. In ``iid`` mode each
    lifetime is drawn uniformly from ``lifetime_support``; in ``regime`` mode
    all contents of a slot share the current regime's lifetime and the regime
    follows a two-state chain with persistence probabilities p1 (short) and
    p2 (long).
    """

    m_max: int
    lifetime_support: tuple[int, ...] = ()
    mode: str = "iid"
    p1: float = 0.5
    p2: float = 0.5
    short_lifetime: int = 5
    long_lifetime: int = 15

    def __post_init__(self):
        if self.m_max < 1:
            raise ValueError("m_max must be >= 1")
        if self.mode not in ("iid", "regime"):
            raise ValueError(f"unknown content mode {self.mode!r}")
        if self.mode == "iid":
            if not self.lifetime_support:
                raise ValueError("iid mode needs a nonempty lifetime_support")
            if any(k < 1 for k in self.lifetime_support):
                raise ValueError("lifetimes must be positive")
            object.__setattr__(
                self, "lifetime_support", tuple(sorted(self.lifetime_support))
            )
        else:
            if min(self.short_lifetime, self.long_lifetime) < 1:
                raise ValueError("regime lifetimes must be positive")
            if not (0.0 <= self.p1 <= 1.0 and 0.0 <= self.p2 <= 1.0):
                raise ValueError("persistence probabilities must be in [0,1]")

    @property
    def k_max(self) -> int:
        if self.mode == "iid":
            return max(self.lifetime_support)
        return max(self.short_lifetime, self.long_lifetime)

    def regime_lifetime(self, regime: str) -> int:
        if regime == REGIME_SHORT:
            return self.short_lifetime
        if regime == REGIME_LONG:
            return self.long_lifetime
        raise ValueError(f"unknown regime {regime!r}")

    def stationary_short_prob(self) -> float:
        """Stationary probability of the short regime."""
        denom = 2.0 - self.p1 - self.p2
        if denom <= 0.0:  # p1 = p2 = 1: two absorbing states, pick 50/50
            return 0.5
        return (1.0 - self.p2) / denom


@dataclass(frozen=True)
class AccessModel:
    """User access process: IRM (i.i.d. Bernoulli) or bounded inter-access.

    ``inter_access_pmf[i]`` is P(D = i+1) for the bounded case, so D is
    supported on {1..D_max}.
    """

    kind: str = "irm"
    p_a: float = 0.25
    inter_access_pmf: tuple[float, ...] = ()
    _cdf: tuple[float, ...] = field(init=False, repr=False, default=())

    def __post_init__(self):
        if self.kind == "irm":
            if not (0.0 < self.p_a <= 1.0):
                raise ValueError("p_a must be in (0, 1]")
        elif self.kind == "bounded":
            pmf = np.asarray(self.inter_access_pmf, dtype=float)
            if pmf.size == 0 or np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-9:
                raise ValueError("inter_access_pmf must be a probability vector")
            object.__setattr__(self, "_cdf", tuple(np.cumsum(pmf)))
        else:
            raise ValueError(f"unknown access kind {self.kind!r}")

    @property
    def d_max(self) -> int:
        if self.kind == "irm":
            raise ValueError("IRM inter-access times are unbounded")
        return len(self.inter_access_pmf)

    def hazard(self, elapsed: int) -> float:
        """P(access in the next slot | elapsed slots since the last access)."""
        if elapsed < 0:
            raise ValueError("elapsed must be >= 0")
        if self.kind == "irm":
            return self.p_a
        if elapsed >= self.d_max:
            raise ImpossibleStateError(
                f"elapsed={elapsed} cannot occur with D_max={self.d_max}"
            )
        prev = self._cdf[elapsed - 1] if elapsed > 0 else 0.0
        survive = 1.0 - prev
        return (self._cdf[elapsed] - prev) / survive


def sample_access(rng: np.random.Generator, elapsed: int, model: AccessModel) -> bool:
    """Draw whether the user accesses in the next slot."""
    return bool(rng.random() < model.hazard(elapsed))


def generate_contents(
    rng: np.random.Generator,
    cfg: ContentGenConfig,
    regime: str | None = None,
) -> LifetimeMultiset:
    """Draw one slot's newly generated contents."""
    m = int(rng.integers(1, cfg.m_max + 1))
    if cfg.mode == "iid":
        support = np.asarray(cfg.lifetime_support)
        return LifetimeMultiset(support[rng.integers(0, support.size, size=m)])
    if regime is None:
        raise ValueError("regime mode requires the current regime")
    return LifetimeMultiset([cfg.regime_lifetime(regime)] * m)


def advance_regime(rng: np.random.Generator, regime: str, cfg: ContentGenConfig) -> str:
    """One step of the two-state lifetime regime chain."""
    if regime == REGIME_SHORT:
        return REGIME_SHORT if rng.random() < cfg.p1 else REGIME_LONG
    if regime == REGIME_LONG:
        return REGIME_LONG if rng.random() < cfg.p2 else REGIME_SHORT
    raise ValueError(f"unknown regime {regime!r}")


def initial_regime(rng: np.random.Generator, cfg: ContentGenConfig) -> str:
    """Draw the starting regime from the chain's stationary distribution."""
    return REGIME_SHORT if rng.random() < cfg.stationary_short_prob() else REGIME_LONG


@dataclass(frozen=True)
class SystemState:
    """Content state at decision time: outside pool, cache, user timing.

    ``elapsed`` is the number of slots since the last access, so it is zero
    exactly when ``accessed`` is set.
    """

    outside: LifetimeMultiset = EMPTY
    inside: LifetimeMultiset = EMPTY
    elapsed: int = 0
    accessed: bool = True

    def __post_init__(self):
        if self.elapsed < 0:
            raise ValueError("elapsed must be >= 0")
        if self.accessed != (self.elapsed == 0):
            raise ValueError("elapsed is zero exactly on access slots")


def step(
    state: SystemState,
    action: tuple[LifetimeMultiset, LifetimeMultiset],
    access_next: bool,
    new_contents: LifetimeMultiset,
    b: int,
) -> SystemState:
    """Advance the content state by one slot.

    ``action`` is the (download, discard) pair applied in the current slot.
    On an access slot the action is forced to the full flush (download all of
    outside, clear the cache); this is validated rather than silently applied.
    The decrement happens after the action, and the next slot's new contents
    join the outside pool.
    """
    download, discard = action
    if state.accessed:
        if download != state.outside or discard != state.inside:
            raise ValueError("on access the action is forced to the full flush")
        inside_next = EMPTY
        outside_next = new_contents
    else:
        if not download.issubset(state.outside):
            raise ValueError("download is not a sub-multiset of the outside pool")
        if not discard.issubset(state.inside):
            raise ValueError("discard is not a sub-multiset of the cache")
        inside_post = state.inside.union(download).subtract(discard)
        if inside_post.size > b:
            raise CapacityError(
                f"cache would hold {inside_post.size} > B={b} contents"
            )
        outside_post = state.outside.union(discard).subtract(download)
        inside_next = inside_post.decrement()
        outside_next = outside_post.decrement().union(new_contents)
    return SystemState(
        outside=outside_next,
        inside=inside_next,
        elapsed=0 if access_next else state.elapsed + 1,
        accessed=access_next,
    )
