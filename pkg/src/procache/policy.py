"""Threshold caching policies: LISO tables, LFA tensors, and baselines.

A proactive action in a slot is a sequence of simple swaps (l|L): evict the
cached content with remaining lifetime l (l=0 for an empty slot) and download
the outside content with remaining lifetime L. Policies pair the cache sorted
ascending against the outside pool sorted descending and perform the leading
swaps whose thresholds the current channel cost does not exceed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .content import SystemState
from .multiset import LifetimeMultiset

LISO = "liso"
LFA = "lfa"


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.shape else float(out)


def pair_count(k_max: int) -> int:
    return (k_max + 1) * k_max // 2


def build_pair_index(k_max: int) -> np.ndarray:
    """(k_max+1)x(k_max+1) map from (l, L) to a flat coordinate, -1 if l >= L.

    Coordinates enumerate valid swap pairs in lexicographic (l, L) order, so
    a parameter vector only ever stores the l < L entries; the forbidden
    l >= L thresholds are structurally zero.
    """
    idx = np.full((k_max + 1, k_max + 1), -1, dtype=np.int64)
    p = 0
    for l in range(k_max + 1):
        for L in range(l + 1, k_max + 1):
            idx[l, L] = p
            p += 1
    return idx


class SimpleAction(NamedTuple):
    """One swap: evict lifetime l (0 = none), download lifetime L (0 = none)."""

    l: int
    L: int


class Trial(NamedTuple):
    """One Bernoulli trial of the randomized policy's swap sequence."""

    l: int
    L: int
    prob: float
    accepted: bool


@dataclass(eq=False)
class LisoParams:
    """One threshold per swap pair, independent of the cache state."""

    k_max: int
    c_max: float
    values: np.ndarray  # (pair_count,) mW, within [0, c_max]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (pair_count(self.k_max),):
            raise ValueError("wrong parameter vector length")
        if np.any(self.values < -1e-12) or np.any(self.values > self.c_max + 1e-9):
            raise ValueError("thresholds must lie in [0, c_max]")
        self._pair_index = build_pair_index(self.k_max)

    kind = LISO

    @property
    def dim(self) -> int:
        return self.values.size

    def flat(self) -> np.ndarray:
        return self.values.copy()

    def with_flat(self, vec: np.ndarray) -> "LisoParams":
        return LisoParams(self.k_max, self.c_max, np.asarray(vec, dtype=float))

    def pair_thresholds(self, phi: np.ndarray) -> np.ndarray:
        """Thresholds for every valid pair (phi is ignored for LISO)."""
        return self.values

    def table(self) -> np.ndarray:
        """Dense (l, L) threshold table with zeros at forbidden pairs."""
        t = np.zeros((self.k_max + 1, self.k_max + 1))
        valid = self._pair_index >= 0
        t[valid] = self.values[self._pair_index[valid]]
        return t


@dataclass(eq=False)
class LfaParams:
    """Per-pair thresholds that are linear in the cache frequency vector."""

    k_max: int
    c_max: float
    weights: np.ndarray  # (k_max+1, pair_count), unconstrained

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.k_max + 1, pair_count(self.k_max)):
            raise ValueError("wrong weight tensor shape")
        self._pair_index = build_pair_index(self.k_max)

    kind = LFA

    @property
    def dim(self) -> int:
        return self.weights.size

    def flat(self) -> np.ndarray:
        return self.weights.reshape(-1).copy()

    def with_flat(self, vec: np.ndarray) -> "LfaParams":
        w = np.asarray(vec, dtype=float).reshape(self.k_max + 1, -1)
        return LfaParams(self.k_max, self.c_max, w)

    def raw_pair_values(self, phi: np.ndarray) -> np.ndarray:
        return phi @ self.weights

    def pair_thresholds(self, phi: np.ndarray) -> np.ndarray:
        """Linear form clamped into [0, c_max] -- the evaluated threshold."""
        return np.clip(self.raw_pair_values(phi), 0.0, self.c_max)


Params = LisoParams | LfaParams


def frequency_vector(inside: LifetimeMultiset, b: int, k_max: int) -> np.ndarray:
    """Cache lifetime histogram normalized by capacity; index 0 = empty slots."""
    if inside.size > b:
        raise ValueError("cache holds more than its capacity")
    if inside.max_lifetime > k_max:
        raise ValueError("cached lifetime exceeds k_max")
    phi = np.zeros(k_max + 1)
    if b == 0:  # no slots at all: all mass on "empty" by convention
        phi[0] = 1.0
        return phi
    phi[: inside.max_lifetime + 1] = [
        inside.count(k) for k in range(inside.max_lifetime + 1)
    ]
    phi /= b
    phi[0] = (b - inside.size) / b
    return phi


def threshold(policy: Params, phi: np.ndarray, action: SimpleAction) -> float:
    """Threshold of one simple action; zero for forbidden pairs (l >= L)."""
    if action.l >= action.L:
        return 0.0
    if action.L > policy.k_max:
        raise ValueError(f"lifetime beyond k_max={policy.k_max}")
    p = policy._pair_index[action.l, action.L]
    return float(policy.pair_thresholds(phi)[p])


def sorted_pairing(
    inside: LifetimeMultiset, outside: LifetimeMultiset, b: int
) -> list[SimpleAction]:
    """Cache ascending (zero-padded) paired with the B largest outside lifetimes."""
    ls = [0] * (b - inside.size) + list(inside.elements())
    Ls = outside.top(b)
    return [SimpleAction(l, L) for l, L in zip(ls, Ls)]


def select_action_deterministic(
    state: SystemState, c: float, policy: Params, b: int
) -> tuple[LifetimeMultiset, LifetimeMultiset]:
    """Perform leading swaps while the pair is valid and C is below threshold."""
    phi = frequency_vector(state.inside, b, policy.k_max)
    thresholds = policy.pair_thresholds(phi)
    downloads: list[int] = []
    discards: list[int] = []
    for l, L in sorted_pairing(state.inside, state.outside, b):
        if l >= L:
            break
        if c > thresholds[policy._pair_index[l, L]]:
            break
        downloads.append(L)
        if l > 0:
            discards.append(l)
    return LifetimeMultiset(downloads), LifetimeMultiset(discards)


def select_action_randomized(
    state: SystemState,
    c: float,
    policy: Params,
    eta: float,
    rng: np.random.Generator,
    b: int,
) -> tuple[LifetimeMultiset, LifetimeMultiset, list[Trial]]:
    """Sigmoid-randomized swap sequence, accepted independently until a failure.

    The acceptance probability of a swap is sigmoid(eta * (threshold - C)).
    The first infeasible pair (l >= L, or running past position B) terminates
    the sequence with probability one and contributes no trial. Returns the
    performed action and the per-trial records needed for the score function.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    phi = frequency_vector(state.inside, b, policy.k_max)
    thresholds = policy.pair_thresholds(phi)
    downloads: list[int] = []
    discards: list[int] = []
    trials: list[Trial] = []
    for l, L in sorted_pairing(state.inside, state.outside, b):
        if l >= L:
            break
        prob = float(sigmoid(eta * (thresholds[policy._pair_index[l, L]] - c)))
        accepted = bool(rng.random() < prob)
        trials.append(Trial(l, L, prob, accepted))
        if not accepted:
            break
        downloads.append(L)
        if l > 0:
            discards.append(l)
    return LifetimeMultiset(downloads), LifetimeMultiset(discards), trials


def composite_log_prob(trials: list[Trial]) -> float:
    """log-probability of the performed composite action given its trials."""
    total = 0.0
    for t in trials:
        total += np.log(t.prob) if t.accepted else np.log1p(-t.prob)
    return float(total)


def grad_log_prob(
    trials: list[Trial], phi: np.ndarray, policy: Params, eta: float
) -> np.ndarray:
    """Gradient of the composite action's log-probability in the flat parameters.

    d log pi / d T is eta*(1 - p) for an accepted trial and -eta*p for the
    failed one; the chain rule to the parameters is the identity for LISO and
    multiplication by phi for LFA (zero where the LFA clamp is active).
    """
    grad = np.zeros(policy.dim)
    if not trials:
        return grad
    if policy.kind == LFA:
        raw = policy.raw_pair_values(phi)
        npairs = raw.size
    for t in trials:
        p = policy._pair_index[t.l, t.L]
        term = eta * (1.0 - t.prob) if t.accepted else -eta * t.prob
        if policy.kind == LISO:
            grad[p] += term
        else:
            if 0.0 < raw[p] < policy.c_max:  # clamp gate
                for i in range(policy.k_max + 1):
                    grad[i * npairs + p] += term * phi[i]
    return grad


class DeterministicPolicy:
    """Threshold policy evaluated deterministically."""

    def __init__(self, params: Params):
        self.params = params

    def decide(self, state: SystemState, c: float, b: int, rng=None):
        return select_action_deterministic(state, c, self.params, b)


class RandomizedPolicy:
    """Threshold policy with sigmoid exploration (returns trial records)."""

    def __init__(self, params: Params, eta: float):
        self.params = params
        self.eta = eta

    def decide(self, state: SystemState, c: float, b: int, rng: np.random.Generator):
        dl, dc, trials = select_action_randomized(
            state, c, self.params, self.eta, rng, b
        )
        self.last_trials = trials
        return dl, dc


class ReactivePolicy:
    """Never acts proactively; contents are only downloaded on access."""

    def decide(self, state: SystemState, c: float, b: int, rng=None):
        return LifetimeMultiset(), LifetimeMultiset()


class RandomCachePolicy:
    """Download each outside content with probability p_r while room remains.

    Contents are tried in descending-lifetime order (a fixed order keeps the
    scheme reproducible); nothing is ever discarded, so the coin flips stop
    once the cache is full.
    """

    def __init__(self, p_r: float):
        if not 0.0 <= p_r <= 1.0:
            raise ValueError("p_r must be in [0, 1]")
        self.p_r = p_r

    def decide(self, state: SystemState, c: float, b: int, rng: np.random.Generator):
        room = b - state.inside.size
        downloads: list[int] = []
        for L in sorted(state.outside.elements(), reverse=True):
            if room <= 0:
                break
            if self.p_r > 0.0 and rng.random() < self.p_r:
                downloads.append(L)
                room -= 1
        return LifetimeMultiset(downloads), LifetimeMultiset()


def save_params(path, params: Params, meta: dict | None = None) -> None:
    """Write parameters as header + one `i l L value` line per coordinate."""
    idx = build_pair_index(params.k_max)
    pairs = [(l, L) for l in range(params.k_max + 1) for L in range(params.k_max + 1)
             if idx[l, L] >= 0]
    fields = {"kind": params.kind, "k_max": params.k_max, "c_max": repr(params.c_max)}
    if meta:
        fields.update({k: v for k, v in meta.items()})
    header = " ".join(f"{k}={v}" for k, v in fields.items())
    with open(path, "w") as fh:
        fh.write(f"# procache-params {header}\n")
        if params.kind == LISO:
            for (l, L) in pairs:
                fh.write(f"0 {l} {L} {float(params.values[idx[l, L]])!r}\n")
        else:
            for i in range(params.k_max + 1):
                for (l, L) in pairs:
                    fh.write(f"{i} {l} {L} {float(params.weights[i, idx[l, L]])!r}\n")


def load_params(path) -> tuple[Params, dict]:
    """Read a parameter file written by save_params; returns (params, meta)."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# procache-params "):
            raise ValueError(f"{path}: not a parameter file")
        meta = dict(kv.split("=", 1) for kv in header.split()[2:])
        kind = meta.pop("kind")
        k_max = int(meta.pop("k_max"))
        c_max = float(meta.pop("c_max"))
        idx = build_pair_index(k_max)
        if kind == LISO:
            values = np.zeros(pair_count(k_max))
        else:
            values = np.zeros((k_max + 1, pair_count(k_max)))
        for line in fh:
            i_s, l_s, L_s, v_s = line.split()
            p = idx[int(l_s), int(L_s)]
            if kind == LISO:
                values[p] = float(v_s)
            else:
                values[int(i_s), p] = float(v_s)
    if kind == LISO:
        return LisoParams(k_max, c_max, values), meta
    return LfaParams(k_max, c_max, values), meta
