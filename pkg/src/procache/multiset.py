"""Multisets of remaining content lifetimes.

Contents are equal-sized and therefore identified only by their remaining
lifetime (in slots), so every collection of contents in the simulator --
newly generated items, the cache, the outside pool, download/discard
actions -- is a multiset of positive integers.
"""
from __future__ import annotations

from collections import Counter
from typing import Iterable, Iterator

import numpy as np


class LifetimeMultiset:
    """Immutable multiset of positive integer lifetimes.

    Internally stored as a count vector indexed by lifetime (index 0 unused,
    trailing zeros trimmed), which makes the per-slot operations -- decrement,
    union, sub-multiset checks -- O(max lifetime).
    """

    __slots__ = ("_counts", "_size")

    def __init__(self, elements: Iterable[int] = ()):
        counter = Counter()
        for e in elements:
            e = int(e)
            if e < 1:
                raise ValueError(f"lifetimes must be >= 1, got {e}")
            counter[e] += 1
        top = max(counter) if counter else 0
        counts = [0] * (top + 1)
        for life, mult in counter.items():
            counts[life] = mult
        while counts and counts[-1] == 0:
            counts.pop()
        self._counts = tuple(counts)
        self._size = sum(counter.values())

    @classmethod
    def from_counts(cls, counts: Iterable[int]) -> "LifetimeMultiset":
        """Build from a count vector indexed by lifetime (index 0 ignored)."""
        ms = cls.__new__(cls)
        raw = [int(c) for c in counts]
        if raw and raw[0] != 0:
            raw[0] = 0
        if any(c < 0 for c in raw):
            raise ValueError("multiplicities must be non-negative")
        while raw and raw[-1] == 0:
            raw.pop()
        ms._counts = tuple(raw)
        ms._size = sum(raw)
        return ms

    @property
    def size(self) -> int:
        return self._size

    def count(self, lifetime: int) -> int:
        if 0 <= lifetime < len(self._counts):
            return self._counts[lifetime]
        return 0

    @property
    def max_lifetime(self) -> int:
        """Largest lifetime present (0 when empty)."""
        return len(self._counts) - 1 if self._counts else 0

    def elements(self) -> tuple[int, ...]:
        """All elements, sorted ascending."""
        out: list[int] = []
        for life, mult in enumerate(self._counts):
            out.extend([life] * mult)
        return tuple(out)

    def top(self, n: int) -> tuple[int, ...]:
        """The n largest elements, descending, zero-padded to length n."""
        out: list[int] = []
        for life in range(len(self._counts) - 1, 0, -1):
            take = min(self._counts[life], n - len(out))
            out.extend([life] * take)
            if len(out) == n:
                break
        out.extend([0] * (n - len(out)))
        return tuple(out)

    def counts_array(self, k_max: int) -> np.ndarray:
        """Count vector of length k_max+1 (index = lifetime)."""
        if self.max_lifetime > k_max:
            raise ValueError(
                f"lifetime {self.max_lifetime} exceeds k_max={k_max}"
            )
        arr = np.zeros(k_max + 1, dtype=np.int64)
        arr[: len(self._counts)] = self._counts
        return arr

    def decrement(self) -> "LifetimeMultiset":
        """Reduce every element by one; elements reaching zero are removed."""
        return LifetimeMultiset.from_counts((0,) + self._counts[2:])

    def union(self, other: "LifetimeMultiset") -> "LifetimeMultiset":
        n = max(len(self._counts), len(other._counts))
        merged = [self.count(k) + other.count(k) for k in range(n)]
        return LifetimeMultiset.from_counts(merged)

    def subtract(self, other: "LifetimeMultiset") -> "LifetimeMultiset":
        """Multiset difference; raises if other is not a sub-multiset."""
        if not other.issubset(self):
            raise ValueError(f"{other!r} is not a sub-multiset of {self!r}")
        n = len(self._counts)
        return LifetimeMultiset.from_counts(
            [self.count(k) - other.count(k) for k in range(n)]
        )

    def issubset(self, other: "LifetimeMultiset") -> bool:
        return all(
            mult <= other.count(life)
            for life, mult in enumerate(self._counts)
            if mult
        )

    def le(self, other: "LifetimeMultiset") -> bool:
        """Partial order: self <= other after zero-padding the sorted elements.

        Equivalent to: sort both descending, pad the shorter with zeros, and
        compare position by position.
        """
        n = max(self._size, other._size)
        if n == 0:
            return True
        mine = self.top(n)
        theirs = other.top(n)
        return all(a <= b for a, b in zip(mine, theirs))

    def __len__(self) -> int:
        return self._size

    def __iter__(self) -> Iterator[int]:
        return iter(self.elements())

    def __bool__(self) -> bool:
        return self._size > 0

    def __contains__(self, lifetime: int) -> bool:
        return self.count(lifetime) > 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LifetimeMultiset):
            return NotImplemented
        return self._counts == other._counts

    def __hash__(self) -> int:
        return hash(self._counts)

    def __repr__(self) -> str:
        inner = ",".join(str(e) for e in reversed(self.elements()))
        return "{%s}" % inner


EMPTY = LifetimeMultiset()
