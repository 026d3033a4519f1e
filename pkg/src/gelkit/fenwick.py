"""Fenwick (binary indexed) tree over nonnegative float weights.

Backs the particle samplers: each rate coordinate keeps one tree of
absolute coordinate values, giving O(log capacity) weighted draws and
updates.  Indices are 0-based externally, 1-based in the internal array.
Weights must stay nonnegative for `find` to be a valid sampler.
"""

from __future__ import annotations

from typing import Sequence


class FenwickTree:
    __slots__ = ("_size", "_log_size", "_tree", "_values")

    def __init__(self, values: Sequence[float] | int):
        if isinstance(values, int):
            size = values
            vals = [0.0] * size
        else:
            vals = [float(v) for v in values]
            size = len(vals)
        if size < 1:
            raise ValueError("tree needs capacity of at least one slot")
        self._size = size
        # highest power of two <= size, for the descending-bit search
        u = size
        while u & (u - 1):
            u &= u - 1
        self._log_size = u
        self._values = vals
        self._build()

    def _build(self) -> None:
        tree = [0.0] * (self._size + 1)
        vals = self._values
        for i in range(1, self._size + 1):
            tree[i] += vals[i - 1]
            j = i + (i & -i)
            if j <= self._size:
                tree[j] += tree[i]
        self._tree = tree

    def __len__(self) -> int:
        return self._size

    @property
    def total(self) -> float:
        return self.cumulative(self._size - 1)

    def value(self, index: int) -> float:
        return self._values[index]

    def cumulative(self, index: int) -> float:
        """Sum of values through `index` inclusive."""
        i = index + 1
        s = 0.0
        tree = self._tree
        while i > 0:
            s += tree[i]
            i &= i - 1
        return s

    def increment(self, index: int, delta: float) -> None:
        self._values[index] += delta
        i = index + 1
        size, tree = self._size, self._tree
        while i <= size:
            tree[i] += delta
            i += i & -i

    def set_value(self, index: int, value: float) -> None:
        self.increment(index, float(value) - self._values[index])

    def find(self, target: float) -> int:
        """Smallest index whose cumulative sum strictly exceeds `target`.

        With target drawn uniformly from [0, total) this samples an index
        with probability proportional to its value.
        """
        i = 0
        half = self._log_size
        tree, size = self._tree, self._size
        while half > 0:
            j = i + half
            if j <= size and tree[j] <= target:
                target -= tree[j]
                i = j
            half >>= 1
        # i is the count of slots with cumulative <= target, so it is the
        # 0-based answer; clamp covers target==total float-rounding draws.
        return i if i < size else size - 1

    def rebuild(self, values: Sequence[float]) -> None:
        """Reset all values at once (O(size)); used by drift resyncs."""
        vals = [float(v) for v in values]
        if len(vals) != self._size:
            raise ValueError("rebuild must keep the capacity")
        self._values = vals
        self._build()
