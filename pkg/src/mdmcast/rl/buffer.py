"""Bounded FIFO transition store for offline training."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass


class BufferError(RuntimeError):
    pass


@dataclass(frozen=True)
class Transition:
    s: object
    a: int
    r: float
    s_next: object
    done: bool


class ReplayBuffer:
    def __init__(self, capacity):
        if capacity < 1:
            raise BufferError("capacity must be positive")
        self.capacity = capacity
        self._items = deque(maxlen=capacity)

    def add(self, tr):
        self._items.append(tr)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def clear(self):
        self._items.clear()

    def sample(self, k, rng):
        """Batch of k transitions, drawn without replacement."""
        if len(self._items) < k:
            raise BufferError(
                f"buffer holds {len(self._items)} transitions, need {k}")
        idx = rng.choice(len(self._items), size=k, replace=False)
        return [self._items[int(i)] for i in idx]
