"""Bounded Content Store with LRU, FIFO, LFU and Random replacement."""

from __future__ import annotations

import enum
import heapq
import random
from dataclasses import dataclass
from typing import NamedTuple


class PolicyKind(str, enum.Enum):
    LRU = "lru"
    FIFO = "fifo"
    LFU = "lfu"
    RANDOM = "random"

    def __str__(self) -> str:
        return self.value


class ChunkId(NamedTuple):
    content: str
    index: int

    def __str__(self) -> str:
        return f"{self.content}/{self.index}"


class CacheInvariantError(RuntimeError):
    pass


@dataclass
class CacheEntry:
    chunk: ChunkId
    inserted_at: int
    last_access: int
    access_count: int = 1


def _eviction_key(policy: PolicyKind, e: CacheEntry) -> tuple:
    # equal counts fall back to recency, remaining ties to the smallest ChunkId
    if policy is PolicyKind.LRU:
        return (e.last_access, e.chunk)
    if policy is PolicyKind.FIFO:
        return (e.inserted_at, e.chunk)
    return (e.access_count, e.last_access, e.chunk)


class ContentStore:
    """A router's chunk cache.

    The deterministic policies keep a lazily invalidated heap of eviction
    keys; Random keeps a dense list for O(1) uniform choice.
    """

    def __init__(self, capacity: int, policy: PolicyKind = PolicyKind.LRU, rng_seed: int | str = 0):
        if capacity < 1:
            raise ValueError(f"capacity must be a positive integer, got {capacity}")
        self.capacity = capacity
        self.policy = PolicyKind(policy)
        self.rng = random.Random(rng_seed)
        self.entries: dict[ChunkId, CacheEntry] = {}
        self._heap: list = []
        self._slots: list[ChunkId] = []
        self._slot_of: dict[ChunkId, int] = {}
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, chunk) -> bool:
        return chunk in self.entries

    def chunks(self) -> set:
        return set(self.entries)

    def _push(self, e: CacheEntry) -> None:
        if self.policy is not PolicyKind.RANDOM:
            heapq.heappush(self._heap, _eviction_key(self.policy, e))
            if len(self._heap) > 4 * len(self.entries) + 64:
                self._rebuild_heap()

    def _rebuild_heap(self) -> None:
        self._heap = []
        if self.policy is not PolicyKind.RANDOM:
            self._heap = [_eviction_key(self.policy, e) for e in self.entries.values()]
            heapq.heapify(self._heap)

    def lookup(self, chunk: ChunkId, now: int) -> bool:
        e = self.entries.get(chunk)
        if e is None:
            self.misses += 1
            return False
        self.hits += 1
        e.last_access = now
        e.access_count += 1
        if self.policy in (PolicyKind.LRU, PolicyKind.LFU):
            self._push(e)
        return True

    def insert(self, chunk: ChunkId, now: int) -> ChunkId | None:
        if chunk in self.entries:
            raise CacheInvariantError(f"duplicate insert of {chunk}")
        evicted = None
        if len(self.entries) >= self.capacity:
            evicted = self._victim()
            self._remove(evicted)
            self.evictions += 1
        e = CacheEntry(chunk, now, now, 1)
        self.entries[chunk] = e
        self._slot_of[chunk] = len(self._slots)
        self._slots.append(chunk)
        self._push(e)
        return evicted

    def _victim(self) -> ChunkId:
        if self.policy is PolicyKind.RANDOM:
            return self._slots[self.rng.randrange(len(self._slots))]
        while True:
            key = heapq.heappop(self._heap)
            chunk = key[-1]
            e = self.entries.get(chunk)
            if e is not None and _eviction_key(self.policy, e) == key:
                return chunk

    def _remove(self, chunk: ChunkId) -> None:
        del self.entries[chunk]
        i = self._slot_of.pop(chunk)
        last = self._slots.pop()
        if last != chunk:
            self._slots[i] = last
            self._slot_of[last] = i

    def switch_policy(self, new: PolicyKind, now: int) -> None:
        """Change the replacement policy, keeping content but resetting metadata."""
        self.policy = PolicyKind(new)
        for e in self.entries.values():
            e.last_access = now
            e.access_count = 1
        self._rebuild_heap()
