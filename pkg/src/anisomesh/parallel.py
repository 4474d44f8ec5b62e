"""Worker partitioning, atomic worklist reservation, deferred adjacency edits.

Adaptation kernels run over independent sets, so concurrent workers never
touch the same vertex's patch. Edits to OTHER vertices' adjacency are not
applied in place; they are deferred into per-(worker, owner) lists and
committed after a barrier, each vertex's list mutated only by its owning
worker (owner = vertex id mod n_workers). This removes the races that a
distance-2 colouring would otherwise have to prevent.
"""

from __future__ import annotations

import os
import threading
import time

import numpy as np

from . import timing
from .errors import StructuralError

# deferred edit kinds
NN_ADD = 0      # target gains neighbour a
NN_REMOVE = 1   # target loses neighbour a
NN_REPLACE = 2  # target's neighbour a becomes b
NE_ADD = 3      # target gains incident element a
NE_REMOVE = 4   # target loses incident element a
MARK_ADD = 5    # mark edge (target, a) in a side table (swap propagation)

_KIND_NAMES = ("NN_ADD", "NN_REMOVE", "NN_REPLACE", "NE_ADD", "NE_REMOVE", "MARK_ADD")


def resolve_workers(requested=None):
    """Worker count from the explicit request or ANISOMESH_WORKERS, else 1."""
    if requested is None:
        env = os.environ.get("ANISOMESH_WORKERS", "").strip()
        requested = env if env else 1
    n = int(requested)
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    return n


def partition(ids, n_workers):
    """Split an id array into n_workers contiguous, balanced chunks."""
    ids = np.asarray(ids)
    if n_workers <= 1 or len(ids) == 0:
        return [ids] if len(ids) else []
    bounds = np.linspace(0, len(ids), n_workers + 1).astype(np.int64)
    return [ids[bounds[i] : bounds[i + 1]] for i in range(n_workers) if bounds[i] < bounds[i + 1]]


class FetchAddCounter:
    """Shared counter with atomic fetch-and-add."""

    __slots__ = ("_value", "_lock")

    def __init__(self, start=0):
        self._value = int(start)
        self._lock = threading.Lock()

    def fetch_add(self, count):
        with self._lock:
            old = self._value
            self._value += int(count)
            return old

    @property
    def value(self):
        with self._lock:
            return self._value


class Worklist:
    """Pre-sized shared array filled through disjoint reserved ranges.

    reserve() hands out [base, base+count) slices by fetch-and-add;
    capacity overflow grows the storage inside the same exclusive
    section, so concurrent writers never observe a stale buffer.
    """

    def __init__(self, capacity, dtype=np.int32):
        self._storage = np.empty(int(capacity), dtype=dtype)
        self._size = 0
        self._lock = threading.Lock()

    def reserve(self, count):
        count = int(count)
        if count < 0:
            raise ValueError("reserve count must be nonnegative")
        with self._lock:
            base = self._size
            self._size += count
            if self._size > len(self._storage):
                new_cap = max(self._size, 2 * len(self._storage), 16)
                grown = np.empty(new_cap, dtype=self._storage.dtype)
                grown[:base] = self._storage[:base]
                self._storage = grown
            return base

    def write(self, base, items):
        n = len(items)
        self._storage[base : base + n] = items

    def push(self, items):
        base = self.reserve(len(items))
        self.write(base, items)
        return base

    @property
    def size(self):
        with self._lock:
            return self._size

    def view(self):
        return self._storage[: self.size]


class DeferredOpsBuffer:
    """Per-(worker, owner) lists of pending adjacency edits.

    An edit targeting vertex i lives in owner slot i mod n_workers; at
    commit each owner slot is drained by one logical worker, incoming
    lists applied in ascending source-worker order. Edits that reference
    a vertex detached by the same sweep are skipped and counted.
    """

    def __init__(self, n_workers):
        if n_workers < 1:
            raise ValueError("need at least one worker")
        self.n_workers = n_workers
        self._lists = [[[] for _ in range(n_workers)] for _ in range(n_workers)]
        self.stale_skipped = 0

    def defer(self, worker, kind, target, a, b=-1):
        owner = target % self.n_workers
        self._lists[worker][owner].append((kind, target, a, b))

    def pending_count(self):
        return sum(len(l) for row in self._lists for l in row)

    def commit(self, mesh, marked=None):
        """Apply all pending edits; returns the stale-skip count for this call."""
        t0 = time.perf_counter()
        skipped = 0
        detached = mesh.detached
        nn = mesh.nn
        ne = mesh.ne
        for owner in range(self.n_workers):
            for worker in range(self.n_workers):
                for kind, target, a, b in self._lists[worker][owner]:
                    if detached[target]:
                        skipped += 1
                        continue
                    if kind == NN_ADD:
                        # adds referencing a vertex removed meanwhile are stale;
                        # removals of such references must still go through
                        if detached[a]:
                            skipped += 1
                            continue
                        row = nn[target]
                        if a not in row:
                            row.append(a)
                    elif kind == NN_REMOVE:
                        try:
                            nn[target].remove(a)
                        except ValueError:
                            raise StructuralError(
                                f"NN_REMOVE: {a} not adjacent to {target}"
                            ) from None
                    elif kind == NN_REPLACE:
                        row = nn[target]
                        try:
                            idx = row.index(a)
                        except ValueError:
                            raise StructuralError(
                                f"NN_REPLACE: {a} not adjacent to {target}"
                            ) from None
                        if detached[b]:
                            # replacement died meanwhile: degrade to a removal
                            row.pop(idx)
                            skipped += 1
                        elif b in row:
                            # both endpoints already linked: collapse closed a
                            # 4-cycle, so drop the old entry instead of duping
                            row.pop(idx)
                        else:
                            row[idx] = b
                    elif kind == NE_ADD:
                        ne[target].add(a)
                    elif kind == NE_REMOVE:
                        try:
                            ne[target].remove(a)
                        except KeyError:
                            raise StructuralError(
                                f"NE_REMOVE: element {a} not incident to {target}"
                            ) from None
                    elif kind == MARK_ADD:
                        if detached[a]:
                            skipped += 1
                            continue
                        if marked is None:
                            raise StructuralError("MARK_ADD committed without a mark table")
                        marked[target].add(a)
                    else:
                        raise StructuralError(f"unknown edit kind {kind}")
                self._lists[worker][owner] = []
        self.stale_skipped += skipped
        timing.add("commit", time.perf_counter() - t0)
        return skipped
