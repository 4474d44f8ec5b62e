"""Distance-1 vertex colouring and independent-set extraction.

Colouring proceeds in three stages: a speculative first-fit pass over
worker-sized chunks (neighbour colours are read as-is, so cross-chunk
races can produce conflicts), a parallel conflict-detection pass, and a
serial ascending-id resolution pass. Adaptation kernels then walk colour
classes: members of one class are pairwise non-adjacent, so their
distance-1 patches never overlap.
"""

from __future__ import annotations

import time

import numpy as np

from . import _kernels, timing
from .parallel import partition


class ColourMap:
    """Per-vertex colours; -1 marks vertices outside the colouring."""

    __slots__ = ("colour",)

    def __init__(self, colour):
        self.colour = colour

    @property
    def n_colours(self):
        live = self.colour[self.colour >= 0]
        return int(live.max()) + 1 if len(live) else 0

    def copy(self):
        return ColourMap(self.colour.copy())


def colour_graph(mesh, n_workers=1):
    """Proper colouring of the live vertices."""
    t0 = time.perf_counter()
    nn_indptr, nn_indices = mesh.nn_csr()
    colours = np.full(mesh.n_vertices, -1, dtype=np.int32)
    live = np.flatnonzero(mesh.detached == 0).astype(np.int32)

    # stage (a): speculative first-fit, one chunk per worker
    for chunk in partition(live, n_workers):
        _kernels.colour_assign(chunk, nn_indptr, nn_indices, colours)

    _resolve_conflicts(live, nn_indptr, nn_indices, colours)
    timing.add("colouring", time.perf_counter() - t0)
    return ColourMap(colours)


def repair_colouring(mesh, cmap, dirty):
    """Re-establish propriety after local topology changes.

    Any conflict edge has at least one endpoint whose colour or
    neighbourhood changed, so checking dirty vertices plus their
    neighbours covers every possible violation.
    """
    dirty = np.asarray(sorted(dirty), dtype=np.int64)
    if len(dirty) == 0:
        return cmap
    t0 = time.perf_counter()
    nn_indptr, nn_indices = mesh.nn_csr()
    closure = set()
    for v in dirty:
        v = int(v)
        if mesh.detached[v]:
            continue
        closure.add(v)
        closure.update(int(u) for u in nn_indices[nn_indptr[v] : nn_indptr[v + 1]])
    check = np.array(sorted(closure), dtype=np.int32)
    colours = cmap.colour
    # vertices new since the last full colouring enter with colour -1
    fresh = check[colours[check] < 0]
    if len(fresh):
        _kernels.colour_assign(fresh, nn_indptr, nn_indices, colours)
    _resolve_conflicts(check, nn_indptr, nn_indices, colours)
    timing.add("colouring", time.perf_counter() - t0)
    return cmap


def independent_set(cmap, active, colour):
    """Ascending ids of active vertices holding ``colour``."""
    active = np.asarray(active)
    if active.dtype == bool:
        active = np.flatnonzero(active)
    active = np.unique(active.astype(np.int64))
    sel = cmap.colour[active] == colour
    return active[sel].astype(np.int32)


def check_proper(mesh, cmap):
    """Conflict edge count; 0 for a proper colouring."""
    indptr, indices = mesh.nn_csr()
    vi = np.repeat(np.arange(mesh.n_vertices), np.diff(indptr))
    vj = indices
    keep = vi < vj
    c = cmap.colour
    bad = (c[vi[keep]] >= 0) & (c[vi[keep]] == c[vj[keep]])
    return int(bad.sum())


def _resolve_conflicts(verts, nn_indptr, nn_indices, colours):
    # stage (b): flag the higher endpoint of each conflict edge
    flags = _kernels.colour_conflicts(verts, nn_indptr, nn_indices, colours, True)
    bad = verts[flags == 1]
    if len(bad) == 0:
        return
    # stage (c): serial ascending first-fit; earlier fixes are visible to
    # later ones, so one pass restores propriety
    bad = np.sort(bad).astype(np.int32)
    for v in bad:
        v = int(v)
        lo, hi = int(nn_indptr[v]), int(nn_indptr[v + 1])
        deg = hi - lo
        used = np.zeros(deg + 2, dtype=bool)
        for p in range(lo, hi):
            c = int(colours[nn_indices[p]])
            if 0 <= c <= deg:
                used[c] = True
        for c in range(deg + 1):
            if not used[c]:
                colours[v] = c
                break
