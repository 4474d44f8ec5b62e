"""Quality-gated edge flipping.

An interior edge is flipped when the worse of the two replacement
triangles beats the worse of the current pair by more than a small
tolerance and the surrounding quadrilateral is strictly convex. A pass
marks every edge, then drains the marks over colour classes: each class
is traversed up to three times, where a traversal batch-evaluates the
gates against the committed adjacency, applies accepted flips (element
triples in place, everything else deferred), skips edges whose rhombus
was already touched this traversal, and re-marks the four surrounding
edges of each flip so improvements can propagate. Commit plus colour
repair runs after every traversal so the next one reads a clean mesh.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .colouring import colour_graph, independent_set, repair_colouring
from .errors import InvalidVertexError
from .parallel import (
    MARK_ADD,
    NE_ADD,
    NE_REMOVE,
    NN_ADD,
    NN_REMOVE,
    DeferredOpsBuffer,
    partition,
)

SWAP_TOL = 1e-12  # strict-improvement margin; blocks flip cycles on ties


@dataclass
class SwapStats:
    flips: int = 0
    rejected: int = 0
    skipped_stale: int = 0
    passes: int = 0
    capped: bool = False
    stale_skipped: int = 0
    # audit trail: accepted flips whose gate margin was not strictly positive
    improvement_violations: int = 0


def _flip_triangles(coords, a, b, o0, o1):
    """Replacement triples for flipping edge (a, b) to (o0, o1), oriented
    by which side of the new diagonal each old endpoint falls on."""
    dx = coords[o1, 0] - coords[o0, 0]
    dy = coords[o1, 1] - coords[o0, 1]
    s0 = dx * (coords[a, 1] - coords[o0, 1]) - dy * (coords[a, 0] - coords[o0, 0])
    if s0 > 0.0:
        # a left of o0->o1, so (a, o0, o1) winds CCW; mirrors the gate kernel
        return (a, o0, o1), (b, o1, o0)
    return (a, o1, o0), (b, o0, o1)


def _apply_flip(mesh, buf, worker, a, b, e0, e1, o0, o1):
    """Rewrite the two element slots and queue the adjacency edits.

    ``e0`` must be the slot whose opposite vertex is ``o0``. Vertex a's
    own rows are edited immediately (its class owns them); every other
    row goes through the buffer.
    """
    t1, t2 = _flip_triangles(mesh.coords, a, b, o0, o1)
    mesh.elements[e0] = t1
    mesh.elements[e1] = t2
    mesh.ne[a].remove(e1)
    mesh.nn[a].remove(b)
    buf.defer(worker, NE_REMOVE, b, e0)
    buf.defer(worker, NE_ADD, o1, e0)
    buf.defer(worker, NE_ADD, o0, e1)
    buf.defer(worker, NN_REMOVE, b, a)
    buf.defer(worker, NN_ADD, o0, o1)
    buf.defer(worker, NN_ADD, o1, o0)


def swap_edge(mesh, metric, vi, vj, tol=SWAP_TOL):
    """Flip one edge if that improves the worse incident quality.

    Returns True when the flip was applied. Boundary edges and pairs
    that are not currently an edge return False.
    """
    for v in (vi, vj):
        if not (0 <= v < mesh.n_vertices) or mesh.detached[v]:
            raise InvalidVertexError(f"vertex {v} is detached or out of range")
    if vj not in mesh.nn[vi]:
        return False
    shared = sorted(mesh.ne[vi] & mesh.ne[vj])
    if len(shared) != 2:
        return False
    e0, e1 = int(shared[0]), int(shared[1])
    opp0 = int(mesh.elements[e0].sum()) - vi - vj
    opp1 = int(mesh.elements[e1].sum()) - vi - vj
    accept, _, _ = _kernels.swap_gates(
        np.array([vi], dtype=np.int32), np.array([vj], dtype=np.int32),
        np.array([e0], dtype=np.int32), np.array([e1], dtype=np.int32),
        np.array([opp0], dtype=np.int32), np.array([opp1], dtype=np.int32),
        mesh.elements, mesh.coords, metric, float(tol),
    )
    if not accept[0]:
        return False
    buf = DeferredOpsBuffer(1)
    _apply_flip(mesh, buf, 0, vi, vj, e0, e1, opp0, opp1)
    buf.commit(mesh)
    return True


def swap_pass(mesh, metric, n_workers=1, tol=SWAP_TOL, max_traversals=3):
    """Flip until no marked edge can improve its pair; returns statistics.

    Marks live at the lower-id endpoint, so each active vertex drains
    only edges it owns and propagation marks to other vertices travel
    through the deferred buffer.
    """
    stats = SwapStats()
    n = mesh.n_vertices
    marked = [set() for _ in range(n)]
    for a, b in mesh.edge_array():
        marked[int(a)].add(int(b))
    cap = 100 * mesh.n_live_elements

    while not stats.capped:
        active = np.array([v for v in range(n) if marked[v]], dtype=np.int64)
        if len(active) == 0:
            break
        stats.passes += 1
        cmap = colour_graph(mesh, n_workers)

        for colour in range(int(cmap.n_colours)):
            for _ in range(max_traversals):
                active = np.array([v for v in range(n) if marked[v]], dtype=np.int64)
                members = independent_set(cmap, active, colour)
                if len(members) == 0:
                    break
                processed = 0
                pairs = [(int(m), j) for m in members for j in sorted(marked[int(m)])]
                pvi = np.array([p[0] for p in pairs], dtype=np.int32)
                pvj = np.array([p[1] for p in pairs], dtype=np.int32)
                ne_indptr, ne_indices = mesh.ne_csr()
                e0, e1, opp0, opp1, count = _kernels.find_edge_elements(
                    pvi, pvj, ne_indptr, ne_indices, mesh.elements
                )
                interior = count == 2
                accept = np.zeros(len(pairs), dtype=np.uint8)
                q_gain = np.zeros(len(pairs), dtype=np.float64)
                if interior.any():
                    idx = np.flatnonzero(interior)
                    acc, qo, qn = _kernels.swap_gates(
                        pvi[idx], pvj[idx], e0[idx], e1[idx],
                        opp0[idx], opp1[idx],
                        mesh.elements, mesh.coords, metric, float(tol),
                    )
                    accept[idx] = acc
                    q_gain[idx] = qn - qo

                buf = DeferredOpsBuffer(n_workers)
                touched = set()
                for worker, chunk in enumerate(partition(members, n_workers)):
                    for m in chunk:
                        m = int(m)
                        lo = int(np.searchsorted(pvi, m, side="left"))
                        hi = int(np.searchsorted(pvi, m, side="right"))
                        for p in range(lo, hi):
                            j = int(pvj[p])
                            if not interior[p]:
                                marked[m].discard(j)  # boundary or vanished
                                processed += 1
                                continue
                            o0, o1 = int(opp0[p]), int(opp1[p])
                            if touched & {m, j, o0, o1}:
                                stats.skipped_stale += 1
                                continue  # stays marked for the next traversal
                            processed += 1
                            if not accept[p]:
                                stats.rejected += 1
                                marked[m].discard(j)
                                continue
                            _apply_flip(mesh, buf, worker, m, j, int(e0[p]), int(e1[p]), o0, o1)
                            touched.update((m, j, o0, o1))
                            marked[m].discard(j)
                            stats.flips += 1
                            if not q_gain[p] > 0.0:
                                stats.improvement_violations += 1
                            # propagate: surrounding rhombus edges re-enter
                            for x, y in ((m, o0), (m, o1), (j, o0), (j, o1)):
                                lo_v, hi_v = (x, y) if x < y else (y, x)
                                if lo_v == m:
                                    marked[m].add(hi_v)
                                else:
                                    buf.defer(worker, MARK_ADD, lo_v, hi_v)
                            if stats.flips >= cap:
                                stats.capped = True
                                warnings.warn(
                                    "edge-flip cap reached; mesh may still hold "
                                    "improvable edges",
                                    RuntimeWarning,
                                )
                                break
                        if stats.capped:
                            break
                    if stats.capped:
                        break
                stats.stale_skipped += buf.commit(mesh, marked=marked)
                if touched:
                    repair_colouring(
                        mesh, cmap, np.fromiter(touched, dtype=np.int64)
                    )
                if stats.capped or processed == 0:
                    break
            if stats.capped:
                break
    return stats
