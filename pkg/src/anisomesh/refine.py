"""Edge bisection refinement.

A pass has two phases. The edge phase scans every physical edge once
(enforced by the vi < vj canonical orientation), bisects those whose
metric length exceeds L_max at the Euclidean midpoint, and wires the new
vertex into the endpoint adjacency immediately: the split-edge worklist
assigns each edge to exactly one worker, so those particular updates
cannot race. The element phase then subdivides every element according
to how many of its edges were split (1:2, 1:3 across the shorter metric
diagonal, or 1:4), writing one child into the parent's slot and
appending the rest into ranges reserved per worker; all remaining
adjacency edits go through the deferred buffer. No colouring is needed
anywhere in the pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .mesh import BOUNDARY, INTERIOR
from .parallel import (
    NE_ADD,
    NE_REMOVE,
    NN_ADD,
    DeferredOpsBuffer,
    FetchAddCounter,
    Worklist,
    partition,
)

L_MAX_DEFAULT = float(np.sqrt(2.0))


@dataclass
class RefineStats:
    edges_examined: int = 0
    edges_split: int = 0
    new_vertices: int = 0
    new_elements: int = 0
    splits_by_kind: dict = field(default_factory=lambda: {1: 0, 2: 0, 3: 0})
    stale_skipped: int = 0


def refine_pass(mesh, metric, l_max=L_MAX_DEFAULT, n_workers=1):
    """Bisect every over-long edge; returns (metric, stats).

    The metric array grows with the mesh (midpoints carry the exact 0.5
    interpolation of their parents), so the possibly reallocated array is
    returned alongside the statistics.
    """
    stats = RefineStats()
    edges = mesh.edge_array()
    stats.edges_examined = len(edges)
    if len(edges) == 0:
        return metric, stats

    vi = np.ascontiguousarray(edges[:, 0], dtype=np.int32)
    vj = np.ascontiguousarray(edges[:, 1], dtype=np.int32)
    lengths = _kernels.edge_lengths(vi, vj, mesh.coords, metric)
    long_idx = np.flatnonzero(lengths > l_max).astype(np.int64)
    if len(long_idx) == 0:
        return metric, stats

    ne_indptr, ne_indices = mesh.ne_csr()
    e0, e1, opp0, opp1, ecount = _kernels.find_edge_elements(
        vi[long_idx].copy(), vj[long_idx].copy(), ne_indptr, ne_indices, mesh.elements
    )

    # --- edge phase -------------------------------------------------------
    # Split-edge worklist: each worker captures a private range, then a
    # single vertex-id range for its midpoints.
    worklist = Worklist(len(edges), dtype=np.int64)
    vertex_counter = FetchAddCounter(mesh.n_vertices)
    chunk_assign = []  # (edge-order positions, id base) per worker
    for chunk in partition(np.arange(len(long_idx)), n_workers):
        base = worklist.reserve(len(chunk))
        worklist.write(base, long_idx[chunk])
        id_base = vertex_counter.fetch_add(len(chunk))
        chunk_assign.append((base, len(chunk), id_base))

    n_new = len(long_idx)
    orig_n = mesh.n_vertices
    mid_coords = np.empty((n_new, 2), dtype=np.float64)
    mid_metric = np.empty((n_new, 3), dtype=np.float64)
    mid_tags = np.empty(n_new, dtype=np.int8)
    parents = np.empty((n_new, 2), dtype=np.int64)

    marks_vn = np.full((mesh.n_element_slots, 3), -1, dtype=np.int64)

    order = worklist.view()
    for base, count, id_base in chunk_assign:
        for k in range(count):
            pos = base + k
            eidx = int(order[pos])
            a, b = int(vi[eidx]), int(vj[eidx])
            vn = id_base + k
            slot = vn - orig_n  # rows indexed by final id, not visit order
            mid_coords[slot] = 0.5 * (mesh.coords[a] + mesh.coords[b])
            mid_metric[slot] = 0.5 * (metric[a] + metric[b])
            # an edge with a single incident element lies on the boundary
            mid_tags[slot] = BOUNDARY if ecount[pos] == 1 else INTERIOR
            parents[slot] = (a, b)
            # immediate neighbour rewiring: this worker owns the edge
            row = mesh.nn[a]
            row[row.index(b)] = vn
            row = mesh.nn[b]
            row[row.index(a)] = vn
            # record the midpoint on each incident element's local edge
            for e in (int(e0[pos]), int(e1[pos])):
                if e < 0:
                    continue
                t = mesh.elements[e]
                for l in range(3):
                    x, y = int(t[(l + 1) % 3]), int(t[(l + 2) % 3])
                    if (x == a and y == b) or (x == b and y == a):
                        marks_vn[e, l] = vn
                        break

    vert_base = mesh.add_vertices(mid_coords, mid_tags)
    assert vert_base == orig_n
    for slot in range(n_new):
        mesh.nn[orig_n + slot] = [int(parents[slot, 0]), int(parents[slot, 1])]
    metric = np.vstack([metric, mid_metric])
    stats.edges_split = n_new
    stats.new_vertices = n_new

    # --- element phase ----------------------------------------------------
    marked_elems = np.flatnonzero((marks_vn >= 0).any(axis=1))

    n_marks = (marks_vn[marked_elems] >= 0).sum(axis=1)
    elem_counter = FetchAddCounter(mesh.n_element_slots)
    elem_chunks = []
    for chunk in partition(np.arange(len(marked_elems)), n_workers):
        extra = int(n_marks[chunk].sum())  # children beyond the reused slot
        base = elem_counter.fetch_add(extra)
        elem_chunks.append((chunk, base))
    total_extra = elem_counter.value - mesh.n_element_slots
    grow_base = mesh.grow_elements(total_extra)
    assert grow_base + total_extra == mesh.n_element_slots

    buf = DeferredOpsBuffer(n_workers)
    for worker, (chunk, base) in enumerate(elem_chunks):
        cursor = base
        for ci in chunk:
            e = int(marked_elems[ci])
            kind = int(n_marks[ci])
            children = split_element(mesh, metric, e, marks_vn[e])
            stats.splits_by_kind[kind] += 1
            new_ids = [e] + [cursor + i for i in range(len(children) - 1)]
            cursor += len(children) - 1
            _apply_children(mesh, buf, worker, e, children, new_ids)
    stats.new_elements = total_extra
    stats.stale_skipped = buf.commit(mesh)
    return metric, stats


def split_element(mesh, metric, e, marks):
    """Child triples for one parent element.

    marks[l] is the midpoint vertex id of local edge l (the edge opposite
    vertex l) or -1 if that edge was not split. Children are returned as
    CCW triples; together they tile the parent exactly. Raises ValueError
    when no edge is marked (callers filter unmarked elements out).
    """
    v0, v1, v2 = (int(x) for x in mesh.elements[e])
    m0, m1, m2 = (int(m) for m in marks)
    count = (m0 >= 0) + (m1 >= 0) + (m2 >= 0)
    if count == 0:
        raise ValueError(f"element {e} has no split edges")

    if count == 3:
        return [
            (v0, m2, m1),
            (v1, m0, m2),
            (v2, m1, m0),
            (m0, m1, m2),
        ]
    if count == 1:
        # rotate so the split edge is opposite r0
        if m0 >= 0:
            r0, r1, r2, m = v0, v1, v2, m0
        elif m1 >= 0:
            r0, r1, r2, m = v1, v2, v0, m1
        else:
            r0, r1, r2, m = v2, v0, v1, m2
        return [(r0, r1, m), (r0, m, r2)]

    # two marks: rotate so the unsplit edge is opposite r0; the quad
    # (mb, r1, r2, ma) is cut across its shorter metric diagonal
    if m0 < 0:
        r0, r1, r2, ma, mb = v0, v1, v2, m1, m2
    elif m1 < 0:
        r0, r1, r2, ma, mb = v1, v2, v0, m2, m0
    else:
        r0, r1, r2, ma, mb = v2, v0, v1, m0, m1
    # ma on edge (r2, r0), mb on edge (r0, r1)
    d1 = _elen(mesh, metric, mb, r2)
    d2 = _elen(mesh, metric, ma, r1)
    if d1 <= d2:
        quad = [(mb, r1, r2), (mb, r2, ma)]
    else:
        quad = [(mb, r1, ma), (r1, r2, ma)]
    return [(r0, mb, ma)] + quad


def _elen(mesh, metric, a, b):
    d = mesh.coords[b] - mesh.coords[a]
    m = 0.5 * (metric[a] + metric[b])
    q = m[0] * d[0] * d[0] + 2.0 * m[1] * d[0] * d[1] + m[2] * d[1] * d[1]
    return np.sqrt(q) if q > 0.0 else 0.0


def _apply_children(mesh, buf, worker, parent, children, ids):
    """Write child triples and queue the adjacency consequences."""
    old = tuple(int(x) for x in mesh.elements[parent])
    first = children[0]
    mesh.elements[parent] = first
    for cid, tri in zip(ids[1:], children[1:]):
        mesh.elements[cid] = tri

    # NE bookkeeping: vertex keeps the parent id only if it sits in child 0
    keep = set(first)
    for v in old:
        if v not in keep:
            buf.defer(worker, NE_REMOVE, v, parent)
    for v in first:
        if v not in old:
            buf.defer(worker, NE_ADD, v, parent)
    for cid, tri in zip(ids[1:], children[1:]):
        for v in tri:
            buf.defer(worker, NE_ADD, v, cid)

    # NN bookkeeping: edges internal to the subdivision that are not
    # sub-segments of the parent's edges are genuinely new
    old_set = set(old)
    seen = set()
    for tri in children:
        for l in range(3):
            a, b = tri[(l + 1) % 3], tri[(l + 2) % 3]
            key = (a, b) if a < b else (b, a)
            if key in seen:
                continue
            seen.add(key)
            if a in old_set and b in old_set:
                continue  # parent corner pair: edge predates the split
            if a in old_set or b in old_set:
                mid, corner = (b, a) if a in old_set else (a, b)
                # midpoint-to-endpoint links along the parent's split
                # edges were wired immediately in the edge phase
                if corner in _parents_of(mesh, mid):
                    continue
            buf.defer(worker, NN_ADD, a, b)
            buf.defer(worker, NN_ADD, b, a)


def _parents_of(mesh, vn):
    # midpoints were initialised with exactly their two parent endpoints;
    # later deferred adds append after them, so the first two entries are
    # stable for the lifetime of the pass
    row = mesh.nn[vn]
    return (row[0], row[1]) if len(row) >= 2 else ()
