"""Edge-collapse coarsening.

Candidates are examined shortest-edge-first: a vertex may collapse onto
a neighbour when that removes an edge shorter than L_min without
breaking the boundary policy, pinching its patch (link condition),
inverting an element or stretching any retargeted edge past L_max.
Collapses run one colour class at a time so no two adjacent vertices
move in the same sweep; cross-vertex bookkeeping goes through the
deferred buffer and is committed between classes. Because those commits
change the neighbourhoods that identification looked at, each class
re-validates its held targets against the current adjacency first and
sends the stale ones back for re-evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .colouring import colour_graph, independent_set, repair_colouring
from .errors import InvalidVertexError
from .parallel import (
    NE_ADD,
    NE_REMOVE,
    NN_ADD,
    NN_REMOVE,
    NN_REPLACE,
    DeferredOpsBuffer,
    partition,
)
from .refine import L_MAX_DEFAULT

L_MIN_DEFAULT = float(np.sqrt(2.0) / 2.0)

# Per-vertex scheduling state: a held target id, or one of these.
CANNOT_COLLAPSE = -1
REEVALUATE = -2


@dataclass
class CoarsenStats:
    rounds: int = 0
    collapses: int = 0
    recheck_aborts: int = 0
    stale_skipped: int = 0


def coarsen_identify(mesh, metric, vi, l_min=L_MIN_DEFAULT, l_max=L_MAX_DEFAULT):
    """Collapse target for one vertex, or CANNOT_COLLAPSE.

    Adjacent edges are tried shortest first; the first endpoint whose
    collapse removes a sub-``l_min`` edge and passes every legality check
    wins. Corners are pinned and boundary vertices may only slide along
    the boundary.
    """
    if not (0 <= vi < mesh.n_vertices) or mesh.detached[vi]:
        raise InvalidVertexError(f"vertex {vi} is detached or out of range")
    nn_indptr, nn_indices = mesh.nn_csr()
    ne_indptr, ne_indices = mesh.ne_csr()
    out = _kernels.coarsen_identify_batch(
        np.array([vi], dtype=np.int32),
        nn_indptr, nn_indices, ne_indptr, ne_indices, mesh.elements,
        mesh.coords, metric, mesh.boundary, float(l_min), float(l_max),
    )
    return int(out[0])


def coarsen_kernel(mesh, vi, vt, buf, worker=0, state=None):
    """Collapse vertex ``vi`` onto its neighbour ``vt``.

    Elements sharing edge (vi, vt) are deleted; vi's remaining elements
    get vi rewritten to vt in place, which is safe because no other
    member of the colour class touches them. Every edit to a row owned
    by some other vertex is deferred. With a ``state`` array the former
    neighbours are flagged for re-evaluation and vi leaves the dynamic
    set.
    """
    neighbours = list(mesh.nn[vi])
    in_target = set(mesh.nn[vt])
    shared = mesh.ne[vi] & mesh.ne[vt]

    for e in shared:
        for x in mesh.elements[e]:
            x = int(x)
            if x != vi:
                buf.defer(worker, NE_REMOVE, x, e)
        mesh.delete_element(e)
    for e in mesh.ne[vi] - shared:
        row = mesh.elements[e]
        row[row == vi] = vt
        buf.defer(worker, NE_ADD, vt, e)

    for u in neighbours:
        if u == vt:
            continue
        if u in in_target:
            # common patch: u keeps its edge to vt and just drops vi
            buf.defer(worker, NN_REMOVE, u, vi)
        else:
            buf.defer(worker, NN_REPLACE, u, vi, vt)
            buf.defer(worker, NN_ADD, vt, u)
    buf.defer(worker, NN_REMOVE, vt, vi)

    if state is not None:
        for u in neighbours:
            state[u] = REEVALUATE
        state[vi] = CANNOT_COLLAPSE
    mesh.detach_vertex(vi)


def coarsen_pass(mesh, metric, l_min=L_MIN_DEFAULT, l_max=L_MAX_DEFAULT, n_workers=1):
    """Collapse short edges until none can legally go; returns statistics.

    Each round re-identifies targets for every vertex flagged for
    re-evaluation, exits once the dynamic set is empty, and otherwise
    walks the colour classes: re-validate held targets, collapse the
    survivors, commit the deferred edits and repair the colouring before
    the next class reads the mesh.
    """
    stats = CoarsenStats()
    state = np.full(mesh.n_vertices, REEVALUATE, dtype=np.int64)
    state[mesh.detached != 0] = CANNOT_COLLAPSE
    cmap = colour_graph(mesh, n_workers)

    while True:
        reeval = np.flatnonzero(state == REEVALUATE).astype(np.int32)
        if len(reeval):
            nn_indptr, nn_indices = mesh.nn_csr()
            ne_indptr, ne_indices = mesh.ne_csr()
            state[reeval] = _kernels.coarsen_identify_batch(
                reeval, nn_indptr, nn_indices, ne_indptr, ne_indices,
                mesh.elements, mesh.coords, metric, mesh.boundary,
                float(l_min), float(l_max),
            )
        if not (state >= 0).any():
            break
        stats.rounds += 1
        collapsed_round = 0

        for colour in range(int(cmap.n_colours)):
            members = independent_set(cmap, state >= 0, colour)
            if len(members) == 0:
                continue
            # other classes committed since identification: re-check
            nn_indptr, nn_indices = mesh.nn_csr()
            ne_indptr, ne_indices = mesh.ne_csr()
            ok = _kernels.collapse_legal_batch(
                members.astype(np.int32), state[members].astype(np.int32),
                nn_indptr, nn_indices, ne_indptr, ne_indices, mesh.elements,
                mesh.coords, metric, mesh.boundary, float(l_max),
            )
            stale = members[ok == 0]
            state[stale] = REEVALUATE
            stats.recheck_aborts += len(stale)
            good = members[ok == 1]
            if len(good) == 0:
                continue

            buf = DeferredOpsBuffer(n_workers)
            dirty = []
            for worker, chunk in enumerate(partition(good, n_workers)):
                for vi in chunk:
                    vi = int(vi)
                    vt = int(state[vi])
                    dirty.append(vi)
                    dirty.extend(mesh.nn[vi])
                    coarsen_kernel(mesh, vi, vt, buf, worker, state)
                    cmap.colour[vi] = -1
                    collapsed_round += 1
            stats.stale_skipped += buf.commit(mesh)
            repair_colouring(mesh, cmap, np.array(dirty, dtype=np.int64))

        stats.collapses += collapsed_round
        if collapsed_round == 0:
            break
    return stats
