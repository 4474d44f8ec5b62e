"""Pure-numpy kernel implementations.

Reference semantics for the jitted backend: every function here has an
identical twin in ``_numba``; the dispatch module picks one at import time.
Batch entry points take canonical sorted-CSR adjacency snapshots so results
do not depend on the insertion order of the live adjacency lists.
"""

from __future__ import annotations

import numpy as np

_SQRT3_12 = 12.0 * np.sqrt(3.0)


# -- scalar geometry helpers -----------------------------------------------


def _metric_edge_length(dx, dy, m00, m01, m11):
    q = m00 * dx * dx + 2.0 * m01 * dx * dy + m11 * dy * dy
    return np.sqrt(q) if q > 0.0 else 0.0


def _tri_quality(ax, ay, bx, by, cx, cy, ma, mb, mc):
    """Metric-space shape quality of one triangle, 0 when degenerate."""
    area_e = 0.5 * ((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))
    m00 = (ma[0] + mb[0] + mc[0]) / 3.0
    m01 = (ma[1] + mb[1] + mc[1]) / 3.0
    m11 = (ma[2] + mb[2] + mc[2]) / 3.0
    det = m00 * m11 - m01 * m01
    if det <= 0.0:
        return 0.0
    area_m = np.sqrt(det) * area_e
    if area_m <= 0.0:
        return 0.0
    l0 = _metric_edge_length(
        cx - bx, cy - by,
        0.5 * (mb[0] + mc[0]), 0.5 * (mb[1] + mc[1]), 0.5 * (mb[2] + mc[2]),
    )
    l1 = _metric_edge_length(
        ax - cx, ay - cy,
        0.5 * (mc[0] + ma[0]), 0.5 * (mc[1] + ma[1]), 0.5 * (mc[2] + ma[2]),
    )
    l2 = _metric_edge_length(
        bx - ax, by - ay,
        0.5 * (ma[0] + mb[0]), 0.5 * (ma[1] + mb[1]), 0.5 * (ma[2] + mb[2]),
    )
    perim = l0 + l1 + l2
    if perim <= 0.0:
        return 0.0
    x = perim / 3.0
    s = x if x < 1.0 / x else 1.0 / x
    t = s * (2.0 - s)
    shape = t * t * t
    return _SQRT3_12 * area_m / (perim * perim) * shape


def _quality_of(tri_row, coords, metric):
    a, b, c = int(tri_row[0]), int(tri_row[1]), int(tri_row[2])
    return _tri_quality(
        coords[a, 0], coords[a, 1],
        coords[b, 0], coords[b, 1],
        coords[c, 0], coords[c, 1],
        metric[a], metric[b], metric[c],
    )


# -- batch kernels ----------------------------------------------------------


def edge_lengths(vi, vj, coords, metric):
    """Metric lengths of edges (vi[k], vj[k]) with endpoint-averaged tensors."""
    d = coords[vj] - coords[vi]
    m = 0.5 * (metric[vi] + metric[vj])
    # association matches the scalar helper so both backends agree bitwise
    q = m[:, 0] * d[:, 0] * d[:, 0] + 2.0 * m[:, 1] * d[:, 0] * d[:, 1] + m[:, 2] * d[:, 1] * d[:, 1]
    return np.sqrt(np.maximum(q, 0.0))


def element_qualities(tri, coords, metric):
    """Quality per element row; deleted rows (first id -1) score 0."""
    tri = np.asarray(tri)
    out = np.zeros(len(tri), dtype=np.float64)
    live = tri[:, 0] >= 0
    if not live.any():
        return out
    t = tri[live]
    a, b, c = coords[t[:, 0]], coords[t[:, 1]], coords[t[:, 2]]
    ma, mb, mc = metric[t[:, 0]], metric[t[:, 1]], metric[t[:, 2]]
    area_e = 0.5 * (
        (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
        - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    )
    mm = (ma + mb + mc) / 3.0
    det = mm[:, 0] * mm[:, 2] - mm[:, 1] ** 2
    area_m = np.sqrt(np.maximum(det, 0.0)) * area_e

    def _elen(p, q, mp, mq):
        d = q - p
        m = 0.5 * (mp + mq)
        v = m[:, 0] * d[:, 0] * d[:, 0] + 2.0 * m[:, 1] * d[:, 0] * d[:, 1] + m[:, 2] * d[:, 1] * d[:, 1]
        return np.sqrt(np.maximum(v, 0.0))

    perim = _elen(b, c, mb, mc) + _elen(c, a, mc, ma) + _elen(a, b, ma, mb)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = perim / 3.0
        s = np.minimum(x, np.divide(1.0, x, out=np.zeros_like(x), where=x > 0))
        t = s * (2.0 - s)
        shape = t * t * t
        q = np.where(
            (det > 0) & (area_m > 0) & (perim > 0),
            _SQRT3_12 * area_m / np.maximum(perim, 1e-300) ** 2 * shape,
            0.0,
        )
    out[live] = q
    return out


def find_edge_elements(vi, vj, ne_indptr, ne_indices, tri):
    """Locate the (up to two) live elements on each edge plus opposite vertices.

    Returns ``(e0, e1, opp0, opp1, count)``; missing slots hold -1 and
    ``count`` saturates at 3 when an edge is over-shared.
    """
    k = len(vi)
    e0 = np.full(k, -1, dtype=np.int32)
    e1 = np.full(k, -1, dtype=np.int32)
    opp0 = np.full(k, -1, dtype=np.int32)
    opp1 = np.full(k, -1, dtype=np.int32)
    count = np.zeros(k, dtype=np.int32)
    for n in range(k):
        a, b = int(vi[n]), int(vj[n])
        found = 0
        for p in range(ne_indptr[a], ne_indptr[a + 1]):
            e = int(ne_indices[p])
            t0, t1, t2 = int(tri[e, 0]), int(tri[e, 1]), int(tri[e, 2])
            if t0 < 0:
                continue
            if t0 == b or t1 == b or t2 == b:
                other = t0 + t1 + t2 - a - b
                if found == 0:
                    e0[n], opp0[n] = e, other
                elif found == 1:
                    e1[n], opp1[n] = e, other
                found += 1
                if found == 3:
                    break
        count[n] = found
    return e0, e1, opp0, opp1, count


def swap_gates(vi, vj, e0, e1, opp0, opp1, tri, coords, metric, tol):
    """Evaluate the flip gate for interior edges with both elements known.

    Accepts when the containing quadrilateral is strictly convex and the
    worse of the two replacement triangles beats the worse current one by
    more than ``tol``. Returns ``(accept, q_old, q_new)``.
    """
    k = len(vi)
    accept = np.zeros(k, dtype=np.uint8)
    q_old = np.zeros(k, dtype=np.float64)
    q_new = np.zeros(k, dtype=np.float64)
    for n in range(k):
        a, b = int(vi[n]), int(vj[n])
        o0, o1 = int(opp0[n]), int(opp1[n])
        qa = _quality_of(tri[int(e0[n])], coords, metric)
        qb = _quality_of(tri[int(e1[n])], coords, metric)
        q_old[n] = qa if qa < qb else qb
        dx = coords[o1, 0] - coords[o0, 0]
        dy = coords[o1, 1] - coords[o0, 1]
        s0 = dx * (coords[a, 1] - coords[o0, 1]) - dy * (coords[a, 0] - coords[o0, 0])
        s1 = dx * (coords[b, 1] - coords[o0, 1]) - dy * (coords[b, 0] - coords[o0, 0])
        if not (s0 * s1 < 0.0):
            continue  # quad not strictly convex: flip would invert
        if s0 > 0.0:
            # a left of o0->o1, so (a, o0, o1) winds CCW
            t1 = (a, o0, o1)
            t2 = (b, o1, o0)
        else:
            t1 = (a, o1, o0)
            t2 = (b, o0, o1)
        qc = _tri_quality(
            coords[t1[0], 0], coords[t1[0], 1],
            coords[t1[1], 0], coords[t1[1], 1],
            coords[t1[2], 0], coords[t1[2], 1],
            metric[t1[0]], metric[t1[1]], metric[t1[2]],
        )
        qd = _tri_quality(
            coords[t2[0], 0], coords[t2[0], 1],
            coords[t2[1], 0], coords[t2[1], 1],
            coords[t2[2], 0], coords[t2[2], 1],
            metric[t2[0]], metric[t2[1]], metric[t2[2]],
        )
        q_new[n] = qc if qc < qd else qd
        if q_new[n] - q_old[n] > tol:
            accept[n] = 1
    return accept, q_old, q_new


def coarsen_identify_batch(
    cand, nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
    coords, metric, boundary, l_min, l_max,
):
    """Collapse target per candidate vertex, or -1 when nothing is legal.

    Edges shorter than ``l_min`` are tried shortest-first. A collapse is
    legal when it honours the boundary policy, satisfies the 2D link
    condition, inverts no surviving element and creates no retargeted edge
    longer than ``l_max``.
    """
    out = np.full(len(cand), -1, dtype=np.int32)
    for n, v in enumerate(cand):
        out[n] = _identify_one(
            int(v), nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
            coords, metric, boundary, l_min, l_max,
        )
    return out


def _identify_one(
    v, nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
    coords, metric, boundary, l_min, l_max,
):
    if boundary[v] == 2:  # corners are pinned
        return -1
    lo, hi = int(nn_indptr[v]), int(nn_indptr[v + 1])
    if lo == hi:
        return -1
    neigh = nn_indices[lo:hi]
    lens = np.empty(len(neigh), dtype=np.float64)
    for i, u in enumerate(neigh):
        dx = coords[u, 0] - coords[v, 0]
        dy = coords[u, 1] - coords[v, 1]
        lens[i] = _metric_edge_length(
            dx, dy,
            0.5 * (metric[v, 0] + metric[u, 0]),
            0.5 * (metric[v, 1] + metric[u, 1]),
            0.5 * (metric[v, 2] + metric[u, 2]),
        )
    order = np.lexsort((neigh, lens))
    for i in order:
        if lens[i] >= l_min:
            break  # shortest-first: nothing removable remains
        vt = int(neigh[i])
        if _collapse_legal(
            v, vt, nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
            coords, metric, boundary, l_max,
        ):
            return vt
    return -1


def collapse_legal_batch(
    vi, vt, nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
    coords, metric, boundary, l_max,
):
    """Re-check held collapse targets against the current adjacency."""
    out = np.zeros(len(vi), dtype=np.uint8)
    for n in range(len(vi)):
        if _collapse_legal(
            int(vi[n]), int(vt[n]), nn_indptr, nn_indices, ne_indptr, ne_indices,
            tri, coords, metric, boundary, l_max,
        ):
            out[n] = 1
    return out


def _collapse_legal(
    v, vt, nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
    coords, metric, boundary, l_max,
):
    shared = []
    opposites = []
    for p in range(ne_indptr[v], ne_indptr[v + 1]):
        e = int(ne_indices[p])
        t0, t1, t2 = int(tri[e, 0]), int(tri[e, 1]), int(tri[e, 2])
        if t0 == vt or t1 == vt or t2 == vt:
            shared.append(e)
            opposites.append(t0 + t1 + t2 - v - vt)
    if boundary[v] >= 1:
        # Boundary vertices may only slide along the boundary: the removed
        # edge itself must be a boundary edge onto a boundary vertex.
        if boundary[vt] < 1 or len(shared) != 1:
            return False
    elif len(shared) != 2:
        return False

    row_v = nn_indices[nn_indptr[v] : nn_indptr[v + 1]]
    row_t = nn_indices[nn_indptr[vt] : nn_indptr[vt + 1]]
    common = np.intersect1d(row_v, row_t, assume_unique=True)
    if sorted(common.tolist()) != sorted(opposites):
        return False  # link condition: would pinch the surface

    for p in range(ne_indptr[v], ne_indptr[v + 1]):
        e = int(ne_indices[p])
        if e in shared:
            continue
        a, b, c = (int(x) if x != v else vt for x in tri[e])
        area2 = (coords[b, 0] - coords[a, 0]) * (coords[c, 1] - coords[a, 1]) - (
            coords[b, 1] - coords[a, 1]
        ) * (coords[c, 0] - coords[a, 0])
        if area2 <= 0.0:
            return False

    common_set = set(common.tolist())
    for u in row_v:
        u = int(u)
        if u == vt or u in common_set:
            continue
        dx = coords[u, 0] - coords[vt, 0]
        dy = coords[u, 1] - coords[vt, 1]
        length = _metric_edge_length(
            dx, dy,
            0.5 * (metric[vt, 0] + metric[u, 0]),
            0.5 * (metric[vt, 1] + metric[u, 1]),
            0.5 * (metric[vt, 2] + metric[u, 2]),
        )
        if length > l_max:
            return False
    return True


def smooth_class(
    verts, nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
    coords, metric, boundary, sigma_q, max_iteration,
):
    """Smart smoothing kernel over one independent set; edits in place.

    Returns the number of relocated vertices. Neighbour data is only read,
    so members of a properly coloured class never interfere.
    """
    relocated = 0
    for v in verts:
        v = int(v)
        if boundary[v] != 0:
            continue
        elo, ehi = int(ne_indptr[v]), int(ne_indptr[v + 1])
        nlo, nhi = int(nn_indptr[v]), int(nn_indptr[v + 1])
        if elo == ehi or nlo == nhi:
            continue
        patch = ne_indices[elo:ehi]
        q0 = min(_quality_of(tri[int(e)], coords, metric) for e in patch)

        wsum = 0.0
        px = 0.0
        py = 0.0
        for p in range(nlo, nhi):
            u = int(nn_indices[p])
            dx = coords[u, 0] - coords[v, 0]
            dy = coords[u, 1] - coords[v, 1]
            w = _metric_edge_length(
                dx, dy,
                0.5 * (metric[v, 0] + metric[u, 0]),
                0.5 * (metric[v, 1] + metric[u, 1]),
                0.5 * (metric[v, 2] + metric[u, 2]),
            )
            wsum += w
            px += w * coords[u, 0]
            py += w * coords[u, 1]
        if wsum <= 0.0:
            continue
        px /= wsum
        py /= wsum

        ox, oy = coords[v, 0], coords[v, 1]
        om = metric[v].copy()
        tx, ty = px, py
        tm, qn = _trial_quality(v, tx, ty, patch, tri, coords, metric, om)
        n = 1
        while n <= max_iteration and qn - q0 < sigma_q:
            tx = 0.5 * (tx + ox)
            ty = 0.5 * (ty + oy)
            tm, qn = _trial_quality(v, tx, ty, patch, tri, coords, metric, om)
            n += 1
        if qn - q0 > sigma_q:
            coords[v, 0] = tx
            coords[v, 1] = ty
            metric[v] = tm
            relocated += 1
    return relocated


def _trial_quality(v, tx, ty, patch, tri, coords, metric, om):
    """Metric at a trial point (barycentric, original patch) and the worst
    patch quality with the vertex moved there. Quality is -inf when the
    point escapes the original patch."""
    tm = None
    for e in patch:
        t0, t1, t2 = (int(x) for x in tri[int(e)])
        ax, ay = coords[t0, 0], coords[t0, 1]
        bx, by = coords[t1, 0], coords[t1, 1]
        cx, cy = coords[t2, 0], coords[t2, 1]
        det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if det <= 0.0:
            continue
        s = ((tx - ax) * (cy - ay) - (ty - ay) * (cx - ax)) / det
        t = ((bx - ax) * (ty - ay) - (by - ay) * (tx - ax)) / det
        lam0 = 1.0 - s - t
        if s >= -1e-12 and t >= -1e-12 and lam0 >= -1e-12:
            m0 = om if t0 == v else metric[t0]
            m1 = om if t1 == v else metric[t1]
            m2 = om if t2 == v else metric[t2]
            tm = lam0 * np.asarray(m0) + s * np.asarray(m1) + t * np.asarray(m2)
            break
    if tm is None:
        return om, -np.inf

    worst = np.inf
    for e in patch:
        t0, t1, t2 = (int(x) for x in tri[int(e)])
        xs = [coords[t0, 0], coords[t1, 0], coords[t2, 0]]
        ys = [coords[t0, 1], coords[t1, 1], coords[t2, 1]]
        ms = [metric[t0], metric[t1], metric[t2]]
        for slot, tv in enumerate((t0, t1, t2)):
            if tv == v:
                xs[slot] = tx
                ys[slot] = ty
                ms[slot] = tm
        q = _tri_quality(
            xs[0], ys[0], xs[1], ys[1], xs[2], ys[2], ms[0], ms[1], ms[2]
        )
        if q < worst:
            worst = q
    return tm, worst


def colour_assign(order, nn_indptr, nn_indices, colours):
    """First-fit colours for ``order``, reading neighbour colours as they are."""
    for v in order:
        v = int(v)
        lo, hi = int(nn_indptr[v]), int(nn_indptr[v + 1])
        deg = hi - lo
        used = np.zeros(deg + 1, dtype=bool)
        for p in range(lo, hi):
            c = int(colours[nn_indices[p]])
            if 0 <= c <= deg:
                used[c] = True
        pick = deg
        for c in range(deg + 1):
            if not used[c]:
                pick = c
                break
        colours[v] = pick


def colour_conflicts(verts, nn_indptr, nn_indices, colours, lower_only):
    """Flag vertices sharing a colour with a neighbour.

    With ``lower_only`` a vertex is only flagged against lower-id
    neighbours, so exactly one endpoint of each conflict edge keeps its
    colour during serial resolution.
    """
    flags = np.zeros(len(verts), dtype=np.uint8)
    for n, v in enumerate(verts):
        v = int(v)
        c = int(colours[v])
        for p in range(nn_indptr[v], nn_indptr[v + 1]):
            u = int(nn_indices[p])
            if colours[u] == c and (u < v or not lower_only):
                flags[n] = 1
                break
    return flags


def hessian_batch(verts, nn_indptr, nn_indices, coords, values, min_points=6):
    """Least-squares quadratic fit over distance-2 patches.

    Returns packed Hessians ``[dxx, dxy, dyy]`` per requested vertex and a
    status array: 0 fitted, 1 fitted after widening to distance 3,
    2 singular (too few points even at distance 3).
    """
    out = np.zeros((len(verts), 3), dtype=np.float64)
    status = np.zeros(len(verts), dtype=np.uint8)
    for n, v in enumerate(verts):
        v = int(v)
        pts = _patch(v, nn_indptr, nn_indices, rings=2)
        if len(pts) < min_points:
            pts = _patch(v, nn_indptr, nn_indices, rings=3)
            status[n] = 1
        if len(pts) < min_points:
            status[n] = 2
            continue
        h = _fit_quadratic(v, pts, coords, values)
        if h is None:
            status[n] = 2
        else:
            out[n] = h
    return out, status


def _patch(v, indptr, indices, rings):
    seen = {v}
    frontier = [v]
    for _ in range(rings):
        nxt = []
        for u in frontier:
            for p in range(indptr[u], indptr[u + 1]):
                w = int(indices[p])
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return np.array(sorted(seen), dtype=np.int64)


def _fit_quadratic(v, pts, coords, values):
    d = coords[pts] - coords[v]
    scale = np.abs(d).max()
    if scale <= 0.0:
        return None
    X = d[:, 0] / scale
    Y = d[:, 1] / scale
    A = np.column_stack([np.ones(len(pts)), X, Y, X * X, X * Y, Y * Y])
    G = A.T @ A
    rhs = A.T @ values[pts]
    G[np.diag_indices(6)] += 1e-12 * max(G.trace(), 1.0)
    try:
        coef = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.isfinite(coef).all():
        return None
    s2 = scale * scale
    return np.array(
        [2.0 * coef[3] / s2, coef[4] / s2, 2.0 * coef[5] / s2], dtype=np.float64
    )
