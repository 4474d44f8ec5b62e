"""Numba-jitted kernel implementations (see ``_numpy`` for the reference)."""

from __future__ import annotations

import numpy as np
from numba import njit, prange

_SQRT3_12 = 12.0 * np.sqrt(3.0)
_JIT = dict(cache=True, fastmath=False, nogil=True)


@njit(inline="always", **_JIT)
def _elen(dx, dy, m00, m01, m11):
    q = m00 * dx * dx + 2.0 * m01 * dx * dy + m11 * dy * dy
    if q > 0.0:
        return np.sqrt(q)
    return 0.0


@njit(inline="always", **_JIT)
def _q_tri(ax, ay, bx, by, cx, cy, a00, a01, a11, b00, b01, b11, c00, c01, c11):
    area_e = 0.5 * ((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))
    m00 = (a00 + b00 + c00) / 3.0
    m01 = (a01 + b01 + c01) / 3.0
    m11 = (a11 + b11 + c11) / 3.0
    det = m00 * m11 - m01 * m01
    if det <= 0.0:
        return 0.0
    area_m = np.sqrt(det) * area_e
    if area_m <= 0.0:
        return 0.0
    l0 = _elen(cx - bx, cy - by, 0.5 * (b00 + c00), 0.5 * (b01 + c01), 0.5 * (b11 + c11))
    l1 = _elen(ax - cx, ay - cy, 0.5 * (c00 + a00), 0.5 * (c01 + a01), 0.5 * (c11 + a11))
    l2 = _elen(bx - ax, by - ay, 0.5 * (a00 + b00), 0.5 * (a01 + b01), 0.5 * (a11 + b11))
    perim = l0 + l1 + l2
    if perim <= 0.0:
        return 0.0
    x = perim / 3.0
    if x < 1.0 / x:
        s = x
    else:
        s = 1.0 / x
    t = s * (2.0 - s)
    shape = t * t * t
    return _SQRT3_12 * area_m / (perim * perim) * shape


@njit(inline="always", **_JIT)
def _q_elem(e, tri, coords, metric):
    a, b, c = tri[e, 0], tri[e, 1], tri[e, 2]
    return _q_tri(
        coords[a, 0], coords[a, 1], coords[b, 0], coords[b, 1],
        coords[c, 0], coords[c, 1],
        metric[a, 0], metric[a, 1], metric[a, 2],
        metric[b, 0], metric[b, 1], metric[b, 2],
        metric[c, 0], metric[c, 1], metric[c, 2],
    )


@njit(parallel=True, **_JIT)
def edge_lengths(vi, vj, coords, metric):
    out = np.empty(len(vi), dtype=np.float64)
    for k in prange(len(vi)):
        a = vi[k]
        b = vj[k]
        out[k] = _elen(
            coords[b, 0] - coords[a, 0],
            coords[b, 1] - coords[a, 1],
            0.5 * (metric[a, 0] + metric[b, 0]),
            0.5 * (metric[a, 1] + metric[b, 1]),
            0.5 * (metric[a, 2] + metric[b, 2]),
        )
    return out


@njit(parallel=True, **_JIT)
def element_qualities(tri, coords, metric):
    out = np.zeros(len(tri), dtype=np.float64)
    for e in prange(len(tri)):
        if tri[e, 0] >= 0:
            out[e] = _q_elem(e, tri, coords, metric)
    return out


@njit(parallel=True, **_JIT)
def find_edge_elements(vi, vj, ne_indptr, ne_indices, tri):
    k = len(vi)
    e0 = np.full(k, -1, dtype=np.int32)
    e1 = np.full(k, -1, dtype=np.int32)
    opp0 = np.full(k, -1, dtype=np.int32)
    opp1 = np.full(k, -1, dtype=np.int32)
    count = np.zeros(k, dtype=np.int32)
    for n in prange(k):
        a = vi[n]
        b = vj[n]
        found = 0
        for p in range(ne_indptr[a], ne_indptr[a + 1]):
            e = ne_indices[p]
            t0, t1, t2 = tri[e, 0], tri[e, 1], tri[e, 2]
            if t0 < 0:
                continue
            if t0 == b or t1 == b or t2 == b:
                other = t0 + t1 + t2 - a - b
                if found == 0:
                    e0[n] = e
                    opp0[n] = other
                elif found == 1:
                    e1[n] = e
                    opp1[n] = other
                found += 1
                if found == 3:
                    break
        count[n] = found
    return e0, e1, opp0, opp1, count


@njit(parallel=True, **_JIT)
def swap_gates(vi, vj, e0, e1, opp0, opp1, tri, coords, metric, tol):
    k = len(vi)
    accept = np.zeros(k, dtype=np.uint8)
    q_old = np.zeros(k, dtype=np.float64)
    q_new = np.zeros(k, dtype=np.float64)
    for n in prange(k):
        a = vi[n]
        b = vj[n]
        o0 = opp0[n]
        o1 = opp1[n]
        qa = _q_elem(e0[n], tri, coords, metric)
        qb = _q_elem(e1[n], tri, coords, metric)
        if qb < qa:
            q_old[n] = qb
        else:
            q_old[n] = qa
        dx = coords[o1, 0] - coords[o0, 0]
        dy = coords[o1, 1] - coords[o0, 1]
        s0 = dx * (coords[a, 1] - coords[o0, 1]) - dy * (coords[a, 0] - coords[o0, 0])
        s1 = dx * (coords[b, 1] - coords[o0, 1]) - dy * (coords[b, 0] - coords[o0, 0])
        if not (s0 * s1 < 0.0):
            continue
        if s0 > 0.0:
            # a left of o0->o1, so (a, o0, o1) winds CCW
            p1, p2 = o0, o1
        else:
            p1, p2 = o1, o0
        qc = _q_tri(
            coords[a, 0], coords[a, 1], coords[p1, 0], coords[p1, 1],
            coords[p2, 0], coords[p2, 1],
            metric[a, 0], metric[a, 1], metric[a, 2],
            metric[p1, 0], metric[p1, 1], metric[p1, 2],
            metric[p2, 0], metric[p2, 1], metric[p2, 2],
        )
        qd = _q_tri(
            coords[b, 0], coords[b, 1], coords[p2, 0], coords[p2, 1],
            coords[p1, 0], coords[p1, 1],
            metric[b, 0], metric[b, 1], metric[b, 2],
            metric[p2, 0], metric[p2, 1], metric[p2, 2],
            metric[p1, 0], metric[p1, 1], metric[p1, 2],
        )
        if qd < qc:
            q_new[n] = qd
        else:
            q_new[n] = qc
        if q_new[n] - q_old[n] > tol:
            accept[n] = 1
    return accept, q_old, q_new


@njit(**_JIT)
def _collapse_legal(
    v, vt, nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
    coords, metric, boundary, l_max,
):
    n_shared = 0
    shared = np.empty(8, dtype=np.int32)
    opposites = np.empty(8, dtype=np.int32)
    for p in range(ne_indptr[v], ne_indptr[v + 1]):
        e = ne_indices[p]
        t0, t1, t2 = tri[e, 0], tri[e, 1], tri[e, 2]
        if t0 == vt or t1 == vt or t2 == vt:
            if n_shared >= 8:
                return False
            shared[n_shared] = e
            opposites[n_shared] = t0 + t1 + t2 - v - vt
            n_shared += 1
    if boundary[v] >= 1:
        if boundary[vt] < 1 or n_shared != 1:
            return False
    elif n_shared != 2:
        return False

    # Link condition via sorted-row merge: common neighbours of (v, vt)
    # must be exactly the opposite vertices of the shared elements.
    opp_sorted = np.sort(opposites[:n_shared])
    i = nn_indptr[v]
    j = nn_indptr[vt]
    iend = nn_indptr[v + 1]
    jend = nn_indptr[vt + 1]
    n_common = 0
    while i < iend and j < jend:
        a = nn_indices[i]
        b = nn_indices[j]
        if a == b:
            if n_common >= n_shared or opp_sorted[n_common] != a:
                return False
            n_common += 1
            i += 1
            j += 1
        elif a < b:
            i += 1
        else:
            j += 1
    if n_common != n_shared:
        return False

    for p in range(ne_indptr[v], ne_indptr[v + 1]):
        e = ne_indices[p]
        skip = False
        for s in range(n_shared):
            if shared[s] == e:
                skip = True
                break
        if skip:
            continue
        a, b, c = tri[e, 0], tri[e, 1], tri[e, 2]
        if a == v:
            a = vt
        if b == v:
            b = vt
        if c == v:
            c = vt
        area2 = (coords[b, 0] - coords[a, 0]) * (coords[c, 1] - coords[a, 1]) - (
            coords[b, 1] - coords[a, 1]
        ) * (coords[c, 0] - coords[a, 0])
        if area2 <= 0.0:
            return False

    for p in range(nn_indptr[v], nn_indptr[v + 1]):
        u = nn_indices[p]
        if u == vt:
            continue
        is_common = False
        for s in range(n_shared):
            if opp_sorted[s] == u:
                is_common = True
                break
        if is_common:
            continue
        length = _elen(
            coords[u, 0] - coords[vt, 0],
            coords[u, 1] - coords[vt, 1],
            0.5 * (metric[vt, 0] + metric[u, 0]),
            0.5 * (metric[vt, 1] + metric[u, 1]),
            0.5 * (metric[vt, 2] + metric[u, 2]),
        )
        if length > l_max:
            return False
    return True


@njit(**_JIT)
def _identify_one(
    v, nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
    coords, metric, boundary, l_min, l_max,
):
    if boundary[v] == 2:
        return np.int32(-1)
    lo = nn_indptr[v]
    hi = nn_indptr[v + 1]
    deg = hi - lo
    if deg == 0:
        return np.int32(-1)
    neigh = np.empty(deg, dtype=np.int32)
    lens = np.empty(deg, dtype=np.float64)
    for i in range(deg):
        u = nn_indices[lo + i]
        neigh[i] = u
        lens[i] = _elen(
            coords[u, 0] - coords[v, 0],
            coords[u, 1] - coords[v, 1],
            0.5 * (metric[v, 0] + metric[u, 0]),
            0.5 * (metric[v, 1] + metric[u, 1]),
            0.5 * (metric[v, 2] + metric[u, 2]),
        )
    # insertion sort by (length, id); rows are pre-sorted by id so ties
    # stay in ascending-id order
    for i in range(1, deg):
        lv = lens[i]
        nv = neigh[i]
        j = i - 1
        while j >= 0 and (lens[j] > lv or (lens[j] == lv and neigh[j] > nv)):
            lens[j + 1] = lens[j]
            neigh[j + 1] = neigh[j]
            j -= 1
        lens[j + 1] = lv
        neigh[j + 1] = nv
    for i in range(deg):
        if lens[i] >= l_min:
            break
        vt = neigh[i]
        if _collapse_legal(
            v, vt, nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
            coords, metric, boundary, l_max,
        ):
            return vt
    return np.int32(-1)


@njit(parallel=True, **_JIT)
def collapse_legal_batch(
    vi, vt, nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
    coords, metric, boundary, l_max,
):
    out = np.zeros(len(vi), dtype=np.uint8)
    for n in prange(len(vi)):
        if _collapse_legal(
            vi[n], vt[n], nn_indptr, nn_indices, ne_indptr, ne_indices,
            tri, coords, metric, boundary, l_max,
        ):
            out[n] = 1
    return out


@njit(parallel=True, **_JIT)
def coarsen_identify_batch(
    cand, nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
    coords, metric, boundary, l_min, l_max,
):
    out = np.full(len(cand), -1, dtype=np.int32)
    for n in prange(len(cand)):
        out[n] = _identify_one(
            cand[n], nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
            coords, metric, boundary, l_min, l_max,
        )
    return out


@njit(**_JIT)
def _trial_quality(v, tx, ty, elo, ehi, ne_indices, tri, coords, metric, om, tm):
    found = False
    for p in range(elo, ehi):
        e = ne_indices[p]
        t0, t1, t2 = tri[e, 0], tri[e, 1], tri[e, 2]
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
            for k in range(3):
                if t0 == v:
                    m0 = om[k]
                else:
                    m0 = metric[t0, k]
                if t1 == v:
                    m1 = om[k]
                else:
                    m1 = metric[t1, k]
                if t2 == v:
                    m2 = om[k]
                else:
                    m2 = metric[t2, k]
                tm[k] = lam0 * m0 + s * m1 + t * m2
            found = True
            break
    if not found:
        return -np.inf

    worst = np.inf
    for p in range(elo, ehi):
        e = ne_indices[p]
        t0, t1, t2 = tri[e, 0], tri[e, 1], tri[e, 2]
        if t0 == v:
            ax, ay = tx, ty
            a00, a01, a11 = tm[0], tm[1], tm[2]
        else:
            ax, ay = coords[t0, 0], coords[t0, 1]
            a00, a01, a11 = metric[t0, 0], metric[t0, 1], metric[t0, 2]
        if t1 == v:
            bx, by = tx, ty
            b00, b01, b11 = tm[0], tm[1], tm[2]
        else:
            bx, by = coords[t1, 0], coords[t1, 1]
            b00, b01, b11 = metric[t1, 0], metric[t1, 1], metric[t1, 2]
        if t2 == v:
            cx, cy = tx, ty
            c00, c01, c11 = tm[0], tm[1], tm[2]
        else:
            cx, cy = coords[t2, 0], coords[t2, 1]
            c00, c01, c11 = metric[t2, 0], metric[t2, 1], metric[t2, 2]
        q = _q_tri(ax, ay, bx, by, cx, cy, a00, a01, a11, b00, b01, b11, c00, c01, c11)
        if q < worst:
            worst = q
    return worst


@njit(parallel=True, **_JIT)
def smooth_class(
    verts, nn_indptr, nn_indices, ne_indptr, ne_indices, tri,
    coords, metric, boundary, sigma_q, max_iteration,
):
    relocated = 0
    for idx in prange(len(verts)):
        v = verts[idx]
        if boundary[v] != 0:
            continue
        elo = ne_indptr[v]
        ehi = ne_indptr[v + 1]
        nlo = nn_indptr[v]
        nhi = nn_indptr[v + 1]
        if elo == ehi or nlo == nhi:
            continue
        q0 = np.inf
        for p in range(elo, ehi):
            q = _q_elem(ne_indices[p], tri, coords, metric)
            if q < q0:
                q0 = q

        wsum = 0.0
        px = 0.0
        py = 0.0
        for p in range(nlo, nhi):
            u = nn_indices[p]
            w = _elen(
                coords[u, 0] - coords[v, 0],
                coords[u, 1] - coords[v, 1],
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

        ox = coords[v, 0]
        oy = coords[v, 1]
        om = np.empty(3, dtype=np.float64)
        for k in range(3):
            om[k] = metric[v, k]
        tm = np.empty(3, dtype=np.float64)
        tx = px
        ty = py
        qn = _trial_quality(v, tx, ty, elo, ehi, ne_indices, tri, coords, metric, om, tm)
        n = 1
        while n <= max_iteration and qn - q0 < sigma_q:
            tx = 0.5 * (tx + ox)
            ty = 0.5 * (ty + oy)
            qn = _trial_quality(
                v, tx, ty, elo, ehi, ne_indices, tri, coords, metric, om, tm
            )
            n += 1
        if qn - q0 > sigma_q:
            coords[v, 0] = tx
            coords[v, 1] = ty
            for k in range(3):
                metric[v, k] = tm[k]
            relocated += 1
    return relocated


@njit(parallel=True, **_JIT)
def colour_assign(order, nn_indptr, nn_indices, colours):
    for idx in prange(len(order)):
        v = order[idx]
        lo = nn_indptr[v]
        hi = nn_indptr[v + 1]
        deg = hi - lo
        used = np.zeros(deg + 1, dtype=np.uint8)
        for p in range(lo, hi):
            c = colours[nn_indices[p]]
            if 0 <= c <= deg:
                used[c] = 1
        pick = deg
        for c in range(deg + 1):
            if used[c] == 0:
                pick = c
                break
        colours[v] = pick


@njit(parallel=True, **_JIT)
def colour_conflicts(verts, nn_indptr, nn_indices, colours, lower_only):
    flags = np.zeros(len(verts), dtype=np.uint8)
    for n in prange(len(verts)):
        v = verts[n]
        c = colours[v]
        for p in range(nn_indptr[v], nn_indptr[v + 1]):
            u = nn_indices[p]
            if colours[u] == c and (u < v or not lower_only):
                flags[n] = 1
                break
    return flags


@njit(**_JIT)
def _gather_patch(v, indptr, indices, rings, buf):
    """Vertices within graph distance ``rings`` of v, sorted unique in buf.

    Returns the number of entries written; -1 when buf is too small."""
    n = 0
    if n >= len(buf):
        return -1
    buf[n] = v
    n += 1
    start = 0
    for _ in range(rings):
        end = n
        for i in range(start, end):
            u = buf[i]
            for p in range(indptr[u], indptr[u + 1]):
                w = indices[p]
                seen = False
                for q in range(n):
                    if buf[q] == w:
                        seen = True
                        break
                if not seen:
                    if n >= len(buf):
                        return -1
                    buf[n] = w
                    n += 1
        start = end
    sub = buf[:n]
    sub.sort()
    return n


@njit(parallel=True, **_JIT)
def hessian_batch(verts, nn_indptr, nn_indices, coords, values, min_points):
    out = np.zeros((len(verts), 3), dtype=np.float64)
    status = np.zeros(len(verts), dtype=np.uint8)
    for n in prange(len(verts)):
        v = verts[n]
        buf = np.empty(512, dtype=np.int32)
        cnt = _gather_patch(v, nn_indptr, nn_indices, 2, buf)
        if 0 <= cnt < min_points:
            cnt = _gather_patch(v, nn_indptr, nn_indices, 3, buf)
            status[n] = 1
        if cnt < 0:  # buffer too small for an unusually dense patch
            buf = np.empty(16384, dtype=np.int32)
            cnt = _gather_patch(v, nn_indptr, nn_indices, 2, buf)
            if 0 <= cnt < min_points:
                cnt = _gather_patch(v, nn_indptr, nn_indices, 3, buf)
                status[n] = 1
        if cnt < min_points:
            status[n] = 2
            continue
        pts = buf[:cnt]
        scale = 0.0
        for i in range(cnt):
            u = pts[i]
            ax = abs(coords[u, 0] - coords[v, 0])
            ay = abs(coords[u, 1] - coords[v, 1])
            if ax > scale:
                scale = ax
            if ay > scale:
                scale = ay
        if scale <= 0.0:
            status[n] = 2
            continue
        G = np.zeros((6, 6), dtype=np.float64)
        rhs = np.zeros(6, dtype=np.float64)
        row = np.empty(6, dtype=np.float64)
        for i in range(cnt):
            u = pts[i]
            x = (coords[u, 0] - coords[v, 0]) / scale
            y = (coords[u, 1] - coords[v, 1]) / scale
            row[0] = 1.0
            row[1] = x
            row[2] = y
            row[3] = x * x
            row[4] = x * y
            row[5] = y * y
            fv = values[u]
            for a in range(6):
                rhs[a] += row[a] * fv
                for b in range(6):
                    G[a, b] += row[a] * row[b]
        tr = G[0, 0] + G[1, 1] + G[2, 2] + G[3, 3] + G[4, 4] + G[5, 5]
        if tr < 1.0:
            tr = 1.0
        for a in range(6):
            G[a, a] += 1e-12 * tr
        coef = np.linalg.solve(G, rhs)
        ok = True
        for a in range(6):
            if not np.isfinite(coef[a]):
                ok = False
        if not ok:
            status[n] = 2
            continue
        s2 = scale * scale
        out[n, 0] = 2.0 * coef[3] / s2
        out[n, 1] = coef[4] / s2
        out[n, 2] = 2.0 * coef[5] / s2
    return out, status
