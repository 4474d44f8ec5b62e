"""Flat triangle-mesh storage with vertex adjacency and structural checks."""

from __future__ import annotations

from itertools import chain

import numpy as np

from .errors import InvalidElementError, NonManifoldError, StructuralError

# Vertex boundary tags.
INTERIOR = 0
BOUNDARY = 1
CORNER = 2

_DELETED = -1  # sentinel in slot 0 of a deleted element row


class Mesh:
    """Triangle mesh over flat numpy tables plus per-vertex adjacency lists.

    Attributes
    ----------
    coords : ndarray, shape (n_vertices, 2)
        Vertex positions. Rows of detached vertices are stale but retained
        until :func:`compact`.
    elements : ndarray, shape (n_element_slots, 3), int32
        Vertex ids per element, counter-clockwise. A row whose first entry
        is -1 is deleted.
    nn : list of list of int
        Vertex-vertex adjacency (mesh edges).
    ne : list of set of int
        Vertex-element adjacency.
    boundary : ndarray of int8
        Per-vertex tag: 0 interior, 1 boundary, 2 corner.
    detached : ndarray of uint8
        1 where the vertex has been removed from the mesh.
    """

    def __init__(self, coords, elements, nn, ne, boundary, detached=None):
        self.coords = np.ascontiguousarray(coords, dtype=np.float64)
        self.elements = np.ascontiguousarray(elements, dtype=np.int32)
        self.nn = nn
        self.ne = ne
        self.boundary = np.ascontiguousarray(boundary, dtype=np.int8)
        if detached is None:
            detached = np.zeros(len(self.coords), dtype=np.uint8)
        self.detached = np.ascontiguousarray(detached, dtype=np.uint8)

    # -- size queries ---------------------------------------------------

    @property
    def n_vertices(self):
        """Number of vertex slots, including detached ones."""
        return len(self.coords)

    @property
    def n_element_slots(self):
        return len(self.elements)

    @property
    def n_live_vertices(self):
        return int(np.count_nonzero(self.detached == 0))

    @property
    def n_live_elements(self):
        if len(self.elements) == 0:
            return 0
        return int(np.count_nonzero(self.elements[:, 0] != _DELETED))

    def live_element_ids(self):
        if len(self.elements) == 0:
            return np.empty(0, dtype=np.int64)
        return np.nonzero(self.elements[:, 0] != _DELETED)[0]

    def live_elements(self):
        """Node triples of live elements only, in slot order."""
        return self.elements[self.live_element_ids()]

    # -- element ops ----------------------------------------------------

    def element_is_live(self, eid):
        return 0 <= eid < len(self.elements) and self.elements[eid, 0] != _DELETED

    def signed_area(self, eid):
        """Signed Euclidean area of element ``eid`` (positive when CCW)."""
        if not self.element_is_live(eid):
            raise InvalidElementError(f"element {eid} is deleted or out of range")
        a, b, c = self.elements[eid]
        return signed_area_coords(self.coords[a], self.coords[b], self.coords[c])

    def delete_element(self, eid):
        self.elements[eid, 0] = _DELETED

    def grow_elements(self, count):
        """Append ``count`` deleted rows; returns the first new element id."""
        base = len(self.elements)
        pad = np.full((count, 3), _DELETED, dtype=np.int32)
        self.elements = np.concatenate([self.elements, pad])
        return base

    # -- vertex ops -----------------------------------------------------

    def add_vertices(self, coords, boundary_tags):
        """Append vertices with empty adjacency; returns the first new id."""
        coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
        base = len(self.coords)
        self.coords = np.concatenate([self.coords, coords])
        self.boundary = np.concatenate(
            [self.boundary, np.asarray(boundary_tags, dtype=np.int8)]
        )
        self.detached = np.concatenate(
            [self.detached, np.zeros(len(coords), dtype=np.uint8)]
        )
        for _ in range(len(coords)):
            self.nn.append([])
            self.ne.append(set())
        return base

    def detach_vertex(self, v):
        self.nn[v].clear()
        self.ne[v].clear()
        self.detached[v] = 1

    # -- snapshots for kernels ------------------------------------------

    def nn_csr(self):
        """Adjacency as (indptr, indices) with each row sorted ascending."""
        return _lists_to_csr(self.nn, self.n_vertices)

    def ne_csr(self):
        return _lists_to_csr(self.ne, self.n_vertices)

    def edge_array(self):
        """Undirected edges as an (n_edges, 2) array with vi < vj, sorted."""
        indptr, indices = self.nn_csr()
        counts = np.diff(indptr)
        vi = np.repeat(np.arange(self.n_vertices, dtype=np.int32), counts)
        vj = indices
        keep = vi < vj
        return np.column_stack([vi[keep], vj[keep]])

    def copy(self):
        return Mesh(
            self.coords.copy(),
            self.elements.copy(),
            [list(row) for row in self.nn],
            [set(row) for row in self.ne],
            self.boundary.copy(),
            self.detached.copy(),
        )


def signed_area_coords(a, b, c):
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _lists_to_csr(rows, n):
    counts = np.fromiter((len(r) for r in rows), dtype=np.int32, count=n)
    indptr = np.zeros(n + 1, dtype=np.int32)
    np.cumsum(counts, out=indptr[1:])
    flat = np.fromiter(chain.from_iterable(rows), dtype=np.int32, count=int(indptr[-1]))
    owner = np.repeat(np.arange(n, dtype=np.int32), counts)
    order = np.lexsort((flat, owner))
    return indptr, flat[order]


def build_adjacency(elements, coords=None, detect_boundary=True, n_vertices=None):
    """Derive vertex adjacency (and optionally boundary tags) from elements.

    Parameters
    ----------
    elements : (m, 3) int array
        Live element node triples; deleted rows (first entry -1) are skipped.
    coords : (n, 2) float array, optional
        Needed for corner detection when ``detect_boundary`` is set.
    detect_boundary : bool
        Tag vertices of single-element edges as boundary, and vertices
        joining two non-collinear boundary edges as corners.
    n_vertices : int, optional
        Vertex-table size; defaults to ``len(coords)`` or max id + 1.

    Returns
    -------
    nn : list of list of int
    ne : list of set of int
    boundary : ndarray of int8
    """
    elements = np.asarray(elements, dtype=np.int32)
    live = elements[elements[:, 0] != _DELETED] if len(elements) else elements
    if n_vertices is None:
        n_vertices = len(coords) if coords is not None else int(live.max()) + 1
    if len(live) and (live.min() < 0 or live.max() >= n_vertices):
        raise StructuralError("element refers to a vertex id out of range")

    ne = [set() for _ in range(n_vertices)]
    for eid in (np.nonzero(elements[:, 0] != _DELETED)[0] if len(elements) else ()):
        a, b, c = elements[eid]
        ne[a].add(int(eid))
        ne[b].add(int(eid))
        ne[c].add(int(eid))

    # Undirected edge census; counts > 2 break the two-sided manifold rule.
    edges, counts = _edge_census(live, n_vertices)
    bad = np.nonzero(counts > 2)[0]
    if len(bad):
        i, j = edges[bad[0]]
        raise NonManifoldError(f"edge ({i}, {j}) belongs to {counts[bad[0]]} elements")

    nn = [[] for _ in range(n_vertices)]
    for i, j in edges:
        nn[i].append(int(j))
        nn[j].append(int(i))

    boundary = np.zeros(n_vertices, dtype=np.int8)
    if detect_boundary and len(edges):
        b_edges = edges[counts == 1]
        boundary[np.unique(b_edges)] = BOUNDARY
        if coords is not None and len(b_edges):
            coords = np.asarray(coords, dtype=np.float64)
            incident = {}
            for i, j in b_edges:
                incident.setdefault(int(i), []).append(int(j))
                incident.setdefault(int(j), []).append(int(i))
            for v, others in incident.items():
                if len(others) != 2:
                    boundary[v] = CORNER  # irregular boundary star
                    continue
                d1 = coords[others[0]] - coords[v]
                d2 = coords[others[1]] - coords[v]
                cross = d1[0] * d2[1] - d1[1] * d2[0]
                scale = np.hypot(*d1) * np.hypot(*d2)
                if abs(cross) > 1e-12 * max(scale, 1e-300):
                    boundary[v] = CORNER
    return nn, ne, boundary


def _edge_census(live_elements, n_vertices):
    """Unique undirected element edges and how many elements carry each."""
    if len(live_elements) == 0:
        return np.empty((0, 2), dtype=np.int64), np.empty(0, dtype=np.int64)
    pairs = live_elements[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2).astype(np.int64)
    lo = pairs.min(axis=1)
    hi = pairs.max(axis=1)
    enc = lo * n_vertices + hi
    uniq, counts = np.unique(enc, return_counts=True)
    edges = np.column_stack([uniq // n_vertices, uniq % n_vertices])
    return edges, counts


def make_mesh(coords, elements, detect_boundary=True, reorient=True):
    """Assemble a :class:`Mesh` from raw tables, deriving adjacency.

    Negative-area elements are flipped to counter-clockwise order when
    ``reorient`` is set; exactly degenerate elements are left for
    :func:`verify_mesh` to report.
    """
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    elements = np.array(elements, dtype=np.int32).reshape(-1, 3)
    if reorient and len(elements):
        a = coords[elements[:, 0]]
        b = coords[elements[:, 1]]
        c = coords[elements[:, 2]]
        area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (
            c[:, 0] - a[:, 0]
        )
        flip = area2 < 0
        elements[flip] = elements[flip][:, [0, 2, 1]]
    nn, ne, boundary = build_adjacency(elements, coords, detect_boundary)
    return Mesh(coords, elements, nn, ne, boundary)


def create_structured_mesh(nx, ny):
    """Uniform triangulation of the unit square with an nx-by-ny lattice.

    Every cell is split along its lower-left to upper-right diagonal,
    giving 2(nx-1)(ny-1) elements. Vertex ids run row-major with x fastest.
    """
    if nx < 2 or ny < 2:
        raise ValueError("structured mesh needs nx >= 2 and ny >= 2")
    xs = np.linspace(0.0, 1.0, nx)
    ys = np.linspace(0.0, 1.0, ny)
    X, Y = np.meshgrid(xs, ys)  # Y slow axis -> id = j*nx + i
    coords = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            v00 = j * nx + i
            v10 = v00 + 1
            v01 = v00 + nx
            v11 = v01 + 1
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    return make_mesh(coords, np.array(cells, dtype=np.int32), reorient=False)


def verify_mesh(mesh):
    """Check structural invariants; returns a list of violation messages.

    Checks element id validity, counter-clockwise orientation, the
    two-elements-per-interior-edge / one-per-boundary-edge rule, agreement
    of NN lists with element edges, NN symmetry, NE cross-consistency and
    boundary-tag consistency. An empty list means the mesh is consistent.
    """
    out = []
    nv = mesh.n_vertices
    elements = mesh.elements
    live_ids = mesh.live_element_ids()
    live = elements[live_ids]

    if len(live):
        bad = np.nonzero((live < 0).any(axis=1) | (live >= nv).any(axis=1))[0]
        for k in bad[:20]:
            out.append(f"element {live_ids[k]} has out-of-range vertex ids {live[k]}")
        if len(bad):
            return out  # further array checks would misindex

        same = (
            (live[:, 0] == live[:, 1])
            | (live[:, 1] == live[:, 2])
            | (live[:, 2] == live[:, 0])
        )
        for k in np.nonzero(same)[0][:20]:
            out.append(f"element {live_ids[k]} repeats a vertex: {live[k]}")

        det = mesh.detached[live].any(axis=1)
        for k in np.nonzero(det)[0][:20]:
            out.append(f"element {live_ids[k]} uses a detached vertex: {live[k]}")

        a = mesh.coords[live[:, 0]]
        b = mesh.coords[live[:, 1]]
        c = mesh.coords[live[:, 2]]
        area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (
            c[:, 0] - a[:, 0]
        )
        for k in np.nonzero(area2 <= 0)[0][:20]:
            out.append(
                f"element {live_ids[k]} has non-positive area {0.5 * area2[k]:.3e}"
            )

        edges, counts = _edge_census(live, nv)
        for k in np.nonzero(counts > 2)[0][:20]:
            out.append(
                f"edge ({edges[k, 0]}, {edges[k, 1]}) lies in {counts[k]} elements"
            )
        b_edges = edges[counts == 1]
        if len(b_edges):
            tags = mesh.boundary[b_edges]
            for k in np.nonzero((tags == INTERIOR).any(axis=1))[0][:20]:
                out.append(
                    f"boundary edge ({b_edges[k, 0]}, {b_edges[k, 1]}) has an "
                    "interior-tagged endpoint"
                )
        # Tagged boundary vertices must actually lie on a boundary edge.
        tagged = np.nonzero((mesh.boundary > 0) & (mesh.detached == 0))[0]
        on_bedge = np.zeros(nv, dtype=bool)
        if len(b_edges):
            on_bedge[np.unique(b_edges)] = True
        for v in tagged[~on_bedge[tagged]][:20]:
            out.append(f"vertex {v} tagged boundary but touches no boundary edge")
    else:
        edges = np.empty((0, 2), dtype=np.int64)

    # NN lists: symmetry, no self/duplicate entries, agreement with edges.
    counts_nn = np.fromiter((len(r) for r in mesh.nn), dtype=np.int64, count=nv)
    rows = np.repeat(np.arange(nv, dtype=np.int64), counts_nn)
    cols = np.fromiter(
        chain.from_iterable(mesh.nn), dtype=np.int64, count=int(counts_nn.sum())
    )
    if len(cols) and (cols.min() < 0 or cols.max() >= nv):
        out.append("NN list refers to a vertex id out of range")
        return out
    for v in rows[cols == rows][:20]:
        out.append(f"vertex {v} lists itself as a neighbour")
    if len(cols):
        for v in np.unique(rows[mesh.detached[cols] == 1])[:20]:
            out.append(f"vertex {v} lists a detached neighbour")
    enc = rows * nv + cols
    uniq_dir, cnt_dir = np.unique(enc, return_counts=True)
    if (cnt_dir > 1).any():
        k = uniq_dir[cnt_dir > 1][0]
        out.append(f"vertex {k // nv} lists neighbour {k % nv} more than once")
    rev = cols * nv + rows
    if not np.array_equal(np.sort(enc), np.sort(rev)):
        missing = np.setdiff1d(enc, rev)
        for k in missing[:20]:
            out.append(f"NN asymmetry: {k // nv} lists {k % nv} but not vice versa")
    nn_und = np.unique(np.minimum(rows, cols) * nv + np.maximum(rows, cols))
    edge_und = edges[:, 0] * nv + edges[:, 1] if len(edges) else np.empty(0, np.int64)
    if not np.array_equal(nn_und, np.sort(edge_und)):
        extra = np.setdiff1d(nn_und, edge_und)
        for k in extra[:20]:
            out.append(f"NN edge ({k // nv}, {k % nv}) bounds no live element")
        lost = np.setdiff1d(edge_und, nn_und)
        for k in lost[:20]:
            out.append(f"element edge ({k // nv}, {k % nv}) missing from NN lists")

    # NE sets must equal the inverse of the element table.
    counts_ne = np.fromiter((len(r) for r in mesh.ne), dtype=np.int64, count=nv)
    ne_v = np.repeat(np.arange(nv, dtype=np.int64), counts_ne)
    ne_e = np.fromiter(
        chain.from_iterable(mesh.ne), dtype=np.int64, count=int(counts_ne.sum())
    )
    if len(ne_e) and (ne_e.min() < 0 or ne_e.max() >= len(elements)):
        out.append("NE set refers to an element id out of range")
        return out
    stride = max(len(elements), 1)
    have = np.sort(ne_v * stride + ne_e)
    if len(live):
        want = np.sort(live.ravel().astype(np.int64) * stride + np.repeat(live_ids, 3))
    else:
        want = np.empty(0, np.int64)
    if not np.array_equal(have, want):
        extra = np.setdiff1d(have, want)
        for k in extra[:20]:
            out.append(
                f"vertex {k // stride} lists element {k % stride} "
                "it does not belong to"
            )
        lost = np.setdiff1d(want, have)
        for k in lost[:20]:
            out.append(
                f"vertex {k // stride} missing element {k % stride} from its NE set"
            )

    # Detached flags match empty adjacency.
    for v in np.nonzero(mesh.detached == 1)[0]:
        if mesh.nn[v] or mesh.ne[v]:
            out.append(f"detached vertex {v} still has adjacency entries")
    if len(live):
        empt = np.nonzero((counts_nn == 0) & (counts_ne == 0) & (mesh.detached == 0))[0]
        for v in empt[:20]:
            out.append(f"vertex {v} has empty adjacency but is not flagged detached")
    return out


def compact(mesh, *vertex_arrays):
    """Drop deleted elements and detached vertices, renumbering densely.

    Vertex-aligned ``vertex_arrays`` (for example a metric field) are
    remapped alongside and returned after the new mesh. Adjacency and
    boundary tags are rebuilt from the surviving elements.
    """
    live = mesh.live_elements()
    keep = np.zeros(mesh.n_vertices, dtype=bool)
    if len(live):
        keep[live.ravel()] = True
    old_ids = np.nonzero(keep)[0]
    new_of_old = np.full(mesh.n_vertices, -1, dtype=np.int64)
    new_of_old[old_ids] = np.arange(len(old_ids))
    new_elements = new_of_old[live].astype(np.int32)
    new_mesh = make_mesh(mesh.coords[old_ids], new_elements, reorient=False)
    if not vertex_arrays:
        return new_mesh
    remapped = tuple(np.asarray(a)[old_ids] for a in vertex_arrays)
    return (new_mesh,) + remapped


def write_mesh_text(mesh, path):
    """Write ``NVERTS NELEMS`` header, coordinate lines, then node triples."""
    live = mesh.live_elements()
    keep = np.zeros(mesh.n_vertices, dtype=bool)
    if len(live):
        keep[live.ravel()] = True
    # Text form is always compact: ids renumber densely over kept vertices.
    old_ids = np.nonzero(keep | (mesh.detached == 0))[0]
    new_of_old = np.full(mesh.n_vertices, -1, dtype=np.int64)
    new_of_old[old_ids] = np.arange(len(old_ids))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{len(old_ids)} {len(live)}\n")
        for v in old_ids:
            fh.write(f"{mesh.coords[v, 0]:.17g} {mesh.coords[v, 1]:.17g}\n")
        for a, b, c in new_of_old[live]:
            fh.write(f"{a} {b} {c}\n")


def read_mesh_text(path):
    """Read the text format produced by :func:`write_mesh_text`."""
    with open(path, "r", encoding="ascii") as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError(f"{path}: missing header")
    nv, ne = int(tokens[0]), int(tokens[1])
    need = 2 + 2 * nv + 3 * ne
    if len(tokens) != need:
        raise ValueError(f"{path}: expected {need} tokens, found {len(tokens)}")
    coords = np.array(tokens[2 : 2 + 2 * nv], dtype=np.float64).reshape(nv, 2)
    elements = np.array(tokens[2 + 2 * nv :], dtype=np.int64).reshape(ne, 3)
    if len(elements) and (elements.min() < 0 or elements.max() >= nv):
        raise ValueError(f"{path}: element vertex id out of range")
    return make_mesh(coords, elements.astype(np.int32), reorient=False)
