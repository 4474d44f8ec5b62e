"""Edge refinement: split selection, subdivision patterns, conformity."""

import numpy as np
import pytest

from anisomesh import create_structured_mesh, make_mesh, verify_mesh
from anisomesh import _kernels
from anisomesh.mesh import BOUNDARY, CORNER, INTERIOR
from anisomesh.metric import edge_length_metric, interpolate_metric, uniform_metric
from anisomesh.refine import L_MAX_DEFAULT, refine_pass, split_element

from helpers import equilateral_mesh, jittered_mesh, random_spd_metric


def total_area(mesh):
    return sum(mesh.signed_area(int(e)) for e in mesh.live_element_ids())


def live_triples(mesh):
    """Canonical element set: frozensets of vertex ids."""
    return {frozenset(int(v) for v in tri) for tri in mesh.live_elements()}


def max_edge_length(mesh, metric):
    edges = mesh.edge_array()
    if len(edges) == 0:
        return 0.0
    vi = np.ascontiguousarray(edges[:, 0], dtype=np.int32)
    vj = np.ascontiguousarray(edges[:, 1], dtype=np.int32)
    return float(_kernels.edge_lengths(vi, vj, mesh.coords, metric).max())


class TestNoOp:
    def test_all_short_edges_unchanged(self):
        mesh = equilateral_mesh(1.0)
        metric = uniform_metric(3)
        before = mesh.elements.copy()
        metric_out, stats = refine_pass(mesh, metric)
        assert stats.edges_split == 0
        assert stats.new_vertices == 0
        assert stats.new_elements == 0
        assert np.array_equal(mesh.elements, before)
        assert np.array_equal(metric_out, metric)

    def test_each_edge_examined_once(self):
        mesh = create_structured_mesh(4, 4)
        _, stats = refine_pass(mesh, uniform_metric(mesh.n_vertices))
        # physical edge count of a 4x4 structured grid: 24 grid + 9 diagonals
        assert stats.edges_examined == len(mesh.edge_array()) == 33

    def test_length_exactly_at_bound_not_split(self):
        # bottom edge measures exactly sqrt(2) under diag(2, 2): strict >
        coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.3]])
        mesh = make_mesh(coords, np.array([[0, 1, 2]], dtype=np.int32))
        metric = uniform_metric(3, m00=2.0, m11=2.0)
        _, stats = refine_pass(mesh, metric)
        assert stats.edges_split == 0


class TestOneEdgeSplit:
    def _mesh(self):
        coords = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 0.5]])
        return make_mesh(coords, np.array([[0, 1, 2]], dtype=np.int32))

    def test_one_to_two(self):
        mesh = self._mesh()
        metric = uniform_metric(3)
        parent_area = mesh.signed_area(0)
        metric, stats = refine_pass(mesh, metric)
        assert stats.edges_split == 1
        assert stats.splits_by_kind == {1: 1, 2: 0, 3: 0}
        assert mesh.n_live_elements == 2
        assert verify_mesh(mesh) == []
        # midpoint of the bottom edge, tagged boundary (one incident element)
        assert np.array_equal(mesh.coords[3], [1.0, 0.0])
        assert mesh.boundary[3] == BOUNDARY
        assert mesh.nn[3][:2] == [0, 1]
        for e in mesh.live_element_ids():
            assert mesh.signed_area(int(e)) == pytest.approx(
                0.5 * parent_area, rel=1e-12
            )

    def test_midpoint_metric_interpolated(self):
        mesh = self._mesh()
        metric = np.array([[1.0, 0.1, 2.0], [3.0, -0.2, 1.5], [1.0, 0.0, 1.0]])
        metric = metric * 4.0  # lengthen the bottom edge past the bound
        m0 = metric.copy()
        metric, stats = refine_pass(mesh, metric)
        assert stats.edges_split >= 1
        assert np.array_equal(metric[3], 0.5 * (m0[0] + m0[1]))
        assert np.array_equal(
            metric[3], interpolate_metric(m0[0:1], m0[1:2], 0.5)[0]
        )


class TestRegularSplit:
    def test_one_to_four(self):
        mesh = equilateral_mesh(1.0)
        metric = uniform_metric(3, m00=4.0, m11=4.0)  # lengths 2 > sqrt(2)
        parent_area = mesh.signed_area(0)
        parent_sides = np.sort(
            [
                np.linalg.norm(mesh.coords[a] - mesh.coords[b])
                for a, b in ((0, 1), (1, 2), (2, 0))
            ]
        )
        metric, stats = refine_pass(mesh, metric)
        assert stats.splits_by_kind == {1: 0, 2: 0, 3: 1}
        assert stats.new_vertices == 3
        assert mesh.n_live_elements == 4
        assert verify_mesh(mesh) == []
        # midpoint subdivision: four congruent children, each a quarter area
        for e in mesh.live_element_ids():
            tri = mesh.elements[e]
            assert mesh.signed_area(int(e)) == pytest.approx(
                0.25 * parent_area, rel=1e-12
            )
            sides = np.sort(
                [
                    np.linalg.norm(mesh.coords[tri[i]] - mesh.coords[tri[(i + 1) % 3]])
                    for i in range(3)
                ]
            )
            np.testing.assert_allclose(sides, 0.5 * parent_sides, rtol=1e-12)
        # every midpoint lies on a single-element edge of the original
        assert all(mesh.boundary[v] == BOUNDARY for v in (3, 4, 5))

    def test_structured_square_all_edges(self):
        mesh = create_structured_mesh(2, 2)
        metric = uniform_metric(4, m00=9.0, m11=9.0)
        metric, stats = refine_pass(mesh, metric)
        assert stats.edges_split == 5
        assert stats.splits_by_kind == {1: 0, 2: 0, 3: 2}
        assert mesh.n_live_elements == 8
        assert verify_mesh(mesh) == []
        new = np.arange(4, mesh.n_vertices)
        interior_new = [v for v in new if mesh.boundary[v] == INTERIOR]
        # only the shared-diagonal midpoint is interior
        assert len(interior_new) == 1
        assert np.array_equal(mesh.coords[interior_new[0]], [0.5, 0.5])
        assert all(
            mesh.boundary[v] in (BOUNDARY,) for v in new if v != interior_new[0]
        )


class TestQuadDiagonal:
    def _mesh(self):
        coords = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0]])
        return make_mesh(coords, np.array([[0, 1, 2]], dtype=np.int32))

    def _mid(self, mesh, xy):
        hit = np.flatnonzero(
            (mesh.coords[:, 0] == xy[0]) & (mesh.coords[:, 1] == xy[1])
        )
        assert len(hit) == 1
        return int(hit[0])

    def test_identity_metric_picks_shorter_diagonal(self):
        mesh = self._mesh()
        metric = uniform_metric(3)
        area0 = mesh.signed_area(0)
        metric, stats = refine_pass(mesh, metric)
        assert stats.splits_by_kind == {1: 0, 2: 1, 3: 0}
        assert mesh.n_live_elements == 3
        assert verify_mesh(mesh) == []
        assert total_area(mesh) == pytest.approx(area0, rel=1e-12)
        mb = self._mid(mesh, (1.0, 0.0))  # on the split edge 0-1
        ma = self._mid(mesh, (1.0, 0.5))  # on the split edge 0-2
        d_mb = edge_length_metric(mesh, metric, mb, 2)
        d_ma = edge_length_metric(mesh, metric, ma, 1)
        assert d_ma < d_mb  # oracle: recompute both candidate diagonals
        assert 1 in mesh.nn[ma] and ma in mesh.nn[1]
        assert 2 not in mesh.nn[mb]

    def test_anisotropic_metric_flips_choice(self):
        mesh = self._mesh()
        # strong x-weight with negative shear makes the (1,1) diagonal the
        # short one even though it is the longer Euclidean diagonal
        metric = uniform_metric(3, m00=4.0, m01=-0.5, m11=1.0)
        metric, stats = refine_pass(mesh, metric)
        assert stats.splits_by_kind == {1: 0, 2: 1, 3: 0}
        assert verify_mesh(mesh) == []
        mb = self._mid(mesh, (1.0, 0.0))
        ma = self._mid(mesh, (1.0, 0.5))
        d_mb = edge_length_metric(mesh, metric, mb, 2)
        d_ma = edge_length_metric(mesh, metric, ma, 1)
        assert d_mb < d_ma
        assert 2 in mesh.nn[mb] and mb in mesh.nn[2]
        assert 1 not in mesh.nn[ma]


class TestSharedEdge:
    def test_midpoint_created_once(self):
        coords = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0], [1.0, -1.0]])
        mesh = make_mesh(coords, np.array([[0, 1, 2], [0, 3, 1]], dtype=np.int32))
        metric = uniform_metric(4)
        area0 = total_area(mesh)
        metric, stats = refine_pass(mesh, metric)
        assert stats.edges_split == 1
        assert stats.new_vertices == 1
        assert stats.splits_by_kind == {1: 2, 2: 0, 3: 0}
        assert mesh.n_live_elements == 4
        assert verify_mesh(mesh) == []
        assert total_area(mesh) == pytest.approx(area0, rel=1e-12)
        vn = 4
        assert np.array_equal(mesh.coords[vn], [1.0, 0.0])
        assert mesh.boundary[vn] == INTERIOR  # two incident elements
        assert mesh.nn[vn][:2] == [0, 1]
        assert sorted(mesh.nn[vn]) == [0, 1, 2, 3]
        assert len(mesh.ne[vn]) == 4


class TestPassProperties:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_repeated_passes_converge_clean(self, seed):
        mesh = jittered_mesh(5, 5, seed=seed)
        metric = 3.0 * random_spd_metric(mesh.n_vertices, seed=seed)
        area0 = total_area(mesh)
        for _ in range(14):
            metric, stats = refine_pass(mesh, metric)
            assert verify_mesh(mesh) == []
            assert stats.new_vertices == stats.edges_split
            assert stats.new_elements == sum(
                k * n for k, n in stats.splits_by_kind.items()
            )
            assert total_area(mesh) == pytest.approx(area0, rel=1e-9)
            if stats.edges_split == 0:
                break
        assert stats.edges_split == 0
        assert max_edge_length(mesh, metric) <= L_MAX_DEFAULT

    def test_new_vertex_data_exact(self):
        mesh = jittered_mesh(4, 4, seed=3)
        metric = 4.0 * random_spd_metric(mesh.n_vertices, seed=3)
        orig = mesh.copy()
        m0 = metric.copy()
        metric, stats = refine_pass(mesh, metric)
        assert stats.edges_split > 0
        for vn in range(orig.n_vertices, mesh.n_vertices):
            a, b = mesh.nn[vn][:2]  # parents stay in front: adds only append
            assert np.array_equal(mesh.coords[vn], 0.5 * (orig.coords[a] + orig.coords[b]))
            assert np.array_equal(metric[vn], 0.5 * (m0[a] + m0[b]))

    def test_custom_bound_tightens(self):
        mesh = jittered_mesh(4, 4, seed=5)
        metric = random_spd_metric(mesh.n_vertices, seed=5)
        tight = 0.9
        for _ in range(16):
            metric, stats = refine_pass(mesh, metric, l_max=tight)
            assert verify_mesh(mesh) == []
            if stats.edges_split == 0:
                break
        assert max_edge_length(mesh, metric) <= tight


class TestWorkers:
    def test_partition_count_invariant(self):
        base = jittered_mesh(5, 5, seed=7)
        met = 3.0 * random_spd_metric(base.n_vertices, seed=7)
        results = []
        for w in (1, 2, 4, 8):
            mesh = base.copy()
            metric, stats = refine_pass(mesh, met.copy(), n_workers=w)
            assert verify_mesh(mesh) == []
            results.append((mesh, metric, stats))
        m1, met1, s1 = results[0]
        for mesh, metric, stats in results[1:]:
            assert stats.edges_split == s1.edges_split
            assert stats.splits_by_kind == s1.splits_by_kind
            assert np.array_equal(mesh.coords, m1.coords)
            assert live_triples(mesh) == live_triples(m1)
            assert np.array_equal(metric, met1)
            assert np.array_equal(mesh.boundary, m1.boundary)
            for v in range(mesh.n_vertices):
                assert sorted(mesh.nn[v]) == sorted(m1.nn[v])

    def test_more_workers_than_edges(self):
        mesh = equilateral_mesh(1.0)
        metric = uniform_metric(3, m00=4.0, m11=4.0)
        metric, stats = refine_pass(mesh, metric, n_workers=8)
        assert stats.edges_split == 3
        assert verify_mesh(mesh) == []


class TestSplitElementUnit:
    def test_zero_marks_rejected(self):
        mesh = equilateral_mesh(1.0)
        metric = uniform_metric(3)
        with pytest.raises(ValueError):
            split_element(mesh, metric, 0, np.array([-1, -1, -1]))

    def test_single_mark_children(self):
        coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0]])
        mesh = make_mesh(coords, np.array([[0, 1, 2]], dtype=np.int32))
        metric = uniform_metric(4)
        # local edge 2 (opposite vertex 2) is 0-1; its midpoint is vertex 3
        children = split_element(mesh, metric, 0, np.array([-1, -1, 3]))
        assert children == [(2, 0, 3), (2, 3, 1)]
        from anisomesh.mesh import signed_area_coords

        areas = [
            signed_area_coords(*(mesh.coords[v] for v in tri)) for tri in children
        ]
        assert all(a > 0 for a in areas)
        assert sum(areas) == pytest.approx(mesh.signed_area(0), abs=1e-12)
