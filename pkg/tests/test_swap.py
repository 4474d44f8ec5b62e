"""Edge flipping: single-edge gate behaviour and the marked-edge pass."""

import numpy as np
import pytest

from anisomesh import InvalidVertexError, create_structured_mesh, make_mesh, verify_mesh
from anisomesh import _kernels
from anisomesh.metric import uniform_metric
from anisomesh.swap import swap_edge, swap_pass

from helpers import jittered_mesh, random_spd_metric


def live_triples(mesh):
    out = set()
    for row in mesh.elements:
        if row[0] >= 0:
            out.add(frozenset(int(v) for v in row))
    return out


def incircle(pa, pb, pc, pd):
    """Positive when pd lies strictly inside the circumcircle of CCW (pa, pb, pc)."""
    rows = []
    for p in (pa, pb, pc):
        dx, dy = p[0] - pd[0], p[1] - pd[1]
        rows.append([dx, dy, dx * dx + dy * dy])
    return float(np.linalg.det(np.array(rows)))


def thin_pair_mesh():
    """Two slivers over a long horizontal base; the cross diagonal fixes both."""
    coords = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 0.15], [1.0, -0.15]])
    elements = np.array([[0, 1, 2], [0, 3, 1]], dtype=np.int32)
    return make_mesh(coords, elements)


def equilateral_pair_mesh():
    s3 = np.sqrt(3.0) / 2.0
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, -s3], [0.5, s3]])
    elements = np.array([[0, 2, 1], [0, 1, 3]], dtype=np.int32)
    return make_mesh(coords, elements)


def min_quality(mesh, metric):
    q = _kernels.element_qualities(mesh.elements, mesh.coords, metric)
    return q[mesh.elements[:, 0] >= 0].min()


class TestSwapEdge:
    def test_thin_pair_flipped(self):
        mesh = thin_pair_mesh()
        metric = uniform_metric(4)
        before = min_quality(mesh, metric)
        assert swap_edge(mesh, metric, 0, 1) is True
        assert live_triples(mesh) == {frozenset({0, 2, 3}), frozenset({1, 2, 3})}
        assert verify_mesh(mesh) == []
        assert min_quality(mesh, metric) > before
        assert sorted(mesh.nn[0]) == [2, 3]
        assert sorted(mesh.nn[2]) == [0, 1, 3]
        assert mesh.ne[0] == {0} and mesh.ne[1] == {1}
        assert mesh.ne[2] == {0, 1} and mesh.ne[3] == {0, 1}

    def test_flip_winding_stays_positive(self):
        mesh = thin_pair_mesh()
        swap_edge(mesh, uniform_metric(4), 0, 1)
        for row in mesh.elements:
            a, b, c = mesh.coords[row[0]], mesh.coords[row[1]], mesh.coords[row[2]]
            twice_area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            assert twice_area > 0.0

    def test_equilateral_pair_rejected(self):
        mesh = equilateral_pair_mesh()
        metric = uniform_metric(4)
        triples = live_triples(mesh)
        assert swap_edge(mesh, metric, 0, 1) is False
        assert live_triples(mesh) == triples

    def test_symmetric_square_tie_rejected(self):
        # both diagonals of the unit square give congruent pairs
        coords = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
        elements = np.array([[0, 2, 1], [0, 1, 3]], dtype=np.int32)
        mesh = make_mesh(coords, elements)
        assert swap_edge(mesh, uniform_metric(4), 0, 1) is False

    def test_boundary_edge_false(self):
        mesh = thin_pair_mesh()
        assert swap_edge(mesh, uniform_metric(4), 0, 2) is False

    def test_non_edge_false(self):
        mesh = thin_pair_mesh()
        assert swap_edge(mesh, uniform_metric(4), 2, 3) is False

    def test_bad_vertex_raises(self):
        mesh = thin_pair_mesh()
        with pytest.raises(InvalidVertexError):
            swap_edge(mesh, uniform_metric(4), 0, 99)

    def test_flip_not_an_edge_afterwards(self):
        mesh = thin_pair_mesh()
        metric = uniform_metric(4)
        assert swap_edge(mesh, metric, 0, 1) is True
        assert swap_edge(mesh, metric, 0, 1) is False


class TestSwapPass:
    def test_single_flip_becomes_delaunay(self):
        mesh = thin_pair_mesh()
        c = mesh.coords.copy()
        # the sliver pair violates the empty-circle rule, the flip restores it
        assert incircle(c[0], c[1], c[2], c[3]) > 0.0
        stats = swap_pass(mesh, uniform_metric(4))
        assert stats.flips == 1
        assert stats.rejected == 0
        assert not stats.capped
        assert live_triples(mesh) == {frozenset({0, 2, 3}), frozenset({1, 2, 3})}
        assert incircle(c[0], c[3], c[2], c[1]) < 0.0
        assert verify_mesh(mesh) == []
        assert mesh.n_live_elements == 2
        assert (mesh.detached == 0).all()

    def test_unit_length_grid_stays_put(self):
        # metric scaled so grid edges measure 1: flips cannot pay off
        mesh = create_structured_mesh(5, 5)
        metric = uniform_metric(mesh.n_vertices, m00=16.0, m11=16.0)
        coords = mesh.coords.copy()
        triples = live_triples(mesh)
        stats = swap_pass(mesh, metric)
        assert stats.flips == 0
        assert stats.passes == 1
        # every interior edge was evaluated and turned down exactly once
        assert stats.rejected == 40
        assert live_triples(mesh) == triples
        assert (mesh.coords == coords).all()

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_min_quality_never_drops(self, seed):
        mesh = jittered_mesh(7, 7, seed=seed)
        metric = random_spd_metric(mesh.n_vertices, seed=seed + 50)
        before = min_quality(mesh, metric)
        stats = swap_pass(mesh, metric)
        assert verify_mesh(mesh) == []
        assert min_quality(mesh, metric) >= before
        assert mesh.n_live_elements == 72
        assert not stats.capped

    @pytest.mark.parametrize("seed", [0, 1])
    def test_second_pass_is_a_noop(self, seed):
        mesh = jittered_mesh(6, 8, seed=seed)
        metric = random_spd_metric(mesh.n_vertices, seed=seed + 9)
        swap_pass(mesh, metric)
        again = swap_pass(mesh, metric)
        assert again.flips == 0

    def test_coords_and_counts_untouched(self):
        mesh = jittered_mesh(8, 6, seed=3)
        metric = random_spd_metric(mesh.n_vertices, seed=4)
        coords = mesh.coords.copy()
        boundary = mesh.boundary.copy()
        nv, ne = mesh.n_vertices, mesh.n_live_elements
        swap_pass(mesh, metric)
        assert (mesh.coords == coords).all()
        assert (mesh.boundary == boundary).all()
        assert mesh.n_vertices == nv and mesh.n_live_elements == ne

    @pytest.mark.parametrize("n_workers", [1, 2, 4])
    def test_worker_count_does_not_change_result(self, n_workers):
        mesh = jittered_mesh(7, 7, seed=11)
        metric = random_spd_metric(mesh.n_vertices, seed=12)
        stats = swap_pass(mesh, metric, n_workers=n_workers)
        assert verify_mesh(mesh) == []
        baseline = jittered_mesh(7, 7, seed=11)
        swap_pass(baseline, metric, n_workers=1)
        assert live_triples(mesh) == live_triples(baseline)
        assert [sorted(r) for r in mesh.nn] == [sorted(r) for r in baseline.nn]
        assert stats.flips >= 0

    def test_total_area_preserved(self):
        mesh = jittered_mesh(9, 5, seed=7)
        metric = random_spd_metric(mesh.n_vertices, seed=8)

        def area(m):
            t = m.elements[m.elements[:, 0] >= 0]
            a, b, c = m.coords[t[:, 0]], m.coords[t[:, 1]], m.coords[t[:, 2]]
            return float(
                0.5
                * (
                    (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                    - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
                ).sum()
            )

        before = area(mesh)
        swap_pass(mesh, metric)
        assert area(mesh) == pytest.approx(before, rel=1e-12)
