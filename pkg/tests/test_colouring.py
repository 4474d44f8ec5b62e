"""Graph colouring over mesh adjacency."""

import numpy as np
import pytest

from anisomesh import create_structured_mesh, make_mesh
from anisomesh.colouring import (
    ColourMap,
    check_proper,
    colour_graph,
    independent_set,
    repair_colouring,
)

from helpers import jittered_mesh


def brute_check(mesh, cmap):
    """Direct conflict scan against the raw adjacency lists."""
    bad = 0
    for v in range(mesh.n_vertices):
        if mesh.detached[v]:
            continue
        for u in mesh.nn[v]:
            if cmap.colour[u] == cmap.colour[v]:
                bad += 1
    return bad // 2


class TestColourGraph:
    def test_triangle_needs_three(self):
        coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]])
        mesh = make_mesh(coords, np.array([[0, 1, 2]]))
        cmap = colour_graph(mesh)
        assert len(set(cmap.colour.tolist())) == 3
        assert cmap.n_colours == 3

    def test_path_of_three(self):
        # two triangles in a strip: ends of the shared edge see each other
        mesh = create_structured_mesh(2, 2)
        cmap = colour_graph(mesh)
        assert check_proper(mesh, cmap) == 0

    def test_structured_10x10_at_most_six(self):
        mesh = create_structured_mesh(10, 10)
        cmap = colour_graph(mesh)
        assert check_proper(mesh, cmap) == 0
        # first-fit on the 6-neighbour stencil cannot exceed degree+1
        assert cmap.n_colours <= 6

    @pytest.mark.parametrize("workers", [1, 2, 4, 8])
    def test_worker_counts_stay_proper(self, workers):
        mesh = jittered_mesh(9, 9, seed=workers)
        cmap = colour_graph(mesh, n_workers=workers)
        assert check_proper(mesh, cmap) == 0
        assert brute_check(mesh, cmap) == 0
        live = mesh.detached == 0
        assert (cmap.colour[live] >= 0).all()
        assert (cmap.colour[live] < cmap.n_colours).all()

    def test_random_meshes_proper(self):
        for seed in range(10):
            mesh = jittered_mesh(4 + seed % 5, 4 + (seed * 3) % 5, seed=seed)
            cmap = colour_graph(mesh)
            assert check_proper(mesh, cmap) == 0

    def test_detached_vertices_uncoloured(self):
        mesh = create_structured_mesh(4, 4)
        mesh.detach_vertex(5)
        cmap = colour_graph(mesh)
        assert cmap.colour[5] == -1
        assert check_proper(mesh, cmap) == 0


class TestRepair:
    def test_empty_dirty_is_identity(self):
        mesh = create_structured_mesh(5, 5)
        cmap = colour_graph(mesh)
        before = cmap.colour.copy()
        repair_colouring(mesh, cmap, set())
        assert (cmap.colour == before).all()

    def test_injected_conflict_fixed(self):
        mesh = create_structured_mesh(6, 6)
        cmap = colour_graph(mesh)
        v = 14  # interior vertex
        u = mesh.nn[v][0]
        cmap.colour[v] = cmap.colour[u]
        assert check_proper(mesh, cmap) > 0
        repair_colouring(mesh, cmap, {v})
        assert check_proper(mesh, cmap) == 0

    def test_far_vertices_untouched(self):
        mesh = create_structured_mesh(8, 8)
        cmap = colour_graph(mesh)
        before = cmap.colour.copy()
        v = 9
        cmap.colour[v] = cmap.colour[mesh.nn[v][0]]
        repair_colouring(mesh, cmap, {v})
        near = {v} | set(mesh.nn[v])
        far = [w for w in range(mesh.n_vertices) if w not in near]
        assert (cmap.colour[far] == before[far]).all()

    def test_fresh_vertices_get_colours(self):
        mesh = create_structured_mesh(5, 5)
        cmap = colour_graph(mesh)
        v = 12
        cmap.colour[v] = -1  # as after a vertex insertion
        repair_colouring(mesh, cmap, {v})
        assert cmap.colour[v] >= 0
        assert check_proper(mesh, cmap) == 0

    def test_all_dirty_equals_full_pass(self):
        mesh = jittered_mesh(7, 7, seed=3)
        cmap = colour_graph(mesh)
        rng = np.random.default_rng(0)
        cmap.colour[:] = rng.integers(0, 3, mesh.n_vertices)
        repair_colouring(mesh, cmap, set(range(mesh.n_vertices)))
        assert check_proper(mesh, cmap) == 0

    def test_never_increases_conflicts(self):
        rng = np.random.default_rng(4)
        for seed in range(8):
            mesh = jittered_mesh(6, 6, seed=seed)
            cmap = colour_graph(mesh)
            picks = rng.integers(0, mesh.n_vertices, 5)
            for v in picks:
                cmap.colour[v] = cmap.colour[mesh.nn[v][0]]
            before = check_proper(mesh, cmap)
            repair_colouring(mesh, cmap, set(int(p) for p in picks))
            assert check_proper(mesh, cmap) <= before
            assert check_proper(mesh, cmap) == 0


class TestIndependentSet:
    def test_class_extraction(self):
        cmap = ColourMap(np.array([0, 1, 2, 0, 1, 0], dtype=np.int32))
        got = independent_set(cmap, np.arange(6), 0)
        assert got.tolist() == [0, 3, 5]

    def test_empty_intersection(self):
        cmap = ColourMap(np.array([0, 1, 0], dtype=np.int32))
        assert len(independent_set(cmap, np.array([1]), 0)) == 0
        assert len(independent_set(cmap, np.array([], dtype=np.int64), 0)) == 0

    def test_boolean_mask_active(self):
        cmap = ColourMap(np.array([0, 0, 1, 1], dtype=np.int32))
        mask = np.array([True, False, True, True])
        assert independent_set(cmap, mask, 1).tolist() == [2, 3]

    def test_members_pairwise_nonadjacent(self):
        mesh = jittered_mesh(8, 8, seed=6)
        cmap = colour_graph(mesh)
        nn = mesh.nn
        for colour in range(cmap.n_colours):
            members = independent_set(cmap, np.arange(mesh.n_vertices), colour)
            chosen = set(members.tolist())
            for v in members:
                assert not (chosen & set(nn[v])), f"colour {colour} not independent"
