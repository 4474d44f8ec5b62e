"""Shared fixtures-in-spirit: small meshes and random SPD fields."""

import numpy as np

from anisomesh import create_structured_mesh


def jittered_mesh(nx, ny, seed=0, amp=0.25):
    """Structured mesh with interior vertices nudged off-lattice.

    amp is the displacement bound as a fraction of the cell size; below
    ~0.3 every element stays counter-clockwise.
    """
    mesh = create_structured_mesh(nx, ny)
    rng = np.random.default_rng(seed)
    interior = mesh.boundary == 0
    h = min(1.0 / (nx - 1), 1.0 / (ny - 1))
    mesh.coords[interior] += rng.uniform(-amp * h, amp * h, (int(interior.sum()), 2))
    return mesh


def random_spd_metric(n, seed=0, lo=0.5, hi=4.0, shear=0.4):
    """Per-vertex SPD tensors built as A^T A + small diagonal."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(lo, hi, n)
    c = rng.uniform(lo, hi, n)
    b = rng.uniform(-shear, shear, n)
    m00 = a * a + b * b
    m11 = c * c + b * b
    m01 = b * (a + c)
    return np.column_stack([m00, m01, m11])


def equilateral_mesh(side=1.0):
    """One CCW equilateral triangle."""
    from anisomesh import make_mesh

    coords = np.array(
        [[0.0, 0.0], [side, 0.0], [0.5 * side, 0.5 * np.sqrt(3.0) * side]]
    )
    elements = np.array([[0, 1, 2]], dtype=np.int32)
    return make_mesh(coords, elements)
