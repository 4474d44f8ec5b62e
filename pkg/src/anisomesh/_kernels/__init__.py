"""Kernel backend selection.

Two interchangeable implementations exist: ``_numpy`` (pure numpy, always
available) and ``_numba`` (jitted, used when importable). The environment
variable ``ANISOMESH_BACKEND`` forces the choice:

    auto   prefer the jitted backend, silently fall back (default)
    numba  require the jitted backend, fail loudly if unavailable
    numpy  use the pure-numpy reference implementation
"""

from __future__ import annotations

import os

_choice = os.environ.get("ANISOMESH_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"ANISOMESH_BACKEND must be 'auto', 'numba' or 'numpy', got {_choice!r}"
    )

if _choice == "numpy":
    from . import _numpy as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl

        BACKEND = "numba"
    except ImportError:
        if _choice == "numba":
            raise RuntimeError(
                "ANISOMESH_BACKEND=numba but the numba backend failed to import"
            )
        from . import _numpy as _impl

        BACKEND = "numpy"

edge_lengths = _impl.edge_lengths
element_qualities = _impl.element_qualities
find_edge_elements = _impl.find_edge_elements
swap_gates = _impl.swap_gates
coarsen_identify_batch = _impl.coarsen_identify_batch
collapse_legal_batch = _impl.collapse_legal_batch
smooth_class = _impl.smooth_class
colour_assign = _impl.colour_assign
colour_conflicts = _impl.colour_conflicts


def hessian_batch(verts, nn_indptr, nn_indices, coords, values, min_points=6):
    return _impl.hessian_batch(verts, nn_indptr, nn_indices, coords, values, min_points)


def set_worker_threads(n):
    """Clamp the jitted backend's thread pool to ``n``; returns the count
    actually in effect (always 1 for the numpy backend)."""
    if BACKEND != "numba":
        return 1
    import numba

    eff = max(1, min(int(n), int(numba.config.NUMBA_NUM_THREADS)))
    numba.set_num_threads(eff)
    return eff


__all__ = [
    "BACKEND",
    "edge_lengths",
    "element_qualities",
    "find_edge_elements",
    "swap_gates",
    "coarsen_identify_batch",
    "collapse_legal_batch",
    "smooth_class",
    "colour_assign",
    "colour_conflicts",
    "hessian_batch",
    "set_worker_threads",
]
