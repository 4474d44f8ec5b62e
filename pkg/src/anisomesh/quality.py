"""Triangle shape quality in metric space.

q = 12*sqrt(3) * area_M / perimeter_M^2 * F(perimeter_M / 3), where the
sizing factor F penalises elements whose metric edges stray from unit
length. q is 1 exactly for a metric-equilateral triangle with unit edges
and 0 for degenerate or inverted elements.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import InvalidElementError, InvalidVertexError


def sizing_factor(x):
    """F(x) = (min(x, 1/x) * (2 - min(x, 1/x)))^3 for x > 0."""
    x = float(x)
    if x <= 0.0 or not np.isfinite(x):
        raise ValueError(f"sizing factor argument must be positive, got {x}")
    s = x if x < 1.0 / x else 1.0 / x
    t = s * (2.0 - s)
    return t * t * t


def element_quality(mesh, metric, eid):
    eid = int(eid)
    if not mesh.element_is_live(eid):
        raise InvalidElementError(f"element {eid} is deleted or out of range")
    row = mesh.elements[eid : eid + 1]
    return float(_kernels.element_qualities(row, mesh.coords, metric)[0])


def element_qualities(mesh, metric):
    """Quality of every element slot; deleted rows score 0."""
    return _kernels.element_qualities(mesh.elements, mesh.coords, metric)


def patch_quality(mesh, metric, vi):
    """Worst quality among the elements incident to a vertex."""
    vi = int(vi)
    if not (0 <= vi < mesh.n_vertices) or mesh.detached[vi]:
        raise InvalidVertexError(f"vertex {vi} is deleted or out of range")
    patch = mesh.ne[vi]
    if not patch:
        raise InvalidVertexError(f"vertex {vi} has no incident elements")
    tri = mesh.elements
    coords = mesh.coords
    qs = _kernels.element_qualities(
        tri[sorted(patch)], coords, metric
    )
    return float(qs.min())
