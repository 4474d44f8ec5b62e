"""Per-vertex metric tensor fields.

A metric field is an ``(n_vertices, 3)`` float64 array of packed symmetric
tensors ``[m00, m01, m11]`` in units of 1/length^2. Edge tensors are the
component average of the endpoints, element tensors the average of the three
vertices; lengths and areas measured against them drive every adaptation
decision.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import InvalidElementError, InvalidVertexError, SingularPatchError

DEFAULT_H_MIN = 0.002
DEFAULT_H_MAX = 0.2

# Absolute floor applied to |eigenvalue| before the determinant power so a
# flat patch (zero Hessian) yields a finite, clampable tensor instead of NaN.
_EIG_TINY = 1e-30


def uniform_metric(n_vertices, m00=1.0, m01=0.0, m11=1.0):
    """Constant field, identity by default."""
    out = np.empty((n_vertices, 3), dtype=np.float64)
    out[:, 0] = m00
    out[:, 1] = m01
    out[:, 2] = m11
    return out


def metric_is_spd(metric):
    """Boolean mask: which packed tensors are symmetric positive definite."""
    metric = np.asarray(metric, dtype=np.float64)
    det = metric[:, 0] * metric[:, 2] - metric[:, 1] ** 2
    return (metric[:, 0] > 0.0) & (det > 0.0)


def _check_vertex(mesh, v):
    if not (0 <= v < mesh.n_vertices) or mesh.detached[v]:
        raise InvalidVertexError(f"vertex {v} is deleted or out of range")


def edge_length_metric(mesh, metric, vi, vj):
    """Length of edge (vi, vj) under the endpoint-averaged tensor."""
    vi, vj = int(vi), int(vj)
    _check_vertex(mesh, vi)
    _check_vertex(mesh, vj)
    d = mesh.coords[vj] - mesh.coords[vi]
    m = 0.5 * (metric[vi] + metric[vj])
    q = m[0] * d[0] * d[0] + 2.0 * m[1] * d[0] * d[1] + m[2] * d[1] * d[1]
    return float(np.sqrt(q)) if q > 0.0 else 0.0


def interpolate_metric(ma, mb, s):
    """Component-wise linear blend (1-s)*ma + s*mb; SPD for SPD inputs."""
    ma = np.asarray(ma, dtype=np.float64)
    mb = np.asarray(mb, dtype=np.float64)
    return (1.0 - s) * ma + s * mb


def element_measures_metric(mesh, metric, eid):
    """(metric area, metric perimeter) of one element.

    The area uses the tensor averaged over the three vertices, the
    perimeter uses per-edge endpoint averages.
    """
    eid = int(eid)
    if not mesh.element_is_live(eid):
        raise InvalidElementError(f"element {eid} is deleted or out of range")
    a, b, c = (int(x) for x in mesh.elements[eid])
    mc = (metric[a] + metric[b] + metric[c]) / 3.0
    det = mc[0] * mc[2] - mc[1] ** 2
    area = np.sqrt(max(det, 0.0)) * mesh.signed_area(eid)
    perim = (
        edge_length_metric(mesh, metric, b, c)
        + edge_length_metric(mesh, metric, c, a)
        + edge_length_metric(mesh, metric, a, b)
    )
    return float(area), float(perim)


def recover_hessian(mesh, values):
    """Per-vertex Hessian estimates as packed ``[dxx, dxy, dyy]`` rows.

    Fits f ~ a + bx + cy + dx^2 + exy + fy^2 by least squares over each
    vertex's distance-2 neighbourhood, widening to distance 3 when fewer
    than 6 points are available. Vertices deficient even then trigger
    SingularPatchError. Detached vertices get zero rows.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (mesh.n_vertices,):
        raise ValueError(
            f"need one value per vertex: got {values.shape}, "
            f"expected ({mesh.n_vertices},)"
        )
    nn_indptr, nn_indices = mesh.nn_csr()
    live = np.flatnonzero(mesh.detached == 0).astype(np.int32)
    hess = np.zeros((mesh.n_vertices, 3), dtype=np.float64)
    if len(live) == 0:
        return hess
    out, status = _kernels.hessian_batch(
        live, nn_indptr, nn_indices, mesh.coords, values, 6
    )
    bad = status == 2
    if bad.any():
        raise SingularPatchError([int(v) for v in live[bad]])
    hess[live] = out
    return hess


def metric_from_hessian(hess, p=2, eps=0.01, h_min=DEFAULT_H_MIN, h_max=DEFAULT_H_MAX):
    """L^p scaling of packed Hessians into SPD metric tensors.

    Eigenvalues are made absolute, the tensor is scaled by
    (1/eps) * det^(-1/(2p+2)), and the final eigenvalues are clamped to
    [(1/h_max)^2, (1/h_min)^2]. Everything is closed-form on 2x2
    symmetrics, so the whole field is transformed with array ops.
    """
    if p < 1:
        raise ValueError(f"norm order must be >= 1, got {p}")
    if eps <= 0:
        raise ValueError(f"target error scale must be positive, got {eps}")
    if not (0 < h_min < h_max):
        raise ValueError(f"need 0 < h_min < h_max, got {h_min}, {h_max}")
    lam_floor = (1.0 / h_max) ** 2
    lam_cap = (1.0 / h_min) ** 2

    hess = np.asarray(hess, dtype=np.float64)
    a, b, c = hess[:, 0], hess[:, 1], hess[:, 2]
    half_tr = 0.5 * (a + c)
    disc = np.sqrt((0.5 * (a - c)) ** 2 + b * b)
    lam1 = np.abs(half_tr + disc)
    lam2 = np.abs(half_tr - disc)
    lam1 = np.maximum(lam1, _EIG_TINY)
    lam2 = np.maximum(lam2, _EIG_TINY)

    # Eigenvector for the larger signed eigenvalue: null vector of H - lam*I,
    # taking whichever of the two row-orthogonal candidates is better
    # conditioned. Repeated eigenvalues leave an isotropic tensor where the
    # basis does not matter, so the (1,0) fallback is safe.
    lam1s = half_tr + disc
    c1x, c1y = b, lam1s - a
    c2x, c2y = lam1s - c, b
    n1 = np.sqrt(c1x * c1x + c1y * c1y)
    n2 = np.sqrt(c2x * c2x + c2y * c2y)
    use1 = n1 >= n2
    v1x = np.where(use1, c1x, c2x)
    v1y = np.where(use1, c1y, c2y)
    norm = np.where(use1, n1, n2)
    small = norm < 1e-300
    safe = np.where(small, 1.0, norm)
    v1x = np.where(small, 1.0, v1x / safe)
    v1y = np.where(small, 0.0, v1y / safe)
    # second axis is the 90-degree rotation
    v2x, v2y = -v1y, v1x

    exponent = -1.0 / (2.0 * p + 2.0)
    scale = (1.0 / eps) * (lam1 * lam2) ** exponent
    s1 = np.clip(scale * lam1, lam_floor, lam_cap)
    s2 = np.clip(scale * lam2, lam_floor, lam_cap)

    m00 = s1 * v1x * v1x + s2 * v2x * v2x
    m01 = s1 * v1x * v1y + s2 * v2x * v2y
    m11 = s1 * v1y * v1y + s2 * v2y * v2y
    return np.column_stack([m00, m01, m11])


def compute_metric(
    mesh, values, p=2, eps=0.01, h_min=DEFAULT_H_MIN, h_max=DEFAULT_H_MAX
):
    """Metric field adapting to the curvature of ``values``."""
    hess = recover_hessian(mesh, values)
    return metric_from_hessian(hess, p=p, eps=eps, h_min=h_min, h_max=h_max)


def write_metric_text(path, metric):
    """One line per vertex: ``m00 m01 m11``."""
    metric = np.asarray(metric, dtype=np.float64)
    with open(path, "w") as f:
        for row in metric:
            f.write(f"{row[0]:.17g} {row[1]:.17g} {row[2]:.17g}\n")


def read_metric_text(path):
    rows = []
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise ValueError(f"{path}:{ln}: expected 3 numbers, got {len(parts)}")
            rows.append([float(x) for x in parts])
    metric = np.array(rows, dtype=np.float64).reshape(-1, 3)
    ok = metric_is_spd(metric)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise ValueError(f"{path}: tensor on line {bad + 1} is not positive definite")
    return metric
