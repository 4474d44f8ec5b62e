"""Metric-driven 2D anisotropic mesh adaptation with worker-partitioned kernels."""

from .errors import (
    ConsistencyError,
    DegeneratePatchError,
    InvalidElementError,
    InvalidVertexError,
    MeshError,
    NonManifoldError,
    SingularPatchError,
    StructuralError,
)
from .mesh import (
    Mesh,
    build_adjacency,
    compact,
    create_structured_mesh,
    make_mesh,
    read_mesh_text,
    verify_mesh,
    write_mesh_text,
)

__version__ = "0.1.0"

__all__ = [
    "ConsistencyError",
    "DegeneratePatchError",
    "InvalidElementError",
    "InvalidVertexError",
    "MeshError",
    "NonManifoldError",
    "SingularPatchError",
    "StructuralError",
    "Mesh",
    "build_adjacency",
    "compact",
    "create_structured_mesh",
    "make_mesh",
    "read_mesh_text",
    "verify_mesh",
    "write_mesh_text",
    "__version__",
]
