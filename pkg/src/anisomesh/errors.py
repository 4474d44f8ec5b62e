"""Exception types shared across the package."""


class MeshError(Exception):
    """Base class for mesh-structure problems."""


class StructuralError(MeshError):
    """Element/vertex tables violate a structural requirement."""


class NonManifoldError(StructuralError):
    """An edge is shared by more than two elements."""


class InvalidElementError(MeshError):
    """Operation addressed a deleted or out-of-range element."""


class InvalidVertexError(MeshError):
    """Operation addressed a detached or out-of-range vertex."""


class SingularPatchError(MeshError):
    """A vertex patch is too small or degenerate for a quadratic fit."""

    def __init__(self, vertices):
        self.vertices = list(vertices)
        super().__init__(f"quadratic fit failed at vertices {self.vertices}")


class DegeneratePatchError(MeshError):
    """A vertex patch has collapsed to zero measure (coincident points)."""


class ConsistencyError(Exception):
    """Fatal invariant failure detected between adaptation phases."""

    def __init__(self, phase, violations):
        self.phase = phase
        self.violations = list(violations)
        head = "; ".join(self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"mesh inconsistent after phase '{phase}': {head}{more}")
