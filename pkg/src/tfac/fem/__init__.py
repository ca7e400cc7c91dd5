"""Mixed finite elements on structured triangulations."""

from .mesh import TriangleMesh, build_structured_mesh, mesh_for_spacing, write_mesh
from .quadrature import segment_rule, triangle_rule
from .spaces import DiscreteField, Forms, MixedSpace

__all__ = [
    "DiscreteField",
    "Forms",
    "MixedSpace",
    "TriangleMesh",
    "build_structured_mesh",
    "mesh_for_spacing",
    "segment_rule",
    "triangle_rule",
    "write_mesh",
]
