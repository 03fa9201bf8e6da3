"""Numerical laboratory for renormalized volume of quasi-Fuchsian and
convex co-compact hyperbolic 3-manifolds, and its discrete W-volume analogue
on triangulated surfaces."""

__version__ = "0.1.0"

from .fuchsian import (  # noqa: E402
    DivergenceError,
    DomainError,
    FuchsianGroup,
    MoebiusMap,
    Quadrature,
    RQVector,
    StructuralError,
    octagon_group,
    poincare_series,
    rq_basis,
    rq_inner_product,
)
from .beltrami import BeltramiField, QCMap, metric_variation, solve_beltrami  # noqa: E402
from .infinity import assemble_infinity_tensors, schwarzian  # noqa: E402
from .surface import DiscreteMetricSurface, octagon_mesh, ricci_flow  # noqa: E402

__all__ = [
    "BeltramiField",
    "DiscreteMetricSurface",
    "DivergenceError",
    "DomainError",
    "FuchsianGroup",
    "MoebiusMap",
    "QCMap",
    "Quadrature",
    "RQVector",
    "StructuralError",
    "assemble_infinity_tensors",
    "metric_variation",
    "octagon_group",
    "octagon_mesh",
    "poincare_series",
    "ricci_flow",
    "rq_basis",
    "rq_inner_product",
    "schwarzian",
    "solve_beltrami",
]
