"""
Conelab Utils Package

Geometry engines behind the experiments:
- Metric spaces, graphs and shortest paths
- Euclidean comparison tests (triangles, quadrilaterals, four points)
- The wrinkled quadrant surface
- Sasaki geometry of the unit tangent bundle of H^2
- Circumcenters, trees of spaces and finite-scale cone probes
"""

from .metric_core import (
    DomainError,
    EuclideanPlane,
    GeometryError,
    GraphSpace,
    InvariantViolation,
    MetricGraph,
    MetricPoint,
    MetricSpace,
    Polyline,
    ScaledSpace,
    UnreachableError,
    UnsupportedSpaceError,
    graph_distance,
    polyline_length,
    refine_graph,
)
from .comparison import (
    comparison_triangle,
    four_point_defect,
    quadrilateral_comparison,
    triangle_defect,
)
from .wrinkled_quadrant import build_surface, divergence_gap, projection_defect
from .sasaki import HPoint, UTPoint, qi_bounds_check, sasaki_distance, sasaki_geodesic_ode
from .circumcenter import BoundedSet, circumradius, iterate_barycenters
from .tree_of_spaces import GluingSpec, build_amalgam_space, build_finite_edge_amalgam
from .cone_probe import ScaleSchedule, defect_profile, scaled_four_point, sublinearity_verdict

__all__ = [
    'DomainError', 'EuclideanPlane', 'GeometryError', 'GraphSpace', 'InvariantViolation',
    'MetricGraph', 'MetricPoint', 'MetricSpace', 'Polyline', 'ScaledSpace', 'UnreachableError',
    'UnsupportedSpaceError', 'graph_distance', 'polyline_length', 'refine_graph',
    'comparison_triangle', 'four_point_defect', 'quadrilateral_comparison', 'triangle_defect',
    'build_surface', 'divergence_gap', 'projection_defect',
    'HPoint', 'UTPoint', 'qi_bounds_check', 'sasaki_distance', 'sasaki_geodesic_ode',
    'BoundedSet', 'circumradius', 'iterate_barycenters',
    'GluingSpec', 'build_amalgam_space', 'build_finite_edge_amalgam',
    'ScaleSchedule', 'defect_profile', 'scaled_four_point', 'sublinearity_verdict',
]
