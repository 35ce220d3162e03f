"""Sharp area bounds for free boundary minimal surfaces in rotationally symmetric balls.

Modules: ``warp`` (metric profiles), ``radial`` (potentials and conformal
chart), ``fields`` (calibration fields), ``threshold`` (admissible radius),
``mesh`` (discrete minimizer), ``audit`` (discrete calibration chain) and
``cli``.
"""

from .errors import DomainError, MeshError, NormalizationError, NumericError, SingularityError
from .radial import RadialGeometry, build_chart
from .warp import make_preset, resolve_metric

__all__ = [
    "DomainError", "MeshError", "NormalizationError", "NumericError", "SingularityError",
    "RadialGeometry", "build_chart", "make_preset", "resolve_metric",
]
