"""Crystalline curvature flows of polygons with a fixed normal fan.

A polygon is a height vector over an ordered set of unit normals.  Velocity
laws give normal speeds per edge; the integrators advance heights with an
explicit Euler scheme or the second-order implicit midpoint scheme, both of
which carry constant area speed and constant length speed over to the
discrete level.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .polygon import (  # noqa: F401
    NormalFan,
    Polygon,
    build_fan,
    check_admissible,
    distance,
    interpolate,
    is_simple,
    polygon_from_vertices,
    shoelace_area,
)
from .laws import (  # noqa: F401
    AdvectedCurvatureFlow,
    AdvectedFlow,
    AreaPreservingCurvatureFlow,
    ConservationClass,
    ConstantSpeed,
    CurvatureFlow,
    LengthPreservingCurvatureFlow,
    VectorField2D,
    VelocityLaw,
    parse_field,
    parse_law,
)
from .integrators import StepControl, Termination, Trajectory, euler_step, implicit_step, run  # noqa: F401
from .diagnostics import closed_form_reference, conservation_report, convergence_order, error_vs_reference  # noqa: F401
from .scenarios import ScenarioSpec, build_preset, parse_scenario, read_scenario, write_scenario  # noqa: F401
