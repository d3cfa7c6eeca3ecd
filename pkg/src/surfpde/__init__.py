"""Solver for advection-diffusion PDEs on moving curves and surfaces.

The method alternates two passes per time step on a narrow Cartesian tube
of grid nodes surrounding the surface:

1. closest point evolution: every nodal value is replaced by the field
   interpolated at the node's closest surface point (making the field
   constant along surface normals), then the embedding PDE is advanced
   one explicit Euler step with standard centered differences;
2. particle tracking: the stored closest points ("footpoints") are moved
   with the surface velocity and the closest point representation is
   rebuilt by local least-squares reconstruction, with an osculating
   circle/sphere fallback that keeps every tube node populated.
"""

from surfpde.errors import (
    ConfigError,
    IncompleteTubeError,
    MedialAxisError,
    NumericalFault,
    SolverError,
)
from surfpde.grid import GridSpec, Tube, build_tube, neighbors, node_position
from surfpde.interp import interpolate, stencil_for
from surfpde.surfaces import Circle, Dumbbell, Sphere, Torus, TwoCircles
from surfpde.gbpm import (
    Footpoint,
    ResampleParams,
    move_footpoints,
    resample,
    update_tube,
)
from surfpde.cpm import ModelSpec, cpm_step, extend, gamma_cpm, laplacian
from surfpde.motion import MotionLaw, velocity
from surfpde.coupled import CoupledState, coupled_step, gamma_policy

__version__ = "0.1.0"
