"""P1 finite elements for the Frank-Oseen energy of nematic liquid crystals,
minimised by a projection-free tangent-space gradient flow."""
from .energy import (EnergyBreakdown, FrankConstants, boundary_error, constraint_error,
                     energy_gradient, first_variation, freedericksz_threshold, helein_margin,
                     modified_constants)
from .energy import energy as frank_energy
from .fem import DofMap, interpolate
from .flow import (EnergyIncrease, FlowConfig, FlowState, build_step_system, run_gradient_flow,
                   tangent_elimination_solve, tangent_step)
from .linalg import SaddleOperator, minres
from .mesh import (MeshError, TetMesh, build_ball_mesh, build_box_mesh, build_colloid_mesh,
                   classify_boundary, export_mesh, import_mesh)
from .scenarios import PRESETS, RunReport, Scenario, nodal_normalize, run_scenario, write_vtk

__version__ = "0.1.0"
