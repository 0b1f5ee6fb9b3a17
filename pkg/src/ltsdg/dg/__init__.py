from .assembly import BoundaryCondition, assemble_dare, assemble_darcy, solve_steady, velocity_from_pressure
from .eto import assemble_eto, current, potential, rates
from .space import DGSpace
from .system import DGReaction, GlobalSystem, LocalSystem, PointwiseReaction, extract_local

__all__ = [
    "BoundaryCondition", "DGReaction", "DGSpace", "GlobalSystem", "LocalSystem", "PointwiseReaction",
    "assemble_dare", "assemble_darcy", "assemble_eto", "current", "extract_local", "potential",
    "rates", "solve_steady", "velocity_from_pressure",
]
