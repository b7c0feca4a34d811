"""Space-time cut finite elements for bulk-surface surfactant transport in 2D."""
from .mesh import Mesh, build_uniform_mesh, refine_uniform
from .levelset import LevelSetField, LevelSetAdvector, VelocityField, init_circle
from .cutgeom import CutGeometry, cut_geometry, build_slab_sets
from .slabspace import SlabSpace, SlabFunction, Trace, build_slab_space
from .forms import CouplingModel, TransportParameters, SlabSystem, mass_functional
from .solver import NewtonConfig, newton_solve, estimate_condition

__version__ = "0.1.0"
