"""Follow-the-leader traffic on road networks and its multi-path LWR limit."""

from .bridge import DensityProfile, l1_distance, psi_average
from .density import PiecewiseConstant, antidiscretize, discretize
from .macro import FundamentalDiagram, MacroGrid, MacroState, godunov_flux, step_multipath
from .micro import MicroParams, MicroState, seed_vehicles, step
from .network import Path, RoadNetwork, TurningCoefficients, enumerate_paths

__version__ = "0.1.0"
