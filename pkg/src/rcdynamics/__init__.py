"""Heat-bath dynamics of the random-cluster model on tori.

Submodules: :mod:`lattice` (geometry and connectivity), :mod:`stream`
(parameters and update randomness), :mod:`dynamics` (FK, percolation and
censored dynamics), :mod:`percolations` (window percolations),
:mod:`infoperc` (history diagrams), :mod:`exact` (micro-graph oracle),
:mod:`estimators` (mixing experiments) and :mod:`cli`.
"""

from .lattice import Graph, TorusGeometry, torus, component_count, is_cut_edge, open_cluster
from .stream import RCParams, UpdateStream, UpdateEvent, generate
from .dynamics import evolve, grand_coupling, spd_evolve, censored_evolve, discrete_step

__version__ = "0.1.0"
