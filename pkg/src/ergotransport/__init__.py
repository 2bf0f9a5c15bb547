"""Ergodic transport on Bernoulli shift spaces.

Optimal plans whose marginals are shift-invariant, computed as LP brackets
on cylinder grids, together with dual pairs, slackness certificates and
zeta-measure (periodic-orbit Gibbs) approximations.
"""

__version__ = "0.1.0"

from ._accel import backend
from .cost import (
    Affine, CostBracket, CostSpec, MinSumSq, PairSqDist, SqDistToPoints, TableCost, XCells,
    constant_cost, cost_bracket, cost_from_dict, eval_point, lipschitz_bound,
)
from .errors import (
    ConfigError, ErgoTransportError, NonConvergence, NumericalFailure, PositivityError,
    ResourceError,
)
from .lp import (
    LpProblem, LpSolution, TransportPlan, UniquenessReport, classical_ot, lp_solve,
    optimal_face_probe, perturb_problem, transport_lp,
)
from .measures import (
    CylinderMeasure, FiniteMeasure, StationarityConstraints, flow_balance, markov_extend,
    markov_extension_mass, orbit_measure, project_to_depth, stationarity_residual,
    transition_matrix,
)
from .shift import (
    Cylinder, PeriodicOrbit, Point, Word, canonical_orbit, enumerate_fix, first_disagreement,
    metric_distance, shift_frame,
)
from .transport import (
    Certificate, DualPair, P1Instance, P2Instance, RefineInfo, ValueBracket,
    admissibility_violation, assemble_p1, assemble_p2, birkhoff_deficiency_scan,
    certify_slackness, eo_min, invariant_core, lax_oleinik_refine, lipschitz_excess, min_cycle_mean,
    orbit_average, oscillation_bound, solve_p1, solve_p2, support_shift_closed,
)
from .zeta import ConvergenceTable, ZetaParams, ZetaResult, zeta_p1, zeta_p2, zeta_sweep
