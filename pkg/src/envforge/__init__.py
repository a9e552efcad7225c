"""Robust dynamic operating envelopes for unbalanced distribution networks."""
from importlib import resources

from .baselines import deterministic_doe, ellipsoid_rdoe, so_enumeration
from .conic import ConicProblem, SolveReport, solve, solve_lp
from .estimators import (DeterministicEnvelope, EllipsoidEnvelope, SuperellipsoidEnvelope,
                         VertexEnumerationEnvelope, check_region)
from .exceptions import (EnvforgeError, InfeasibleRegionError, NetworkError, PowerFlowError,
                         SolverError, TooManyCustomersError)
from .network import NetworkModel, load_network, network_from_dict
from .powerflow import BaseOperatingPoint, solve_exact_power_flow
from .rdoe import (EnvelopeAllocation, RdoeConfig, RdoeSolution, build_rdoe_problem,
                   extract_envelopes, pwl_gap, pwl_log, soc_encode, solve_rdoe)
from .region import (FeasibleRegion, assemble_feasible_region, build_voltage_sensitivities,
                     feasible_region_from_network, remove_redundant_rows)
from .superellipsoid import (Superellipsoid, corner_factor, inscribed_box, membership,
                             relative_gap, select_K)
from .validation import (ViolationReport, certify_box_in_polyhedron, dual_gap_probe,
                         monte_carlo_validate)

__version__ = "0.1.0"


def example_network_path(name="twobus"):
    """Path to a bundled network file."""
    return str(resources.files(__name__).joinpath("data", f"{name}.json"))
