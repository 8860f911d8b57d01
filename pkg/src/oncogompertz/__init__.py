"""Gompertz tumour growth under oncolytic virotherapy: simulation and dynamical analysis."""
from .model import (Classification, DimensionalParams, Equilibrium, EquilibriumKind,
                    ModelDomainError, ModelParams, State, coexistence_state, equilibria,
                    jacobian, nondimensionalize, rhs, rhs_dimensional)
from .integrator import (IntegrationError, IntegratorConfig, Outcome, OutcomeReport,
                         Trajectory, classify_trajectory, integrate, integrate_to_outcome)
from .stability import (CubicCoefficients, ProbeResult, Verdict, charpoly_coexistence,
                        charpoly_failed, classify_coexistence, cubic_discriminant,
                        eradication_probe, node_spiral_switch, routh_hurwitz,
                        routh_hurwitz_stable, scan_region, threshold_contour)
from .continuation import (BifurcationPoint, Branch, BranchKind, ContinuationError,
                           Criticality, CycleMeasurement, PointKind, bistable_window,
                           classify_hopf, continue_equilibrium, eradication_branch_stability,
                           hopf_locus, hopf_points, locate_generalized_hopf, track_cycles)
from .protocol import (InjectionSchedule, SweepError, basin_slice, dosage_sweep,
                       kappa_sweep, run_protocol)

__version__ = "0.1.0"

__all__ = [
    "BifurcationPoint", "Branch", "BranchKind", "Classification", "ContinuationError",
    "Criticality", "CubicCoefficients", "CycleMeasurement", "DimensionalParams",
    "Equilibrium", "EquilibriumKind", "InjectionSchedule", "IntegrationError",
    "IntegratorConfig", "ModelDomainError", "ModelParams", "Outcome", "OutcomeReport",
    "PointKind", "ProbeResult", "State", "SweepError", "Trajectory", "Verdict",
    "basin_slice", "bistable_window", "charpoly_coexistence", "charpoly_failed",
    "classify_coexistence", "classify_hopf", "classify_trajectory", "coexistence_state",
    "continue_equilibrium", "cubic_discriminant", "dosage_sweep", "equilibria",
    "eradication_branch_stability", "eradication_probe", "hopf_locus", "hopf_points",
    "integrate", "integrate_to_outcome", "jacobian", "kappa_sweep",
    "locate_generalized_hopf", "node_spiral_switch", "nondimensionalize", "rhs",
    "rhs_dimensional", "routh_hurwitz", "routh_hurwitz_stable", "run_protocol",
    "scan_region", "threshold_contour", "track_cycles",
]
