"""cbiflow: continuous-state branching processes with immigration.

Mechanism evaluation, cumulant flows, renormalization functionals, limit
laws, reproducible Monte Carlo schemes, and the statistics harness that
checks the asymptotic theory against simulation.
"""

__version__ = "0.1.0"

from .errors import (CbiError, DomainError, HypothesisMismatch,
                     NumericError, ScenarioError, SchemeMismatch,
                     UnsupportedKind)
from .mechanisms import (BranchingMechanism, CustomTail,
                         ImmigrationMechanism, PiecewiseConstantTail,
                         PointMassTail, criticality, divergence_test,
                         make_builtin_tail)
from .flow import v_forward, v_backward, rho_t
from .renorm import (RegimeReport, RenormEvaluator, classify_regime,
                     h_inverse, m_eval, transience_test)
from .limitlaws import LimitLaw, finite_t_lt
from .simulate import (ChartStable, Ensemble, EulerJump, ExactQuadratic,
                       SimConfig, martingale_check, simulate_ensemble,
                       simulate_subordinator)
from .stats import (VerificationVerdict, empirical_lt, ks_distance,
                    stationary_check, verify_theorem)
from .scenarios import (Scenario, dump_scenario, load_scenario,
                        parse_scenario, serialize_scenario)

__all__ = [
    "__version__",
    "CbiError", "DomainError", "HypothesisMismatch", "NumericError",
    "ScenarioError", "SchemeMismatch", "UnsupportedKind",
    "BranchingMechanism", "ImmigrationMechanism", "CustomTail",
    "PiecewiseConstantTail", "PointMassTail", "criticality",
    "divergence_test", "make_builtin_tail",
    "v_forward", "v_backward", "rho_t",
    "RegimeReport", "RenormEvaluator", "classify_regime", "h_inverse",
    "m_eval", "transience_test",
    "LimitLaw", "finite_t_lt",
    "ChartStable", "Ensemble", "EulerJump", "ExactQuadratic", "SimConfig",
    "martingale_check", "simulate_ensemble", "simulate_subordinator",
    "VerificationVerdict", "empirical_lt", "ks_distance",
    "stationary_check", "verify_theorem",
    "Scenario", "dump_scenario", "load_scenario", "parse_scenario",
    "serialize_scenario",
]
