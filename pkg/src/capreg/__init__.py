"""capreg: optimal regulation of energy-capacity investment.

Solvers for business-as-usual, second-best and first-best behaviour in
monopoly, duopoly and general multi-agent linear-quadratic markets, plus
Monte Carlo scenario evaluation of the resulting rebate contracts.
"""

from .contracts import ContractPrices, ControlSchedule, FirmContract, PaymentSchedule
from .core import (
    AgentSpec,
    MarketSpec,
    PrincipalSpec,
    ScaledMarket,
    TimeGrid,
    hamiltonian_agent,
    reference_market,
    solve_w_backward,
    w_agent_closed_form,
    w_principal_closed_form,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateModelError,
    DomainError,
    ModelError,
    UnsupportedCaseError,
)
from .general import (
    GeneralModel,
    GeneralPayments,
    ZSystem,
    assemble_z_system,
    damped_picard,
    duopoly_embedding,
    monopoly_embedding,
    nash_drift_equilibrium,
    phi_star,
    sb_fixed_point_general,
    vol_best_response,
)
from .simulate import (
    PathBundle,
    ScenarioResult,
    evaluate_contract,
    scenario_metrics,
    simulate_paths,
)

__version__ = "0.1.0"

__all__ = [
    "AgentSpec",
    "ConfigError",
    "ContractPrices",
    "ControlSchedule",
    "ConvergenceError",
    "DegenerateModelError",
    "DomainError",
    "FirmContract",
    "GeneralModel",
    "GeneralPayments",
    "MarketSpec",
    "ModelError",
    "PathBundle",
    "PaymentSchedule",
    "PrincipalSpec",
    "ScaledMarket",
    "ScenarioResult",
    "TimeGrid",
    "UnsupportedCaseError",
    "ZSystem",
    "assemble_z_system",
    "damped_picard",
    "duopoly_embedding",
    "evaluate_contract",
    "hamiltonian_agent",
    "monopoly_embedding",
    "nash_drift_equilibrium",
    "phi_star",
    "reference_market",
    "sb_fixed_point_general",
    "scenario_metrics",
    "simulate_paths",
    "solve_w_backward",
    "vol_best_response",
    "w_agent_closed_form",
    "w_principal_closed_form",
]
