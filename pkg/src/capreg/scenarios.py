"""Named scenario assembly: {M, C} x {BU, SB, FB} x {DC, DVC}.

A scenario solves the regime's controls (and payments and rebate prices
where a contract exists), simulates the controlled capacity paths, prices
the contracts pathwise, and condenses everything into a summary mapping
ready for serialisation.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import duopoly, monopoly
from .contracts import ContractPrices, ControlSchedule, PaymentSchedule
from .core import MarketSpec, TimeGrid, reference_market, w_agent_path
from .errors import DomainError
from .simulate import (PathBundle, ScenarioResult, contract_value_summary, evaluate_contract,
                       scenario_metrics, simulate_paths)

MARKETS = ("M", "C")
REGIMES = ("BU", "SB", "FB")
VOL_TAGS = ("DC", "DVC")
SCENARIO_NAMES = tuple(f"{m}-{r}-{v}" for m in MARKETS for r in REGIMES for v in VOL_TAGS)

# Published totals for the default calibration (kappa = 168), used by the
# comparison report's ratio column.
REFERENCE_CONTRACT_VALUES = {
    "M-SB-DC": 4.24e14,
    "M-SB-DVC": 1.02e14,
    "C-SB-DC": 3.77e14,
    "C-SB-DVC": 9.87e13,
}


def parse_scenario_name(name: str) -> tuple[str, str, bool]:
    parts = name.upper().split("-")
    if len(parts) != 3 or parts[0] not in MARKETS or parts[1] not in REGIMES or parts[2] not in VOL_TAGS:
        raise DomainError(f"unknown scenario name {name!r}; expected e.g. 'M-SB-DVC'")
    return parts[0], parts[1], parts[2] == "DVC"


@dataclass(frozen=True)
class ScenarioConfig:
    """One runnable scenario: market structure, regime, and run parameters."""

    market: str
    regime: str
    vol_control: bool
    spec: MarketSpec
    horizon: float = 10.0
    dt: float = 1.0 / 52.0
    kappa: float = 168.0
    n_paths: int = 1000
    seed: int = 42

    def __post_init__(self):
        if self.market not in MARKETS or self.regime not in REGIMES:
            raise DomainError(f"unknown scenario {self.market}-{self.regime}")
        if self.spec.structure != self.market:
            raise DomainError("spec structure does not match the scenario market")

    @classmethod
    def from_name(cls, name: str, spec: MarketSpec | None = None, **kwargs) -> "ScenarioConfig":
        market, regime, vol = parse_scenario_name(name)
        if spec is None:
            spec = reference_market(market)
        return cls(market=market, regime=regime, vol_control=vol, spec=spec, **kwargs)

    @property
    def name(self) -> str:
        return f"{self.market}-{self.regime}-{'DVC' if self.vol_control else 'DC'}"

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_dt(self.horizon, self.dt, kappa=self.kappa)


@dataclass(frozen=True, eq=False)
class ScenarioArtifacts:
    """Everything one scenario produces."""

    config: ScenarioConfig
    controls: ControlSchedule
    payments: PaymentSchedule | None
    shadow_agent: np.ndarray            # firm shadow prices (n, 2), written for BU runs
    prices: ContractPrices | None
    bundle: PathBundle
    result: ScenarioResult
    contract_values: np.ndarray | None  # (n_paths, n_firms)
    fb_path_label: str | None
    summary: dict


def _risk_neutral(spec: MarketSpec) -> MarketSpec:
    agents = tuple(dataclasses.replace(a, risk_aversion=0.0) for a in spec.agents)
    return dataclasses.replace(spec, agents=agents)


def solve_scenario(config: ScenarioConfig) -> ScenarioArtifacts:
    """Solve, simulate and summarise one scenario."""
    grid = config.grid
    spec = config.spec
    vol = config.vol_control
    fb_label = None

    if config.regime == "BU":
        payments = None
        prices = None
        if config.market == "M":
            controls = monopoly.bu_controls_monopoly(grid, spec, vol)
            agent_ces = [monopoly.bu_value_monopoly(grid, spec, vol).certainty_equivalent]
        else:
            controls = duopoly.bu_controls_competitive(grid, spec, vol)
            agent_ces = [v.certainty_equivalent for v in duopoly.bu_value_competitive(grid, spec, vol)]
        principal_ce = None
    else:
        work_spec = spec
        if config.regime == "FB":
            work_spec = _risk_neutral(spec)
        if config.market == "M":
            if config.regime == "FB":
                fb_label = "risk-neutral-second-best"
            payments = monopoly.sb_payments_monopoly(grid, work_spec, vol)
            controls = monopoly.sb_controls_monopoly(payments, work_spec)
            prices = monopoly.contract_prices_monopoly(payments, work_spec)
            principal_ce = monopoly.sb_value_monopoly(grid, work_spec, payments).certainty_equivalent
        else:
            if config.regime == "FB":
                fb_label = "constant-coefficients"
                payments = duopoly.fb_payments_competitive(grid, work_spec, vol)
            else:
                payments = duopoly.sb_payments_competitive(grid, work_spec, vol)
            controls = duopoly.sb_controls_competitive(payments, work_spec)
            prices = duopoly.contract_prices_competitive(payments, work_spec)
            principal_ce = duopoly.sb_value_competitive(grid, work_spec, payments).certainty_equivalent
        # Participation binds under an accepted contract.
        agent_ces = list(spec.reservations)

    delta = tuple(a.depreciation for a in spec.agents)
    bundle = simulate_paths(controls, spec.x0, delta, n_paths=config.n_paths, seed=config.seed)
    result = scenario_metrics(bundle)
    values = evaluate_contract(bundle, prices) if prices is not None else None

    summary = {
        "scenario": config.name,
        "market": config.market,
        "regime": config.regime,
        "vol_control": vol,
        "kappa": config.kappa,
        "horizon": config.horizon,
        "dt": config.dt,
        "n_paths": config.n_paths,
        "seed": config.seed,
        "terminal_total_capacity_mean": result.terminal_total,
        "terminal_total_capacity_se": result.terminal_total_se,
        "terminal_renewable_share_mean": result.terminal_share,
        "terminal_renewable_share_se": result.terminal_share_se,
        "negative_capacity_paths": result.negative_capacity_paths,
        "agent_certainty_equivalents": [float(v) for v in agent_ces],
        "principal_certainty_equivalent": principal_ce,
        "fb_path": fb_label,
        "solver_residual": payments.residual if payments is not None else None,
        "solver_iterations": payments.iterations if payments is not None else None,
        "contract_fixed_parts": (
            [firm.fixed for firm in prices.firms] if prices is not None else None
        ),
    }
    if values is not None:
        summary.update(contract_value_summary(values))
    else:
        summary.update(
            {"contract_value_mean": None, "contract_value_se": None, "contract_values_by_firm": None}
        )

    return ScenarioArtifacts(
        config=config,
        controls=controls,
        payments=payments,
        shadow_agent=w_agent_path(grid, spec),
        prices=prices,
        bundle=bundle,
        result=result,
        contract_values=values,
        fb_path_label=fb_label,
        summary=summary,
    )
