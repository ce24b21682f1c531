"""Closed-form machinery for the single-firm (monopoly) market.

One firm invests in both technologies; its drift best response inverts the
congestion-coupled quadratic cost, and the regulator's second-best payments
solve a two-channel nonlinear system coupling drift payments z to volatility
payments gamma through the induced volatility levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contracts import ContractPrices, ControlSchedule, FirmContract, PaymentSchedule, zdot_central
from .core import (VOL_FLOOR_FRACTION, MarketSpec, ScaledMarket, TimeGrid, scaled,
                   trapezoid, w_agent_path, w_principal_path)
from .errors import DomainError, UnsupportedCaseError
from .general import _vol_response_array, damped_picard, phi_star


@dataclass(frozen=True, eq=False)
class AgentValue:
    """A firm's no-contract value: certainty equivalent and its running integrand."""

    certainty_equivalent: float
    w0: np.ndarray


@dataclass(frozen=True, eq=False)
class PrincipalValue:
    """Regulator value under a contract: value function at (0, X0), the
    certainty equivalent net of reservation payments, and the running integrand."""

    certainty_equivalent: float
    value: float
    w0: np.ndarray


# ---------------------------------------------------------------------------
# drift and volatility responses
# ---------------------------------------------------------------------------


def _response_coeffs(sm: ScaledMarket) -> tuple[np.ndarray, float]:
    """(m, e) with m_j = q_i / Q and e = eps / Q for the monopoly determinant Q."""
    q_m = sm.q_m
    return np.array([sm.q[1], sm.q[0]]) / q_m, sm.eps / q_m


def sb_drift_monopoly(z: np.ndarray, sm: ScaledMarket) -> np.ndarray:
    """Drift best response a_j = m_j (z_j - l_j) - e (z_i - l_i); z is (..., 2)."""
    m, e = _response_coeffs(sm)
    u = np.asarray(z, dtype=float) - sm.l
    return m * u - e * u[..., ::-1]


def bu_controls_monopoly(grid: TimeGrid, spec: MarketSpec, vol_control: bool = True) -> ControlSchedule:
    """No-contract equilibrium controls.

    Drift follows the shadow prices in place of payments; volatility effort
    responds to the certainty-equivalent variance penalty eta * w^2 and is
    clamped to the admissible band (at the terminal time the penalty vanishes
    and the no-effort cap applies).
    """
    sm = scaled(spec, grid)
    w = w_agent_path(grid, spec)
    a = sb_drift_monopoly(w, sm)
    if vol_control:
        b = _vol_response_array(-sm.eta[0] * w**2, sm.phi, sm.sigma, floor_frac=VOL_FLOOR_FRACTION)
    else:
        b = np.broadcast_to(sm.sigma, w.shape).copy()
    label = f"M-BU-{'DVC' if vol_control else 'DC'}"
    return ControlSchedule(grid=grid, a=a, b=b, label=label)


def bu_slope_monopoly(spec: MarketSpec) -> np.ndarray:
    """Constant slope -p (q_i - eps) / Q of the no-contract drift controls.

    Only defined without depreciation, where the shadow prices are linear in
    time; the slope is invariant to the money scale.
    """
    if any(a.depreciation != 0.0 for a in spec.agents):
        raise UnsupportedCaseError("drift-control slope is constant only for zero depreciation")
    sm = ScaledMarket.from_spec(spec, 1.0)
    q_m = sm.q_m
    return np.array([-sm.p * (sm.q[1] - sm.eps) / q_m, -sm.p * (sm.q[0] - sm.eps) / q_m])


# ---------------------------------------------------------------------------
# second-best payments
# ---------------------------------------------------------------------------


def _z_closed_form(w: np.ndarray, b: np.ndarray, sm: ScaledMarket) -> np.ndarray:
    """Drift payments for given volatility levels; w, b are (..., 2).

    Channel j solves
    z_j = [w_j (b_j^2 eta_p + m_j - e^2/zeta_i) - w_i e b_i^2 eta_a / zeta_i]
          / (zeta_j - e^2 / zeta_i),
    the exact solution of the symmetric 2x2 stationarity system with
    zeta_j = b_j^2 (eta_a + eta_p) + m_j.
    """
    m, e = _response_coeffs(sm)
    eta_a, eta_p = sm.eta[0], sm.eta_p
    zeta = b**2 * (eta_a + eta_p) + m
    zeta_o = zeta[..., ::-1]
    denom = zeta - e**2 / zeta_o
    num = w * (b**2 * eta_p + m - e**2 / zeta_o) - w[..., ::-1] * e * (b[..., ::-1] ** 2 * eta_a) / zeta_o
    return num / denom


def mhat_monopoly(z: np.ndarray, w: np.ndarray, sm: ScaledMarket) -> np.ndarray:
    """Per-channel volatility payment -h - eta_a z^2 - eta_p (w - z)^2."""
    return -sm.h - sm.eta[0] * z**2 - sm.eta_p * (w - z) ** 2


def sb_payments_monopoly(
    grid: TimeGrid,
    spec: MarketSpec,
    vol_control: bool = True,
    theta: float = 0.5,
    tol: float = 1e-11,
    max_iter: int = 500,
) -> PaymentSchedule:
    """Second-best payment schedule (z, gamma) on the grid.

    Damped Picard alternation between the closed-form z-solve at the current
    volatility levels and the gamma update; all grid times iterate as one
    batch.  Without volatility control the levels are pinned at sigma and the
    solve is direct.
    """
    sm = scaled(spec, grid)
    w = w_principal_path(grid, spec)

    def solve_z(gamma: np.ndarray) -> np.ndarray:
        if vol_control:
            b = _vol_response_array(gamma, sm.phi, sm.sigma, floor_frac=VOL_FLOOR_FRACTION)
        else:
            b = np.broadcast_to(sm.sigma, gamma.shape)
        return _z_closed_form(w, b, sm)

    def gamma_target(z: np.ndarray) -> np.ndarray:
        return mhat_monopoly(z, w, sm)

    z0 = sm.eta_p / (sm.eta_p + sm.eta[0]) * w
    z, gamma, res, iters = damped_picard(
        solve_z, gamma_target, gamma_target(z0), theta=theta, tol=tol, max_iter=max_iter
    )
    return PaymentSchedule(
        grid=grid, structure="M", z=z, gamma=gamma, wp=w,
        vol_control=vol_control, residual=res, iterations=iters,
    )


def payment_residual_monopoly(schedule: PaymentSchedule, spec: MarketSpec) -> float:
    """Re-evaluate the defining equations from the stored arrays.

    Returns the worst grid-point residual
    max(|z - zhat(gamma)| / (1 + |zhat|), |gamma - mhat(z)| / (1 + |mhat|)).
    """
    sm = scaled(spec, schedule.grid)
    w = schedule.wp
    if schedule.vol_control:
        b = _vol_response_array(schedule.gamma, sm.phi, sm.sigma, floor_frac=VOL_FLOOR_FRACTION)
    else:
        b = np.broadcast_to(sm.sigma, schedule.gamma.shape)
    z_hat = _z_closed_form(w, b, sm)
    g_hat = mhat_monopoly(schedule.z, w, sm)
    res_z = np.abs(schedule.z - z_hat).max(axis=1) / (1.0 + np.abs(z_hat).max(axis=1))
    res_g = np.abs(schedule.gamma - g_hat).max(axis=1) / (1.0 + np.abs(g_hat).max(axis=1))
    return float(np.maximum(res_z, res_g).max())


def sb_controls_monopoly(schedule: PaymentSchedule, spec: MarketSpec) -> ControlSchedule:
    """Controls induced by a payment schedule (no-effort cap without volatility control)."""
    if schedule.structure != "M":
        raise DomainError("expected a monopoly schedule")
    sm = scaled(spec, schedule.grid)
    a = sb_drift_monopoly(schedule.z, sm)
    if schedule.vol_control:
        b = _vol_response_array(schedule.gamma, sm.phi, sm.sigma, floor_frac=VOL_FLOOR_FRACTION)
    else:
        b = np.broadcast_to(sm.sigma, schedule.gamma.shape).copy()
    label = f"M-SB-{'DVC' if schedule.vol_control else 'DC'}"
    return ControlSchedule(grid=schedule.grid, a=a, b=b, label=label)


# ---------------------------------------------------------------------------
# contract prices and value functions
# ---------------------------------------------------------------------------


def hamiltonian_path_monopoly(schedule: PaymentSchedule, spec: MarketSpec) -> np.ndarray:
    """Benefit rate at the initial state along the payment schedule; shape (n,)."""
    sm = scaled(spec, schedule.grid)
    z, gamma = schedule.z, schedule.gamma
    controls = sb_controls_monopoly(schedule, spec)
    a, b = controls.a, controls.b
    state = np.sum((sm.p - sm.delta * z) * sm.x0, axis=1)
    drift = np.sum(z * a, axis=1) - np.sum(sm.drift_cost(a), axis=1)
    vol = np.sum(0.5 * b**2 * gamma - sm.vol_cost(b), axis=1)
    return state + drift + vol


def _zdot_frozen_vol(schedule: PaymentSchedule, sm: ScaledMarket) -> np.ndarray:
    """Payment derivative treating the volatility levels as time-independent.

    Differentiates the closed-form z formula with the coefficient ratios held
    at their pointwise values, using dw_j/dt = -k_j exp(-delta_j (T - t)).
    Useful as a cross-check where gamma is nearly flat.
    """
    grid = schedule.grid
    m, e = _response_coeffs(sm)
    eta_a, eta_p = sm.eta[0], sm.eta_p
    if schedule.vol_control:
        b = _vol_response_array(schedule.gamma, sm.phi, sm.sigma, floor_frac=VOL_FLOOR_FRACTION)
    else:
        b = np.broadcast_to(sm.sigma, schedule.gamma.shape)
    zeta = b**2 * (eta_a + eta_p) + m
    zeta_o = zeta[..., ::-1]
    denom = zeta - e**2 / zeta_o
    own = (b**2 * eta_p + m - e**2 / zeta_o) / denom
    cross = e * (b[..., ::-1] ** 2 * eta_a) / zeta_o / denom
    tau = grid.horizon - grid.times[:, None]
    wdot = -sm.k * np.exp(-sm.delta * tau)
    return wdot * own - wdot[:, ::-1] * cross


def contract_prices_monopoly(
    schedule: PaymentSchedule, spec: MarketSpec, zdot_mode: str = "central"
) -> ContractPrices:
    """Rebate prices of the second-best contract.

    pi_drift = -zdot - p + delta z prices the capacity deviation, pi_vol
    = -h - eta_p (w - z)^2 the realised quadratic variation; the fixed part
    is the reservation certainty equivalent minus the no-effort benefit the
    schedule would hand the firm at the initial state.
    """
    if schedule.structure != "M":
        raise DomainError("expected a monopoly schedule")
    grid = schedule.grid
    sm = scaled(spec, grid)
    if zdot_mode == "central":
        zdot = zdot_central(schedule.z, grid)
    elif zdot_mode == "frozen-vol":
        zdot = _zdot_frozen_vol(schedule, sm)
    else:
        raise DomainError(f"unknown zdot_mode {zdot_mode!r}")

    pi_drift = -zdot - sm.p + sm.delta * schedule.z
    pi_vol = -sm.h - sm.eta_p * (schedule.wp - schedule.z) ** 2
    fixed = sm.e0[0] - float(trapezoid(hamiltonian_path_monopoly(schedule, spec), grid))
    firm = FirmContract(
        pi_drift=pi_drift, pi_vol=pi_vol, fixed=fixed, terminal_bonus=schedule.z[-1].copy()
    )
    return ContractPrices(grid=grid, structure="M", firms=(firm,))


def bu_value_monopoly(grid: TimeGrid, spec: MarketSpec, vol_control: bool = True) -> AgentValue:
    """No-contract certainty equivalent w(0) . X0 + integral of the running surplus."""
    sm = scaled(spec, grid)
    w = w_agent_path(grid, spec)
    controls = bu_controls_monopoly(grid, spec, vol_control)
    a, b = controls.a, controls.b
    w0 = (
        np.sum(w * a, axis=1)
        - 0.5 * sm.eta[0] * np.sum(b**2 * w**2, axis=1)
        - np.sum(sm.drift_cost(a), axis=1)
        - np.sum(sm.vol_cost(b), axis=1)
    )
    ce = float(w[0] @ sm.x0 + trapezoid(w0, grid))
    return AgentValue(certainty_equivalent=ce, w0=w0)


def sb_value_monopoly(
    grid: TimeGrid,
    spec: MarketSpec,
    schedule: PaymentSchedule | None = None,
    vol_control: bool = True,
) -> PrincipalValue:
    """Regulator's second-best value.

    The running term evaluates the reduced objective at the schedule's drift
    payments: shadow-priced drift minus investment cost, plus the conjugate
    of the volatility payment (or its no-control evaluation at sigma).
    Passing an explicit ``schedule`` prices an externally imposed payment
    path, e.g. for cross-structure comparisons.
    """
    if schedule is None:
        schedule = sb_payments_monopoly(grid, spec, vol_control)
    sm = scaled(spec, grid)
    w = schedule.wp
    z = schedule.z
    a = sb_drift_monopoly(z, sm)
    mhat = mhat_monopoly(z, w, sm)
    if schedule.vol_control:
        vol_term = np.sum(phi_star(mhat, sm.phi, sm.sigma), axis=1)
    else:
        vol_term = np.sum(0.5 * sm.sigma**2 * mhat, axis=1)
    w0 = np.sum(w * a, axis=1) - np.sum(sm.drift_cost(a), axis=1) + vol_term
    value = float(w[0] @ sm.x0 + trapezoid(w0, grid))
    ce = value - sum(sm.e0)
    return PrincipalValue(certainty_equivalent=ce, value=value, w0=w0)
