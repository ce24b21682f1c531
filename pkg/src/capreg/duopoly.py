"""Closed-form machinery for the two-firm (competitive) market.

Firm 1 operates the conventional technology, firm 2 the renewable one; both
carry the congestion cross term.  Each firm's contract prices both state
channels, so the second-best schedule has four drift payments: own payments
(z11, z22) solved from a two-by-two system with coefficients depending on
the volatility levels, and cross payments (z12, z21) that share risk on the
channel the firm does not operate.
"""

from __future__ import annotations

import numpy as np

from .contracts import ContractPrices, ControlSchedule, FirmContract, PaymentSchedule, zdot_central
from .core import (VOL_FLOOR_FRACTION, MarketSpec, ScaledMarket, TimeGrid, scaled,
                   trapezoid, w_agent_path, w_principal_path)
from .errors import DegenerateModelError, DomainError, UnsupportedCaseError
from .general import _vol_response_array, damped_picard, phi_star
from .monopoly import AgentValue, PrincipalValue


# ---------------------------------------------------------------------------
# drift responses
# ---------------------------------------------------------------------------


def _response_coeffs(sm: ScaledMarket) -> tuple[np.ndarray, float]:
    """(m, e) with m_j = q_i / Q and e = eps / (2 Q) for the duopoly determinant Q."""
    q_c = sm.q_c
    return np.array([sm.q[1], sm.q[0]]) / q_c, sm.eps / (2.0 * q_c)


def sb_drift_competitive(z_own: np.ndarray, sm: ScaledMarket) -> np.ndarray:
    """Equilibrium drift a^j = m_j (z_j - l_j) - e (z_i - l_i) from own payments (..., 2)."""
    m, e = _response_coeffs(sm)
    u = np.asarray(z_own, dtype=float) - sm.l
    return m * u - e * u[..., ::-1]


def individual_drift_response(z_own_n: float, a_other: float, firm: int, sm: ScaledMarket) -> float:
    """Firm ``firm``'s best reply (z_n - l_n - eps a_i / 2) / q_n to the rival's drift."""
    return (z_own_n - sm.l[firm] - 0.5 * sm.eps * a_other) / sm.q[firm]


def bu_controls_competitive(grid: TimeGrid, spec: MarketSpec, vol_control: bool = True) -> ControlSchedule:
    """No-contract equilibrium controls of both firms."""
    sm = scaled(spec, grid)
    w = w_agent_path(grid, spec)
    a = sb_drift_competitive(w, sm)
    if vol_control:
        b = _vol_response_array(-sm.eta * w**2, sm.phi, sm.sigma, VOL_FLOOR_FRACTION)
    else:
        b = np.broadcast_to(sm.sigma, w.shape).copy()
    label = f"C-BU-{'DVC' if vol_control else 'DC'}"
    return ControlSchedule(grid=grid, a=a, b=b, label=label)


# ---------------------------------------------------------------------------
# second-best payment system
# ---------------------------------------------------------------------------


def _risk_mix(sm: ScaledMarket) -> np.ndarray:
    """Per-channel harmonic risk weight eta_p eta_i / (eta_p + eta_i), i the other firm."""
    other = sm.eta[::-1]
    return sm.eta_p * other / (sm.eta_p + other)


def _coeff_tables(b: np.ndarray, sm: ScaledMarket) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
    """(zeta, f_own, f_cross, f0, curl) for volatility levels ``b`` (..., 2).

    zeta_j   = b_j^2 (eta_j + mix_j) + m_j (1 - eps^2 / (2 Q)),
    f_own_j  = b_j^2 mix_j + m_j + e curl / zeta_i,
    f_cross_j = e + (curl / zeta_i)(b_i^2 mix_i + m_i'),  with m_i' = q_j / Q,
    f0_j     = K_j - K_i curl / zeta_i,
    curl     = eps^3 / (4 Q^2),
    K_j      = -l_j q_i eps^2 / (2 Q^2) + l_i (e + curl).
    """
    q_c = sm.q_c
    m, e = _response_coeffs(sm)
    mix = _risk_mix(sm)
    curl = sm.eps**3 / (4.0 * q_c**2)
    k_const = -sm.l * (m / q_c) * sm.eps**2 / 2.0 + sm.l[::-1] * (e + curl)

    zeta = b**2 * (sm.eta + mix) + m * (1.0 - sm.eps**2 / (2.0 * q_c))
    if np.any(zeta == 0.0):
        raise DegenerateModelError("vanishing zeta coefficient in the payment system")
    zeta_o = zeta[..., ::-1]
    f_own = b**2 * mix + m + e * curl / zeta_o
    f_cross = e + (curl / zeta_o) * (b[..., ::-1] ** 2 * mix[::-1] + m[::-1])
    f0 = k_const - k_const[::-1] * curl / zeta_o
    return zeta, f_own, f_cross, f0, curl


def _z_own_closed_form(w: np.ndarray, b: np.ndarray, sm: ScaledMarket) -> np.ndarray:
    """Own drift payments z_jj = zeta_i (w_j f_own_j - w_i f_cross_j + f0_j) / (zeta_1 zeta_2 - curl^2)."""
    zeta, f_own, f_cross, f0, curl = _coeff_tables(b, sm)
    det = zeta[..., 0] * zeta[..., 1] - curl**2
    if np.any(det == 0.0):
        raise DegenerateModelError("singular own-payment system (zeta1 zeta2 = curl^2)")
    num = w * f_own - w[..., ::-1] * f_cross + f0
    return zeta[..., ::-1] * num / det[..., None]


def _stack_payments(z_own: np.ndarray, w: np.ndarray, sm: ScaledMarket) -> np.ndarray:
    """Assemble (..., 4) payments (z11, z12, z21, z22) from own payments (..., 2).

    The cross payment on channel j inside firm i's contract is
    eta_p / (eta_p + eta_i) * (w_j - z_jj).
    """
    share = sm.eta_p / (sm.eta_p + sm.eta)
    z12 = share[0] * (w[..., 1] - z_own[..., 1])
    z21 = share[1] * (w[..., 0] - z_own[..., 0])
    return np.stack([z_own[..., 0], z12, z21, z_own[..., 1]], axis=-1)


def mhat_competitive(z: np.ndarray, w: np.ndarray, sm: ScaledMarket) -> np.ndarray:
    """Per-channel volatility payment -h - sum_n eta_n (z^n_j)^2 - eta_p (w_j - sum_n z^n_j)^2."""
    z1 = z[..., [0, 1]]
    z2 = z[..., [2, 3]]
    resid = w - z1 - z2
    return -sm.h - sm.eta[0] * z1**2 - sm.eta[1] * z2**2 - sm.eta_p * resid**2


def sb_payments_competitive(
    grid: TimeGrid,
    spec: MarketSpec,
    vol_control: bool = True,
    theta: float = 0.5,
    tol: float = 1e-11,
    max_iter: int = 500,
) -> PaymentSchedule:
    """Second-best payments (z11, z12, z21, z22, gamma11, gamma22) on the grid.

    Picard sweep per iteration: the own payments solve the two-by-two
    closed-form system at the current volatility levels, the cross payments
    follow explicitly, then the volatility payments update with damping.
    """
    sm = scaled(spec, grid)
    w = w_principal_path(grid, spec)

    def solve_z(gamma: np.ndarray) -> np.ndarray:
        if vol_control:
            b = _vol_response_array(gamma, sm.phi, sm.sigma, VOL_FLOOR_FRACTION)
        else:
            b = np.broadcast_to(sm.sigma, gamma.shape)
        return _stack_payments(_z_own_closed_form(w, b, sm), w, sm)

    def gamma_target(z: np.ndarray) -> np.ndarray:
        return mhat_competitive(z, w, sm)

    share = sm.eta_p / (sm.eta_p + sm.eta)
    z0 = _stack_payments(share * w, w, sm)
    z, gamma, res, iters = damped_picard(
        solve_z, gamma_target, gamma_target(z0), theta=theta, tol=tol, max_iter=max_iter
    )
    return PaymentSchedule(
        grid=grid, structure="C", z=z, gamma=gamma, wp=w,
        vol_control=vol_control, residual=res, iterations=iters,
    )


def fb_payments_competitive(grid: TimeGrid, spec: MarketSpec, vol_control: bool = True) -> PaymentSchedule:
    """First-best payments for risk-neutral firms via the constant-coefficient system.

    With both firms risk neutral the coefficient tables lose their volatility
    dependence, the own payments become explicit in the shadow prices, the
    cross payments absorb the full residual w - z_own, and the volatility
    payments pin at -h.
    """
    if any(e != 0.0 for e in spec.eta_agents):
        raise UnsupportedCaseError("constant-coefficient payments require risk-neutral firms")
    sm = scaled(spec, grid)
    w = w_principal_path(grid, spec)
    b0 = np.zeros((grid.n, 2))                    # kills every b^2 term
    z_own = _z_own_closed_form(w, b0, sm)
    z = _stack_payments(z_own, w, sm)
    gamma = np.full((grid.n, 2), -sm.h)
    return PaymentSchedule(
        grid=grid, structure="C", z=z, gamma=gamma, wp=w,
        vol_control=vol_control, residual=0.0, iterations=0,
    )


def payment_residual_competitive(schedule: PaymentSchedule, spec: MarketSpec) -> float:
    """Worst grid-point residual of the stored payments against the defining system."""
    sm = scaled(spec, schedule.grid)
    w = schedule.wp
    if schedule.vol_control:
        b = _vol_response_array(schedule.gamma, sm.phi, sm.sigma, VOL_FLOOR_FRACTION)
    else:
        b = np.broadcast_to(sm.sigma, schedule.gamma.shape)
    z_hat = _stack_payments(_z_own_closed_form(w, b, sm), w, sm)
    g_hat = mhat_competitive(schedule.z, w, sm)
    res_z = np.abs(schedule.z - z_hat).max(axis=1) / (1.0 + np.abs(z_hat).max(axis=1))
    res_g = np.abs(schedule.gamma - g_hat).max(axis=1) / (1.0 + np.abs(g_hat).max(axis=1))
    return float(np.maximum(res_z, res_g).max())


def sb_controls_competitive(schedule: PaymentSchedule, spec: MarketSpec) -> ControlSchedule:
    """Controls induced by a competitive payment schedule."""
    if schedule.structure != "C":
        raise DomainError("expected a competitive schedule")
    sm = scaled(spec, schedule.grid)
    a = sb_drift_competitive(schedule.own_z(), sm)
    if schedule.vol_control:
        b = _vol_response_array(schedule.gamma, sm.phi, sm.sigma, VOL_FLOOR_FRACTION)
    else:
        b = np.broadcast_to(sm.sigma, schedule.gamma.shape).copy()
    label = f"C-SB-{'DVC' if schedule.vol_control else 'DC'}"
    return ControlSchedule(grid=schedule.grid, a=a, b=b, label=label)


# ---------------------------------------------------------------------------
# contract prices and value functions
# ---------------------------------------------------------------------------


def hamiltonian_path_competitive(schedule: PaymentSchedule, spec: MarketSpec, firm: int) -> np.ndarray:
    """Firm ``firm``'s benefit rate at the initial state along the schedule."""
    sm = scaled(spec, schedule.grid)
    controls = sb_controls_competitive(schedule, spec)
    a, b = controls.a, controls.b
    z_firm = schedule.firm_z(firm)
    own_cost = sm.drift_cost(a)[:, firm] + sm.vol_cost(b)[:, firm]
    vol = 0.5 * b[:, firm] ** 2 * schedule.gamma[:, firm]
    drift = np.sum((a - sm.delta * sm.x0) * z_firm, axis=1)
    return sm.p * sm.x0[firm] - own_cost + vol + drift


def contract_prices_competitive(
    schedule: PaymentSchedule, spec: MarketSpec, zdot_mode: str = "central"
) -> ContractPrices:
    """Rebate prices of both firms' second-best contracts.

    The power price enters only the own-channel drift price; cross-channel
    volatility prices are the firm's own risk compensation eta_n (z^n_j)^2,
    and each contract carries the terminal payments z^n(T) as bonus
    coefficients on the final deviation from the baseline.
    """
    if schedule.structure != "C":
        raise DomainError("expected a competitive schedule")
    grid = schedule.grid
    sm = scaled(spec, grid)
    if zdot_mode != "central":
        raise DomainError(f"unknown zdot_mode {zdot_mode!r}")

    w = schedule.wp
    firms = []
    for firm in range(2):
        other = 1 - firm
        z_firm = schedule.firm_z(firm)
        zdot = zdot_central(z_firm, grid)
        pi_drift = -zdot + sm.delta * z_firm
        pi_drift[:, firm] -= sm.p

        z_other = schedule.firm_z(other)
        pi_vol = np.empty((grid.n, 2))
        resid = w[:, firm] - z_firm[:, firm] - z_other[:, firm]
        pi_vol[:, firm] = -sm.h - sm.eta[other] * z_other[:, firm] ** 2 - sm.eta_p * resid**2
        pi_vol[:, other] = sm.eta[firm] * z_firm[:, other] ** 2

        fixed = sm.e0[firm] - float(trapezoid(hamiltonian_path_competitive(schedule, spec, firm), grid))
        firms.append(
            FirmContract(pi_drift=pi_drift, pi_vol=pi_vol, fixed=fixed,
                         terminal_bonus=z_firm[-1].copy())
        )
    return ContractPrices(grid=grid, structure="C", firms=tuple(firms))


def bu_value_competitive(grid: TimeGrid, spec: MarketSpec, vol_control: bool = True) -> tuple[AgentValue, AgentValue]:
    """No-contract certainty equivalents of both firms."""
    sm = scaled(spec, grid)
    w = w_agent_path(grid, spec)
    controls = bu_controls_competitive(grid, spec, vol_control)
    a, b = controls.a, controls.b
    costs = sm.drift_cost(a) + sm.vol_cost(b)
    out = []
    for firm in range(2):
        w0 = (
            w[:, firm] * a[:, firm]
            - 0.5 * sm.eta[firm] * b[:, firm] ** 2 * w[:, firm] ** 2
            - costs[:, firm]
        )
        ce = float(w[0, firm] * sm.x0[firm] + trapezoid(w0, grid))
        out.append(AgentValue(certainty_equivalent=ce, w0=w0))
    return tuple(out)


def sb_value_competitive(
    grid: TimeGrid,
    spec: MarketSpec,
    schedule: PaymentSchedule | None = None,
    vol_control: bool = True,
) -> PrincipalValue:
    """Regulator's second-best value under competition.

    As in the monopoly case the running term evaluates the reduced objective
    at the schedule's payments; volatility enters through the conjugate of
    the per-channel payment built from all four drift payments.
    """
    if schedule is None:
        schedule = sb_payments_competitive(grid, spec, vol_control)
    sm = scaled(spec, grid)
    w = schedule.wp
    a = sb_drift_competitive(schedule.own_z(), sm)
    mhat = mhat_competitive(schedule.z, w, sm)
    if schedule.vol_control:
        vol_term = np.sum(phi_star(mhat, sm.phi, sm.sigma), axis=1)
    else:
        vol_term = np.sum(0.5 * sm.sigma**2 * mhat, axis=1)
    w0 = np.sum(w * a, axis=1) - np.sum(sm.drift_cost(a), axis=1) + vol_term
    value = float(w[0] @ sm.x0 + trapezoid(w0, grid))
    ce = value - sum(sm.e0)
    return PrincipalValue(certainty_equivalent=ce, value=value, w0=w0)
