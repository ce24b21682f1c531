"""Parameter containers, time grid, marginal capacity values and the agents'
benefit rate (Hamiltonian).

Everything downstream works off two primitives defined here:

* ``MarketSpec`` holds the raw calibration (costs in EUR/MWh and EUR/MWh^2,
  capacities in MW, rates per year).  Money-flow coefficients are multiplied
  by the grid's ``kappa`` before use so that capacity held over time converts
  into energy paid for; :class:`ScaledMarket` is that working view.
* ``TimeGrid`` fixes the uniform scenario grid (default: weekly steps over a
  ten-year horizon) together with ``kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateModelError, DomainError

# Volatility efforts live in [VOL_FLOOR_FRACTION * sigma, sigma]; the lower
# clamp keeps the effort cost finite, the upper one is the no-effort cap.
VOL_FLOOR_FRACTION = 1e-3

# Depreciation below this threshold uses the exact zero-rate limit formulas.
_DELTA_EPS = 1e-10


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgentSpec:
    """Cost and risk parameters of one technology and the firm operating it.

    Units: ``linear_cost`` EUR/MWh, ``quadratic_cost`` EUR/MWh^2,
    ``vol_cost_scale`` EUR/MWh^2 scaled by MW^4, ``uncontrolled_vol`` MW per
    sqrt(year), ``depreciation`` per year, ``risk_aversion`` per EUR,
    ``reservation`` EUR (certainty equivalent of the firm's outside option).
    """

    linear_cost: float
    quadratic_cost: float
    vol_cost_scale: float
    uncontrolled_vol: float
    depreciation: float = 0.0
    risk_aversion: float = 0.0
    reservation: float = 0.0

    def __post_init__(self):
        if not self.quadratic_cost > 0:
            raise DomainError("quadratic_cost must be positive")
        if not self.vol_cost_scale > 0:
            raise DomainError("vol_cost_scale must be positive")
        if not self.uncontrolled_vol > 0:
            raise DomainError("uncontrolled_vol must be positive")
        if self.depreciation < 0:
            raise DomainError("depreciation must be nonnegative")
        if self.risk_aversion < 0:
            raise DomainError("risk_aversion must be nonnegative")


@dataclass(frozen=True)
class PrincipalSpec:
    """Regulator parameters.

    ``power_price`` is the price p paid per MWh produced, ``externality`` the
    pair (k1, k2) of per-MWh externality values (carbon cost k1 < 0, avoided
    emissions k2 > 0), ``vol_penalty`` the marginal cost h of quadratic
    variation, ``risk_aversion`` the regulator's exponential-utility
    coefficient.
    """

    power_price: float
    externality: tuple[float, float]
    vol_penalty: float
    risk_aversion: float

    def __post_init__(self):
        # h = 0 is admitted: the volatility payment stays strictly negative
        # through the risk terms even without a variance tax.
        if self.vol_penalty < 0:
            raise DomainError("vol_penalty must be nonnegative")
        if not self.risk_aversion > 0:
            raise DomainError("principal risk_aversion must be positive")


@dataclass(frozen=True)
class MarketSpec:
    """All parameters of one market structure.

    ``structure`` is ``"M"`` (one firm operates both technologies) or ``"C"``
    (two firms, one technology each).  ``agents`` lists the conventional
    technology first, the renewable one second.  ``reservation`` is the
    monopolist's outside-option certainty equivalent; competitive firms carry
    theirs on the :class:`AgentSpec`.
    """

    structure: str
    agents: tuple[AgentSpec, AgentSpec]
    congestion: float
    principal: PrincipalSpec
    x0: tuple[float, float] = (0.0, 0.0)
    reservation: float = 0.0

    def __post_init__(self):
        if self.structure not in ("M", "C"):
            raise DomainError(f"structure must be 'M' or 'C', got {self.structure!r}")
        if len(self.agents) != 2:
            raise DomainError("exactly two technologies are supported")
        if self.structure == "M":
            e1, e2 = (a.risk_aversion for a in self.agents)
            if e1 != e2:
                raise DomainError(
                    "monopoly market: both technologies belong to one firm, "
                    "risk aversions must coincide"
                )
        q1, q2 = (a.quadratic_cost for a in self.agents)
        eps = self.congestion
        if self.structure == "M" and q1 * q2 - eps**2 == 0:
            raise DegenerateModelError("q1*q2 - eps^2 vanishes")
        if self.structure == "C" and q1 * q2 - eps**2 / 4 == 0:
            raise DegenerateModelError("q1*q2 - eps^2/4 vanishes")

    @property
    def eta_agents(self) -> tuple[float, float]:
        """Risk aversion of the firm operating each technology."""
        return (self.agents[0].risk_aversion, self.agents[1].risk_aversion)

    @property
    def reservations(self) -> tuple[float, ...]:
        """Outside-option certainty equivalents, one per firm."""
        if self.structure == "M":
            return (self.reservation,)
        return (self.agents[0].reservation, self.agents[1].reservation)


def reference_market(structure: str = "M") -> MarketSpec:
    """Default calibration used throughout the test suite and the CLI.

    Conventional: l=100, q=1, Phi=2000^4, sigma=300.  Renewable: l=200, q=2,
    Phi=5000^4, sigma=750.  eps=0.25, eta=0.001 for every player, p=100,
    k=(-1, 800), h=50^4, X0=(4000, 1000) MW, no depreciation.
    """
    conventional = AgentSpec(
        linear_cost=100.0,
        quadratic_cost=1.0,
        vol_cost_scale=2000.0**4,
        uncontrolled_vol=300.0,
        depreciation=0.0,
        risk_aversion=0.001,
    )
    renewable = AgentSpec(
        linear_cost=200.0,
        quadratic_cost=2.0,
        vol_cost_scale=5000.0**4,
        uncontrolled_vol=750.0,
        depreciation=0.0,
        risk_aversion=0.001,
    )
    principal = PrincipalSpec(
        power_price=100.0,
        externality=(-1.0, 800.0),
        vol_penalty=50.0**4,
        risk_aversion=0.001,
    )
    return MarketSpec(
        structure=structure,
        agents=(conventional, renewable),
        congestion=0.25,
        principal=principal,
        x0=(4000.0, 1000.0),
    )


# ---------------------------------------------------------------------------
# time grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with the money-flow scale ``kappa``.

    ``kappa`` converts capacity held per unit time into the energy actually
    paid for; 24*7 = 168 with weekly steps reproduces the reference results.
    The library default is 1 so that closed-form hand calculations match.
    """

    horizon: float
    steps: int
    kappa: float = 1.0

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        if self.steps < 1:
            raise DomainError("need at least one step")
        if not self.kappa > 0:
            raise DomainError("kappa must be positive")

    @classmethod
    def from_dt(cls, horizon: float, dt: float, kappa: float = 1.0) -> "TimeGrid":
        steps = round(horizon / dt)
        if steps < 1 or abs(steps * dt - horizon) > 1e-9 * max(1.0, horizon):
            raise DomainError(f"horizon {horizon} is not an integer multiple of dt {dt}")
        return cls(horizon=horizon, steps=steps, kappa=kappa)

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def n(self) -> int:
        """Number of grid points (steps + 1)."""
        return self.steps + 1

    @cached_property
    def times(self) -> np.ndarray:
        t = np.linspace(0.0, self.horizon, self.n)
        t[-1] = self.horizon
        t.flags.writeable = False
        return t


def trapezoid(values: np.ndarray, grid: TimeGrid) -> float | np.ndarray:
    """Trapezoid quadrature of grid-sampled values over [0, T]."""
    return np.trapezoid(values, dx=grid.dt, axis=0)


def left_riemann(values: np.ndarray, grid: TimeGrid) -> float | np.ndarray:
    """Left-point quadrature, consistent with Euler-Maruyama adaptedness."""
    return np.sum(values[:-1], axis=0) * grid.dt


# ---------------------------------------------------------------------------
# scaled working view
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScaledMarket:
    """Market parameters with all money coefficients multiplied by kappa.

    Shadow prices, payments and contract values computed from this view are
    in actual money units; drift controls are invariant to the scaling.
    """

    structure: str
    p: float
    l: np.ndarray
    q: np.ndarray
    eps: float
    phi: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray
    h: float
    k: np.ndarray
    eta: np.ndarray
    eta_p: float
    x0: np.ndarray
    e0: tuple[float, ...]
    kappa: float

    @classmethod
    def from_spec(cls, spec: MarketSpec, kappa: float) -> "ScaledMarket":
        a1, a2 = spec.agents
        return cls(
            structure=spec.structure,
            p=kappa * spec.principal.power_price,
            l=np.array([kappa * a1.linear_cost, kappa * a2.linear_cost]),
            q=np.array([kappa * a1.quadratic_cost, kappa * a2.quadratic_cost]),
            eps=kappa * spec.congestion,
            phi=np.array([kappa * a1.vol_cost_scale, kappa * a2.vol_cost_scale]),
            sigma=np.array([a1.uncontrolled_vol, a2.uncontrolled_vol]),
            delta=np.array([a1.depreciation, a2.depreciation]),
            h=kappa * spec.principal.vol_penalty,
            k=kappa * np.asarray(spec.principal.externality, dtype=float),
            eta=np.array(spec.eta_agents),
            eta_p=spec.principal.risk_aversion,
            x0=np.asarray(spec.x0, dtype=float),
            e0=spec.reservations,
            kappa=kappa,
        )

    @property
    def q_m(self) -> float:
        """Cost determinant q1*q2 - eps^2 of the single-firm market."""
        d = self.q[0] * self.q[1] - self.eps**2
        if d == 0:
            raise DegenerateModelError("q1*q2 - eps^2 vanishes")
        return d

    @property
    def q_c(self) -> float:
        """Cost determinant q1*q2 - eps^2/4 of the two-firm market."""
        d = self.q[0] * self.q[1] - self.eps**2 / 4
        if d == 0:
            raise DegenerateModelError("q1*q2 - eps^2/4 vanishes")
        return d

    @property
    def b_floor(self) -> np.ndarray:
        return VOL_FLOOR_FRACTION * self.sigma

    def vol_cost(self, b: np.ndarray) -> np.ndarray:
        """Stabilisation cost phi_j(b) = (b^-2 - sigma^-2) * Phi, zero at b = sigma."""
        b = np.asarray(b, dtype=float)
        return (b**-2.0 - self.sigma**-2.0) * self.phi

    def drift_cost(self, a: np.ndarray) -> np.ndarray:
        """Per-technology investment cost g_j(a) = l_j a_j + q_j a_j^2 / 2 + eps a1 a2 / 2."""
        a = np.asarray(a, dtype=float)
        cross = 0.5 * self.eps * a[..., 0] * a[..., 1]
        return self.l * a + 0.5 * self.q * a**2 + cross[..., None]


def scaled(spec: MarketSpec, grid: TimeGrid) -> ScaledMarket:
    return ScaledMarket.from_spec(spec, grid.kappa)


# ---------------------------------------------------------------------------
# marginal capacity values (shadow prices)
# ---------------------------------------------------------------------------


def w_agent_closed_form(t: float, p: float, delta: float, horizon: float) -> float:
    """Marginal value to a firm of one MW installed at time t.

    Solves ``w' = -p + delta * w`` backward from ``w(T) = 0``:
    ``p * (1 - exp(-delta (T - t))) / delta``, with the limit ``p * (T - t)``
    once delta is numerically zero.
    """
    if not 0.0 <= t <= horizon:
        raise DomainError(f"t={t} outside [0, {horizon}]")
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    if delta < _DELTA_EPS:
        return p * (horizon - t)
    return p * (1.0 - math.exp(-delta * (horizon - t))) / delta


def w_principal_closed_form(t: float, k: float, delta: float, horizon: float) -> float:
    """Marginal value to the regulator of one MW installed at time t.

    Same backward equation as :func:`w_agent_closed_form` with the externality
    value k as the source.
    """
    return w_agent_closed_form(t, k, delta, horizon)


def _w_closed_form_path(grid: TimeGrid, rates: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Vectorised closed form on the grid; shape (n, len(rates))."""
    tau = grid.horizon - grid.times[:, None]
    rates = np.asarray(rates, dtype=float)
    delta = np.asarray(delta, dtype=float)
    out = np.where(
        delta > _DELTA_EPS,
        rates * -np.expm1(-delta * tau) / np.where(delta > _DELTA_EPS, delta, 1.0),
        rates * tau,
    )
    return out


def w_agent_path(grid: TimeGrid, spec: MarketSpec) -> np.ndarray:
    """Firm shadow prices on the grid, money-scaled; shape (n, 2)."""
    sm = scaled(spec, grid)
    return _w_closed_form_path(grid, np.full(2, sm.p), sm.delta)


def w_principal_path(grid: TimeGrid, spec: MarketSpec) -> np.ndarray:
    """Regulator shadow prices on the grid, money-scaled; shape (n, 2)."""
    sm = scaled(spec, grid)
    return _w_closed_form_path(grid, sm.k, sm.delta)


def solve_w_backward(
    a0: np.ndarray,
    source: np.ndarray,
    terminal: np.ndarray,
    grid: TimeGrid,
    refine: int = 10,
) -> np.ndarray:
    """Integrate ``w' = source - a0^T w`` backward from ``w(T) = terminal``.

    Classical fixed-step fourth-order integration with ``refine`` substeps per
    grid interval; the linear right-hand side needs no adaptivity and the
    fixed step keeps runs bit-reproducible.  Returns shape (n, d).
    """
    a0 = np.atleast_2d(np.asarray(a0, dtype=float))
    source = np.asarray(source, dtype=float)
    terminal = np.asarray(terminal, dtype=float)
    if not (np.all(np.isfinite(a0)) and np.all(np.isfinite(source)) and np.all(np.isfinite(terminal))):
        raise DomainError("solve_w_backward requires finite inputs")
    d = source.shape[0]
    if a0.shape != (d, d) or terminal.shape != (d,):
        raise DomainError("shape mismatch between a0, source and terminal")

    def rhs(w: np.ndarray) -> np.ndarray:
        return source - a0.T @ w

    out = np.empty((grid.n, d))
    out[-1] = terminal
    h = -grid.dt / refine
    w = terminal.astype(float)
    for idx in range(grid.steps - 1, -1, -1):
        for _ in range(refine):
            k1 = rhs(w)
            k2 = rhs(w + 0.5 * h * k1)
            k3 = rhs(w + 0.5 * h * k2)
            k4 = rhs(w + h * k3)
            w = w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[idx] = w
    return out


# ---------------------------------------------------------------------------
# agent benefit rate
# ---------------------------------------------------------------------------


def hamiltonian_agent(
    x: np.ndarray,
    z: np.ndarray,
    gamma: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    spec: MarketSpec,
    kappa: float = 1.0,
) -> float:
    """Instantaneous benefit rate of the single firm at supplied controls.

    ``gamma`` may be a length-2 diagonal or a full 2x2 payment matrix.  The
    value is the state term sum_j (p - delta_j z_j) x_j plus the drift surplus
    z . a - sum_j g_j(a) plus the volatility surplus
    Tr(diag(b) diag(b) gamma) / 2 - sum_j phi_j(b_j).  Evaluating at the
    optimal controls recovers the best-response benefit.
    """
    sm = ScaledMarket.from_spec(spec, kappa)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim == 1:
        gamma = np.diag(gamma)
    if np.any(b < sm.b_floor - 1e-12) or np.any(b > sm.sigma + 1e-12):
        raise DomainError("volatility controls outside [b_floor, sigma]")

    state = float(np.sum((sm.p - sm.delta * z) * x))
    drift = float(z @ a - np.sum(sm.drift_cost(a)))
    bb = np.diag(b) @ np.diag(b)
    vol = 0.5 * float(np.trace(bb @ gamma)) - float(np.sum(sm.vol_cost(b)))
    return state + drift + vol
