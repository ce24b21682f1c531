"""General multi-agent linear-quadratic solver.

``GeneralModel`` describes N agents steering a d-dimensional
Ornstein-Uhlenbeck state through drift controls (linear-quadratic costs with
cross terms) and per-channel volatility controls (inverse-square effort
costs).  The module provides

* the Nash drift equilibrium for arbitrary payment vectors,
* the per-channel volatility best response and its Legendre transform,
* the stacked linear system whose solution is the optimal drift payment for
  a given volatility payment, and
* the damped Picard iteration coupling the two, solved pointwise in time.

The two-technology monopoly and duopoly markets embed via
:func:`monopoly_embedding` and :func:`duopoly_embedding`; the closed-form
modules must agree with this solver on every grid point.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .core import VOL_FLOOR_FRACTION, MarketSpec, ScaledMarket, TimeGrid, solve_w_backward
from .errors import ConvergenceError, DegenerateModelError, DomainError

_COND_LIMIT = 1e12


# ---------------------------------------------------------------------------
# volatility best response and Legendre transform
# ---------------------------------------------------------------------------


def vol_best_response(
    gamma: float,
    phi: float,
    sigma: float,
    floor_frac: float = VOL_FLOOR_FRACTION,
) -> float:
    """Optimal volatility level for a quadratic-variation payment ``gamma``.

    For gamma < 0 the interior optimum satisfies b^2 = sqrt(-2 phi / gamma),
    clamped to the admissible band [floor_frac * sigma, sigma].  A
    nonnegative payment removes the interior optimum and the no-effort cap
    sigma is returned.
    """
    if not phi > 0:
        raise DomainError("phi must be positive")
    if gamma >= 0:
        return sigma
    b_sq = np.sqrt(2.0 * phi / -gamma)
    return float(np.clip(np.sqrt(b_sq), floor_frac * sigma, sigma))


def _vol_response_array(
    gamma: np.ndarray, phi: np.ndarray, sigma: np.ndarray, floor_frac: float
) -> np.ndarray:
    """Vectorised :func:`vol_best_response`; gamma may hold nonnegative entries."""
    neg = gamma < 0
    b_sq = np.sqrt(2.0 * phi / np.where(neg, -gamma, 1.0))
    b = np.clip(np.sqrt(b_sq), floor_frac * sigma, sigma)
    return np.where(neg, b, sigma)


def phi_star(
    m: float | np.ndarray,
    phi: float | np.ndarray,
    sigma: float | np.ndarray,
    floor_frac: float = VOL_FLOOR_FRACTION,
) -> float | np.ndarray:
    """Convex conjugate of the effort cost in half-variance coordinates.

    With B = b^2 / 2 the cost reads phi_tilde(B) = (1/(2B) - 1/sigma^2) * phi
    and the transform is sup_B { B m - phi_tilde(B) } over the admissible band
    B in [floor^2/2, sigma^2/2].  For m < 0 the interior optimum sits at
    B = sqrt(phi / (-2 m)); for m >= 0 the band's upper edge is optimal and
    the value is m sigma^2 / 2 since phi_tilde vanishes there.
    """
    m = np.asarray(m, dtype=float)
    phi = np.asarray(phi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    b_lo = 0.5 * (floor_frac * sigma) ** 2
    b_hi = 0.5 * sigma**2
    interior = np.sqrt(phi / np.where(m < 0, -2.0 * m, 1.0))
    big = np.clip(np.where(m < 0, interior, b_hi), b_lo, b_hi)
    value = big * m - (0.5 / big - sigma**-2.0) * phi
    if value.ndim == 0:
        return float(value)
    return value


# ---------------------------------------------------------------------------
# model container
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GeneralModel:
    """N-agent model data.

    Shapes: ``a0`` (d,d) state feedback; ``a_ctrl`` (N,d,d) control loadings;
    ``c0`` (N,d) linear state costs; ``l`` (N,N,d) with ``l[n, j]`` agent n's
    linear cost on agent j's drift control; ``quad`` (N,N,N,d,d) with
    ``quad[n, j, i]`` the Hessian block of agent n's drift cost in
    (alpha^j, alpha^i); ``lam``/``terminal_bonus``/``g`` the principal's
    running, terminal and quadratic-variation weights.  Volatility costs are
    separable per state channel: channel c carries scale ``vol_phi[c]``, cap
    ``vol_sigma[c]`` and is controlled by agent ``vol_owner[c]``.
    """

    a0: np.ndarray
    a_ctrl: np.ndarray
    c0: np.ndarray
    l: np.ndarray
    quad: np.ndarray
    eta: np.ndarray
    eta_p: float
    lam: np.ndarray
    terminal_bonus: np.ndarray
    g: np.ndarray
    vol_phi: np.ndarray
    vol_sigma: np.ndarray
    vol_owner: np.ndarray
    floor_frac: float = VOL_FLOOR_FRACTION

    @property
    def n_agents(self) -> int:
        return self.c0.shape[0]

    @property
    def d(self) -> int:
        return self.c0.shape[1]

    @cached_property
    def q_foc(self) -> np.ndarray:
        """Stacked first-order-condition matrix, block (n, i) = quad[n, n, i]."""
        n, d = self.n_agents, self.d
        out = np.zeros((n * d, n * d))
        for row in range(n):
            for col in range(n):
                out[row * d : (row + 1) * d, col * d : (col + 1) * d] = self.quad[row, row, col]
        return out

    @cached_property
    def q_inv(self) -> np.ndarray:
        cond = np.linalg.cond(self.q_foc)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise DegenerateModelError("drift-cost system is singular", condition_number=cond)
        return np.linalg.inv(self.q_foc)

    def _q_inv_block(self, j: int, h: int) -> np.ndarray:
        d = self.d
        return self.q_inv[j * d : (j + 1) * d, h * d : (h + 1) * d]

    @cached_property
    def _static_blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Drift-only parts of the payment system: (S, W, zc).

        S[n, h] = A_n^T [sum_{j,i} Qinv[j,n]^T Hsum[j,i] Qinv[i,h]] A_h,
        W[n]    = A_n^T sum_j Qinv[j,n]^T A_j^T,
        zc[n]   = A_n^T sum_j Qinv[j,n]^T (Lsum[j] - sum_{i,h} Hsum[j,i] Qinv[i,h] l[h,h]),
        with Hsum[j, i] = sum_l quad[l, j, i] and Lsum[j] = sum_k l[k, j].
        """
        n, d = self.n_agents, self.d
        hsum = self.quad.sum(axis=0)
        lsum = self.l.sum(axis=0)
        l_own = np.stack([self.l[h, h] for h in range(n)])

        s = np.zeros((n, n, d, d))
        w = np.zeros((n, d, d))
        zc = np.zeros((n, d))
        for an in range(n):
            proj_n = self.a_ctrl[an].T
            for ah in range(n):
                acc = np.zeros((d, d))
                for j in range(n):
                    left = self._q_inv_block(j, an).T
                    for i in range(n):
                        acc += left @ hsum[j, i] @ self._q_inv_block(i, ah)
                s[an, ah] = proj_n @ acc @ self.a_ctrl[ah]
            w_acc = np.zeros((d, d))
            zc_acc = np.zeros(d)
            for j in range(n):
                left = self._q_inv_block(j, an).T
                w_acc += left @ self.a_ctrl[j].T
                inner = lsum[j].copy()
                for i in range(n):
                    for h in range(n):
                        inner -= hsum[j, i] @ self._q_inv_block(i, h) @ l_own[h]
                zc_acc += left @ inner
            w[an] = proj_n @ w_acc
            zc[an] = proj_n @ zc_acc
        return s, w, zc

    def vol_levels(self, gamma: np.ndarray, vol_control: bool = True) -> np.ndarray:
        """Per-channel volatility induced by payment matrices ``gamma``.

        ``gamma`` has shape (N, d, d) or batched (..., N, d, d); the result
        drops the agent axis and the matrix axes to (..., d).
        """
        channels = np.arange(self.d)
        if not vol_control:
            return np.broadcast_to(self.vol_sigma, gamma.shape[:-3] + (self.d,)).copy()
        g_diag = gamma[..., self.vol_owner, channels, channels]
        return _vol_response_array(g_diag, self.vol_phi, self.vol_sigma, self.floor_frac)

    def mhat(self, z: np.ndarray, wp: np.ndarray) -> np.ndarray:
        """Volatility-payment matrix g - sum_n eta_n z^n z^n' - eta_p r r'.

        ``z`` is (..., N, d) and ``wp`` (..., d); r = wp - sum_n z^n.
        """
        own = np.einsum("...nd,...ne->...nde", z, z)
        out = self.g - np.einsum("n,...nde->...de", self.eta, own)
        r = wp - z.sum(axis=-2)
        return out - self.eta_p * np.einsum("...d,...e->...de", r, r)

    def project_gamma(self, mhat: np.ndarray) -> np.ndarray:
        """Assign each diagonal entry of ``mhat`` (..., d, d) to the channel's owner."""
        channels = np.arange(self.d)
        gamma = np.zeros(mhat.shape[:-2] + (self.n_agents, self.d, self.d))
        gamma[..., self.vol_owner, channels, channels] = mhat[..., channels, channels]
        return gamma


# ---------------------------------------------------------------------------
# drift equilibrium and marginal-revenue paths
# ---------------------------------------------------------------------------


def nash_drift_equilibrium(shadow: np.ndarray, model: GeneralModel) -> np.ndarray:
    """Drift controls (N,d) solving every agent's first-order condition.

    ``shadow`` holds one d-vector per agent: the drift payment z^n under a
    contract, or the agent's marginal capacity value without one.
    """
    n, d = model.n_agents, model.d
    shadow = np.asarray(shadow, dtype=float).reshape(n, d)
    rhs = np.concatenate([model.a_ctrl[an].T @ shadow[an] - model.l[an, an] for an in range(n)])
    alpha = model.q_inv @ rhs
    return alpha.reshape(n, d)


def agent_marginal_revenue(model: GeneralModel, grid: TimeGrid) -> np.ndarray:
    """No-contract shadow prices, one path per agent; shape (N, n_times, d)."""
    return np.stack(
        [
            solve_w_backward(model.a0, model.c0[an], np.zeros(model.d), grid)
            for an in range(model.n_agents)
        ]
    )


def principal_marginal_revenue(model: GeneralModel, grid: TimeGrid) -> np.ndarray:
    """Regulator shadow prices; terminal value is the terminal bonus."""
    source = -(model.lam - model.c0.sum(axis=0))
    return solve_w_backward(model.a0, source, model.terminal_bonus, grid)


# ---------------------------------------------------------------------------
# payment system
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ZSystem:
    """Assembled drift-payment system: ``matrix @ z_flat = rhs``."""

    zeta: np.ndarray      # (N, d, d) diagonal blocks
    zw: np.ndarray        # (N, d, d) shadow-price loadings
    zc: np.ndarray        # (N, d) constant offsets
    matrix: np.ndarray    # (N d, N d)
    rhs: np.ndarray       # (N d,)
    condition_number: float

    def solve(self) -> np.ndarray:
        """Stacked payments as an (N, d) array."""
        return np.linalg.solve(self.matrix, self.rhs).reshape(self.zc.shape)


def _assemble_batch(
    gamma: np.ndarray,
    model: GeneralModel,
    wp: np.ndarray,
    vol_control: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched system assembly: gamma (..., N, d, d), wp (..., d).

    Returns (matrix (..., Nd, Nd), rhs (..., Nd)).
    """
    n, d = model.n_agents, model.d
    s, w, zc = model._static_blocks
    b = model.vol_levels(gamma, vol_control)
    batch = b.shape[:-1]
    bb = np.zeros(batch + (d, d))
    idx = np.arange(d)
    bb[..., idx, idx] = b**2

    matrix = np.zeros(batch + (n * d, n * d))
    rhs = np.zeros(batch + (n * d,))
    for an in range(n):
        rows = slice(an * d, (an + 1) * d)
        for ah in range(n):
            cols = slice(ah * d, (ah + 1) * d)
            eta_row = model.eta[an] + model.eta_p if ah == an else model.eta_p
            matrix[..., rows, cols] = eta_row * bb + s[an, ah]
        zw_n = model.eta_p * bb + w[an]
        rhs[..., rows] = np.einsum("...de,...e->...d", zw_n, np.broadcast_to(wp, batch + (d,))) - zc[an]
    return matrix, rhs


def assemble_z_system(
    gamma: np.ndarray,
    model: GeneralModel,
    wp: np.ndarray,
    vol_control: bool = True,
) -> ZSystem:
    """Build the stacked linear system for the drift payments at one time.

    Row block n couples z^n through zeta_n = (eta_n + eta_p) B + S[n, n] and
    the other agents' payments through eta_p B + S[n, h], with B the realised
    variance matrix of the volatility best responses to ``gamma``.
    """
    n, d = model.n_agents, model.d
    s, w, zc = model._static_blocks
    b = model.vol_levels(np.asarray(gamma, dtype=float), vol_control)
    bb = np.diag(b**2)
    zeta = np.stack([(model.eta[an] + model.eta_p) * bb + s[an, an] for an in range(n)])
    zw = np.stack([model.eta_p * bb + w[an] for an in range(n)])
    matrix, rhs = _assemble_batch(np.asarray(gamma, dtype=float), model, np.asarray(wp, dtype=float), vol_control)

    cond = np.linalg.cond(matrix)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise DegenerateModelError("payment system is singular", condition_number=cond)
    return ZSystem(zeta=zeta, zw=zw, zc=zc, matrix=matrix, rhs=rhs, condition_number=cond)


# ---------------------------------------------------------------------------
# damped Picard engine
# ---------------------------------------------------------------------------


def damped_picard(
    solve_z: Callable[[np.ndarray], np.ndarray],
    gamma_target: Callable[[np.ndarray], np.ndarray],
    gamma0: np.ndarray,
    theta: float = 0.5,
    tol: float = 1e-11,
    max_iter: int = 500,
) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Alternate exact z-solves with damped volatility-payment updates.

    The iterate keeps the drift equation exact by construction; the reported
    residual is the volatility-consistency defect
    ``|gamma - gamma_target(z)| / (1 + |gamma_target(z)|)`` in the max norm.
    The damping factor is halved whenever the defect increases.
    """
    gamma = np.asarray(gamma0, dtype=float).copy()
    res_prev = np.inf
    for iteration in range(1, max_iter + 1):
        z = solve_z(gamma)
        target = gamma_target(z)
        scale = 1.0 + np.max(np.abs(target))
        res = np.max(np.abs(gamma - target)) / scale
        if res <= tol:
            return z, gamma, res, iteration
        if res > res_prev:
            theta *= 0.5
        gamma = gamma + theta * (target - gamma)
        res_prev = res
    raise ConvergenceError("payment fixed point did not converge", residual=res, iterations=max_iter)


@dataclass(frozen=True, eq=False)
class GeneralPayments:
    """Fixed-point payments of the general solver on a grid."""

    grid: TimeGrid
    wp: np.ndarray        # (n_times, d)
    z: np.ndarray         # (n_times, N, d)
    gamma: np.ndarray     # (n_times, N, d, d)
    residual: float
    iterations: int


def payment_stationarity_residual(payments: GeneralPayments, model: GeneralModel,
                                  vol_control: bool = True) -> float:
    """Worst grid-point defect of the stacked stationarity system.

    Re-assembles the system from the stored payments and returns
    max_t |matrix z - rhs| / (1 + |rhs|) in the max norm.
    """
    grid = payments.grid
    matrix, rhs = _assemble_batch(payments.gamma, model, payments.wp, vol_control)
    lhs = np.einsum("tij,tj->ti", matrix, payments.z.reshape(grid.n, -1))
    per_point = np.abs(lhs - rhs).max(axis=1) / (1.0 + np.abs(rhs).max(axis=1))
    return float(per_point.max())


def sb_fixed_point_general(
    model: GeneralModel,
    grid: TimeGrid,
    vol_control: bool = True,
    theta: float = 0.5,
    tol: float = 1e-11,
    max_iter: int = 500,
) -> GeneralPayments:
    """Solve the coupled payment equations at every grid time.

    The system is pointwise in time, so all grid points iterate as one batch;
    the residual is the worst consistency defect across the grid.  The cold
    start uses the risk-sharing ratio eta_p / (eta_p + eta_n) that is exact
    in the decoupled limits.
    """
    wp_path = principal_marginal_revenue(model, grid)
    n, d = model.n_agents, model.d

    def solve_z(gamma: np.ndarray) -> np.ndarray:
        matrix, rhs = _assemble_batch(gamma, model, wp_path, vol_control)
        return np.linalg.solve(matrix, rhs[..., None])[..., 0].reshape(grid.n, n, d)

    def gamma_target(z: np.ndarray) -> np.ndarray:
        return model.project_gamma(model.mhat(z, wp_path))

    ratio = model.eta_p / (model.eta_p + model.eta)
    z0 = ratio[None, :, None] * wp_path[:, None, :]
    z, gamma, res, iters = damped_picard(
        solve_z, gamma_target, gamma_target(z0), theta=theta, tol=tol, max_iter=max_iter
    )
    return GeneralPayments(grid=grid, wp=wp_path, z=z, gamma=gamma, residual=res, iterations=iters)


# ---------------------------------------------------------------------------
# two-technology embeddings
# ---------------------------------------------------------------------------


def monopoly_embedding(spec: MarketSpec, kappa: float = 1.0) -> GeneralModel:
    """One agent steering both capacity channels with congestion-coupled costs."""
    sm = ScaledMarket.from_spec(spec, kappa)
    quad = np.zeros((1, 1, 1, 2, 2))
    quad[0, 0, 0] = np.array([[sm.q[0], sm.eps], [sm.eps, sm.q[1]]])
    return GeneralModel(
        a0=np.diag(-sm.delta),
        a_ctrl=np.eye(2)[None, :, :],
        c0=np.array([[-sm.p, -sm.p]]),
        l=sm.l.reshape(1, 1, 2).copy(),
        quad=quad,
        eta=np.array([sm.eta[0]]),
        eta_p=sm.eta_p,
        lam=sm.k - sm.p,
        terminal_bonus=np.zeros(2),
        g=np.full((2, 2), -sm.h),
        vol_phi=sm.phi.copy(),
        vol_sigma=sm.sigma.copy(),
        vol_owner=np.zeros(2, dtype=int),
    )


def duopoly_embedding(spec: MarketSpec, kappa: float = 1.0) -> GeneralModel:
    """Two agents, one capacity channel each, congestion in both cost functions.

    Each agent's unused drift coordinate carries a positive placeholder
    curvature and a zero control loading, which forces it inactive without
    touching any observable quantity.
    """
    sm = ScaledMarket.from_spec(spec, kappa)
    half = 0.5 * sm.eps
    quad = np.zeros((2, 2, 2, 2, 2))
    quad[0, 0, 0] = np.diag([sm.q[0], sm.q[1]])
    quad[0, 0, 1] = np.array([[0.0, half], [0.0, 0.0]])
    quad[0, 1, 0] = quad[0, 0, 1].T
    quad[1, 1, 1] = np.diag([sm.q[0], sm.q[1]])
    quad[1, 0, 1] = np.array([[0.0, half], [0.0, 0.0]])
    quad[1, 1, 0] = quad[1, 0, 1].T

    l = np.zeros((2, 2, 2))
    l[0, 0] = np.array([sm.l[0], 0.0])
    l[1, 1] = np.array([0.0, sm.l[1]])

    a_ctrl = np.stack([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    return GeneralModel(
        a0=np.diag(-sm.delta),
        a_ctrl=a_ctrl,
        c0=np.array([[-sm.p, 0.0], [0.0, -sm.p]]),
        l=l,
        quad=quad,
        eta=sm.eta.copy(),
        eta_p=sm.eta_p,
        lam=sm.k - sm.p,
        terminal_bonus=np.zeros(2),
        g=np.full((2, 2), -sm.h),
        vol_phi=sm.phi.copy(),
        vol_sigma=sm.sigma.copy(),
        vol_owner=np.array([0, 1]),
    )
