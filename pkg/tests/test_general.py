import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capreg import (
    DegenerateModelError,
    DomainError,
    TimeGrid,
    assemble_z_system,
    damped_picard,
    duopoly_embedding,
    monopoly_embedding,
    nash_drift_equilibrium,
    phi_star,
    sb_fixed_point_general,
    vol_best_response,
)
from capreg.core import ScaledMarket, w_principal_path
from capreg.errors import ConvergenceError
from capreg.general import agent_marginal_revenue, principal_marginal_revenue
from capreg.monopoly import mhat_monopoly, sb_payments_monopoly
from capreg.duopoly import sb_payments_competitive

from oracles import conjugate_oracle


def _risk_neutral(spec):
    agents = tuple(dataclasses.replace(a, risk_aversion=0.0) for a in spec.agents)
    return dataclasses.replace(spec, agents=agents)


class TestVolBestResponse:
    def test_reference_values(self):
        # b = (2 Phi / h)^(1/4) at gamma = -h, frozen by direct arithmetic
        assert vol_best_response(-6.25e6, 2000.0**4, 300.0) == pytest.approx(47.56828460010884, rel=1e-12)
        assert vol_best_response(-6.25e6, 5000.0**4, 750.0) == pytest.approx(118.9207115002721, rel=1e-12)

    def test_extreme_penalty_hits_floor(self):
        assert vol_best_response(-1e30, 2000.0**4, 300.0) == pytest.approx(0.3)

    def test_nonnegative_payment_returns_cap(self):
        assert vol_best_response(0.0, 2000.0**4, 300.0) == 300.0
        assert vol_best_response(5.0, 2000.0**4, 300.0) == 300.0

    def test_positive_scale_required(self):
        with pytest.raises(DomainError):
            vol_best_response(-1.0, 0.0, 300.0)

    @given(gamma=st.floats(min_value=-1e30, max_value=-1e-6),
           phi=st.floats(min_value=1e-3, max_value=1e20),
           sigma=st.floats(min_value=1e-2, max_value=1e4))
    @settings(max_examples=80, deadline=None)
    def test_band_and_monotonicity(self, gamma, phi, sigma):
        b = vol_best_response(gamma, phi, sigma)
        assert 1e-3 * sigma - 1e-12 <= b <= sigma + 1e-12
        harsher = vol_best_response(2.0 * gamma, phi, sigma)
        assert harsher <= b + 1e-12


class TestPhiStar:
    def test_interior_matches_golden_section(self):
        m, phi, sigma = -6.25e6, 2000.0**4, 300.0
        bstar, value = conjugate_oracle(m, phi, sigma)
        assert bstar == pytest.approx(1131.3708436005809, rel=1e-9)
        assert value == pytest.approx(-13964357845.953173, rel=1e-12)
        assert phi_star(m, phi, sigma) == pytest.approx(value, rel=1e-6)

    def test_nonnegative_payment_sits_at_cap(self):
        sigma = 300.0
        assert phi_star(2.5, 2000.0**4, sigma) == pytest.approx(0.5 * sigma**2 * 2.5, rel=1e-12)
        assert phi_star(0.0, 2000.0**4, sigma) == 0.0

    def test_probes_against_oracle(self):
        phi, sigma = 5000.0**4, 750.0
        for m in (-1e3, -1e6, -1e9, -1e12, -1e15):
            _, ref = conjugate_oracle(m, phi, sigma)
            assert phi_star(m, phi, sigma) == pytest.approx(ref, rel=1e-6)

    def test_decreasing_beyond_interior_band(self):
        phi, sigma = 2000.0**4, 300.0
        values = [phi_star(m, phi, sigma) for m in (-1e10, -1e12, -1e14)]
        assert values[0] > values[1] > values[2]

    def test_sup_property(self):
        # the transform dominates B m - cost(B) for any admissible B
        m, phi, sigma = -3.3e7, 2000.0**4, 300.0
        star = phi_star(m, phi, sigma)
        for big in np.linspace(0.5 * (0.3) ** 2, 0.5 * sigma**2, 57):
            assert star >= big * m - (0.5 / big - sigma**-2) * phi - 1e-6 * abs(star)


class TestNashEquilibrium:
    def test_monopoly_embedding_matches_closed_form(self, spec_m):
        model = monopoly_embedding(spec_m, kappa=1.0)
        z = np.array([[500.0, 700.0]])
        alpha = nash_drift_equilibrium(z, model)
        q_m = 1.0 * 2.0 - 0.25**2
        expected = np.array([
            (2.0 * (500.0 - 100.0) - 0.25 * (700.0 - 200.0)) / q_m,
            (1.0 * (700.0 - 200.0) - 0.25 * (500.0 - 100.0)) / q_m,
        ])
        assert alpha[0] == pytest.approx(expected, rel=1e-12)

    def test_duopoly_embedding_matches_closed_form(self, spec_c):
        model = duopoly_embedding(spec_c, kappa=1.0)
        z = np.array([[500.0, 0.0], [0.0, 700.0]])
        alpha = nash_drift_equilibrium(z, model)
        q_c = 2.0 - 0.25**2 / 4.0
        a1 = (2.0 * (500.0 - 100.0) - 0.125 * (700.0 - 200.0)) / q_c
        a2 = (1.0 * (700.0 - 200.0) - 0.125 * (500.0 - 100.0)) / q_c
        assert alpha[0, 0] == pytest.approx(a1, rel=1e-12)
        assert alpha[1, 1] == pytest.approx(a2, rel=1e-12)
        assert alpha[0, 1] == 0.0
        assert alpha[1, 0] == 0.0

    def test_marginal_cost_payment_gives_zero_effort(self, spec_m):
        spec = dataclasses.replace(spec_m, congestion=0.0)
        model = monopoly_embedding(spec, kappa=1.0)
        z = np.array([[100.0, 200.0]])      # equals the linear costs
        alpha = nash_drift_equilibrium(z, model)
        assert np.allclose(alpha, 0.0, atol=1e-12)

    def test_individual_foc_residual(self, spec_c):
        model = duopoly_embedding(spec_c, kappa=168.0)
        z = np.array([[6e4, 0.0], [0.0, 4e5]])
        alpha = nash_drift_equilibrium(z, model)
        # agent n: A_n' z^n = L^n_n + sum_j quad[n, n, j] alpha^j
        for agent in range(2):
            lhs = model.a_ctrl[agent].T @ z[agent]
            rhs = model.l[agent, agent].copy()
            for j in range(2):
                rhs += model.quad[agent, agent, j] @ alpha[j]
            assert np.abs(lhs - rhs).max() <= 1e-10 * (1.0 + np.abs(lhs).max())

    def test_singular_cost_rejected(self, spec_m):
        model = monopoly_embedding(spec_m, kappa=1.0)
        quad = model.quad.copy()
        quad[0, 0, 0] = np.array([[1.0, 2.0], [2.0, 4.0]])   # rank one
        broken = dataclasses.replace(model, quad=quad)
        with pytest.raises(DegenerateModelError):
            nash_drift_equilibrium(np.zeros((1, 2)), broken)


class TestZSystem:
    def test_monopoly_system_reproduces_closed_form(self, spec_m, grid_ref):
        model = monopoly_embedding(spec_m, kappa=grid_ref.kappa)
        sched = sb_payments_monopoly(grid_ref, spec_m)
        idx = 17
        gamma = np.zeros((1, 2, 2))
        gamma[0, 0, 0] = sched.gamma[idx, 0]
        gamma[0, 1, 1] = sched.gamma[idx, 1]
        system = assemble_z_system(gamma, model, sched.wp[idx])
        z = system.solve()
        err = np.abs(z[0] - sched.z[idx]) / (1.0 + np.abs(sched.z[idx]))
        assert err.max() <= 1e-9

    def test_duopoly_system_reproduces_closed_form(self, spec_c, grid_ref):
        model = duopoly_embedding(spec_c, kappa=grid_ref.kappa)
        sched = sb_payments_competitive(grid_ref, spec_c)
        idx = 100
        gamma = np.zeros((2, 2, 2))
        gamma[0, 0, 0] = sched.gamma[idx, 0]
        gamma[1, 1, 1] = sched.gamma[idx, 1]
        system = assemble_z_system(gamma, model, sched.wp[idx])
        z = system.solve().reshape(4)
        err = np.abs(z - sched.z[idx]) / (1.0 + np.abs(sched.z[idx]))
        assert err.max() <= 1e-9

    def test_risk_neutral_solution_is_shadow_price(self, spec_m, grid_coarse):
        model = monopoly_embedding(_risk_neutral(spec_m), kappa=grid_coarse.kappa)
        wp = w_principal_path(grid_coarse, spec_m)[0]
        gamma = model.project_gamma(np.full((2, 2), -1.05e9))
        z = assemble_z_system(gamma, model, wp).solve()
        assert np.abs(z[0] - wp).max() <= 1e-9 * (1.0 + np.abs(wp).max())


class TestFixedPoint:
    def test_risk_neutral_converges_immediately(self, spec_m, grid_coarse):
        model = monopoly_embedding(_risk_neutral(spec_m), kappa=grid_coarse.kappa)
        payments = sb_fixed_point_general(model, grid_coarse)
        assert payments.iterations <= 2
        err = np.abs(payments.z[:, 0, :] - payments.wp) / (1.0 + np.abs(payments.wp))
        assert err.max() <= 1e-9
        h_scaled = grid_coarse.kappa * spec_m.principal.vol_penalty
        assert np.abs(payments.gamma[:, 0, 0, 0] + h_scaled).max() <= 1e-9 * h_scaled

    def test_terminal_point(self, spec_m, grid_coarse):
        # the assembled constant offset cancels only to rounding, so the
        # general path's terminal payments are zero to ~1e-14 of a euro
        model = monopoly_embedding(spec_m, kappa=grid_coarse.kappa)
        payments = sb_fixed_point_general(model, grid_coarse)
        assert np.abs(payments.z[-1]).max() <= 1e-10
        h_scaled = grid_coarse.kappa * spec_m.principal.vol_penalty
        assert payments.gamma[-1, 0, 0, 0] == pytest.approx(-h_scaled, abs=1e-6)
        assert payments.gamma[-1, 0, 1, 1] == pytest.approx(-h_scaled, abs=1e-6)

    def test_matches_specialised_monopoly(self, spec_m, grid_coarse):
        model = monopoly_embedding(spec_m, kappa=grid_coarse.kappa)
        general = sb_fixed_point_general(model, grid_coarse)
        closed = sb_payments_monopoly(grid_coarse, spec_m)
        z_gen = general.z[:, 0, :]
        gam_gen = np.stack([general.gamma[:, 0, 0, 0], general.gamma[:, 0, 1, 1]], axis=1)
        assert np.abs(z_gen - closed.z).max() <= 1e-8 * (1.0 + np.abs(closed.z).max())
        assert np.abs(gam_gen - closed.gamma).max() <= 1e-8 * (1.0 + np.abs(closed.gamma).max())

    def test_matches_specialised_duopoly(self, spec_c, grid_coarse):
        model = duopoly_embedding(spec_c, kappa=grid_coarse.kappa)
        general = sb_fixed_point_general(model, grid_coarse)
        closed = sb_payments_competitive(grid_coarse, spec_c)
        z_gen = general.z.reshape(grid_coarse.n, 4)
        assert np.abs(z_gen - closed.z).max() <= 1e-8 * (1.0 + np.abs(closed.z).max())
        # no cross-channel volatility payments in the embedding
        assert np.abs(general.gamma[:, 0, 1, 1]).max() == 0.0
        assert np.abs(general.gamma[:, 1, 0, 0]).max() == 0.0
        assert np.abs(general.gamma[:, :, 0, 1]).max() == 0.0

    def test_nonconvergence_raises_with_residual(self):
        def solve_z(gamma):
            return gamma

        def gamma_target(z):
            return 1.0 - 2.0 * z      # fixed point exists but map has slope -2

        with pytest.raises(ConvergenceError) as err:
            damped_picard(solve_z, gamma_target, np.array([10.0]), theta=1.0, max_iter=3)
        assert err.value.residual > 0
        assert err.value.iterations == 3

    def test_damping_recovers_expanding_map(self):
        def solve_z(gamma):
            return gamma

        def gamma_target(z):
            return 1.0 - 1.8 * z

        z, gamma, res, _ = damped_picard(solve_z, gamma_target, np.array([10.0]), theta=0.9, tol=1e-11)
        assert res <= 1e-11
        assert gamma[0] == pytest.approx(1.0 / 2.8, rel=1e-8)

    def test_mhat_negative_at_fixed_point(self, spec_m, grid_coarse):
        sched = sb_payments_monopoly(grid_coarse, spec_m)
        sm = ScaledMarket.from_spec(spec_m, grid_coarse.kappa)
        mhat = mhat_monopoly(sched.z, sched.wp, sm)
        assert np.all(mhat < 0.0)

    def test_residual_sequence_nonincreasing_on_reference(self, spec_m, grid_coarse):
        # instrumented rerun of the reference iteration
        from capreg.core import scaled, w_principal_path
        from capreg.general import _vol_response_array
        from capreg.monopoly import _z_closed_form

        sm = scaled(spec_m, grid_coarse)
        w = w_principal_path(grid_coarse, spec_m)
        residuals = []

        gamma = mhat_monopoly(sm.eta_p / (sm.eta_p + sm.eta[0]) * w, w, sm)
        for _ in range(12):
            b = _vol_response_array(gamma, sm.phi, sm.sigma, 1e-3)
            z = _z_closed_form(w, b, sm)
            target = mhat_monopoly(z, w, sm)
            residuals.append(np.max(np.abs(gamma - target)) / (1.0 + np.max(np.abs(target))))
            gamma = gamma + 0.5 * (target - gamma)
        assert all(r2 <= r1 * (1 + 1e-12) for r1, r2 in zip(residuals, residuals[1:]))


class TestMarginalRevenuePaths:
    def test_agent_terminal_zero(self, spec_c, grid_coarse):
        model = duopoly_embedding(spec_c, kappa=grid_coarse.kappa)
        w = agent_marginal_revenue(model, grid_coarse)
        assert np.array_equal(w[:, -1, :], np.zeros((2, 2)))

    def test_principal_terminal_bonus(self, spec_c, grid_coarse):
        model = duopoly_embedding(spec_c, kappa=grid_coarse.kappa)
        model = dataclasses.replace(model, terminal_bonus=np.array([5.0, -3.0]))
        w = principal_marginal_revenue(model, grid_coarse)
        assert np.array_equal(w[-1], np.array([5.0, -3.0]))
