import dataclasses

import numpy as np
import pytest

from capreg import DomainError, TimeGrid
from capreg.contracts import ControlSchedule
from capreg.core import scaled, trapezoid
from capreg.duopoly import contract_prices_competitive, fb_payments_competitive, sb_controls_competitive
from capreg.monopoly import (
    contract_prices_monopoly,
    sb_controls_monopoly,
    sb_payments_monopoly,
)
from capreg.simulate import (
    contract_value_summary,
    evaluate_contract,
    mean_path_ode,
    scenario_metrics,
    simulate_paths,
)

from oracles import ou_exact_moments


def _constant_schedule(grid, a, b):
    ones = np.ones((grid.n, 2))
    return ControlSchedule(grid=grid, a=ones * np.asarray(a), b=ones * np.asarray(b), label="test")


def _risk_neutral(spec):
    agents = tuple(dataclasses.replace(s, risk_aversion=0.0) for s in spec.agents)
    return dataclasses.replace(spec, agents=agents)


class TestPaths:
    def test_frozen_state_without_noise_or_drift(self):
        grid = TimeGrid.from_dt(2.0, 0.25)
        sched = _constant_schedule(grid, (0.0, 0.0), (0.0, 0.0))
        bundle = simulate_paths(sched, (5.0, 7.0), (0.0, 0.0), n_paths=3, seed=1)
        assert np.all(bundle.x == np.array([5.0, 7.0]))

    def test_deterministic_drift_integral(self):
        grid = TimeGrid.from_dt(10.0, 1.0 / 52.0)
        sched = _constant_schedule(grid, (30.0, -10.0), (0.0, 0.0))
        bundle = simulate_paths(sched, (100.0, 200.0), (0.0, 0.0), n_paths=2, seed=1)
        assert bundle.x[0, -1, 0] == pytest.approx(100.0 + 30.0 * 10.0, rel=1e-12)
        assert bundle.x[0, -1, 1] == pytest.approx(200.0 - 10.0 * 10.0, rel=1e-12)

    def test_initial_condition_every_path(self, spec_m, grid_coarse):
        sched = _constant_schedule(grid_coarse, (10.0, 10.0), (50.0, 80.0))
        bundle = simulate_paths(sched, spec_m.x0, (0.0, 0.0), n_paths=11, seed=3)
        assert np.all(bundle.x[:, 0, :] == np.array(spec_m.x0))

    def test_ou_moments_match_exact(self):
        grid = TimeGrid.from_dt(10.0, 1.0 / 52.0)
        a, b, delta, x0 = (200.0, 80.0), (120.0, 60.0), (0.2, 0.5), (4000.0, 1000.0)
        sched = _constant_schedule(grid, a, b)
        bundle = simulate_paths(sched, x0, delta, n_paths=20000, seed=5, substeps=4,
                                store_shocks=False)
        for j in range(2):
            mean, var = ou_exact_moments(x0[j], a[j], b[j], delta[j], 10.0)
            xt = bundle.x[:, -1, j]
            mean_se = xt.std(ddof=1) / np.sqrt(len(xt))
            assert abs(xt.mean() - mean) <= 3.0 * mean_se
            var_se = xt.var(ddof=1) * np.sqrt(2.0 / (len(xt) - 1))
            assert abs(xt.var(ddof=1) - var) <= 3.0 * var_se

    def test_chunked_equals_monolithic(self, grid_coarse):
        sched = _constant_schedule(grid_coarse, (25.0, 10.0), (40.0, 90.0))
        whole = simulate_paths(sched, (0.0, 0.0), (0.1, 0.0), n_paths=64, seed=9)
        first = simulate_paths(sched, (0.0, 0.0), (0.1, 0.0), n_paths=40, seed=9)
        rest = simulate_paths(sched, (0.0, 0.0), (0.1, 0.0), n_paths=24, seed=9, first_path=40)
        assert np.array_equal(whole.x, np.concatenate([first.x, rest.x], axis=0))
        assert np.array_equal(whole.shocks, np.concatenate([first.shocks, rest.shocks], axis=0))

    def test_same_seed_bit_identical(self, grid_coarse):
        sched = _constant_schedule(grid_coarse, (25.0, 10.0), (40.0, 90.0))
        one = simulate_paths(sched, (0.0, 0.0), (0.0, 0.0), n_paths=16, seed=13)
        two = simulate_paths(sched, (0.0, 0.0), (0.0, 0.0), n_paths=16, seed=13)
        assert np.array_equal(one.x, two.x)

    def test_mean_matches_deterministic_ode(self, spec_m, grid_ref):
        sched = sb_controls_monopoly(sb_payments_monopoly(grid_ref, spec_m), spec_m)
        bundle = simulate_paths(sched, spec_m.x0, (0.0, 0.0), n_paths=4000, seed=7)
        ode = mean_path_ode(sched, spec_m.x0, (0.0, 0.0))
        mc_mean = bundle.x.mean(axis=0)
        mc_se = bundle.x.std(axis=0, ddof=1) / np.sqrt(bundle.n_paths)
        inside = np.abs(mc_mean - ode) <= 3.0 * mc_se + 1e-9
        assert inside.mean() > 0.995

    def test_path_count_required(self, grid_coarse):
        sched = _constant_schedule(grid_coarse, (0.0, 0.0), (1.0, 1.0))
        with pytest.raises(DomainError):
            simulate_paths(sched, (0.0, 0.0), (0.0, 0.0), n_paths=0)


class TestMetrics:
    def test_equal_capacities_share_half(self):
        grid = TimeGrid.from_dt(1.0, 0.25)
        sched = _constant_schedule(grid, (0.0, 0.0), (0.0, 0.0))
        bundle = simulate_paths(sched, (30.0, 30.0), (0.0, 0.0), n_paths=1, seed=1)
        result = scenario_metrics(bundle)
        assert np.all(result.share_mean == 0.5)
        assert result.negative_capacity_paths == 0

    def test_negative_paths_flagged(self):
        grid = TimeGrid.from_dt(1.0, 0.5)
        sched = _constant_schedule(grid, (-10.0, 0.0), (0.0, 0.0))
        bundle = simulate_paths(sched, (5.0, 5.0), (0.0, 0.0), n_paths=2, seed=1)
        assert scenario_metrics(bundle).negative_capacity_paths == 2

    def test_smoothing_under_volatility_incentives(self, spec_m, grid_ref):
        # realised quadratic variation is strictly smaller with volatility
        # control than without, channel by channel
        dvc = sb_controls_monopoly(sb_payments_monopoly(grid_ref, spec_m), spec_m)
        dc = sb_controls_monopoly(sb_payments_monopoly(grid_ref, spec_m, vol_control=False), spec_m)
        qv_dvc = dvc.b[:-1] ** 2 * grid_ref.dt
        qv_dc = dc.b[:-1] ** 2 * grid_ref.dt
        assert np.all(qv_dvc.mean(axis=0) < qv_dc.mean(axis=0))


class TestContractEvaluation:
    def test_frozen_path_pays_fixed_part(self, spec_m, grid_ref):
        sched = sb_payments_monopoly(grid_ref, spec_m)
        prices = contract_prices_monopoly(sched, spec_m)
        frozen = _constant_schedule(grid_ref, (0.0, 0.0), (0.0, 0.0))
        bundle = simulate_paths(frozen, spec_m.x0, (0.0, 0.0), n_paths=2, seed=1)
        values = evaluate_contract(bundle, prices)
        assert np.all(values == prices.firms[0].fixed)

    def test_grid_mismatch_rejected(self, spec_m, grid_ref, grid_coarse):
        sched = sb_payments_monopoly(grid_ref, spec_m)
        prices = contract_prices_monopoly(sched, spec_m)
        other = _constant_schedule(grid_coarse, (0.0, 0.0), (0.0, 0.0))
        bundle = simulate_paths(other, spec_m.x0, (0.0, 0.0), n_paths=1, seed=1)
        with pytest.raises(DomainError):
            evaluate_contract(bundle, prices)

    def test_risk_neutral_rewritten_form(self, spec_m, grid_ref):
        # independent evaluation of the contract in its externality-value
        # form: pay the externality on deviations, claw back the power price,
        # reimburse effort costs, net out the drift surplus, tax variance
        spec0 = _risk_neutral(spec_m)
        sched = sb_payments_monopoly(grid_ref, spec0)
        prices = contract_prices_monopoly(sched, spec0)
        controls = sb_controls_monopoly(sched, spec0)
        bundle = simulate_paths(controls, spec0.x0, (0.0, 0.0), n_paths=32, seed=21)
        values = evaluate_contract(bundle, prices)[:, 0]

        sm = scaled(spec0, grid_ref)
        dt = grid_ref.dt
        dev = bundle.x - bundle.x[:, :1, :]
        left = lambda arr: np.sum(arr[:, :-1], axis=1) * dt  # noqa: E731
        ext = left(dev @ sm.k)
        price_back = trapezoid(np.full(grid_ref.n, sm.p * sm.x0.sum()), grid_ref) + left(
            sm.p * dev.sum(axis=2)
        )
        costs = trapezoid(
            np.sum(sm.drift_cost(controls.a) + sm.vol_cost(controls.b), axis=1), grid_ref
        )
        surplus = trapezoid(
            np.sum(sched.z * controls.a + 0.5 * controls.b**2 * sched.gamma, axis=1), grid_ref
        )
        qv_tax = 0.5 * sm.h * np.sum(bundle.qv_schedule, axis=(0, 1))
        alg = ext - price_back + costs - surplus - qv_tax
        assert np.abs(values - alg).max() <= 1e-10 * (1.0 + np.abs(values).max())

    def test_monopoly_contract_splits_across_firms(self, spec_m, spec_c, grid_ref):
        # no congestion, risk-neutral firms, matched reservations: the two
        # competitive contracts sum to the monopoly contract pathwise
        spec_m0 = _risk_neutral(dataclasses.replace(spec_m, congestion=0.0))
        spec_c0 = _risk_neutral(dataclasses.replace(spec_c, congestion=0.0))
        sched_m = sb_payments_monopoly(grid_ref, spec_m0)
        prices_m = contract_prices_monopoly(sched_m, spec_m0)
        sched_c = fb_payments_competitive(grid_ref, spec_c0)
        prices_c = contract_prices_competitive(sched_c, spec_c0)

        controls = sb_controls_monopoly(sched_m, spec_m0)
        bundle = simulate_paths(controls, spec_m0.x0, (0.0, 0.0), n_paths=16, seed=31)
        xi_m = evaluate_contract(bundle, prices_m)[:, 0]
        xi_c = evaluate_contract(bundle, prices_c).sum(axis=1)
        assert np.abs(xi_m - xi_c).max() <= 1e-10 * (1.0 + np.abs(xi_m).max())

    def test_streamed_accumulation_matches_vector_sum(self, spec_m, grid_ref):
        sched = sb_payments_monopoly(grid_ref, spec_m)
        prices = contract_prices_monopoly(sched, spec_m)
        controls = sb_controls_monopoly(sched, spec_m)
        bundle = simulate_paths(controls, spec_m.x0, (0.0, 0.0), n_paths=3, seed=17)
        vec = evaluate_contract(bundle, prices)[:, 0]

        firm = prices.firms[0]
        dt = grid_ref.dt
        for p in range(bundle.n_paths):
            total = firm.fixed
            for k in range(grid_ref.steps):
                dev = bundle.x[p, k] - bundle.x[p, 0]
                total += float(dev @ firm.pi_drift[k]) * dt
                total += 0.5 * float(bundle.qv_schedule[k] @ firm.pi_vol[k])
            total += float((bundle.x[p, -1] - bundle.x[p, 0]) @ firm.terminal_bonus)
            assert abs(total - vec[p]) <= 1e-10 * (1.0 + abs(vec[p]))

    def test_realized_qv_mode(self, spec_m, grid_ref):
        sched = sb_payments_monopoly(grid_ref, spec_m)
        prices = contract_prices_monopoly(sched, spec_m)
        controls = sb_controls_monopoly(sched, spec_m)
        bundle = simulate_paths(controls, spec_m.x0, (0.0, 0.0), n_paths=200, seed=23)
        by_schedule = evaluate_contract(bundle, prices)[:, 0]
        realized = evaluate_contract(bundle, prices, qv_mode="realized")[:, 0]
        # squared increments are an unbiased but noisier variance estimate:
        # the paired difference is centred and the dispersion strictly larger
        diff = by_schedule - realized
        diff_se = diff.std(ddof=1) / np.sqrt(len(diff))
        assert abs(diff.mean()) <= 4.0 * diff_se
        assert realized.std(ddof=1) > by_schedule.std(ddof=1)

    def test_summary_shape(self, spec_m, grid_coarse):
        sched = sb_payments_monopoly(grid_coarse, spec_m)
        prices = contract_prices_monopoly(sched, spec_m)
        controls = sb_controls_monopoly(sched, spec_m)
        bundle = simulate_paths(controls, spec_m.x0, (0.0, 0.0), n_paths=8, seed=2)
        summary = contract_value_summary(evaluate_contract(bundle, prices))
        assert set(summary) == {"contract_value_mean", "contract_value_se", "contract_values_by_firm"}
        assert len(summary["contract_values_by_firm"]) == 1
