import math

import numpy as np
import pytest

import powertalk as pt
from powertalk.experiments import render_table, trace_table
from conftest import single_bus_config


def run_baseline_period(sc, seed=0, noise=None, capacities=None, plan=None):
    rng = np.random.default_rng(pt.trial_seed(seed, 0))
    w = sc.capacity_sampler()(rng) if capacities is None else capacities
    return pt.run_period(sc.microgrid, sc.protocol,
                         sc.noise if noise is None else noise,
                         sc.droop, w, sc.demand, rng, plan=plan,
                         deficit_cost=sc.deficit_cost,
                         surplus_cost=sc.surplus_cost)


class TestRunPeriod:
    def test_single_der_single_type(self):
        cfg, droop = single_bus_config(num_ders=1, yva=10.0, d_cp=500.0)
        protocol = pt.ProtocolConfig(bits_per_word=6, period_seconds=300.0,
                                     slot_seconds=0.1, num_types=1,
                                     max_capacity=2000.0, power_budget=200.0,
                                     amplitude=0.01)
        noise = pt.NoiseModel(0.01, 50000.0, 0.1)
        trace = pt.run_period(cfg, protocol, noise, droop, np.array([1500.0]),
                              1000.0, np.random.default_rng(0))
        # no peers: own quantized word is the whole aggregate
        assert trace.believed[0, 0] == trace.quantized[0]
        assert trace.outcome.policy[0] == pytest.approx(
            1500.0 * 1000.0 / trace.quantized[0])

    def test_noiseless_aggregates_exact(self, baseline):
        noiseless = pt.NoiseModel(0.0, 50000.0, 0.1)
        for seed in range(5):
            trace = run_baseline_period(baseline, seed=seed, noise=noiseless)
            assert trace.detection_errors == 0
            grid = baseline.microgrid
            for est in trace.estimates:
                members = grid.group_members(est.subphase)
                others = members[members != est.receiver]
                expected = trace.quantized[others].sum()
                assert est.aggregate == pytest.approx(expected, abs=1e-9)

    def test_trace_shape_and_knowledge_coverage(self, baseline):
        trace = run_baseline_period(baseline, seed=1)
        grid, protocol = baseline.microgrid, baseline.protocol
        assert trace.tx_bits.shape[0] == grid.num_types * protocol.bits_per_word
        heard = {(est.receiver, est.subphase) for est in trace.estimates}
        for u, g in enumerate(grid.type_of_der):
            # estimates for exactly the sub-phases 0..own type
            assert {s for r, s in heard if r == u} == set(range(g + 1))
            assert np.isfinite(trace.believed[u, :g + 1]).all()
            assert np.isnan(trace.believed[u, g + 1:]).all()
        # imbalance settles one-sided
        assert trace.outcome.deficit == 0.0 or trace.outcome.surplus == 0.0

    def test_noiseless_policies_approach_optimum_with_bits(self, baseline):
        noiseless = pt.NoiseModel(0.0, 50000.0, 0.1)
        sc = baseline
        rng = np.random.default_rng(pt.trial_seed(3, 0))
        w = sc.capacity_sampler()(rng)
        central = pt.oracle_centralized(w, sc.microgrid.incremental_costs,
                                        sc.microgrid.type_assignment, sc.demand)
        optimal_cost = pt.base_cost(central, sc.microgrid.type_assignment,
                                    sc.microgrid.incremental_costs)
        gaps = []
        for bits in (4, 8, 12, 16):
            protocol = sc.protocol_for(bits=bits)
            trace = pt.run_period(sc.microgrid, protocol, noiseless, sc.droop,
                                  w, sc.demand, np.random.default_rng(1))
            gaps.append(abs(trace.outcome.omega - optimal_cost) / optimal_cost)
        assert gaps[-1] < 1e-3
        assert gaps[-1] <= gaps[0]

    def test_deterministic_trace(self, baseline):
        a = run_baseline_period(baseline, seed=42)
        b = run_baseline_period(baseline, seed=42)
        assert np.array_equal(a.observations, b.observations)
        assert np.array_equal(a.bit_sum_hat, b.bit_sum_hat)
        assert a.outcome.period_cost == b.outcome.period_cost
        assert render_table(trace_table(a)) == render_table(trace_table(b))

    def test_information_causality(self, baseline):
        # perturbing a later sub-phase's word must not move earlier types
        sc = baseline
        rng = np.random.default_rng(pt.trial_seed(7, 0))
        w = sc.capacity_sampler()(rng)
        base = run_baseline_period(sc, seed=11, capacities=w)
        w2 = w.copy()
        w2[9] = w2[9] / 2 + 13.0   # type-3 DER transmits only in sub-phase 3
        bumped = run_baseline_period(sc, seed=11, capacities=w2)
        types = sc.microgrid.type_of_der
        earlier = types < 3
        assert np.array_equal(base.outcome.policy[earlier],
                              bumped.outcome.policy[earlier])
        assert np.array_equal(base.believed[earlier], bumped.believed[earlier],
                              equal_nan=True)
        # the perturbed word does land where it is legitimately heard
        assert bumped.quantized[9] != base.quantized[9]
        assert bumped.believed[9, 3] != base.believed[9, 3]

    def test_overhead_identity(self, baseline):
        sc = baseline
        trace = run_baseline_period(sc, seed=5)
        p = sc.protocol
        fraction = p.slot_seconds / p.period_seconds * p.bits_per_word * p.num_types
        der_costs = sc.microgrid.incremental_costs[sc.microgrid.type_of_der]
        correction = fraction * (der_costs @ (trace.baseline_powers
                                              - trace.outcome.policy)
                                 - trace.outcome.penalty)
        assert trace.outcome.period_cost == pytest.approx(
            trace.outcome.omega + correction, rel=1e-12)

    def test_amplitude_above_budget_rejected(self, baseline):
        sc = baseline
        protocol = pt.ProtocolConfig(
            bits_per_word=10, period_seconds=300.0, slot_seconds=0.1,
            num_types=4, max_capacity=2000.0, power_budget=200.0,
            amplitude=1.0)   # far beyond the ~0.032 V budget
        with pytest.raises(pt.ValidationError, match="budget"):
            pt.prepare_period(sc.microgrid, protocol, sc.noise, sc.droop)

    def test_plan_reuse_matches_fresh_run(self, baseline):
        sc = baseline
        plan = pt.prepare_period(sc.microgrid, sc.protocol, sc.noise, sc.droop)
        a = run_baseline_period(sc, seed=9)
        b = run_baseline_period(sc, seed=9, plan=plan)
        assert a.outcome.period_cost == b.outcome.period_cost


class TestMonteCarlo:
    def test_single_trial_reproduces_run_period(self, baseline):
        sc = baseline
        result = pt.monte_carlo(sc.microgrid, sc.protocol, sc.noise, sc.droop,
                                sc.demand, sc.capacity_sampler(), trials=1,
                                seed=123, deficit_cost=sc.deficit_cost,
                                surplus_cost=sc.surplus_cost)
        trace = run_baseline_period(sc, seed=123)
        assert result.mean_cost == trace.outcome.period_cost
        assert result.error_rate == pytest.approx(
            trace.detection_errors / trace.detection_decisions)

    def test_ci_shrinks_with_trials(self, baseline):
        sc = baseline
        kwargs = dict(deficit_cost=sc.deficit_cost, surplus_cost=sc.surplus_cost)
        small = pt.monte_carlo(sc.microgrid, sc.protocol, sc.noise, sc.droop,
                               sc.demand, sc.capacity_sampler(), 100, 5, **kwargs)
        big = pt.monte_carlo(sc.microgrid, sc.protocol, sc.noise, sc.droop,
                             sc.demand, sc.capacity_sampler(), 400, 5, **kwargs)
        ratio = small.cost_ci95 / big.cost_ci95
        assert 1.3 < ratio < 3.2   # ~2 expected for a 4x trial increase

    def test_order_insensitive_aggregation(self, baseline):
        sc = baseline
        trials = 40
        costs = []
        errors = decisions = 0
        order = np.random.default_rng(0).permutation(trials)
        for i in order:
            rng = np.random.default_rng(pt.trial_seed(77, int(i)))
            w = sc.capacity_sampler()(rng)
            t = pt.run_period(sc.microgrid, sc.protocol, sc.noise, sc.droop,
                              w, sc.demand, rng, deficit_cost=sc.deficit_cost,
                              surplus_cost=sc.surplus_cost)
            costs.append(t.outcome.period_cost)
            errors += t.detection_errors
            decisions += t.detection_decisions
        shuffled_mean = math.fsum(costs) / trials
        result = pt.monte_carlo(sc.microgrid, sc.protocol, sc.noise, sc.droop,
                                sc.demand, sc.capacity_sampler(), trials, 77,
                                deficit_cost=sc.deficit_cost,
                                surplus_cost=sc.surplus_cost)
        assert result.mean_cost == shuffled_mean
        assert result.error_rate == errors / decisions

    def test_two_transmitter_error_rate_matches_gaussian_tails(self, baseline):
        # 3-level constellation: exact MAP thresholds give a closed form
        sc = baseline
        tbl = pt.experiment_detection(sc, budgets=[120.0], group_sizes=[2],
                                      trials=20000, seed=99)
        (_, _, trials, errors, p_mc, _), = tbl.rows

        grid = sc.microgrid
        op = pt.solve_steady_state(grid, sc.droop)
        chan = pt.linearize(grid, op)
        active = np.zeros(grid.num_ders, dtype=int)
        active[grid.group_members(0)[:2]] = 1
        lam = pt.lambda_budget(chan, active, 120.0)
        gain = chan.voltage_gain[0, 0]
        sigma = sc.noise.sigma
        a = lam * gain

        def q(x):
            return 0.5 * math.erfc(x / math.sqrt(2))

        crossing = a + sigma**2 * math.log(2) / (2 * a)
        p_exact = 0.5 * q((2 * a - crossing) / sigma) + q(crossing / sigma)
        threshold = 3 * math.sqrt(p_exact * (1 - p_exact) / trials)
        assert abs(p_mc - p_exact) < threshold
