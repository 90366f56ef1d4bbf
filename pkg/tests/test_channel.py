import numpy as np
import pytest

import powertalk as pt
from conftest import random_connected_config, single_bus_config


def finite_difference_gain(cfg, droop):
    """Central-difference oracle on the full nonlinear solve."""
    base = pt.solve_steady_state(cfg, droop)
    refs = droop.reference_voltages
    out = np.zeros((cfg.num_buses, cfg.num_ders))
    for u in range(cfg.num_ders):
        eps = 1e-4 * refs[u]
        up, dn = refs.copy(), refs.copy()
        up[u] += eps
        dn[u] -= eps
        v_up = pt.solve_steady_state(cfg, droop.replace_references(up)).bus_voltages
        v_dn = pt.solve_steady_state(cfg, droop.replace_references(dn)).bus_voltages
        out[:, u] = (v_up - v_dn) / (2 * eps)
    return base, out


class TestLinearize:
    def test_lossless_follower(self):
        cfg, droop = single_bus_config()
        chan = pt.linearize(cfg, pt.solve_steady_state(cfg, droop))
        assert chan.voltage_gain == pytest.approx(np.array([[1.0]]))
        assert chan.cpl_factor[0] == pytest.approx(1.0)

    def test_two_ders_with_admittance_load(self):
        # two 1 S DERs against a 1 S constant-admittance load: gains 1/3
        cfg, droop = single_bus_config(num_ders=2, d_ca=160000.0)
        chan = pt.linearize(cfg, pt.solve_steady_state(cfg, droop))
        assert chan.voltage_gain == pytest.approx(np.full((1, 2), 1 / 3), rel=1e-12)

    def test_matches_finite_differences(self, baseline):
        cfg, droop = baseline.microgrid, baseline.droop
        op, fd = finite_difference_gain(cfg, droop)
        chan = pt.linearize(cfg, op)
        assert chan.voltage_gain == pytest.approx(fd, abs=1e-8)

    def test_matches_finite_differences_random(self):
        rng = np.random.default_rng(10)
        for _ in range(8):
            cfg, droop = random_connected_config(rng)
            op, fd = finite_difference_gain(cfg, droop)
            chan = pt.linearize(cfg, op)
            assert chan.voltage_gain == pytest.approx(fd, abs=1e-6)
            assert (chan.voltage_gain > 0).all()
            assert (chan.cpl_factor >= 1.0 - 1e-12).all()

    def test_quadratic_error_decay(self, baseline):
        cfg, droop = baseline.microgrid, baseline.droop
        op = pt.solve_steady_state(cfg, droop)
        chan = pt.linearize(cfg, op)
        pattern = 2.0 * np.ones(cfg.num_ders)    # 0.5% of the 400 V reference
        errors = []
        for scale in (1.0, 0.5, 0.25, 0.125):
            dx = scale * pattern
            moved = droop.replace_references(droop.reference_voltages + dx)
            v = pt.solve_steady_state(cfg, moved).bus_voltages
            errors.append(np.linalg.norm(v - op.bus_voltages - chan.voltage_gain @ dx))
        for big, small in zip(errors, errors[1:]):
            assert 3.0 <= big / small <= 5.0

    def test_singular_at_maximum_power_point(self):
        # d_cp at exactly the deliverable limit x^2/4: the voltage Jacobian
        # vanishes and no linear channel exists
        cfg, droop = single_bus_config(d_cp=40000.0)
        op = pt.solve_steady_state(cfg, droop)
        assert op.bus_voltages[0] == pytest.approx(200.0)
        with pytest.raises(pt.SingularJacobian):
            pt.linearize(cfg, op)

    def test_rejects_inconsistent_operating_point(self, baseline):
        cfg, droop = baseline.microgrid, baseline.droop
        op = pt.solve_steady_state(cfg, droop)
        bad = pt.OperatingPoint(droop=op.droop,
                                bus_voltages=op.bus_voltages + 5.0,
                                der_currents=op.der_currents,
                                der_powers=op.der_powers, der_buses=op.der_buses)
        with pytest.raises(pt.ValidationError):
            pt.linearize(cfg, bad)


class TestNoise:
    def test_sigma_formula(self):
        noise = pt.NoiseModel(0.01, 50000.0, 0.1)
        assert noise.samples_per_slot == 5000
        assert pt.slot_noise_sigma(noise) == pytest.approx(1.4142135623730952e-3)
        assert noise.sigma**2 * noise.samples_per_slot == pytest.approx(0.01, rel=1e-12)

    def test_noiseless(self):
        assert pt.slot_noise_sigma(pt.NoiseModel(0.0, 50000.0, 0.1)) == 0.0

    def test_averaging_law(self):
        short = pt.NoiseModel(0.01, 50000.0, 0.1)
        long = pt.NoiseModel(0.01, 50000.0, 0.2)
        assert long.sigma**2 == pytest.approx(short.sigma**2 / 2, rel=1e-12)

    def test_sub_sample_slot_rejected(self):
        with pytest.raises(pt.ValidationError):
            pt.NoiseModel(0.01, 50000.0, 1e-6)


class TestObserveSlot:
    def test_zero_input_noiseless(self, baseline_channel):
        _, chan = baseline_channel
        noise = pt.NoiseModel(0.0, 50000.0, 0.1)
        rng = np.random.default_rng(0)
        out = pt.observe_slot(chan, noise, np.zeros(chan.num_ders), rng)
        assert np.array_equal(out, np.zeros(chan.num_ders))

    def test_antipodal_cancellation(self):
        cfg, droop = single_bus_config(num_ders=2)
        chan = pt.linearize(cfg, pt.solve_steady_state(cfg, droop))
        noise = pt.NoiseModel(0.0, 50000.0, 0.1)
        lam = 0.5
        out = pt.observe_slot(chan, noise, np.array([lam, -lam]),
                              np.random.default_rng(0))
        assert out == pytest.approx(np.zeros(2), abs=1e-15)

    def test_mean_converges_to_noiseless(self, baseline_channel):
        _, chan = baseline_channel
        noise = pt.NoiseModel(0.01, 50000.0, 0.1)
        dx = np.full(chan.num_ders, 0.05)
        clean = pt.observe_slot(chan, pt.NoiseModel(0.0, 50000.0, 0.1), dx,
                                np.random.default_rng(0))
        rng = np.random.default_rng(123)
        n = 10**5
        total = np.zeros(chan.num_ders)
        for _ in range(n):
            total += pt.observe_slot(chan, noise, dx, rng)
        bound = 4 * noise.sigma / np.sqrt(n)
        assert np.abs(total / n - clean).max() < bound

    def test_superposition_noiseless(self, baseline_channel):
        _, chan = baseline_channel
        noise = pt.NoiseModel(0.0, 50000.0, 0.1)
        rng = np.random.default_rng(0)
        gen = np.random.default_rng(7)
        a = gen.uniform(-0.5, 0.5, chan.num_ders)
        b = gen.uniform(-0.5, 0.5, chan.num_ders)
        out_sum = pt.observe_slot(chan, noise, a + b, rng)
        out_a = pt.observe_slot(chan, noise, a, rng)
        out_b = pt.observe_slot(chan, noise, b, rng)
        assert np.abs(out_sum - out_a - out_b).max() < 1e-12

    def test_amplitude_guard(self, baseline_channel):
        _, chan = baseline_channel
        noise = pt.NoiseModel(0.0, 50000.0, 0.1)
        dx = np.zeros(chan.num_ders)
        dx[3] = 4.5    # > 1% of 400 V
        with pytest.raises(pt.AmplitudeTooLarge):
            pt.observe_slot(chan, noise, dx, np.random.default_rng(0))


class TestPowerDeviation:
    def test_zero_input(self, baseline_channel):
        _, chan = baseline_channel
        assert pt.power_deviation(chan, np.zeros(chan.num_ders), 0) == 0.0

    def test_first_order_error_decays_quadratically(self, baseline):
        cfg, droop = baseline.microgrid, baseline.droop
        op = pt.solve_steady_state(cfg, droop)
        chan = pt.linearize(cfg, op)
        gen = np.random.default_rng(5)
        pattern = gen.uniform(0.5, 1.0, cfg.num_ders)   # volts, unbalanced
        errors = []
        for scale in (1.0, 0.5, 0.25):
            dx = scale * pattern
            moved = droop.replace_references(droop.reference_voltages + dx)
            exact = pt.solve_steady_state(cfg, moved).der_powers - op.der_powers
            approx = np.array([pt.power_deviation(chan, dx, u)
                               for u in range(cfg.num_ders)])
            errors.append(np.abs(exact - approx).max())
        assert errors[0] / errors[1] == pytest.approx(4.0, abs=1.0)
        assert errors[1] / errors[2] == pytest.approx(4.0, abs=1.0)

    def test_antipodal_pair_symmetric(self):
        cfg, droop = single_bus_config(num_ders=2, yva=10.0, d_cp=3000.0)
        chan = pt.linearize(cfg, pt.solve_steady_state(cfg, droop))
        lam = 0.05
        dp0 = pt.power_deviation(chan, np.array([lam, -lam]), 0)
        dp1 = pt.power_deviation(chan, np.array([lam, -lam]), 1)
        assert dp0 == pytest.approx(-dp1, rel=1e-9)
        assert dp0 > 0


class TestLambdaBudget:
    def test_single_transmitter_closed_form(self):
        # a voltage-dependent load makes the lone DER's power react
        cfg, droop = single_bus_config(d_ca=16000.0)
        chan = pt.linearize(cfg, pt.solve_steady_state(cfg, droop))
        phi = chan.power_sensitivity[0, 0]
        assert phi != 0.0
        budget = pt.lambda_budget(chan, np.array([1]), 10.0)
        assert budget == pytest.approx(10.0 / abs(phi), rel=1e-12)

    def test_single_transmitter_pinned_sensitivity(self, baseline_channel):
        # sensitivity of 2 W/V and a lone transmitter: budget/2 exactly
        _, chan = baseline_channel
        from dataclasses import replace
        sens = np.zeros_like(chan.power_sensitivity)
        sens[0, 0] = 2.0
        pinned = replace(chan, power_sensitivity=sens)
        active = np.zeros(chan.num_ders, dtype=int)
        active[0] = 1
        assert pt.lambda_budget(pinned, active, 10.0) == pytest.approx(5.0)

    def test_unconstrained_when_power_insensitive(self):
        cfg, droop = single_bus_config()   # unloaded: zero power sensitivity
        chan = pt.linearize(cfg, pt.solve_steady_state(cfg, droop))
        assert pt.lambda_budget(chan, np.array([1]), 10.0) == np.inf

    def test_linear_in_budget(self, baseline_channel):
        _, chan = baseline_channel
        active = np.zeros(chan.num_ders, dtype=int)
        active[:3] = 1
        one = pt.lambda_budget(chan, active, 100.0)
        two = pt.lambda_budget(chan, active, 200.0)
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_brute_force_enumeration(self, baseline, baseline_channel):
        _, chan = baseline_channel
        grid = baseline.microgrid
        pi = baseline.protocol.power_budget
        for g in range(grid.num_types):
            active = grid.type_assignment[g]
            counts = np.bincount(chan.der_buses[np.flatnonzero(active)],
                                 minlength=grid.num_buses)
            best = np.inf
            for u in range(grid.num_ders):
                denom = sum(chan.power_sensitivity[u, m]**2 * counts[m]
                            for m in range(grid.num_buses))
                if denom > 0:
                    best = min(best, pi / np.sqrt(denom))
            assert pt.lambda_budget(chan, active, pi) == pytest.approx(best, rel=1e-12)

    def test_empirical_variance_within_budget(self, baseline, baseline_channel):
        op, chan = baseline_channel
        grid, droop = baseline.microgrid, baseline.droop
        pi = baseline.protocol.power_budget
        lam = min(pt.lambda_budget(chan, grid.type_assignment[g], pi)
                  for g in range(grid.num_types))
        rng = np.random.default_rng(21)
        for g in range(grid.num_types):
            members = grid.group_members(g)
            samples = np.empty((600, grid.num_ders))
            for i in range(samples.shape[0]):
                dx = np.zeros(grid.num_ders)
                dx[members] = lam * (2.0 * rng.integers(0, 2, members.size) - 1.0)
                moved = droop.replace_references(droop.reference_voltages + dx)
                samples[i] = pt.solve_steady_state(grid, moved).der_powers \
                    - op.der_powers
            assert samples.var(axis=0, ddof=1).max() <= 1.05 * pi**2

    def test_requires_active_transmitter(self, baseline_channel):
        _, chan = baseline_channel
        with pytest.raises(pt.ValidationError):
            pt.lambda_budget(chan, np.zeros(chan.num_ders, dtype=int), 100.0)
