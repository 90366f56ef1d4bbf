import numpy as np
import pytest

import powertalk as pt


@pytest.fixture(scope="session")
def baseline():
    return pt.load_scenario(pt.builtin_scenario_path("baseline"))


@pytest.fixture(scope="session")
def baseline_channel(baseline):
    op = pt.solve_steady_state(baseline.microgrid, baseline.droop)
    return op, pt.linearize(baseline.microgrid, op)


def single_bus_config(num_ders=1, yva=1.0, ref=400.0, d_ca=0.0, d_cc=0.0,
                      d_cp=0.0, rated=400.0):
    """One-bus single-type grid; ``yva``/``ref`` may be scalars or vectors."""
    u = num_ders
    cfg = pt.MicrogridConfig(
        rated_voltage=rated,
        line_admittances=np.zeros((1, 1)),
        bus_assignment=np.ones((1, u), dtype=int),
        type_assignment=np.ones((1, u), dtype=int),
        incremental_costs=np.array([1.0]),
        const_admittance_load=np.array([d_ca], dtype=float),
        const_current_load=np.array([d_cc], dtype=float),
        const_power_load=np.array([d_cp], dtype=float))
    droop = pt.DroopSetting(np.broadcast_to(np.asarray(ref, dtype=float), (u,)).copy(),
                            np.broadcast_to(np.asarray(yva, dtype=float), (u,)).copy())
    return cfg, droop


def random_connected_config(rng, max_buses=4, max_ders=10):
    """Random multi-bus grid with a spanning tree plus extra lines."""
    n = int(rng.integers(1, max_buses + 1))
    u = int(rng.integers(1, max_ders + 1))
    lines = np.zeros((n, n))
    for b in range(1, n):
        other = int(rng.integers(0, b))
        lines[b, other] = lines[other, b] = rng.uniform(2.0, 25.0)
    for _ in range(n):
        a, b = rng.integers(0, n, 2)
        if a != b:
            y = rng.uniform(0.5, 10.0)
            lines[a, b] = lines[b, a] = lines[a, b] + y
    der_buses = rng.integers(0, n, u)
    der_buses[0] = 0   # keep at least bus 0 generating
    bus_assignment = np.zeros((n, u), dtype=int)
    bus_assignment[der_buses, np.arange(u)] = 1
    g = int(rng.integers(1, min(4, u) + 1))
    der_types = rng.integers(0, g, u)
    der_types[:g] = np.arange(g)   # every type inhabited
    type_assignment = np.zeros((g, u), dtype=int)
    type_assignment[der_types, np.arange(u)] = 1
    cfg = pt.MicrogridConfig(
        rated_voltage=400.0,
        line_admittances=lines,
        bus_assignment=bus_assignment,
        type_assignment=type_assignment,
        incremental_costs=np.sort(rng.uniform(1.0, 50.0, g)),
        const_admittance_load=rng.uniform(0.0, 4000.0, n),
        const_current_load=rng.uniform(0.0, 2000.0, n),
        const_power_load=rng.uniform(0.0, 2000.0, n))
    droop = pt.DroopSetting(rng.uniform(395.0, 405.0, u),
                            rng.uniform(2.0, 20.0, u))
    return cfg, droop
