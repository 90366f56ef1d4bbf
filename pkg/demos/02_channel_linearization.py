"""Small-signal channel around the baseline operating point.

Shows the voltage gains a receiving DER sees per transmitter, checks the
linear model against a full nonlinear re-solve, and derives the signaling
amplitude allowed by a 200 W power-deviation budget.
"""

import numpy as np

import powertalk as pt

scenario = pt.load_scenario(pt.builtin_scenario_path("baseline"))
grid, droop = scenario.microgrid, scenario.droop

op = pt.solve_steady_state(grid, droop)
chan = pt.linearize(grid, op)

print(f"bus voltage: {op.bus_voltages[0]:.4f} V")
print(f"voltage gain per DER (dv/dx): {chan.voltage_gain[0, 0]:.5f}")
print(f"constant-power-load correction factor: {chan.cpl_factor[0]:.6f}")

# linear prediction vs. exact re-solve for a 1 V joint deviation
dx = np.full(grid.num_ders, 1.0)
predicted = chan.voltage_gain @ dx
moved = droop.replace_references(droop.reference_voltages + dx)
exact = pt.solve_steady_state(grid, moved).bus_voltages - op.bus_voltages
print(f"\n1 V joint step: linear {predicted[0]:.6f} V, "
      f"exact {exact[0]:.6f} V, error {abs(predicted[0] - exact[0]):.2e} V")

print("\namplitude budgets per sub-phase (power budget "
      f"{scenario.protocol.power_budget:.0f} W):")
for g in range(grid.num_types):
    lam = pt.lambda_budget(chan, grid.type_assignment[g],
                           scenario.protocol.power_budget)
    members = grid.group_members(g)
    print(f"  sub-phase {g} ({members.size} transmitters): {lam * 1000:.2f} mV")

sigma = pt.slot_noise_sigma(scenario.noise)
print(f"\nslot noise std at {scenario.noise.slot_seconds * 1000:.0f} ms slots: "
      f"{sigma * 1000:.3f} mV")
