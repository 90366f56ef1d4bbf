"""Steady state of a small two-bus DC microgrid.

Two droop-controlled DERs on separate buses share a mixed ZIP load through
a 2 S line.  The script solves the current balance, prints the operating
point and confirms the per-bus residual is at solver tolerance.
"""

import numpy as np

import powertalk as pt

config = pt.MicrogridConfig(
    rated_voltage=400.0,
    line_admittances=np.array([[0.0, 2.0],
                               [2.0, 0.0]]),
    bus_assignment=np.array([[1, 0],
                             [0, 1]]),
    type_assignment=np.array([[1, 1]]),
    incremental_costs=np.array([5.0]),
    const_admittance_load=np.array([1000.0, 0.0]),
    const_current_load=np.array([500.0, 0.0]),
    const_power_load=np.array([2000.0, 3000.0]))

droop = pt.DroopSetting(reference_voltages=np.array([400.0, 398.0]),
                        virtual_admittances=np.array([5.0, 3.0]))

op = pt.solve_steady_state(config, droop)

print("admittance matrix (S):")
print(pt.build_admittance(config))
print(f"\nconverged in {op.iterations} iterations")
for n, v in enumerate(op.bus_voltages):
    print(f"  bus {n}: {v:9.4f} V")
for u in range(config.num_ders):
    current, power = pt.der_output(op, u)
    print(f"  DER {u}: {current:8.3f} A  {power:9.2f} W")

residual = pt.kcl_residual(config, droop, op.bus_voltages)
print(f"\nworst current-balance residual: {np.abs(residual).max():.2e} A")

losses = op.der_powers.sum() - 2000.0 - 3000.0 \
    - op.bus_voltages[0]**2 * 1000.0 / 400.0**2 \
    - op.bus_voltages[0] * 500.0 / 400.0
print(f"line losses: {losses:.2f} W")
