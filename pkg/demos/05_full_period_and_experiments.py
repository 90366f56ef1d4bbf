"""A complete dispatch period, then miniature versions of the experiments.

Runs the whole pipeline once (operating point, amplitude selection, forty
signaling slots, local dispatch, cost settlement), then produces small-trial
versions of the three bundled studies and writes their CSV/gnuplot outputs
to ./demo_out.
"""

import numpy as np

import powertalk as pt
from powertalk.experiments import gnuplot_script, write_table

scenario = pt.load_scenario(pt.builtin_scenario_path("baseline"))

rng = np.random.default_rng(pt.trial_seed(scenario.seed, 0))
capacities = scenario.capacity_sampler()(rng)
trace = pt.run_period(scenario.microgrid, scenario.protocol, scenario.noise,
                      scenario.droop, capacities, scenario.demand, rng,
                      deficit_cost=scenario.deficit_cost,
                      surplus_cost=scenario.surplus_cost)

print(f"amplitude {trace.amplitude * 1000:.2f} mV, "
      f"{trace.detection_errors}/{trace.detection_decisions} slot errors")
print(f"policy total {trace.outcome.policy.sum():.1f} W "
      f"(deficit {trace.outcome.deficit:.1f} W, "
      f"surplus {trace.outcome.surplus:.1f} W)")
print(f"settled cost {trace.outcome.omega:.1f}, "
      f"period cost {trace.outcome.period_cost:.1f}")

print("\nrunning miniature experiments (small trial counts)...")
quant = pt.experiment_quantization(scenario, bits_sweep=[2, 6, 10, 14], trials=200)
for row in quant.rows:
    print(f"  Q={row[0]:2d}: relative cost gap {row[3] * 100:7.3f}%")

detect = pt.experiment_detection(scenario, budgets=[50.0, 130.0],
                                 group_sizes=[1, 3], trials=2000)
for row in detect.rows:
    print(f"  budget {row[0]:5.0f} W, {row[1]} transmitters: "
          f"P_E = {row[4]:.4f}")

cost = pt.experiment_cost_tradeoff(scenario, slot_sweep=[0.2],
                                   bits_sweep=[2, 6, 10, 14], trials=50)
for row in cost.rows:
    print(f"  T_S={row[0] * 1000:3.0f} ms, Q={row[1]:2d}: "
          f"mean period cost {row[3]:9.1f}")

for table, name in ((quant, "quantization"), (detect, "detection"),
                    (cost, "cost")):
    csv_path = write_table(table, f"demo_out/{name}.csv")
    gp = csv_path.with_suffix(".gp")
    gp.write_text(gnuplot_script(table, csv_path.name), encoding="utf-8")
    print(f"wrote {csv_path} and {gp}")
