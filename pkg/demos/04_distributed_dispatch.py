"""Merit-order dispatch from local knowledge.

Each DER places itself using only its own capacity and the aggregate
capacities of its own and cheaper types.  The script compares the assembled
distributed policy against the centralized oracle, then shows what coarse
quantization of the aggregates does to the settled cost.
"""

import numpy as np

import powertalk as pt

scenario = pt.load_scenario(pt.builtin_scenario_path("baseline"))
grid = scenario.microgrid
demand = scenario.demand

rng = np.random.default_rng(7)
capacities = rng.uniform(0, 2000.0, grid.num_ders)
aggregates = grid.type_assignment.astype(float) @ capacities
print("capacities (W):", capacities.round(1))
print("per-type aggregates (W):", aggregates.round(1))

policy = np.array([
    pt.distributed_policy(capacities[u], demand,
                          aggregates[:grid.type_of_der[u] + 1])
    for u in range(grid.num_ders)])
central = pt.oracle_centralized(capacities, grid.incremental_costs,
                                grid.type_assignment, demand)
print("\ndistributed policy (W):", policy.round(1))
print(f"matches centralized oracle: {np.allclose(policy, central)}")
print(f"supply {policy.sum():.1f} W vs demand {demand:.1f} W")
print(f"generation cost: "
      f"{pt.base_cost(policy, grid.type_assignment, grid.incremental_costs):.1f}")

print("\nquantized aggregates (error-free detection):")
for bits in (2, 6, 10, 14):
    step = scenario.protocol.max_capacity / 2**bits
    quantized = (np.minimum((capacities // step).astype(int), 2**bits - 1)
                 + 0.5) * step
    believed = grid.type_assignment.astype(float) @ quantized
    p = np.array([
        pt.distributed_policy(capacities[u], demand,
                              believed[:grid.type_of_der[u] + 1])
        for u in range(grid.num_ders)])
    cost = pt.base_cost(p, grid.type_assignment, grid.incremental_costs)
    deficit, surplus, penalty = pt.settle_imbalance(
        p, demand, scenario.deficit_cost, scenario.surplus_cost)
    print(f"  Q={bits:2d}: imbalance {deficit + surplus:7.2f} W, "
          f"settled cost {cost + penalty:9.1f}")
