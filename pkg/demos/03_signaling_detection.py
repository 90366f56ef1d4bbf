"""One sub-phase on the wire: quantize, modulate, observe, detect.

Walks the three type-0 DERs of the baseline scenario through their
sub-phase while DER 9 listens, then sweeps the slot duration to show how
averaging time buys detection reliability.
"""

import numpy as np

import powertalk as pt

scenario = pt.load_scenario(pt.builtin_scenario_path("baseline"))
grid, droop, protocol = scenario.microgrid, scenario.droop, scenario.protocol

op = pt.solve_steady_state(grid, droop)
chan = pt.linearize(grid, op)
lam = min(pt.lambda_budget(chan, grid.type_assignment[g], protocol.power_budget)
          for g in range(grid.num_types))
receiver = 9
members = grid.group_members(0)

rng = np.random.default_rng(42)
capacities = rng.uniform(0, protocol.max_capacity, grid.num_ders)
words = {int(u): pt.encode_capacity(int(u), capacities[u], protocol)
         for u in members}
for u, word in words.items():
    print(f"DER {u}: {word.raw:7.1f} W -> cell {word.index:4d} "
          f"({word.quantized:7.1f} W), bits {word.bits}")

table = pt.build_level_table(chan, grid.type_assignment, 0, receiver, lam)
sigma = pt.slot_noise_sigma(scenario.noise)
print(f"\namplitude {lam * 1000:.2f} mV, noise {sigma * 1000:.3f} mV, "
      f"levels per bit-sum: {[lv.round(5).tolist() for lv in table.levels]}")

sums = []
for t in range(protocol.bits_per_word):
    dx = np.zeros(grid.num_ders)
    for u, word in words.items():
        dx[u] = pt.modulate(word.bits[t], lam)
    observed = pt.observe_slot(chan, scenario.noise, dx, rng)[receiver]
    cleaned = pt.cancel_self(observed, chan, receiver, dx[receiver])
    sums.append(pt.map_detect(cleaned, table, sigma))

aggregate = pt.reconstruct_aggregate(np.array(sums), protocol.quant_step,
                                     table.group_size, table.receiver_in_group)
truth = sum(w.quantized for w in words.values())
print(f"detected bit sums {sums}")
print(f"aggregate estimate {aggregate:.1f} W vs quantized truth {truth:.1f} W")

print("\nslot-duration sweep (1000 random slots each):")
for slot_ms in (10, 50, 100, 200):
    noise = scenario.noise_for(slot_ms / 1000)
    bits = rng.integers(0, 2, (1000, members.size))
    gains = chan.voltage_gain[0, members]
    clean = (lam * (2.0 * bits - 1.0)) @ gains
    obs = clean + noise.sigma * rng.standard_normal(1000)
    detected = pt.map_detect_many(obs, table, noise.sigma)
    errors = int((detected != bits.sum(axis=1)).sum())
    print(f"  {slot_ms:4d} ms: {errors:3d}/1000 slot errors")
