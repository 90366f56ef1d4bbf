"""Experiment drivers, CSV table IO and gnuplot script emission.

Three studies ship with the simulator, each reading its defaults (sweeps,
trial counts, seed) from the scenario document:

* ``experiment_quantization`` -- dispatch cost of error-free but quantized
  capacity knowledge against the unquantized optimum, swept over word length.
* ``experiment_detection`` -- slot error rate of the integer-sum detector,
  swept over the power-deviation budget and the transmitter-group size.
* ``experiment_cost_tradeoff`` -- full-protocol period cost over word length
  and slot duration, exposing the accuracy/overhead trade-off.

Tables serialize to plain CSV with a versioned schema comment line, so the
outputs of a (scenario, seed) pair are reproducible byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detector import build_level_table, map_detect_many
from .dispatch import base_cost, distributed_policy, settle_imbalance
from .errors import ParseError, ValidationError
from .grid import solve_steady_state
from .channel import lambda_budget, linearize
from .protocol import (PeriodTrace, binomial_ci95, ci95, mean_exact,
                       monte_carlo, prepare_period, run_period, trial_seed)
from .scenario import Scenario

TABLE_FORMAT = "powertalk-table v1"


@dataclass(frozen=True)
class Table:
    """A rectangular experiment result with a named, versioned schema."""

    kind: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([row[idx] for row in self.rows])


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def render_table(table: Table) -> str:
    lines = [f"# {TABLE_FORMAT} kind={table.kind}", ",".join(table.columns)]
    for row in table.rows:
        lines.append(",".join(_format_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def write_table(table: Table, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_table(table), encoding="utf-8")
    return path


def _parse_cell(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_table(path: str | Path) -> Table:
    """Load a CSV written by ``write_table``; round-trips byte for byte."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(f"# {TABLE_FORMAT} kind="):
        raise ParseError(f"{path} is not a {TABLE_FORMAT} file")
    kind = lines[0].split("kind=", 1)[1].strip()
    columns = tuple(lines[1].split(","))
    rows = tuple(tuple(_parse_cell(c) for c in line.split(","))
                 for line in lines[2:] if line)
    return Table(kind=kind, columns=columns, rows=rows)


def _exact_dispatch(scenario: Scenario, capacities: np.ndarray,
                    aggregates_by_type: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-DER policy under shared per-type aggregate beliefs.

    With error-free detection every DER holds the same believed aggregates
    (its own word is part of its own type's sum), so the policy assembles
    from one shared aggregate vector while each DER still dispatches its raw
    capacity.  Returns the policy and the penalized generation cost.
    """
    grid = scenario.microgrid
    types = grid.type_of_der
    policies = np.empty(grid.num_ders)
    for u in range(grid.num_ders):
        g = int(types[u])
        policies[u] = distributed_policy(capacities[u], scenario.demand,
                                         aggregates_by_type[:g + 1])
    cost = base_cost(policies, grid.type_assignment, grid.incremental_costs)
    _, _, penalty = settle_imbalance(policies, scenario.demand,
                                     scenario.deficit_cost, scenario.surplus_cost)
    return policies, cost + penalty


def experiment_quantization(scenario: Scenario, bits_sweep=None,
                            trials: int | None = None,
                            seed: int | None = None) -> Table:
    """Dispatch cost under error-free detection of quantized words vs the
    unquantized optimum, per word length.

    Capacity draws are shared across the sweep (paired comparison), so the
    per-bits gap means are directly comparable.
    """
    bits_sweep = list(scenario.sweeps["quantization_bits"] if bits_sweep is None
                      else bits_sweep)
    trials = scenario.trials["quantization"] if trials is None else trials
    seed = scenario.seed if seed is None else seed
    grid = scenario.microgrid
    sampler = scenario.capacity_sampler()
    type_matrix = grid.type_assignment.astype(float)

    sums = {q: [] for q in bits_sweep}
    for t in range(trials):
        rng = np.random.default_rng(trial_seed(seed, t))
        w = sampler(rng)
        exact_aggregates = type_matrix @ w
        _, omega_star = _exact_dispatch(scenario, w, exact_aggregates)
        for q in bits_sweep:
            step = scenario.protocol.max_capacity / (1 << q)
            idx = np.minimum((w // step).astype(int), (1 << q) - 1)
            quantized = (idx + 0.5) * step
            quant_aggregates = type_matrix @ quantized
            _, omega_hat = _exact_dispatch(scenario, w, quant_aggregates)
            sums[q].append((omega_hat, omega_star, (omega_hat - omega_star) / omega_star))

    rows = []
    for q in bits_sweep:
        hat, star, gap = zip(*sums[q])
        rows.append((q, mean_exact(hat), mean_exact(star), mean_exact(gap),
                     ci95(gap) / 1.96))
    return Table(kind="quantization",
                 columns=("bits", "mean_cost_quantized", "mean_cost_exact",
                          "mean_relative_gap", "gap_stderr"),
                 rows=tuple(rows))


def _detection_group(scenario: Scenario, size: int) -> tuple[np.ndarray, int]:
    """Pick ``size`` co-typed transmitters and a receiver outside the group."""
    grid = scenario.microgrid
    for g in range(grid.num_types):
        members = grid.group_members(g)
        if members.size >= size:
            transmitters = members[:size]
            outside = np.setdiff1d(np.arange(grid.num_ders), transmitters)
            return transmitters, int(outside[-1])
    raise ValidationError(f"no DER type has {size} members")


def experiment_detection(scenario: Scenario, budgets=None, group_sizes=None,
                         trials: int | None = None,
                         seed: int | None = None) -> Table:
    """Slot error rate of the integer-sum detector per budget and group size."""
    budgets = list(scenario.sweeps["detection_power_budgets"] if budgets is None
                   else budgets)
    group_sizes = list(scenario.sweeps["detection_group_sizes"]
                       if group_sizes is None else group_sizes)
    trials = scenario.trials["detection"] if trials is None else trials
    seed = scenario.seed if seed is None else seed
    grid = scenario.microgrid
    op = solve_steady_state(grid, scenario.droop)
    chan = linearize(grid, op)
    sigma = scenario.noise.sigma

    rows = []
    for si, size in enumerate(group_sizes):
        transmitters, receiver = _detection_group(scenario, size)
        active = np.zeros(grid.num_ders, dtype=np.int8)
        active[transmitters] = 1
        gains = chan.voltage_gain[chan.der_buses[receiver], transmitters]
        for bi, budget in enumerate(budgets):
            amplitude = lambda_budget(chan, active, budget)
            table = build_level_table(chan, active[None, :], 0, receiver, amplitude)
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(si, bi)))
            bits = rng.integers(0, 2, size=(trials, size))
            clean = (amplitude * (2.0 * bits - 1.0)) @ gains
            obs = clean + rng.standard_normal(trials) * sigma
            detected = map_detect_many(obs, table, sigma)
            errors = int((detected != bits.sum(axis=1)).sum())
            rows.append((budget, size, trials, errors, errors / trials,
                         binomial_ci95(errors, trials)))
    return Table(kind="detection",
                 columns=("power_budget_watts", "transmitters", "trials",
                          "errors", "error_rate", "error_ci95"),
                 rows=tuple(rows))


def experiment_cost_tradeoff(scenario: Scenario, slot_sweep=None, bits_sweep=None,
                             trials: int | None = None,
                             seed: int | None = None) -> Table:
    """Mean period cost over (slot duration, word length) via full protocol runs."""
    slot_sweep = list(scenario.sweeps["tradeoff_slot_seconds"] if slot_sweep is None
                      else slot_sweep)
    bits_sweep = list(scenario.sweeps["tradeoff_bits"] if bits_sweep is None
                      else bits_sweep)
    trials = scenario.trials["cost"] if trials is None else trials
    seed = scenario.seed if seed is None else seed
    grid = scenario.microgrid
    sampler = scenario.capacity_sampler()

    rows = []
    for slot_seconds in slot_sweep:
        noise = scenario.noise_for(slot_seconds)
        for bits in bits_sweep:
            protocol = scenario.protocol_for(bits=bits, slot_seconds=slot_seconds)
            plan = prepare_period(grid, protocol, noise, scenario.droop)
            result = monte_carlo(grid, protocol, noise, scenario.droop,
                                 scenario.demand, sampler, trials, seed,
                                 plan=plan, deficit_cost=scenario.deficit_cost,
                                 surplus_cost=scenario.surplus_cost)
            rows.append((slot_seconds, bits, trials, result.mean_cost,
                         result.cost_ci95, result.mean_omega, result.error_rate))
    return Table(kind="cost",
                 columns=("slot_seconds", "bits", "trials", "mean_period_cost",
                          "cost_ci95", "mean_omega", "error_rate"),
                 rows=tuple(rows))


def run_scenario_period(scenario: Scenario, seed: int | None = None) -> PeriodTrace:
    """One full dispatch period of a scenario with the documented seeding."""
    seed = scenario.seed if seed is None else seed
    rng = np.random.default_rng(trial_seed(seed, 0))
    capacities = scenario.capacity_sampler()(rng)
    return run_period(scenario.microgrid, scenario.protocol, scenario.noise,
                      scenario.droop, capacities, scenario.demand, rng,
                      deficit_cost=scenario.deficit_cost,
                      surplus_cost=scenario.surplus_cost)


def trace_table(trace: PeriodTrace) -> Table:
    """Long-format slot records of one period (one row per slot and DER)."""
    rows = []
    slots, ders = trace.tx_bits.shape
    for s in range(slots):
        for u in range(ders):
            rows.append((s, int(trace.slot_subphase[s]), int(trace.slot_offset[s]),
                         u, int(trace.tx_bits[s, u]), trace.inputs[s, u],
                         trace.observations[s, u], trace.cancelled[s, u],
                         int(trace.bit_sum_true[s, u]), int(trace.bit_sum_hat[s, u])))
    return Table(kind="period_trace",
                 columns=("slot", "subphase", "offset", "der", "bit",
                          "input_volts", "observation_volts", "cancelled_volts",
                          "bit_sum_true", "bit_sum_hat"),
                 rows=tuple(rows))


def summary_table(trace: PeriodTrace) -> Table:
    """Scalar summary of one period: capacities, policies and cost terms."""
    rows = [("amplitude_volts", trace.amplitude),
            ("demand_watts", trace.demand)]
    for u, (w, q, p) in enumerate(zip(trace.capacities, trace.quantized,
                                      trace.outcome.policy)):
        rows.append((f"capacity_{u}_watts", w))
        rows.append((f"quantized_{u}_watts", q))
        rows.append((f"policy_{u}_watts", p))
    rows += [("base_cost", trace.outcome.base_cost),
             ("deficit_watts", trace.outcome.deficit),
             ("surplus_watts", trace.outcome.surplus),
             ("penalty", trace.outcome.penalty),
             ("omega", trace.outcome.omega),
             ("period_cost", trace.outcome.period_cost),
             ("detection_errors", trace.detection_errors),
             ("detection_decisions", trace.detection_decisions)]
    return Table(kind="period_summary", columns=("field", "value"),
                 rows=tuple(rows))


def gnuplot_script(table: Table, csv_name: str) -> str:
    """Gnuplot commands rendering one experiment table from its CSV."""
    head = [f"# plot commands for {csv_name}",
            "set datafile separator ','",
            "set key left top", "set grid"]
    if table.kind == "quantization":
        body = ["set xlabel 'bits per word'",
                "set ylabel 'relative cost gap'",
                "set logscale y",
                f"plot '{csv_name}' using 1:4:5 with yerrorlines title 'quantized vs exact'"]
    elif table.kind == "detection":
        sizes = sorted({int(r[1]) for r in table.rows})
        series = ", \\\n     ".join(
            f"'{csv_name}' using ($2=={s}?$1:1/0):5:6 with yerrorlines "
            f"title '{s} transmitters'" for s in sizes)
        body = ["set xlabel 'power deviation budget (W)'",
                "set ylabel 'slot error rate'",
                "set logscale y", f"plot {series}"]
    elif table.kind == "cost":
        slots = sorted({float(r[0]) for r in table.rows})
        series = ", \\\n     ".join(
            f"'{csv_name}' using ($1=={s!r}?$2:1/0):4:5 with yerrorlines "
            f"title 'slot {s * 1000:g} ms'" for s in slots)
        body = ["set xlabel 'bits per word'",
                "set ylabel 'mean period cost'", f"plot {series}"]
    else:
        raise ValidationError(f"no plot template for table kind {table.kind!r}")
    return "\n".join(head + body) + "\n"
