"""End-to-end execution of one dispatch period and Monte Carlo trials.

A period runs as: solve the operating point, linearize the channel, pick the
signaling amplitude from the power-deviation budget, walk the sub-phase/slot
schedule exchanging quantized capacity words, let every DER reconstruct the
aggregate capacities it legitimately heard, dispatch, and account the period
cost.  Everything is driven by an explicit random generator so a (scenario,
seed) pair reproduces a trace bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelModel, NoiseModel, lambda_budget, linearize
from .detector import (LevelTable, SubphaseEstimate, build_level_table,
                       map_detect_many, reconstruct_aggregate)
from .dispatch import (DispatchOutcome, base_cost, distributed_policy,
                       period_cost, settle_imbalance)
from .errors import ValidationError
from .grid import DroopSetting, MicrogridConfig, OperatingPoint, solve_steady_state
from .signaling import ProtocolConfig, SlotPlan, encode_capacity, schedule


@dataclass(frozen=True)
class PeriodPlan:
    """Per-scenario precomputation shared by every trial.

    The operating point, channel, amplitude and level tables depend only on
    the scenario, not on the capacity draw, so Monte Carlo runs build this
    once.
    """

    config: MicrogridConfig
    protocol: ProtocolConfig
    noise: NoiseModel
    droop: DroopSetting
    operating_point: OperatingPoint
    channel: ChannelModel
    amplitude: float
    budgets: np.ndarray                    # per sub-phase amplitude budgets
    slots: SlotPlan
    tables: dict[tuple[int, int], LevelTable]   # (subphase, receiver)


@dataclass
class PeriodTrace:
    """Every intermediate quantity of one dispatch period.

    Slot-indexed arrays have shape (slots, U); entries are -1 (integers) or
    NaN (floats) where a DER played no part.  ``believed`` holds each DER's
    view of the aggregate capacities of types 0..its own (NaN above).
    """

    amplitude: float
    demand: float
    capacities: np.ndarray
    quantized: np.ndarray
    indices: np.ndarray
    slot_subphase: np.ndarray
    slot_offset: np.ndarray
    tx_bits: np.ndarray          # int8
    inputs: np.ndarray           # reference-voltage deviations
    observations: np.ndarray
    cancelled: np.ndarray
    bit_sum_true: np.ndarray     # int16
    bit_sum_hat: np.ndarray      # int16
    estimates: list[SubphaseEstimate]
    believed: np.ndarray         # U x G
    baseline_powers: np.ndarray
    outcome: DispatchOutcome
    detection_errors: int
    detection_decisions: int
    events: list[str] = field(default_factory=list)


def default_droop(config: MicrogridConfig,
                  virtual_admittance: float = 1.0) -> DroopSetting:
    """Flat droop start: every reference at the rated voltage."""
    u = config.num_ders
    return DroopSetting(np.full(u, float(config.rated_voltage)),
                        np.full(u, float(virtual_admittance)))


def prepare_period(config: MicrogridConfig, protocol: ProtocolConfig,
                   noise: NoiseModel, droop: DroopSetting) -> PeriodPlan:
    """Solve, linearize and precompute schedule, amplitude and level tables."""
    if protocol.num_types != config.num_types:
        raise ValidationError("protocol num_types must match the microgrid's DER types")
    op = solve_steady_state(config, droop)
    chan = linearize(config, op)

    budgets = np.full(config.num_types, np.inf)
    for g in range(config.num_types):
        row = config.type_assignment[g]
        if row.any():
            budgets[g] = lambda_budget(chan, row, protocol.power_budget)
    cap = float(budgets.min())
    if protocol.amplitude is None:
        amplitude = cap
    else:
        amplitude = float(protocol.amplitude)
        if amplitude > cap * (1 + 1e-9):
            raise ValidationError(
                f"amplitude {amplitude:g} V exceeds the {cap:g} V budget")
    if not math.isfinite(amplitude) or amplitude <= 0:
        raise ValidationError("no positive finite amplitude available")

    slots = schedule(protocol, config.type_assignment)
    tables = {}
    for g in range(config.num_types):
        receivers = np.flatnonzero(config.type_assignment[g:].any(axis=0))
        for k in receivers:
            tables[(g, int(k))] = build_level_table(
                chan, config.type_assignment, g, int(k), amplitude)
    return PeriodPlan(config=config, protocol=protocol, noise=noise, droop=droop,
                      operating_point=op, channel=chan, amplitude=amplitude,
                      budgets=budgets, slots=slots, tables=tables)


def run_period(config: MicrogridConfig, protocol: ProtocolConfig,
               noise: NoiseModel, droop: DroopSetting, capacities: np.ndarray,
               demand: float, rng: np.random.Generator,
               plan: PeriodPlan | None = None, deficit_cost: float = 100.0,
               surplus_cost: float = 100.0) -> PeriodTrace:
    """Execute one full dispatch period.

    Each DER's dispatch decision uses only what it legitimately holds: its
    own capacity, its own quantized word, and the aggregates it detected in
    the sub-phases it received.
    """
    if plan is None:
        plan = prepare_period(config, protocol, noise, droop)
    capacities = np.asarray(capacities, dtype=float)
    if capacities.shape != (config.num_ders,):
        raise ValidationError("capacities must have one entry per DER")
    if demand < 0:
        raise ValidationError("demand must be >= 0")

    u = config.num_ders
    g_count = config.num_types
    q = protocol.bits_per_word
    total_slots = g_count * q
    sigma = noise.sigma
    chan = plan.channel
    gain = chan.voltage_gain
    buses = chan.der_buses
    lam = plan.amplitude

    words = [encode_capacity(k, capacities[k], protocol) for k in range(u)]
    word_bits = np.array([w.bits for w in words], dtype=np.int8)   # U x Q

    tx_bits = np.full((total_slots, u), -1, dtype=np.int8)
    inputs = np.zeros((total_slots, u))
    observations = np.empty((total_slots, u))
    cancelled = np.full((total_slots, u), np.nan)
    bit_sum_true = np.full((total_slots, u), -1, dtype=np.int16)
    bit_sum_hat = np.full((total_slots, u), -1, dtype=np.int16)
    slot_subphase = np.empty(total_slots, dtype=np.int16)
    slot_offset = np.empty(total_slots, dtype=np.int16)

    estimates: list[SubphaseEstimate] = []
    detected = {}    # (receiver, subphase) -> aggregate of the others' words
    errors = 0
    decisions = 0
    events = [f"amplitude {lam!r} V from budget {plan.budgets.min()!r} V"]

    for g in range(g_count):
        members = config.group_members(g)
        receivers = np.flatnonzero(config.type_assignment[g:].any(axis=0))
        lo, hi = g * q, (g + 1) * q
        slot_subphase[lo:hi] = g
        slot_offset[lo:hi] = np.arange(q)

        bits_g = word_bits[members]                      # s x Q
        dx = np.zeros((u, q))
        if members.size:
            dx[members] = lam * (2.0 * bits_g - 1.0)
            tx_bits[lo:hi, members] = bits_g.T
        inputs[lo:hi] = dx.T

        dv = gain @ dx                                   # N x Q
        z = rng.standard_normal((q, u)) * sigma
        obs = dv[buses].T + z                            # Q x U
        observations[lo:hi] = obs

        for k in receivers:
            table = plan.tables[(g, int(k))]
            clean = obs[:, k] - gain[buses[k], k] * dx[k]
            cancelled[lo:hi, k] = clean
            theta_hat = map_detect_many(clean, table, sigma)
            others = members[members != k]
            theta_true = bits_g[np.flatnonzero(members != k)].sum(axis=0) \
                if others.size else np.zeros(q, dtype=int)
            bit_sum_true[lo:hi, k] = theta_true
            bit_sum_hat[lo:hi, k] = theta_hat
            errors += int((theta_hat != theta_true).sum())
            decisions += q
            aggregate = reconstruct_aggregate(theta_hat, protocol.quant_step,
                                              table.group_size,
                                              table.receiver_in_group)
            detected[(int(k), g)] = aggregate
            estimates.append(SubphaseEstimate(
                receiver=int(k), subphase=g,
                bit_sums=tuple(int(t) for t in theta_hat), aggregate=aggregate))

    # Local dispatch: detected aggregates for every received sub-phase, plus
    # the DER's own quantized word inside its own type's aggregate.
    believed = np.full((u, g_count), np.nan)
    policies = np.empty(u)
    der_types = config.type_of_der
    for k in range(u):
        own_type = int(der_types[k])
        for j in range(own_type + 1):
            believed[k, j] = detected[(k, j)]
        believed[k, own_type] += words[k].quantized
        policies[k] = distributed_policy(capacities[k], demand,
                                         believed[k, :own_type + 1])

    der_costs = config.der_costs
    dispatched_cost = base_cost(policies, config.type_assignment,
                                config.incremental_costs)
    deficit, surplus, penalty = settle_imbalance(
        policies, demand, deficit_cost, surplus_cost)
    omega = dispatched_cost + penalty
    baseline = plan.operating_point.der_powers
    total = period_cost(omega, protocol, float(der_costs @ baseline),
                        dispatched_cost, penalty)
    outcome = DispatchOutcome(policy=policies, deficit=deficit, surplus=surplus,
                              penalty=penalty, base_cost=dispatched_cost,
                              omega=omega, period_cost=total)

    return PeriodTrace(amplitude=lam, demand=float(demand),
                       capacities=capacities,
                       quantized=np.array([w.quantized for w in words]),
                       indices=np.array([w.index for w in words]),
                       slot_subphase=slot_subphase, slot_offset=slot_offset,
                       tx_bits=tx_bits, inputs=inputs, observations=observations,
                       cancelled=cancelled, bit_sum_true=bit_sum_true,
                       bit_sum_hat=bit_sum_hat, estimates=estimates,
                       believed=believed, baseline_powers=baseline.copy(),
                       outcome=outcome, detection_errors=errors,
                       detection_decisions=decisions, events=events)


@dataclass(frozen=True)
class MonteCarloResult:
    """Aggregated statistics over independent dispatch-period trials."""

    trials: int
    mean_cost: float
    cost_ci95: float
    mean_omega: float
    error_rate: float          # pooled slot-detection error rate
    error_ci95: float
    deficit_fraction: float    # fraction of trials ending short of demand
    surplus_fraction: float


def trial_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Counter-style per-trial seed; independent of trial execution order."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))


def monte_carlo(config: MicrogridConfig, protocol: ProtocolConfig,
                noise: NoiseModel, droop: DroopSetting, demand: float,
                capacity_sampler, trials: int, seed: int,
                plan: PeriodPlan | None = None, deficit_cost: float = 100.0,
                surplus_cost: float = 100.0) -> MonteCarloResult:
    """Independent dispatch-period trials with derived per-trial streams.

    ``capacity_sampler(rng)`` draws one capacity vector.  Aggregation uses
    exact summation, so the statistics do not depend on the order in which
    trials are executed.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if plan is None:
        plan = prepare_period(config, protocol, noise, droop)
    costs = []
    omegas = []
    errors = 0
    decisions = 0
    deficits = 0
    surpluses = 0
    for i in range(trials):
        rng = np.random.default_rng(trial_seed(seed, i))
        w = capacity_sampler(rng)
        trace = run_period(config, protocol, noise, droop, w, demand, rng,
                           plan=plan, deficit_cost=deficit_cost,
                           surplus_cost=surplus_cost)
        costs.append(trace.outcome.period_cost)
        omegas.append(trace.outcome.omega)
        errors += trace.detection_errors
        decisions += trace.detection_decisions
        deficits += trace.outcome.deficit > 0.0
        surpluses += trace.outcome.surplus > 0.0
    return MonteCarloResult(
        trials=trials,
        mean_cost=mean_exact(costs),
        cost_ci95=ci95(costs),
        mean_omega=mean_exact(omegas),
        error_rate=errors / decisions if decisions else 0.0,
        error_ci95=binomial_ci95(errors, decisions),
        deficit_fraction=deficits / trials,
        surplus_fraction=surpluses / trials)


def mean_exact(values) -> float:
    """Order-insensitive mean via exact float summation."""
    return math.fsum(values) / len(values)


def ci95(values) -> float:
    """Half-width of the normal-approximation 95% CI of the mean."""
    n = len(values)
    if n < 2:
        return float("inf")
    mean = mean_exact(values)
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return 1.96 * math.sqrt(var / n)


def binomial_ci95(successes: int, n: int) -> float:
    if n == 0:
        return float("inf")
    p = successes / n
    return 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / n)
