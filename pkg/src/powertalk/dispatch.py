"""Distributed economic dispatch and period cost accounting.

Demand is filled in merit order of the type costs.  A DER needs only its own
capacity and the aggregate capacities of its own and all cheaper types to
place itself: full output if demand exceeds the aggregates through its type,
idle if the cheaper types already cover demand, otherwise a share of the
marginal remainder proportional to its capacity.  Mismatch between the
enacted total and demand settles against deficit/surplus penalty rates, and
the period cost folds in the communication-phase overhead during which the
converters still run at the pre-dispatch operating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signaling import ProtocolConfig


@dataclass(frozen=True)
class DispatchOutcome:
    """Enacted dispatch of one period and its cost breakdown."""

    policy: np.ndarray       # watts per DER
    deficit: float           # watts
    surplus: float           # watts
    penalty: float           # deficit/surplus settlement cost
    base_cost: float         # generation cost of the enacted policy
    omega: float             # base_cost + penalty
    period_cost: float       # omega + communication-phase correction


def distributed_policy(capacity: float, demand: float, aggregates) -> float:
    """Power setpoint of one DER from its local view.

    ``aggregates`` lists the believed aggregate capacities of types 0..g
    where g is the DER's own type (own entry last, own word included).
    """
    aggregates = np.asarray(aggregates, dtype=float)
    below = float(aggregates[:-1].sum())
    through = below + float(aggregates[-1])
    if demand > through:
        return float(capacity)
    if demand < below:
        return 0.0
    own = float(aggregates[-1])
    if own <= 0.0:
        # Degenerate marginal group: only reachable when demand sits exactly
        # on the boundary, and a zero-capacity group cannot produce.
        return 0.0
    return float(capacity) * (demand - below) / own


def base_cost(policy: np.ndarray, type_assignment: np.ndarray,
              type_costs: np.ndarray) -> float:
    """Generation cost of a dispatch vector under per-type incremental costs."""
    per_der = np.asarray(type_costs, dtype=float) @ np.asarray(type_assignment)
    return float(per_der @ np.asarray(policy, dtype=float))


def settle_imbalance(policy: np.ndarray, demand: float, deficit_cost: float,
                     surplus_cost: float) -> tuple[float, float, float]:
    """Deficit, surplus (watts) and the penalty of an enacted policy."""
    total = float(np.sum(policy))
    deficit = max(demand - total, 0.0)
    surplus = max(total - demand, 0.0)
    return deficit, surplus, deficit_cost * deficit + surplus_cost * surplus


def period_cost(omega: float, protocol: ProtocolConfig, baseline_cost: float,
                dispatched_cost: float, penalty: float) -> float:
    """Total cost of a dispatch period including communication overhead.

    ``baseline_cost`` is the generation cost rate at the pre-dispatch
    operating point, which the converters hold for the whole communication
    phase (the antipodal signaling deviations average out).  The overhead
    fraction is slots-per-period times slot duration over the period.
    """
    fraction = (protocol.slot_seconds / protocol.period_seconds) \
        * protocol.bits_per_word * protocol.num_types
    return omega + fraction * (baseline_cost - dispatched_cost - penalty)


def oracle_centralized(capacities: np.ndarray, type_costs: np.ndarray,
                       type_assignment: np.ndarray, demand: float) -> np.ndarray:
    """Cost-minimal feasible dispatch with full knowledge (verification oracle).

    Greedy merit-order fill: cheaper types run at capacity until demand is
    met, the marginal type splits the remainder proportionally to capacity.
    Delivers min(demand, total capacity).
    """
    capacities = np.asarray(capacities, dtype=float)
    types = np.asarray(type_assignment)
    order = np.argsort(np.asarray(type_costs, dtype=float), kind="stable")
    policy = np.zeros_like(capacities)
    remaining = min(float(demand), float(capacities.sum()))
    for g in order:
        members = np.flatnonzero(types[g])
        group_cap = float(capacities[members].sum())
        if remaining <= 0.0 or group_cap <= 0.0:
            continue
        take = min(remaining, group_cap)
        policy[members] = capacities[members] * (take / group_cap)
        remaining -= take
    return policy
