"""Steady-state electrical model of a droop-controlled DC microgrid.

Buses are coupled through a resistive line network and host droop-controlled
DER converters together with ZIP loads (constant-admittance, constant-current
and constant-power components, each given by its rated power demand at the
nominal system voltage).  Every converter follows the droop law

    v_bus = x_ref - i_out / y_va

so the bus voltages are the solution of the per-bus current balance between
converter injections, line flows and load draws.  The constant-power load
term makes the balance nonlinear; ``solve_steady_state`` seeds a per-bus
closed-form update (the physical high-voltage root of the bus quadratic,
swept Gauss-Seidel style) and polishes with Newton iterations on the full
residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NoSolution, NotConverged, ValidationError

RESIDUAL_TOL = 1e-9     # amperes, per-bus current-balance residual
MAX_ITERATIONS = 200


def _binary_assignment(matrix: np.ndarray, name: str, columns: int | None = None) -> np.ndarray:
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-d binary matrix")
    if columns is not None and arr.shape[1] != columns:
        raise ValidationError(f"{name} must have {columns} columns, got {arr.shape[1]}")
    if not np.isin(arr, (0, 1)).all():
        raise ValidationError(f"{name} entries must be 0 or 1")
    if not (arr.sum(axis=0) == 1).all():
        raise ValidationError(f"every column of {name} must contain exactly one 1")
    return arr.astype(np.int8)


@dataclass(frozen=True)
class MicrogridConfig:
    """Static microgrid description: topology, loads, DER placement, costs.

    Loads are stored as the rated power demand (watts) of each ZIP component
    at ``rated_voltage``; the equivalent admittance / current draw is derived
    where needed.
    """

    rated_voltage: float              # volts
    line_admittances: np.ndarray      # N x N siemens, symmetric, zero diagonal
    bus_assignment: np.ndarray        # N x U binary, one hosting bus per DER
    type_assignment: np.ndarray       # G x U binary, one cost type per DER
    incremental_costs: np.ndarray     # G, cost per watt, nondecreasing
    const_admittance_load: np.ndarray  # N, watts at rated voltage
    const_current_load: np.ndarray     # N, watts at rated voltage
    const_power_load: np.ndarray       # N, watts

    def __post_init__(self):
        if not np.isfinite(self.rated_voltage) or self.rated_voltage <= 0:
            raise ValidationError("rated_voltage must be positive")
        lines = np.asarray(self.line_admittances, dtype=float)
        if lines.ndim != 2 or lines.shape[0] != lines.shape[1]:
            raise ValidationError("line_admittances must be a square matrix")
        n = lines.shape[0]
        if not np.array_equal(lines, lines.T):
            raise ValidationError("line_admittances must be symmetric")
        if (lines < 0).any() or not np.isfinite(lines).all():
            raise ValidationError("line admittances must be finite and >= 0")
        if np.diagonal(lines).any():
            raise ValidationError("line_admittances diagonal must be zero")
        object.__setattr__(self, "line_admittances", lines)

        buses = _binary_assignment(self.bus_assignment, "bus_assignment")
        if buses.shape[0] != n:
            raise ValidationError("bus_assignment row count must equal the number of buses")
        object.__setattr__(self, "bus_assignment", buses)
        u = buses.shape[1]
        types = _binary_assignment(self.type_assignment, "type_assignment", columns=u)
        object.__setattr__(self, "type_assignment", types)

        costs = np.asarray(self.incremental_costs, dtype=float)
        if costs.shape != (types.shape[0],):
            raise ValidationError("incremental_costs length must equal the number of DER types")
        if not np.isfinite(costs).all() or (np.diff(costs) < 0).any():
            raise ValidationError("incremental_costs must be finite and nondecreasing")
        object.__setattr__(self, "incremental_costs", costs)

        for name in ("const_admittance_load", "const_current_load", "const_power_load"):
            load = np.asarray(getattr(self, name), dtype=float)
            if load.shape != (n,):
                raise ValidationError(f"{name} must have one entry per bus")
            if (load < 0).any() or not np.isfinite(load).all():
                raise ValidationError(f"{name} entries must be finite and >= 0")
            object.__setattr__(self, name, load)

        # An isolated bus (no DER, no line) leaves the current balance with no
        # voltage to determine, so reject it outright.
        no_der = ~self.bus_assignment.any(axis=1)
        no_line = ~self.line_admittances.any(axis=1)
        if (no_der & no_line).any():
            bus = int(np.flatnonzero(no_der & no_line)[0])
            raise ValidationError(f"bus {bus} has no DER and no line connection")

    @property
    def num_buses(self) -> int:
        return self.line_admittances.shape[0]

    @property
    def num_ders(self) -> int:
        return self.bus_assignment.shape[1]

    @property
    def num_types(self) -> int:
        return self.type_assignment.shape[0]

    @cached_property
    def bus_of_der(self) -> np.ndarray:
        return np.argmax(self.bus_assignment, axis=0)

    @cached_property
    def type_of_der(self) -> np.ndarray:
        return np.argmax(self.type_assignment, axis=0)

    @cached_property
    def der_costs(self) -> np.ndarray:
        """Incremental cost of each DER (cost per watt, length U)."""
        return self.incremental_costs[self.type_of_der]

    def group_members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.type_assignment[g])


@dataclass(frozen=True)
class DroopSetting:
    """Primary-control parameters of every DER converter."""

    reference_voltages: np.ndarray    # volts, length U
    virtual_admittances: np.ndarray   # siemens, length U, > 0

    def __post_init__(self):
        refs = np.atleast_1d(np.asarray(self.reference_voltages, dtype=float))
        yva = np.atleast_1d(np.asarray(self.virtual_admittances, dtype=float))
        if refs.shape != yva.shape or refs.ndim != 1:
            raise ValidationError("droop parameter vectors must be 1-d and equally long")
        if not np.isfinite(refs).all():
            raise ValidationError("reference voltages must be finite")
        if (yva <= 0).any() or not np.isfinite(yva).all():
            raise ValidationError("virtual admittances must be finite and > 0")
        object.__setattr__(self, "reference_voltages", refs)
        object.__setattr__(self, "virtual_admittances", yva)

    def replace_references(self, refs: np.ndarray) -> "DroopSetting":
        return DroopSetting(np.asarray(refs, dtype=float), self.virtual_admittances.copy())


@dataclass(frozen=True)
class OperatingPoint:
    """A converged steady state for one droop configuration."""

    droop: DroopSetting
    bus_voltages: np.ndarray   # volts, length N
    der_currents: np.ndarray   # amperes, length U
    der_powers: np.ndarray     # watts, length U
    der_buses: np.ndarray      # hosting bus index of each DER
    iterations: int = 0


def build_admittance(config: MicrogridConfig) -> np.ndarray:
    """Assemble the N x N network admittance matrix.

    Off-diagonal entries are the negated line admittances; each diagonal
    entry is the sum of the admittances incident to that bus, so rows sum
    to zero.
    """
    lines = config.line_admittances
    psi = -lines.astype(float)
    np.fill_diagonal(psi, lines.sum(axis=1))
    return psi


def _bus_aggregates(config: MicrogridConfig, droop: DroopSetting):
    """Per-bus droop sums and load coefficients used by the balance equation."""
    if droop.reference_voltages.shape != (config.num_ders,):
        raise ValidationError("droop parameter length must equal the number of DERs")
    e = config.bus_assignment.astype(float)
    sum_xy = e @ (droop.reference_voltages * droop.virtual_admittances)
    sum_yva = e @ droop.virtual_admittances
    x = config.rated_voltage
    load_adm = config.const_admittance_load / x**2     # siemens
    load_cur = config.const_current_load / x           # amperes
    return sum_xy, sum_yva, load_adm, load_cur


def kcl_residual(config: MicrogridConfig, droop: DroopSetting,
                 voltages: np.ndarray) -> np.ndarray:
    """Per-bus current-balance residual (amperes) at the given voltages.

    Positive means the converters inject more current than lines and loads
    draw; a solution has residual zero at every bus.
    """
    sum_xy, sum_yva, load_adm, load_cur = _bus_aggregates(config, droop)
    v = np.asarray(voltages, dtype=float)
    lines = config.line_admittances
    line_out = v * lines.sum(axis=1) - lines @ v
    return (sum_xy - v * sum_yva) - line_out - v * load_adm - load_cur \
        - config.const_power_load / v


def solve_steady_state(config: MicrogridConfig, droop: DroopSetting, *,
                       tol: float = RESIDUAL_TOL,
                       max_iterations: int = MAX_ITERATIONS) -> OperatingPoint:
    """Solve the network steady state for one droop configuration.

    Starts every bus at the rated voltage, sweeps the per-bus closed-form
    update until the voltages settle, then runs Newton on the full residual.

    Raises:
        NoSolution: the bus quadratic has a negative discriminant (the
            constant-power load exceeds deliverable power) or the iteration
            leaves the physical voltage branch.
        NotConverged: the residual stays above ``tol`` after
            ``max_iterations`` combined sweeps/Newton steps.
    """
    sum_xy, sum_yva, load_adm, load_cur = _bus_aggregates(config, droop)
    lines = config.line_admittances
    line_sum = lines.sum(axis=1)
    d_cp = config.const_power_load
    n = config.num_buses

    v = np.full(n, float(config.rated_voltage))
    denom = 2.0 * (sum_yva + line_sum + load_adm)   # 2B of the bus quadratic
    iterations = 0

    # Gauss-Seidel on the closed-form root; contracts toward the fixed point.
    for _ in range(min(50, max_iterations)):
        prev = v.copy()
        for b in range(n):
            a = sum_xy[b] + lines[b] @ v - load_cur[b]
            disc = a * a - 2.0 * denom[b] * d_cp[b]
            if disc < 0.0:
                raise NoSolution(f"negative discriminant at bus {b}: "
                                 "constant-power load exceeds deliverable power")
            v[b] = (a + np.sqrt(disc)) / denom[b]
        iterations += 1
        if not np.isfinite(v).all() or (v <= 0.0).any():
            raise NoSolution("iteration left the physical voltage branch")
        if np.abs(v - prev).max() < 1e-6:
            break

    # Newton polish on the full residual.
    while iterations < max_iterations:
        f = kcl_residual(config, droop, v)
        if np.abs(f).max() <= tol:
            break
        jac = lines.astype(float).copy()
        np.fill_diagonal(jac, -(sum_yva + line_sum + load_adm) + d_cp / v**2)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise NoSolution("singular Jacobian during Newton refinement") from exc
        # Halve the step while it would leave the physical branch.
        for _ in range(60):
            trial = v + step
            if (trial > 0.0).all() and np.isfinite(trial).all():
                break
            step *= 0.5
        else:
            raise NoSolution("Newton step collapsed to zero")
        v = v + step
        iterations += 1
    else:
        raise NotConverged(f"residual above {tol} A after {max_iterations} iterations")

    residual = kcl_residual(config, droop, v)
    if np.abs(residual).max() > tol:
        raise NotConverged(f"residual {np.abs(residual).max():.3e} A above {tol} A")

    buses = config.bus_of_der
    currents = (droop.reference_voltages - v[buses]) * droop.virtual_admittances
    powers = v[buses] * currents
    return OperatingPoint(droop=droop, bus_voltages=v, der_currents=currents,
                          der_powers=powers, der_buses=buses, iterations=iterations)


def der_output(op: OperatingPoint, u: int) -> tuple[float, float]:
    """Output current (A) and power (W) of DER ``u`` at the operating point."""
    v = op.bus_voltages[op.der_buses[u]]
    current = (op.droop.reference_voltages[u] - v) * op.droop.virtual_admittances[u]
    return float(current), float(v * current)
