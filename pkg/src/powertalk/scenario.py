"""Scenario files: one YAML document describing grid, protocol and sweeps.

The schema is strict: unknown fields are rejected, every embedded invariant
is validated at load time, and all numeric values are SI (volts, watts,
siemens, seconds, hertz).  ``builtin_scenario_path`` locates the scenario
files shipped with the package; ``baseline`` is the ten-DER single-bus
evaluation scenario used throughout the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .channel import NoiseModel
from .errors import ParseError, ValidationError
from .grid import DroopSetting, MicrogridConfig
from .signaling import ProtocolConfig

DEFAULT_TRIALS = {"quantization": 1000, "detection": 10000, "cost": 1000}
DEFAULT_SWEEPS = {
    "quantization_bits": [1, 2, 3, 4, 6, 8, 10, 12, 14],
    "detection_power_budgets": [50.0, 90.0, 130.0, 170.0],
    "detection_group_sizes": [1, 2, 3],
    "tradeoff_slot_seconds": [0.01, 0.05, 0.15, 0.2],
    "tradeoff_bits": [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14],
}


def _require_map(node, path: str) -> dict:
    if not isinstance(node, dict):
        raise ValidationError(f"{path} must be a mapping")
    return node

def _check_keys(node: dict, path: str, required: set[str], optional: set[str] = frozenset()):
    keys = set(node)
    unknown = keys - required - set(optional)
    if unknown:
        raise ValidationError(f"{path} has unknown field(s): {sorted(unknown)}")
    missing = required - keys
    if missing:
        raise ValidationError(f"{path} is missing field(s): {sorted(missing)}")


def _number(node, path: str) -> float:
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ValidationError(f"{path} must be a number")
    return float(node)


def _integer(node, path: str) -> int:
    if isinstance(node, bool) or not isinstance(node, int):
        raise ValidationError(f"{path} must be an integer")
    return node


def _number_list(node, path: str) -> list[float]:
    if not isinstance(node, list) or not node:
        raise ValidationError(f"{path} must be a non-empty list")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(node)]


def _integer_list(node, path: str) -> list[int]:
    if not isinstance(node, list) or not node:
        raise ValidationError(f"{path} must be a non-empty list")
    return [_integer(v, f"{path}[{i}]") for i, v in enumerate(node)]


@dataclass(frozen=True)
class CapacityDistribution:
    """Per-period capacity draw specification."""

    kind: str
    low: float = 0.0
    high: float = 0.0
    values: tuple[float, ...] = ()

    def sampler(self, num_ders: int):
        if self.kind == "uniform":
            low, high = self.low, self.high
            return lambda rng: rng.uniform(low, high, num_ders)
        values = np.asarray(self.values, dtype=float)
        if values.size != num_ders:
            raise ValidationError("fixed capacity list length must equal the DER count")
        return lambda rng: values.copy()


@dataclass(frozen=True)
class Scenario:
    """A fully validated scenario document."""

    name: str
    description: str
    seed: int
    demand: float
    microgrid: MicrogridConfig
    droop: DroopSetting
    protocol: ProtocolConfig
    noise: NoiseModel
    capacity_distribution: CapacityDistribution
    deficit_cost: float
    surplus_cost: float
    trials: dict[str, int]
    sweeps: dict[str, list]

    def capacity_sampler(self):
        return self.capacity_distribution.sampler(self.microgrid.num_ders)

    def noise_for(self, slot_seconds: float | None = None) -> NoiseModel:
        return NoiseModel(self.noise.sample_noise_variance,
                          self.noise.sampling_frequency,
                          self.noise.slot_seconds if slot_seconds is None
                          else slot_seconds)

    def protocol_for(self, bits: int | None = None,
                     slot_seconds: float | None = None) -> ProtocolConfig:
        p = self.protocol
        return ProtocolConfig(
            bits_per_word=p.bits_per_word if bits is None else bits,
            period_seconds=p.period_seconds,
            slot_seconds=p.slot_seconds if slot_seconds is None else slot_seconds,
            num_types=p.num_types, max_capacity=p.max_capacity,
            power_budget=p.power_budget, amplitude=p.amplitude)


def _parse_microgrid(node: dict) -> MicrogridConfig:
    _check_keys(node, "microgrid",
                {"rated_voltage", "num_buses", "lines", "loads",
                 "der_buses", "der_types", "type_costs"})
    n = _integer(node["num_buses"], "microgrid.num_buses")
    if n < 1:
        raise ValidationError("microgrid.num_buses must be >= 1")
    lines = np.zeros((n, n))
    if not isinstance(node["lines"], list):
        raise ValidationError("microgrid.lines must be a list")
    for i, entry in enumerate(node["lines"]):
        path = f"microgrid.lines[{i}]"
        if not isinstance(entry, list) or len(entry) != 3:
            raise ValidationError(f"{path} must be [bus_a, bus_b, siemens]")
        a = _integer(entry[0], path)
        b = _integer(entry[1], path)
        y = _number(entry[2], path)
        if not (0 <= a < n and 0 <= b < n) or a == b:
            raise ValidationError(f"{path} connects invalid buses {a}, {b}")
        lines[a, b] = lines[b, a] = y

    loads = {name: np.zeros(n) for name in
             ("constant_admittance", "constant_current", "constant_power")}
    if not isinstance(node["loads"], list):
        raise ValidationError("microgrid.loads must be a list")
    for i, entry in enumerate(node["loads"]):
        path = f"microgrid.loads[{i}]"
        entry = _require_map(entry, path)
        _check_keys(entry, path, {"bus"}, set(loads))
        bus = _integer(entry["bus"], f"{path}.bus")
        if not 0 <= bus < n:
            raise ValidationError(f"{path}.bus {bus} out of range")
        for name in loads:
            if name in entry:
                loads[name][bus] += _number(entry[name], f"{path}.{name}")

    der_buses = _integer_list(node["der_buses"], "microgrid.der_buses")
    der_types = _integer_list(node["der_types"], "microgrid.der_types")
    costs = _number_list(node["type_costs"], "microgrid.type_costs")
    u, g = len(der_buses), len(costs)
    if len(der_types) != u:
        raise ValidationError("der_types length must match der_buses")
    if any(not 0 <= b < n for b in der_buses):
        raise ValidationError("der_buses entries must be valid bus indices")
    if any(not 0 <= t < g for t in der_types):
        raise ValidationError("der_types entries must index type_costs")
    bus_assignment = np.zeros((n, u), dtype=np.int8)
    bus_assignment[der_buses, np.arange(u)] = 1
    type_assignment = np.zeros((g, u), dtype=np.int8)
    type_assignment[der_types, np.arange(u)] = 1
    return MicrogridConfig(
        rated_voltage=_number(node["rated_voltage"], "microgrid.rated_voltage"),
        line_admittances=lines, bus_assignment=bus_assignment,
        type_assignment=type_assignment, incremental_costs=np.asarray(costs),
        const_admittance_load=loads["constant_admittance"],
        const_current_load=loads["constant_current"],
        const_power_load=loads["constant_power"])


def _broadcast(value, count: int, path: str) -> np.ndarray:
    if isinstance(value, list):
        arr = np.asarray(_number_list(value, path))
        if arr.size != count:
            raise ValidationError(f"{path} must list one value per DER")
        return arr
    return np.full(count, _number(value, path))


def load_scenario(path: str | Path) -> Scenario:
    """Load and fully validate a scenario document.

    Raises ParseError for malformed YAML and ValidationError naming the
    offending field for schema or invariant violations.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML in {path}: {exc}") from exc
    doc = _require_map(doc, "scenario")
    _check_keys(doc, "scenario",
                {"name", "seed", "demand_watts", "microgrid", "droop",
                 "protocol", "noise", "capacity_distribution", "penalties"},
                {"description", "trials", "sweeps"})

    if not isinstance(doc["name"], str) or not doc["name"]:
        raise ValidationError("scenario.name must be a non-empty string")
    microgrid = _parse_microgrid(_require_map(doc["microgrid"], "microgrid"))

    droop_node = _require_map(doc["droop"], "droop")
    _check_keys(droop_node, "droop", {"reference_voltages", "virtual_admittances"})
    droop = DroopSetting(
        _broadcast(droop_node["reference_voltages"], microgrid.num_ders,
                   "droop.reference_voltages"),
        _broadcast(droop_node["virtual_admittances"], microgrid.num_ders,
                   "droop.virtual_admittances"))

    proto_node = _require_map(doc["protocol"], "protocol")
    _check_keys(proto_node, "protocol",
                {"bits_per_word", "period_seconds", "slot_seconds",
                 "max_capacity_watts", "power_budget_watts"},
                {"amplitude_volts"})
    protocol = ProtocolConfig(
        bits_per_word=_integer(proto_node["bits_per_word"], "protocol.bits_per_word"),
        period_seconds=_number(proto_node["period_seconds"], "protocol.period_seconds"),
        slot_seconds=_number(proto_node["slot_seconds"], "protocol.slot_seconds"),
        num_types=microgrid.num_types,
        max_capacity=_number(proto_node["max_capacity_watts"],
                             "protocol.max_capacity_watts"),
        power_budget=_number(proto_node["power_budget_watts"],
                             "protocol.power_budget_watts"),
        amplitude=None if "amplitude_volts" not in proto_node
        else _number(proto_node["amplitude_volts"], "protocol.amplitude_volts"))

    noise_node = _require_map(doc["noise"], "noise")
    _check_keys(noise_node, "noise", {"sample_noise_variance", "sampling_frequency_hz"})
    noise = NoiseModel(
        sample_noise_variance=_number(noise_node["sample_noise_variance"],
                                      "noise.sample_noise_variance"),
        sampling_frequency=_number(noise_node["sampling_frequency_hz"],
                                   "noise.sampling_frequency_hz"),
        slot_seconds=protocol.slot_seconds)

    dist_node = _require_map(doc["capacity_distribution"], "capacity_distribution")
    kind = dist_node.get("kind")
    if kind == "uniform":
        _check_keys(dist_node, "capacity_distribution", {"kind", "low_watts", "high_watts"})
        low = _number(dist_node["low_watts"], "capacity_distribution.low_watts")
        high = _number(dist_node["high_watts"], "capacity_distribution.high_watts")
        if not 0 <= low <= high:
            raise ValidationError("capacity_distribution bounds must satisfy 0 <= low <= high")
        if high > protocol.max_capacity:
            raise ValidationError("capacity_distribution.high_watts exceeds protocol.max_capacity_watts")
        dist = CapacityDistribution(kind="uniform", low=low, high=high)
    elif kind == "fixed":
        _check_keys(dist_node, "capacity_distribution", {"kind", "values_watts"})
        values = _number_list(dist_node["values_watts"], "capacity_distribution.values_watts")
        if len(values) != microgrid.num_ders:
            raise ValidationError("capacity_distribution.values_watts must list one value per DER")
        if any(not 0 <= v <= protocol.max_capacity for v in values):
            raise ValidationError("fixed capacities must lie within [0, max_capacity_watts]")
        dist = CapacityDistribution(kind="fixed", values=tuple(values))
    else:
        raise ValidationError("capacity_distribution.kind must be 'uniform' or 'fixed'")

    pen_node = _require_map(doc["penalties"], "penalties")
    _check_keys(pen_node, "penalties", {"deficit_per_watt", "surplus_per_watt"})
    deficit_cost = _number(pen_node["deficit_per_watt"], "penalties.deficit_per_watt")
    surplus_cost = _number(pen_node["surplus_per_watt"], "penalties.surplus_per_watt")
    if deficit_cost <= 0 or surplus_cost <= 0:
        raise ValidationError("penalty rates must be > 0")

    trials = dict(DEFAULT_TRIALS)
    if "trials" in doc:
        node = _require_map(doc["trials"], "trials")
        _check_keys(node, "trials", set(), set(DEFAULT_TRIALS))
        for key in node:
            count = _integer(node[key], f"trials.{key}")
            if count < 1:
                raise ValidationError(f"trials.{key} must be >= 1")
            trials[key] = count

    sweeps = {key: list(val) for key, val in DEFAULT_SWEEPS.items()}
    if "sweeps" in doc:
        node = _require_map(doc["sweeps"], "sweeps")
        _check_keys(node, "sweeps", set(), set(DEFAULT_SWEEPS))
        for key in ("quantization_bits", "tradeoff_bits", "detection_group_sizes"):
            if key in node:
                sweeps[key] = _integer_list(node[key], f"sweeps.{key}")
        for key in ("detection_power_budgets", "tradeoff_slot_seconds"):
            if key in node:
                sweeps[key] = _number_list(node[key], f"sweeps.{key}")
    for bits in sweeps["quantization_bits"] + sweeps["tradeoff_bits"]:
        if bits < 1:
            raise ValidationError("bit sweeps must contain positive bit counts")
    if any(s < 1 or s >= microgrid.num_ders for s in sweeps["detection_group_sizes"]):
        raise ValidationError("detection_group_sizes must leave at least one pure receiver")

    demand = _number(doc["demand_watts"], "demand_watts")
    if demand < 0:
        raise ValidationError("demand_watts must be >= 0")

    # Embedded cross-checks the dataclasses cannot see on their own.
    for bits in sweeps["tradeoff_bits"]:
        for slot in sweeps["tradeoff_slot_seconds"]:
            if microgrid.num_types * bits * slot > protocol.period_seconds:
                raise ValidationError(
                    f"sweep point bits={bits}, slot={slot:g}s does not fit the period")

    return Scenario(
        name=doc["name"], description=str(doc.get("description", "")),
        seed=_integer(doc["seed"], "seed"), demand=demand, microgrid=microgrid,
        droop=droop, protocol=protocol, noise=noise, capacity_distribution=dist,
        deficit_cost=deficit_cost, surplus_cost=surplus_cost,
        trials=trials, sweeps=sweeps)


def builtin_scenario_path(name: str = "baseline") -> Path:
    """Path of a scenario file shipped with the package."""
    ref = resources.files("powertalk").joinpath(f"scenarios/{name}.yaml")
    with resources.as_file(ref) as concrete:
        return Path(concrete)
