"""Capacity quantization, bit mapping and the communication-phase schedule.

Each dispatch period opens with a communication phase of one sub-phase per
cost type; a sub-phase carries one uncoded word of ``bits_per_word`` slots.
All DERs of the sub-phase's type transmit simultaneously (full duplex) while
all DERs of that type and the more expensive types receive.  Words are sent
least-significant bit first, one antipodal reference-voltage deviation per
bit per slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange, ScheduleInfeasible, ValidationError


@dataclass(frozen=True)
class ProtocolConfig:
    """Timing and signaling parameters of the dispatch-period protocol."""

    bits_per_word: int        # quantizer resolution Q
    period_seconds: float     # dispatch period T
    slot_seconds: float
    num_types: int            # DER cost types G (one sub-phase each)
    max_capacity: float       # watts, top of the quantizer range
    power_budget: float       # watts, cap on signaling power-deviation std
    amplitude: float | None = None   # volts; None derives it from the budget

    def __post_init__(self):
        if self.bits_per_word < 1:
            raise ValidationError("bits_per_word must be >= 1")
        if self.num_types < 1:
            raise ValidationError("num_types must be >= 1")
        if self.period_seconds <= 0 or self.slot_seconds <= 0:
            raise ValidationError("period and slot durations must be > 0")
        if self.max_capacity <= 0:
            raise ValidationError("max_capacity must be > 0")
        if self.power_budget <= 0:
            raise ValidationError("power_budget must be > 0")
        if self.amplitude is not None and self.amplitude <= 0:
            raise ValidationError("amplitude must be > 0 when given")
        if self.comm_seconds > self.period_seconds:
            raise ScheduleInfeasible(
                f"communication phase {self.comm_seconds:g} s exceeds the "
                f"{self.period_seconds:g} s dispatch period")

    @property
    def quant_step(self) -> float:
        """Quantizer cell width, max_capacity / 2^bits (watts)."""
        return self.max_capacity / (1 << self.bits_per_word)

    @property
    def comm_seconds(self) -> float:
        return self.num_types * self.bits_per_word * self.slot_seconds

    @property
    def dispatch_seconds(self) -> float:
        return self.period_seconds - self.comm_seconds


def quantize(value: float, step: float, bits: int) -> tuple[int, float]:
    """Mid-rise quantization of a capacity onto 2^bits cells of width step.

    Returns the cell index and the cell midpoint.  The top edge (value equal
    to the full range) is clamped into the top cell.
    """
    levels = 1 << bits
    top = levels * step
    if not 0.0 <= value <= top:
        raise OutOfRange(f"capacity {value!r} outside [0, {top!r}]")
    index = min(int(value // step), levels - 1)
    return index, (index + 0.5) * step


def bits_of_index(index: int, bits: int) -> np.ndarray:
    """Little-endian bit expansion: slot offset t carries weight 2^t."""
    if not 0 <= index < (1 << bits):
        raise OutOfRange(f"index {index} does not fit in {bits} bits")
    return (index >> np.arange(bits)) & 1


def modulate(bit: int, amplitude: float) -> float:
    """Antipodal mapping of one bit onto a reference-voltage deviation."""
    if amplitude <= 0:
        raise ValidationError("amplitude must be > 0")
    return amplitude * (2.0 * bit - 1.0)


@dataclass(frozen=True)
class CapacityWord:
    """One DER's quantized capacity and its transmitted bit stream."""

    der: int
    raw: float          # watts
    index: int
    quantized: float    # watts, cell midpoint
    bits: tuple[int, ...]   # little-endian


def encode_capacity(der: int, value: float, protocol: ProtocolConfig) -> CapacityWord:
    index, quantized = quantize(value, protocol.quant_step, protocol.bits_per_word)
    bits = tuple(int(b) for b in bits_of_index(index, protocol.bits_per_word))
    return CapacityWord(der=der, raw=float(value), index=index,
                        quantized=quantized, bits=bits)


@dataclass(frozen=True)
class SlotAssignment:
    index: int                     # global slot index g*Q + t
    subphase: int
    offset: int                    # slot within the sub-phase (bit weight 2^offset)
    transmitters: tuple[int, ...]
    receivers: tuple[int, ...]


@dataclass(frozen=True)
class SlotPlan:
    num_types: int
    bits_per_word: int
    slots: tuple[SlotAssignment, ...]

    def subphase_slots(self, g: int) -> tuple[SlotAssignment, ...]:
        q = self.bits_per_word
        return self.slots[g * q:(g + 1) * q]


def schedule(protocol: ProtocolConfig, type_assignment: np.ndarray) -> SlotPlan:
    """Lay out the communication phase over type_assignment's DER groups.

    In sub-phase g the type-g DERs transmit while the DERs of types g and
    above receive; cheaper types are already done listening.
    """
    types = np.asarray(type_assignment)
    if types.shape[0] != protocol.num_types:
        raise ValidationError("type_assignment row count must equal num_types")
    slots = []
    for g in range(protocol.num_types):
        transmitters = tuple(int(u) for u in np.flatnonzero(types[g]))
        receivers = tuple(int(u) for u in np.flatnonzero(types[g:].any(axis=0)))
        for t in range(protocol.bits_per_word):
            slots.append(SlotAssignment(index=g * protocol.bits_per_word + t,
                                        subphase=g, offset=t,
                                        transmitters=transmitters,
                                        receivers=receivers))
    return SlotPlan(num_types=protocol.num_types,
                    bits_per_word=protocol.bits_per_word, slots=tuple(slots))
