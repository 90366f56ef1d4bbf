"""Small-signal channel induced by reference-voltage modulation.

Around a converged operating point, a deviation vector dx of the DER
reference voltages produces a bus-voltage deviation dv = G dx, where G is
the Jacobian of the steady-state map.  ``linearize`` computes G exactly by
implicit differentiation of the current-balance residual: with L the
negated residual Jacobian w.r.t. the bus voltages (the network admittance
matrix plus droop and load conductances, with the constant-power load
entering as a negative conductance on the diagonal), the channel is

    G = L^-1  E Yva

The per-bus factor by which the constant-power load softens the diagonal is
exposed as ``cpl_factor`` (>= 1, exactly 1 without constant-power load).

Receiving converters observe the bus deviation through averaged front-end
sampling, modeled as one Gaussian draw per DER and slot with the averaged
variance N0 / samples-per-slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AmplitudeTooLarge, SingularJacobian, ValidationError
from .grid import MicrogridConfig, OperatingPoint, kcl_residual, _bus_aggregates

# Small-signal guard: reject per-DER deviations above 1% of the reference.
MAX_RELATIVE_DEVIATION = 0.01


@dataclass(frozen=True)
class NoiseModel:
    """Per-slot observation noise of the converters' voltage sampling."""

    sample_noise_variance: float   # volts^2 per raw sample (N0)
    sampling_frequency: float      # hertz
    slot_seconds: float

    def __post_init__(self):
        if self.sample_noise_variance < 0:
            raise ValidationError("sample noise variance must be >= 0")
        if self.sampling_frequency <= 0 or self.slot_seconds <= 0:
            raise ValidationError("sampling frequency and slot duration must be > 0")
        if self.samples_per_slot < 1:
            raise ValidationError("a slot must span at least one sample")

    @property
    def samples_per_slot(self) -> int:
        return int(round(self.slot_seconds * self.sampling_frequency))

    @property
    def sigma(self) -> float:
        """Std of the slot-averaged noise (volts)."""
        return float(np.sqrt(self.sample_noise_variance / self.samples_per_slot))


def slot_noise_sigma(noise: NoiseModel) -> float:
    """Std of the averaged per-slot observation noise, sqrt(N0 / (Ts fs))."""
    return noise.sigma


@dataclass(frozen=True)
class ChannelModel:
    """Linearized voltage/power response around one operating point.

    ``voltage_gain[n, u]`` is dv_n/dx_u.  ``power_jacobian[u, l]`` is the
    exact dp_u/dx_l.  ``power_sensitivity[u, m]`` is the per-bus grouped
    power sensitivity (watts per volt of aggregate deviation on bus m) used
    by the amplitude budget; it attributes the direct droop term of every
    transmitter on the observer's own bus to the observer, which makes it a
    conservative bound for budgeting rather than an exact derivative.
    """

    voltage_gain: np.ndarray        # N x U
    power_jacobian: np.ndarray      # U x U
    power_sensitivity: np.ndarray   # U x N
    cpl_factor: np.ndarray          # N, >= 1
    operating_point: OperatingPoint
    der_buses: np.ndarray           # U

    @property
    def num_ders(self) -> int:
        return self.voltage_gain.shape[1]

    def check_amplitude(self, deviations: np.ndarray) -> np.ndarray:
        dx = np.asarray(deviations, dtype=float)
        refs = self.operating_point.droop.reference_voltages
        if dx.shape != refs.shape:
            raise ValidationError("deviation vector must have one entry per DER")
        limit = MAX_RELATIVE_DEVIATION * np.abs(refs)
        if (np.abs(dx) > limit * (1 + 1e-12)).any():
            worst = int(np.argmax(np.abs(dx) / limit))
            raise AmplitudeTooLarge(
                f"deviation of DER {worst} is {dx[worst]:+.4g} V, beyond "
                f"{100 * MAX_RELATIVE_DEVIATION:.0f}% of its reference")
        return dx


def linearize(config: MicrogridConfig, op: OperatingPoint) -> ChannelModel:
    """Extract the small-signal channel around a converged operating point.

    Raises SingularJacobian if the residual Jacobian cannot be inverted.
    """
    residual = kcl_residual(config, op.droop, op.bus_voltages)
    if np.abs(residual).max() > 1e-6:
        raise ValidationError("operating point does not satisfy the current balance")

    _, sum_yva, load_adm, _ = _bus_aggregates(config, op.droop)
    lines = config.line_admittances
    line_sum = lines.sum(axis=1)
    v = op.bus_voltages

    # Negated residual Jacobian w.r.t. bus voltages; the constant-power load
    # appears as a negative conductance -d_cp / v^2.
    stiff = sum_yva + line_sum + load_adm
    lmat = -lines.astype(float)
    np.fill_diagonal(lmat, stiff - config.const_power_load / v**2)

    rhs = config.bus_assignment * op.droop.virtual_admittances  # N x U
    try:
        gain = np.linalg.solve(lmat, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian("voltage-response matrix is singular") from exc
    if not np.isfinite(gain).all():
        raise SingularJacobian("voltage-response matrix is numerically singular")

    buses = config.bus_of_der
    refs = op.droop.reference_voltages
    yva = op.droop.virtual_admittances
    v_at = v[buses]
    slope = (refs - 2.0 * v_at) * yva    # dp_u / dv at fixed own reference
    direct = v_at * yva                  # dp_u / dx_u at fixed bus voltage

    power_jac = slope[:, None] * gain[buses, :]
    power_jac[np.arange(config.num_ders), np.arange(config.num_ders)] += direct

    # Grouped per-bus sensitivity: every transmitter on bus m is assumed to
    # couple through the same bus-level gain (the mean over that bus's DERs).
    bus_gain = np.zeros((config.num_buses, config.num_buses))
    for m in range(config.num_buses):
        members = np.flatnonzero(buses == m)
        if members.size:
            bus_gain[:, m] = gain[:, members].mean(axis=1)
    sensitivity = slope[:, None] * bus_gain[buses, :]
    sensitivity[np.arange(config.num_ders), buses] += direct

    kappa = stiff / np.diagonal(lmat)
    return ChannelModel(voltage_gain=gain, power_jacobian=power_jac,
                        power_sensitivity=sensitivity, cpl_factor=kappa,
                        operating_point=op, der_buses=buses)


def observe_slot(chan: ChannelModel, noise: NoiseModel, deviations: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    """Noisy slot observation of every DER for one deviation vector.

    Each DER sees its own bus's linearized voltage deviation plus an
    independent Gaussian draw with the slot-averaged noise std.
    """
    dx = chan.check_amplitude(deviations)
    dv = chan.voltage_gain @ dx
    z = rng.standard_normal(chan.num_ders) * noise.sigma
    return dv[chan.der_buses] + z


def power_deviation(chan: ChannelModel, deviations: np.ndarray, u: int) -> float:
    """First-order output-power deviation of DER ``u`` (watts)."""
    dx = chan.check_amplitude(deviations)
    return float(chan.power_jacobian[u] @ dx)


def lambda_budget(chan: ChannelModel, active: np.ndarray, power_budget: float) -> float:
    """Largest signaling amplitude keeping every DER's power deviation std
    within ``power_budget`` watts.

    ``active`` flags the simultaneously transmitting DERs.  Under
    independent equiprobable antipodal inputs of amplitude lam, the grouped
    sensitivity model gives Var(dp_u) = lam^2 * sum_m phi[u,m]^2 * s_m with
    s_m the number of active transmitters on bus m, so the bound is the
    minimum over DERs of budget / sqrt(sum_m phi[u,m]^2 s_m).
    """
    if power_budget <= 0:
        raise ValidationError("power budget must be > 0")
    active = np.asarray(active)
    if active.shape != (chan.num_ders,):
        raise ValidationError("active flags must have one entry per DER")
    if not active.any():
        raise ValidationError("at least one DER must be transmitting")
    counts = np.bincount(chan.der_buses[np.flatnonzero(active)],
                         minlength=chan.voltage_gain.shape[0]).astype(float)
    variance_gain = chan.power_sensitivity**2 @ counts
    positive = variance_gain > 0
    if not positive.any():
        # No DER's power reacts to the group's signaling (e.g. unloaded
        # grid); the budget imposes no constraint.
        return float("inf")
    return float((power_budget / np.sqrt(variance_gain[positive])).min())
