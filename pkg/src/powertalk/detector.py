"""Integer-sum MAP detection of simultaneously transmitted bits.

A receiver never resolves individual transmitters.  After cancelling its own
contribution it detects, per slot, the number of transmitters that sent a 1
(the bit sum), by comparing the observation against the precomputed noiseless
level of every transmitter bit pattern.  Patterns are grouped by bit sum;
with i.i.d. equiprobable bits the per-pattern prior is flat, so summing the
Gaussian likelihoods of a group's patterns is proportional to the posterior
of that bit sum.  The word's detected bit sums then reconstruct the aggregate
quantized capacity of the group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelModel
from .errors import GroupTooLarge, ValidationError

MAX_GROUP_SENDERS = 20   # 2^20 pattern enumeration cap per table


@dataclass(frozen=True)
class LevelTable:
    """Noiseless observation levels of one (receiver, sub-phase) pair.

    ``levels[theta]`` holds the level of every transmitter bit pattern with
    exactly ``theta`` ones, own contribution excluded.  ``priors[theta]`` is
    the binomial prior of the bit sum under i.i.d. equiprobable bits.
    """

    receiver: int
    subphase: int
    group_size: int            # transmitters in the sub-phase, receiver included
    receiver_in_group: bool
    levels: tuple[np.ndarray, ...]
    priors: np.ndarray

    @property
    def num_senders(self) -> int:
        """Transmitters the receiver actually has to detect."""
        return self.group_size - int(self.receiver_in_group)

    @property
    def num_hypotheses(self) -> int:
        return self.num_senders + 1

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """Levels as a (hypotheses x max-class-size) matrix plus validity mask."""
        width = max(lv.size for lv in self.levels)
        mat = np.zeros((self.num_hypotheses, width))
        mask = np.zeros_like(mat, dtype=bool)
        for theta, lv in enumerate(self.levels):
            mat[theta, :lv.size] = lv
            mask[theta, :lv.size] = True
        return mat, mask


def build_level_table(chan: ChannelModel, type_assignment: np.ndarray, subphase: int,
                      receiver: int, amplitude: float,
                      max_senders: int = MAX_GROUP_SENDERS) -> LevelTable:
    """Enumerate the noiseless levels receiver sees from sub-phase's group.

    Raises GroupTooLarge when the pattern enumeration would exceed
    2^max_senders entries.
    """
    group = np.flatnonzero(np.asarray(type_assignment)[subphase])
    in_group = receiver in group
    senders = group[group != receiver]
    m = senders.size
    if m > max_senders:
        raise GroupTooLarge(f"{m} simultaneous transmitters exceed the "
                            f"{max_senders}-sender table cap")
    gains = chan.voltage_gain[chan.der_buses[receiver], senders]

    if m == 0:
        levels = (np.zeros(1),)
        priors = np.ones(1)
    else:
        patterns = (np.arange(1 << m)[:, None] >> np.arange(m)) & 1
        values = amplitude * ((2.0 * patterns - 1.0) @ gains)
        ones = patterns.sum(axis=1)
        levels = tuple(values[ones == theta] for theta in range(m + 1))
        priors = np.array([math.comb(m, theta) for theta in range(m + 1)],
                          dtype=float) / (1 << m)
    return LevelTable(receiver=int(receiver), subphase=int(subphase),
                      group_size=int(group.size), receiver_in_group=bool(in_group),
                      levels=levels, priors=priors)


def cancel_self(observation: float, chan: ChannelModel, receiver: int,
                own_deviation: float) -> float:
    """Remove the receiver's own transmitted deviation from its observation.

    ``own_deviation`` is the reference-voltage deviation the receiver itself
    applied in the slot (zero when it was not transmitting).
    """
    bus = chan.der_buses[receiver]
    return float(observation - chan.voltage_gain[bus, receiver] * own_deviation)


def detection_scores(observations: np.ndarray, table: LevelTable,
                     sigma: float) -> np.ndarray:
    """Per-hypothesis posterior scores for a batch of observations.

    Returns an (n, hypotheses) array; one score is evaluated per bit-sum
    hypothesis.  For sigma > 0 the score is the log of the summed Gaussian
    likelihoods of the hypothesis's patterns; for sigma = 0 it degenerates to
    the negated squared distance to the hypothesis's nearest level.
    """
    if sigma < 0:
        raise ValidationError("sigma must be >= 0")
    obs = np.atleast_1d(np.asarray(observations, dtype=float))
    mat, mask = table.padded()
    sq = (obs[:, None, None] - mat[None]) ** 2
    sq = np.where(mask[None], sq, np.inf)
    if sigma == 0.0:
        return -sq.min(axis=2)
    expo = -sq / (2.0 * sigma * sigma)
    peak = expo.max(axis=2)
    safe_peak = np.where(np.isfinite(peak), peak, 0.0)
    summed = np.where(np.isfinite(expo), np.exp(expo - safe_peak[..., None]), 0.0).sum(axis=2)
    return safe_peak + np.log(summed)


def map_detect(observation: float, table: LevelTable, sigma: float) -> int:
    """MAP estimate of the slot's bit sum; ties break toward the smaller sum."""
    scores = detection_scores(np.array([observation]), table, sigma)
    return int(np.argmax(scores[0]))


def map_detect_many(observations: np.ndarray, table: LevelTable,
                    sigma: float) -> np.ndarray:
    """Vectorized ``map_detect`` over a batch of observations."""
    scores = detection_scores(observations, table, sigma)
    return np.argmax(scores, axis=1)


def reconstruct_aggregate(bit_sums: np.ndarray, step: float, group_size: int,
                          receiver_in_group: bool) -> float:
    """Aggregate quantized capacity of the group, own word excluded.

    Sums the per-slot bit sums with their binary weights and adds half a
    cell per counted transmitter (the mid-rise offset).
    """
    theta = np.asarray(bit_sums)
    weights = 1 << np.arange(theta.size)
    senders = group_size - int(receiver_in_group)
    return float((theta @ weights + senders / 2.0) * step)


@dataclass(frozen=True)
class SubphaseEstimate:
    """One receiver's detection outcome for one sub-phase."""

    receiver: int
    subphase: int
    bit_sums: tuple[int, ...]
    aggregate: float    # watts, quantized capacity of the group minus own word
