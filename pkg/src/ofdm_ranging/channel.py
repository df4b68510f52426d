"""Radar link budget and noiseless two-path channel synthesis."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import SPEED_OF_LIGHT, ChannelEstimate, LinkBudget, OfdmConfig

logger = logging.getLogger(__name__)

# beta/alpha above this leaves the small-reflection regime the metric assumes
WEAK_REFLECTION_RATIO = 0.1


@dataclass(frozen=True)
class TargetSpec:
    """A point target. ``rcs == 0`` means the target is absent."""

    range_m: float
    rcs: float = 1.0
    phase: float | None = None

    def __post_init__(self):
        if not self.range_m > 0:
            raise ValueError(f"target range must be > 0, got {self.range_m}")
        if not self.rcs >= 0:
            raise ValueError(f"target RCS must be >= 0, got {self.rcs}")


@dataclass(frozen=True)
class TwoPathChannel:
    """Direct path ``alpha`` plus one reflection ``beta`` delayed by ``tau``.

    ``theta`` is the relative phase of the reflection, carrier term included.
    """

    alpha: float
    beta: float
    theta: float
    tau: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not self.tau >= 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        object.__setattr__(self, "theta", float(self.theta) % (2 * math.pi))
        if self.beta > WEAK_REFLECTION_RATIO * self.alpha:
            logger.warning("beta/alpha = %.3g exceeds %.2g; cosine approximation degrades",
                           self.beta / self.alpha, WEAK_REFLECTION_RATIO)


def friis_loss(distance: float, wavelength: float) -> float:
    """Free-space power ratio ``(lambda / (4 pi d))**2``."""
    if not distance > 0:
        raise ValueError(f"distance must be > 0, got {distance}")
    if not wavelength > 0:
        raise ValueError(f"wavelength must be > 0, got {wavelength}")
    return (wavelength / (4 * math.pi * distance)) ** 2


def reflection_loss(rcs: float, wavelength: float) -> float:
    """Reflection power ratio ``4 pi sigma / lambda**2``."""
    if not rcs >= 0:
        raise ValueError(f"rcs must be >= 0, got {rcs}")
    if not wavelength > 0:
        raise ValueError(f"wavelength must be > 0, got {wavelength}")
    return 4 * math.pi * rcs / wavelength**2


def direct_alpha(budget: LinkBudget) -> float:
    """Direct-path amplitude: internal feed-through plus antenna-to-antenna leakage."""
    lam = budget.wavelength
    l1 = friis_loss(budget.direct_path_range, lam)
    p = budget.tx_power
    return math.sqrt(p * budget.feedthrough) + math.sqrt(p * budget.direct_gain_tx * budget.direct_gain_rx * l1)


def reflected_beta(budget: LinkBudget, target: TargetSpec) -> float:
    lam = budget.wavelength
    one_way = friis_loss(target.range_m, lam)
    r = reflection_loss(target.rcs, lam)
    return math.sqrt(budget.tx_power * budget.reflect_gain_tx * budget.reflect_gain_rx * one_way * one_way * r)


def round_trip_delay(range_m: float) -> float:
    if not range_m >= 0:
        raise ValueError(f"range must be >= 0, got {range_m}")
    return 2.0 * range_m / SPEED_OF_LIGHT


def cyclic_prefix_duration(ofdm: OfdmConfig) -> float:
    """Long-training guard interval: half an FFT period (1.6 us at 20 MHz)."""
    return (ofdm.fft_size // 2) / ofdm.bandwidth


def target_channel(budget: LinkBudget, target: TargetSpec, theta: float = 0.0) -> TwoPathChannel:
    """Two-path channel for one target; ``target.phase`` overrides ``theta`` when set."""
    phase = target.phase if target.phase is not None else theta
    return TwoPathChannel(direct_alpha(budget), reflected_beta(budget, target), phase,
                          round_trip_delay(target.range_m))


def synthesize_estimate(components: Sequence[TwoPathChannel], alpha: float, ofdm: OfdmConfig) -> ChannelEstimate:
    """Noiseless estimate ``alpha + sum_k beta_k exp(-j(2 pi m Delta tau_k - theta_k))``.

    Every component's own ``alpha`` is ignored; the direct path is counted once.
    """
    m = ofdm.indices
    spacing = ofdm.subcarrier_spacing
    cp = cyclic_prefix_duration(ofdm)
    h = np.full(m.shape, complex(alpha))
    for ch in components:
        if ch.tau >= cp:
            logger.warning("delay %.3g s is beyond the %.3g s cyclic prefix", ch.tau, cp)
        h += ch.beta * np.exp(-1j * (2 * np.pi * m * spacing * ch.tau - ch.theta))
    return ChannelEstimate(h, ofdm.nonzero_subcarriers, "synthetic")
