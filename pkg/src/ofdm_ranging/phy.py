"""Long-training-field receive path: LTF, sinc-tap channel, noise and LS estimation.

Timing is assumed perfect. The receiver knows where the direct path lands and
places its FFT windows accordingly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .channel import TwoPathChannel
from .config import ChannelEstimate, NoiseModel, OfdmConfig

logger = logging.getLogger(__name__)

# 802.11a/g/p L-LTF, subcarriers -26..26 (DC at index 26)
L_LTF = np.array([
    1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1,
    0,
    1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1,
], dtype=float)


@dataclass(frozen=True)
class LtfSymbolPair:
    """Two repeated long training symbols behind a double-length guard.

    ``known_freq`` holds the +/-1 values on the nonzero subcarriers (ordered
    by index). The DFT of one time-domain symbol equals
    ``amplitude * known_freq`` on those bins; ``amplitude`` gives the time
    samples unit average power.
    """

    known_freq: np.ndarray
    time_samples: np.ndarray
    amplitude: float
    guard: int
    fft_size: int

    @property
    def symbol(self) -> np.ndarray:
        return self.time_samples[self.guard:self.guard + self.fft_size]


@dataclass(frozen=True)
class TapSequence:
    """Channel taps; ``taps[i]`` is the coefficient of delay ``i - lead`` samples."""

    taps: np.ndarray
    lead: int = 0

    @classmethod
    def single(cls, value: complex = 1.0) -> "TapSequence":
        return cls(np.array([value], dtype=complex), 0)


def _bins(indices, fft_size: int) -> np.ndarray:
    return np.mod(np.asarray(indices, dtype=int), fft_size)


def generate_ltf(ofdm: OfdmConfig) -> LtfSymbolPair:
    if ofdm.fft_size != 64 or ofdm.nonzero_subcarriers != tuple(range(-26, 0)) + tuple(range(1, 27)):
        raise ValueError("the L-LTF is defined for a 64-point FFT with subcarriers -26..26")
    m = np.asarray(ofdm.nonzero_subcarriers)
    known = L_LTF[m + 26]
    spectrum = np.zeros(ofdm.fft_size, dtype=complex)
    spectrum[_bins(m, ofdm.fft_size)] = known
    amplitude = ofdm.fft_size / math.sqrt(len(m))
    sym = amplitude * np.fft.ifft(spectrum)
    guard = ofdm.fft_size // 2
    samples = np.concatenate([sym[-guard:], sym, sym])
    return LtfSymbolPair(known, samples, amplitude, guard, ofdm.fft_size)


def discrete_impulse_response(channel: TwoPathChannel, ofdm: OfdmConfig, tap_count: int | None = None,
                              lead: int = 32, taper: float | None = 8.0, guard: int = 16) -> TapSequence:
    """Symbol-rate taps ``alpha*delta[n] + beta*e^{j theta}*sinc(n - B*tau)``.

    Taps cover ``n = -lead .. tap_count - lead - 1`` (by default up to the
    cyclic-prefix length). The ideal sinc never ends, so with ``taper`` set the
    reflected pulse is multiplied by a Kaiser window of that shape parameter,
    centred on the pulse and as wide as the support allows. This keeps the
    in-band response flat on the occupied subcarriers where a hard cut would
    ripple; ``taper=None`` gives the hard-truncated sinc. A peak closer than
    ``guard`` taps to the end of the support is accepted with a warning since
    its tail no longer fits.
    """
    delay = ofdm.bandwidth * channel.tau
    if tap_count is None:
        tap_count = lead + ofdm.fft_size // 2 + 1
    last = tap_count - lead - 1
    if math.ceil(delay) > last or lead < 0:
        raise ValueError(f"tap_count={tap_count} too small for delay of {delay:.3f} samples")
    if math.ceil(delay) + guard > last:
        logger.warning("reflection at %.2f samples leaves less than %d guard taps", delay, guard)
    n = np.arange(tap_count) - lead
    pulse = np.sinc(n - delay)
    if taper is not None:
        half = min(delay + lead, last - delay) + 1
        u = np.clip(1 - ((n - delay) / half) ** 2, 0, None)
        pulse = pulse * np.i0(taper * np.sqrt(u)) / np.i0(taper)
    logger.debug("reflected pulse keeps %.6f of its energy", float(np.sum(pulse**2)))
    taps = channel.beta * np.exp(1j * channel.theta) * pulse
    taps[lead] += channel.alpha
    return TapSequence(taps, lead)


def apply_channel_and_noise(ltf: LtfSymbolPair, taps: TapSequence, noise: NoiseModel,
                            ofdm: OfdmConfig, seed) -> np.ndarray:
    """Linear convolution with the taps plus circular complex Gaussian noise.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts.
    """
    rx = np.convolve(ltf.time_samples, taps.taps)
    n0 = noise.sample_variance(ofdm)
    if n0 > 0:
        rng = np.random.default_rng(seed)
        rx = rx + math.sqrt(n0 / 2) * (rng.standard_normal(rx.size) + 1j * rng.standard_normal(rx.size))
    return rx


def ls_channel_estimate(received: np.ndarray, ltf: LtfSymbolPair, ofdm: OfdmConfig,
                        lead: int = 0, symbols: int = 2) -> ChannelEstimate:
    """Least-squares estimate averaged over the long training symbols.

    ``lead`` is the sample index of the direct path (the tap sequence's
    ``lead``). The first window starts at the symbol boundary; the second is
    pulled ``lead`` samples into the first symbol so that pre-cursor taps
    never read past the end of the field. Both are phase-corrected back to
    the symbol boundary.
    """
    n = ofdm.fft_size
    starts = [ltf.guard, ltf.guard + n - lead][:symbols]
    if symbols not in (1, 2):
        raise ValueError("symbols must be 1 or 2")
    if len(received) < lead + ltf.guard + 2 * n:
        raise ValueError(f"received has {len(received)} samples, need {lead + ltf.guard + 2 * n}")
    m = np.asarray(ofdm.nonzero_subcarriers)
    bins = _bins(m, n)
    est = np.zeros(len(m), dtype=complex)
    for s in starts:
        window = received[lead + s: lead + s + n]
        y = np.fft.fft(window)[bins]
        shift = np.exp(-2j * np.pi * m * (s - ltf.guard) / n)
        est += y * shift / (ltf.amplitude * ltf.known_freq)
    return ChannelEstimate(est / len(starts), ofdm.nonzero_subcarriers, "simulated-ltf")


def simulate_estimate(channels: list[TwoPathChannel], alpha: float, ofdm: OfdmConfig,
                      noise: NoiseModel, seed, taper: float | None = 8.0) -> ChannelEstimate:
    """Full LTF path for a direct path plus any number of reflections.

    Each component's own ``alpha`` is ignored; the direct path is ``alpha``.
    """
    ltf = generate_ltf(ofdm)
    seq = TapSequence.single(alpha)
    if channels:
        lead = ofdm.fft_size // 2
        taps = np.zeros(2 * lead + 1, dtype=complex)
        taps[lead] = alpha
        for ch in channels:
            taps += discrete_impulse_response(ch, ofdm, lead=lead, taper=taper).taps
            taps[lead] -= ch.alpha
        seq = TapSequence(taps, lead)
    rx = apply_channel_and_noise(ltf, seq, noise, ofdm, seed)
    return ls_channel_estimate(rx, ltf, ofdm, lead=seq.lead)
