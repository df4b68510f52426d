"""Monte Carlo detection and ranging campaigns.

Every trial owns a random stream seeded by ``(seed, cell hash, trial)``, so a
cell's results do not depend on which other cells run, on their order or on
the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import TargetSpec, TwoPathChannel, direct_alpha, reflected_beta, round_trip_delay
from .config import CampaignSpec, OfdmConfig, Settings
from .phy import simulate_estimate
from .ranging import brute_force_batch, prepare_metric

logger = logging.getLogger(__name__)

STATS_COLUMNS = ("bandwidth_hz", "rcs_m2", "range_m", "trials", "detected", "rms_error_m", "p_d", "p_fa")
TARGET2_COLUMNS = ("target2_range_m", "target2_rcs_m2", "rms_error_nearest_m")
SWEEP_COLUMNS = ("epsilon_t", "bandwidth_hz", "rcs_m2", "range_m", "trials", "p_d", "p_fa")


@dataclass(frozen=True)
class Cell:
    """One campaign cell; ``range_m is None`` marks the no-target reference."""

    bandwidth: float
    rcs: float
    range_m: Optional[float]
    target2: Optional[tuple[float, float]] = None

    @property
    def key(self) -> str:
        t2 = "" if self.target2 is None else f"{self.target2[0]!r}/{self.target2[1]!r}"
        return f"{self.bandwidth!r}|{self.rcs!r}|{self.range_m!r}|{t2}"

    @property
    def stream(self) -> int:
        return zlib.crc32(self.key.encode())


@dataclass
class CellTrials:
    """Per-trial outcomes kept so thresholds can be re-scored later."""

    cell: Cell
    eps_min: np.ndarray
    rho_best: np.ndarray

    def detected(self, epsilon_t: float) -> np.ndarray:
        return self.eps_min < epsilon_t

    def rms_error(self, epsilon_t: float, truth: Sequence[float]) -> float:
        hit = self.detected(epsilon_t)
        if not hit.any():
            return math.nan
        rho = self.rho_best[hit]
        err = np.min(np.abs(rho[:, None] - np.asarray(truth, dtype=float)[None, :]), axis=1)
        return float(np.sqrt(np.mean(err**2)))


@dataclass(frozen=True)
class CellStats:
    bandwidth: float
    rcs: float
    range_m: float
    trials: int
    detected: int
    rms_error: float
    p_d: float
    p_fa: float
    mean_eps_min: float
    target2: Optional[tuple[float, float]] = None
    rms_error_nearest: float = math.nan


@dataclass
class CampaignStats:
    rows: list[CellStats] = field(default_factory=list)
    trials: dict[Cell, CellTrials] = field(default_factory=dict)
    epsilon_t: float = 25.0

    def row(self, bandwidth: float, rcs: float, range_m: float) -> CellStats:
        for r in self.rows:
            if r.bandwidth == bandwidth and r.rcs == rcs and r.range_m == range_m:
                return r
        raise KeyError((bandwidth, rcs, range_m))

    def p_fa(self, bandwidth: float) -> float:
        ref = self.trials[Cell(bandwidth, 0.0, None)]
        return float(np.mean(ref.detected(self.epsilon_t)))


def _trial_rng(seed: int, cell: Cell, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, cell.stream, trial])


def simulate_cell(cell: Cell, settings: Settings, iterations: int, seed: int, full_phy: bool) -> CellTrials:
    """Run ``iterations`` trials of one cell and range each one."""
    ofdm = OfdmConfig(cell.bandwidth, settings.ofdm.fft_size, settings.ofdm.nonzero_subcarriers,
                      settings.ofdm.oversample, settings.ofdm.ranging_sample_rate)
    budget = settings.budget
    alpha = direct_alpha(budget)
    targets = []
    if cell.range_m is not None and cell.rcs > 0:
        targets.append(TargetSpec(cell.range_m, cell.rcs))
    if cell.target2 is not None and cell.target2[1] > 0:
        targets.append(TargetSpec(*cell.target2))
    betas = np.array([reflected_beta(budget, t) for t in targets])
    taus = np.array([round_trip_delay(t.range_m) for t in targets])
    noise = settings.noise
    sd = math.sqrt(noise.estimate_variance(ofdm) / 2) if noise.enabled else 0.0
    m = ofdm.indices
    n = m.size

    h = np.empty((iterations, n), dtype=complex)
    for t in range(iterations):
        rng = _trial_rng(seed, cell, t)
        theta = rng.uniform(0, 2 * np.pi, len(targets))
        if full_phy:
            chans = [TwoPathChannel(alpha, b, th, tau) for b, th, tau in zip(betas, theta, taus)]
            h[t] = simulate_estimate(chans, alpha, ofdm, noise, rng).values
            continue
        row = np.full(n, complex(alpha))
        for b, th, tau in zip(betas, theta, taus):
            row += b * np.exp(-1j * (2 * np.pi * m * ofdm.subcarrier_spacing * tau - th))
        if sd > 0:
            row += sd * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        h[t] = row

    x = prepare_metric(h, settings.grid)
    batch = brute_force_batch(x, settings.grid, ofdm)
    logger.debug("cell %s done", cell.key)
    return CellTrials(cell, batch.eps_min, batch.rho_best)


def _cells(spec: CampaignSpec) -> list[Cell]:
    t2 = None if spec.target2_range is None else (spec.target2_range, spec.target2_rcs)
    cells = []
    for bw in spec.bandwidths:
        cells.append(Cell(bw, 0.0, None))
        for rcs in spec.rcs_values:
            for rho in spec.target1_ranges:
                cells.append(Cell(bw, rcs, rho, t2))
    return cells


def _run(args):
    return simulate_cell(*args)


def run_campaign(spec: CampaignSpec, settings: Settings, workers: int = 1) -> CampaignStats:
    """Simulate every (bandwidth, rcs, range) cell plus one no-target cell per bandwidth."""
    cells = _cells(spec)
    jobs = [(c, settings, spec.iterations, spec.seed, spec.full_phy) for c in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run, jobs))
    else:
        done = []
        for i, job in enumerate(jobs):
            done.append(_run(job))
            logger.info("cell %d/%d: %s", i + 1, len(jobs), job[0].key)
    stats = CampaignStats(trials={ct.cell: ct for ct in done}, epsilon_t=settings.grid.epsilon_t)
    stats.rows = _score(stats, settings.grid.epsilon_t)
    return stats


def _score(stats: CampaignStats, epsilon_t: float) -> list[CellStats]:
    rows = []
    for cell, ct in stats.trials.items():
        if cell.range_m is None:
            continue
        p_fa = float(np.mean(stats.trials[Cell(cell.bandwidth, 0.0, None)].detected(epsilon_t)))
        hit = ct.detected(epsilon_t)
        truth = [cell.range_m]
        nearest = math.nan
        if cell.target2 is not None:
            nearest = ct.rms_error(epsilon_t, [cell.range_m, cell.target2[0]])
        rows.append(CellStats(cell.bandwidth, cell.rcs, cell.range_m, ct.eps_min.size, int(hit.sum()),
                              ct.rms_error(epsilon_t, truth), float(hit.mean()), p_fa,
                              float(np.mean(ct.eps_min)), cell.target2, nearest))
    return rows


@dataclass(frozen=True)
class ThresholdRow:
    epsilon_t: float
    bandwidth: float
    rcs: float
    range_m: float
    trials: int
    p_d: float
    p_fa: float


def sweep_threshold(stats: CampaignStats, thresholds: Sequence[float]) -> list[ThresholdRow]:
    """Re-score stored residuals against each threshold without re-simulating."""
    if len(thresholds) == 0:
        raise ValueError("epsilon sweep is empty")
    rows = []
    for eps in thresholds:
        for cell, ct in stats.trials.items():
            if cell.range_m is None:
                continue
            ref = stats.trials[Cell(cell.bandwidth, 0.0, None)]
            rows.append(ThresholdRow(float(eps), cell.bandwidth, cell.rcs, cell.range_m, ct.eps_min.size,
                                     float(np.mean(ct.detected(eps))), float(np.mean(ref.detected(eps)))))
    return rows


def _f(v) -> str:
    return repr(float(v))


def stats_csv(stats: CampaignStats) -> str:
    two = any(r.target2 is not None for r in stats.rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_COLUMNS + (TARGET2_COLUMNS if two else ()))
    for r in stats.rows:
        row = [_f(r.bandwidth), _f(r.rcs), _f(r.range_m), r.trials, r.detected, _f(r.rms_error), _f(r.p_d), _f(r.p_fa)]
        if two:
            t2 = r.target2 or (math.nan, math.nan)
            row += [_f(t2[0]), _f(t2[1]), _f(r.rms_error_nearest)]
        w.writerow(row)
    return buf.getvalue()


def sweep_csv(rows: Sequence[ThresholdRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([_f(r.epsilon_t), _f(r.bandwidth), _f(r.rcs), _f(r.range_m), r.trials, _f(r.p_d), _f(r.p_fa)])
    return buf.getvalue()
