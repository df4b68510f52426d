"""Recorded channel-estimate ingestion, slope calibration and replay ranging.

Estimate files are CSV with one row per (packet, subcarrier)::

    packet_id,subcarrier,re,im[,timestamp_s][,true_range_m]

Summary files hold one row per true range::

    true_range_m,count,mean_m,std_m,rms_error_m
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO, Union

import numpy as np

from .channel import TargetSpec, direct_alpha, reflected_beta, round_trip_delay
from .config import DEFAULT_SUBCARRIERS, ChannelEstimate, EstimatorGrid, LinkBudget, NoiseModel, OfdmConfig
from .ranging import MetricVector, RangingResult, brute_force_batch, prepare_metric

logger = logging.getLogger(__name__)

PathOrFile = Union[str, os.PathLike, TextIO]

ESTIMATE_COLUMNS = ("packet_id", "subcarrier", "re", "im")
OPTIONAL_COLUMNS = ("timestamp_s", "true_range_m")
SUMMARY_COLUMNS = ("true_range_m", "count", "mean_m", "std_m", "rms_error_m")


class DataFormatError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, source: str = "<input>", line: Optional[int] = None):
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class PacketRecord:
    packet_id: int
    estimate: ChannelEstimate
    timestamp: Optional[float] = None
    true_range: Optional[float] = None
    range_bias: float = 0.125

    def __post_init__(self):
        if len(self.estimate) != 52:
            raise ValueError(f"packet {self.packet_id}: estimate has {len(self.estimate)} values, expected 52")


def _open(src: PathOrFile, mode: str):
    if hasattr(src, "read") or hasattr(src, "write"):
        return src, False, getattr(src, "name", "<stream>")
    return open(src, mode, encoding="utf-8", newline=""), True, os.fspath(src)


def _float(text: str, column: str, source: str, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"column {column!r}: {text!r} is not a number", source, line) from None
    if not math.isfinite(v):
        raise DataFormatError(f"column {column!r}: non-finite value {text!r}", source, line)
    return v


def _int(text: str, column: str, source: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataFormatError(f"column {column!r}: {text!r} is not an integer", source, line) from None


def parse_estimates(src: PathOrFile, range_bias: float = 0.125,
                    subcarriers: Sequence[int] = DEFAULT_SUBCARRIERS) -> list[PacketRecord]:
    """Read an estimate CSV into packets ordered by first appearance."""
    fh, owned, source = _open(src, "r")
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError("empty file", source, 1) from None
        missing = [c for c in ESTIMATE_COLUMNS if c not in header]
        if missing:
            raise DataFormatError(f"missing columns {', '.join(missing)}", source, 1)
        unknown = [c for c in header if c not in ESTIMATE_COLUMNS + OPTIONAL_COLUMNS]
        if unknown:
            raise DataFormatError(f"unknown columns {', '.join(unknown)}", source, 1)
        col = {name: i for i, name in enumerate(header)}
        wanted = set(subcarriers)
        packets: dict[int, dict] = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"expected {len(header)} fields, got {len(row)}", source, line)
            pid = _int(row[col["packet_id"]], "packet_id", source, line)
            m = _int(row[col["subcarrier"]], "subcarrier", source, line)
            if m not in wanted:
                raise DataFormatError(f"subcarrier {m} is not an occupied index", source, line)
            value = complex(_float(row[col["re"]], "re", source, line), _float(row[col["im"]], "im", source, line))
            pkt = packets.setdefault(pid, {"values": {}, "line": line})
            if m in pkt["values"]:
                raise DataFormatError(f"duplicate (packet_id, subcarrier) = ({pid}, {m})", source, line)
            pkt["values"][m] = value
            for name in OPTIONAL_COLUMNS:
                if name not in col or not row[col[name]].strip():
                    continue
                v = _float(row[col[name]], name, source, line)
                if pkt.setdefault(name, v) != v:
                    raise DataFormatError(f"packet {pid} has conflicting {name} values", source, line)
    finally:
        if owned:
            fh.close()

    records = []
    for pid, pkt in packets.items():
        absent = sorted(wanted - set(pkt["values"]))
        if absent:
            raise DataFormatError(f"packet {pid} is missing subcarrier(s) {absent}", source, pkt["line"])
        values = np.array([pkt["values"][m] for m in subcarriers])
        est = ChannelEstimate(values, tuple(subcarriers), "ingested")
        records.append(PacketRecord(pid, est, pkt.get("timestamp_s"), pkt.get("true_range_m"), range_bias))
    if not records:
        raise DataFormatError("no packets", source)
    logger.info("read %d packets from %s", len(records), source)
    return records


def write_estimates(records: Iterable[PacketRecord], dst: PathOrFile) -> None:
    """Write packets so that :func:`parse_estimates` reads them back bit-identically."""
    records = list(records)
    has_ts = any(r.timestamp is not None for r in records)
    has_truth = any(r.true_range is not None for r in records)
    header = list(ESTIMATE_COLUMNS) + (["timestamp_s"] if has_ts else []) + (["true_range_m"] if has_truth else [])
    fh, owned, _ = _open(dst, "w")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in records:
            extra = []
            if has_ts:
                extra.append("" if r.timestamp is None else repr(float(r.timestamp)))
            if has_truth:
                extra.append("" if r.true_range is None else repr(float(r.true_range)))
            for m, v in zip(r.estimate.indices, r.estimate.values):
                w.writerow([r.packet_id, m, repr(float(v.real)), repr(float(v.imag))] + extra)
    finally:
        if owned:
            fh.close()


def three_tap_energy(alpha, beta, gamma, tau, tau_d, theta, phi, ofdm: OfdmConfig) -> np.ndarray:
    """``|alpha + beta e^{-j(2 pi m Delta tau + theta)} + gamma e^{-j(2 pi m Delta tau_d + phi)}|^2``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    return np.abs(three_tap_estimate(alpha, beta, gamma, tau, tau_d, theta, phi, ofdm)) ** 2


def three_tap_estimate(alpha, beta, gamma, tau, tau_d, theta, phi, ofdm: OfdmConfig) -> np.ndarray:
    w = 2 * np.pi * ofdm.indices * ofdm.subcarrier_spacing
    return alpha + beta * np.exp(-1j * (w * tau + theta)) + gamma * np.exp(-1j * (w * tau_d + phi))


def _detrend(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    basis = np.stack([m, np.ones_like(m)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, np.atleast_2d(x).T, rcond=None)
    out = np.atleast_2d(x) - (basis @ coef).T
    # a second pass removes the rounding left by the first
    coef, *_ = np.linalg.lstsq(basis, out.T, rcond=None)
    out = out - (basis @ coef).T
    return out.reshape(np.shape(x))


def remove_linear_slope(metric, indices=None):
    """Subtract the least-squares line in ``m`` from a metric (or each row of an array)."""
    if isinstance(metric, MetricVector):
        return MetricVector(_detrend(metric.values, metric.m), metric.indices)
    m = np.asarray(DEFAULT_SUBCARRIERS if indices is None else indices, dtype=float)
    return _detrend(np.asarray(metric, dtype=float), m)


@dataclass(frozen=True)
class SummaryRow:
    true_range: Optional[float]
    count: int
    mean: float
    std: float
    rms_error: float


@dataclass
class ReplayReport:
    results: list[tuple[int, Optional[RangingResult], float]] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)
    summary: list[SummaryRow] = field(default_factory=list)


def summarize(groups: dict) -> list[SummaryRow]:
    rows = []
    for truth in sorted(groups, key=lambda t: (t is None, t if t is not None else 0.0)):
        est = np.asarray(groups[truth], dtype=float)
        if est.size == 0:
            rows.append(SummaryRow(truth, 0, math.nan, math.nan, math.nan))
            continue
        rms = float(np.sqrt(np.mean((est - truth) ** 2))) if truth is not None else math.nan
        rows.append(SummaryRow(truth, int(est.size), float(est.mean()), float(est.std()), rms))
    return rows


def replay_ranging(records: Sequence[PacketRecord], grid: EstimatorGrid, ofdm: OfdmConfig,
                   calibrate: bool = False) -> ReplayReport:
    """Range every packet and aggregate detected estimates by true range.

    Estimates are ``rho_min - range_bias``. Undetected packets count toward
    nothing but appear in ``results`` with their residual; packets that cannot
    be processed are listed in ``failures``.
    """
    if not records:
        raise ValueError("no records to replay")
    report = ReplayReport()
    groups: dict = {}
    transform = (lambda x: remove_linear_slope(x, ofdm.nonzero_subcarriers)) if calibrate else None
    for rec in records:
        groups.setdefault(rec.true_range, [])
        try:
            x = prepare_metric(rec.estimate.values[None, :], grid, transform)
            batch = brute_force_batch(x, grid, ofdm, rec.estimate.indices)
        except (ValueError, FloatingPointError) as exc:
            report.failures.append((rec.packet_id, str(exc)))
            logger.warning("packet %d skipped: %s", rec.packet_id, exc)
            continue
        res = batch.result(0, grid.epsilon_t)
        est = res.rho_min - rec.range_bias if res.detected else math.nan
        report.results.append((rec.packet_id, res, est))
        if res.detected:
            groups[rec.true_range].append(est)
    report.summary = summarize(groups)
    return report


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_summary(rows: Iterable[SummaryRow], dst: PathOrFile) -> None:
    fh, owned, _ = _open(dst, "w")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.true_range), r.count, _fmt(r.mean), _fmt(r.std), _fmt(r.rms_error)])
    finally:
        if owned:
            fh.close()


def parse_summary(src: PathOrFile) -> list[SummaryRow]:
    fh, owned, source = _open(src, "r")
    try:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if tuple(header) != SUMMARY_COLUMNS:
            raise DataFormatError(f"header must be {','.join(SUMMARY_COLUMNS)}", source, 1)
        rows = []
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != len(SUMMARY_COLUMNS):
                raise DataFormatError(f"expected {len(SUMMARY_COLUMNS)} fields, got {len(row)}", source, line)
            truth = None if not row[0].strip() else _float(row[0], "true_range_m", source, line)
            vals = []
            for name, text in zip(SUMMARY_COLUMNS[2:], row[2:]):
                try:
                    vals.append(float(text))
                except ValueError:
                    raise DataFormatError(f"column {name!r}: {text!r} is not a number", source, line) from None
            rows.append(SummaryRow(truth, _int(row[1], "count", source, line), *vals))
    finally:
        if owned:
            fh.close()
    return rows


def summary_text(rows: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    write_summary(rows, buf)
    return buf.getvalue()


# Post-calibration statistics reported for a 20 MHz hardware rig: (distance, points, mean, std)
REPORTED_STATISTICS = (
    (5.0, 100, 6.00, 0.00),
    (10.0, 100, 9.96, 0.67),
    (15.0, 100, 14.03, 0.30),
    (20.0, 87, 19.48, 0.50),
    (25.0, 100, 25.96, 0.24),
    (30.0, 100, 29.12, 0.33),
)


def reported_summary() -> list[SummaryRow]:
    """Reported hardware statistics as summary rows; RMS follows from mean and std."""
    return [SummaryRow(d, n, mu, sd, round(math.hypot(mu - d, sd), 4)) for d, n, mu, sd in REPORTED_STATISTICS]


@dataclass(frozen=True)
class FixtureSpec:
    """Synthetic measurement-like packets from a static scene.

    The direct path and reflection follow the link budget for a target of
    ``rcs`` placed at ``true_range + range_bias`` (cabling adds the bias).
    The reflection phase is drawn once per distance since the scene does not
    move between packets; only the thermal estimate noise changes. A second
    direct tap ``slope_ratio * alpha`` lagging by ``slope_delay_samples``
    tilts the energy across the band; ``slope_ratio = 0`` gives already
    calibrated data. ``reflection_phase`` pins the phase instead of drawing it.
    """

    true_ranges: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    packets: int = 100
    rcs: float = 1.0
    slope_ratio: float = 0.0
    slope_delay_samples: float = 0.1
    slope_phase: float = math.pi / 2
    range_bias: float = 0.125
    reflection_phase: Optional[float] = None


def make_fixture(spec: FixtureSpec, ofdm: OfdmConfig, seed: int, budget: LinkBudget = LinkBudget(),
                 noise: NoiseModel = NoiseModel()) -> list[PacketRecord]:
    alpha = direct_alpha(budget)
    tau_d = spec.slope_delay_samples / ofdm.bandwidth
    sd = math.sqrt(noise.estimate_variance(ofdm) / 2)
    records = []
    pid = 0
    for truth in spec.true_ranges:
        rng = np.random.default_rng([seed, int(round(truth * 1000))])
        rho = truth + spec.range_bias
        beta = reflected_beta(budget, TargetSpec(rho, spec.rcs))
        theta = rng.uniform(0, 2 * np.pi)
        if spec.reflection_phase is not None:
            theta = spec.reflection_phase
        clean = three_tap_estimate(alpha, beta, spec.slope_ratio * alpha, round_trip_delay(rho), tau_d,
                                   theta, spec.slope_phase, ofdm)
        for k in range(spec.packets):
            h = clean + sd * (rng.standard_normal(clean.size) + 1j * rng.standard_normal(clean.size))
            est = ChannelEstimate(h, ofdm.nonzero_subcarriers, "ingested")
            records.append(PacketRecord(pid, est, timestamp=k * 1e-3, true_range=truth, range_bias=spec.range_bias))
            pid += 1
    return records
