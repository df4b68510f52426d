"""Mean-normalized channel-energy metric and brute-force cosine-fit ranging.

The metric ``x[m] = |H[m]|^2 / mean|H|^2 - 1`` of a weak reflection behind a
strong direct path is close to ``(2 beta/alpha) cos(2 pi m Delta tau - theta)``.
Ranging fits ``A + B cos(C + D m)`` over a finite grid of offsets, phases and
ranges and keeps the candidate with the smallest squared residual.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .config import SPEED_OF_LIGHT, ChannelEstimate, EstimatorGrid, OfdmConfig

logger = logging.getLogger(__name__)

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class MetricVector:
    values: np.ndarray
    indices: tuple[int, ...]

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size != len(self.indices):
            raise ValueError(f"metric has {v.size} values for {len(self.indices)} indices")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "indices", tuple(int(m) for m in self.indices))

    def __len__(self):
        return self.values.size

    @property
    def m(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=float)


@dataclass(frozen=True)
class CosineFit:
    A: float
    B: float
    C: float
    D: float

    def __post_init__(self):
        if self.B < 0:
            raise ValueError(f"B must be >= 0, got {self.B}")
        object.__setattr__(self, "C", float(self.C) % TWO_PI)


@dataclass(frozen=True)
class RangingResult:
    """Outcome of one brute-force search.

    ``eps_min`` is the smallest residual over the whole grid and ``fit`` the
    candidate that achieved it, whether or not it beat the threshold;
    ``rho_best`` is that candidate's range. ``rho_min`` is only set when
    ``detected``.
    """

    detected: bool
    rho_min: Optional[float]
    eps_min: float
    fit: CosineFit
    rho_best: float

    def rescore(self, epsilon_t: float) -> "RangingResult":
        hit = bool(self.eps_min < epsilon_t)
        return RangingResult(hit, self.rho_best if hit else None, self.eps_min, self.fit, self.rho_best)


def energy_normalize(values: np.ndarray) -> np.ndarray:
    """Row-wise ``|H|^2 / mean(|H|^2) - 1`` for an array of estimates."""
    e = np.abs(np.asarray(values)) ** 2
    mean = e.mean(axis=-1, keepdims=True)
    if np.any(~(mean > 0)):
        raise ValueError("channel estimate has zero energy; metric undefined")
    return e / mean - 1.0


def mean_normalized_metric(estimate: ChannelEstimate) -> MetricVector:
    if len(estimate) == 0:
        raise ValueError("empty channel estimate")
    return MetricVector(energy_normalize(estimate.values), estimate.indices)


RMS_FLOOR = 1e-12


def rms_scale(x: np.ndarray, floor: float = RMS_FLOOR) -> np.ndarray:
    """Row-wise scaling to unit RMS.

    Rows with RMS at or below ``floor`` are returned as zeros: the metric is
    dimensionless, so anything that small is rounding left over from a flat
    channel and scaling it up would manufacture a pattern.
    """
    x = np.asarray(x, dtype=float)
    rms = np.sqrt(np.mean(x * x, axis=-1, keepdims=True))
    return np.divide(x, rms, out=np.zeros_like(x), where=rms > floor)


def rms_normalize(metric: MetricVector) -> MetricVector:
    return MetricVector(rms_scale(metric.values), metric.indices)


def estimate_cosine_magnitude(metric: MetricVector, quantile: float = 0.9) -> float:
    if not 0 < quantile <= 1:
        raise ValueError(f"quantile must be in (0, 1], got {quantile}")
    return float(np.quantile(np.abs(metric.values), quantile))


def rho_to_increment(rho, ofdm: OfdmConfig):
    """Per-subcarrier phase increment ``4 pi f_s rho / (c N_fft)`` of a target at ``rho``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("range must be >= 0")
    d = 4 * np.pi * ofdm.increment_sample_rate * rho / (SPEED_OF_LIGHT * ofdm.fft_size)
    return float(d) if d.ndim == 0 else d


def increment_to_rho(d, ofdm: OfdmConfig):
    return np.asarray(d) * SPEED_OF_LIGHT * ofdm.fft_size / (4 * np.pi * ofdm.increment_sample_rate)


def model_metric(fit: CosineFit, indices) -> MetricVector:
    m = np.asarray(indices, dtype=float)
    return MetricVector(fit.A + fit.B * np.cos(fit.C + fit.D * m), tuple(int(i) for i in indices))


def residual(model: MetricVector, observed: MetricVector) -> float:
    a, b = np.asarray(model.values), np.asarray(observed.values)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.sum((a - b) ** 2))


@dataclass(frozen=True)
class BatchRanging:
    """Brute-force outcomes for a stack of metric vectors (one row per trial)."""

    eps_min: np.ndarray
    rho_best: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def detected(self, epsilon_t: float) -> np.ndarray:
        return self.eps_min < epsilon_t

    def result(self, i: int, epsilon_t: float) -> RangingResult:
        fit = CosineFit(float(self.A[i]), float(self.B[i]), float(self.C[i]), float(self.D[i]))
        hit = bool(self.eps_min[i] < epsilon_t)
        rho = float(self.rho_best[i])
        return RangingResult(hit, rho if hit else None, float(self.eps_min[i]), fit, rho)


class _Grid:
    """Precomputed cosine table for one (grid, ofdm, indices) combination."""

    def __init__(self, grid: EstimatorGrid, ofdm: OfdmConfig, indices):
        if not (grid.set_a and grid.set_c and grid.set_rho):
            raise ValueError("estimator grid is empty")
        self.m = np.asarray(indices, dtype=float)
        self.rho = np.asarray(grid.set_rho, dtype=float)
        self.a = np.asarray(grid.set_a, dtype=float)
        self.c = np.asarray(grid.set_c, dtype=float)
        self.s = np.array([1.0, -1.0]) if grid.signed_b else np.array([1.0])
        self.d = rho_to_increment(self.rho, ofdm) * np.ones_like(self.rho)
        # cos(C + D m), shape (rho, C, m)
        self.cos = np.cos(self.c[None, :, None] + self.d[:, None, None] * self.m[None, None, :])
        self.q = np.sum(self.cos**2, axis=-1)
        self.r = np.sum(self.cos, axis=-1)
        self.shape = (self.rho.size, self.a.size, self.c.size, self.s.size)

    def unravel(self, flat):
        return np.unravel_index(flat, self.shape)

    def direct(self, x: np.ndarray, b: float, ir, ia, ic, js) -> np.ndarray:
        model = self.a[ia][:, None] + (self.s[js] * b)[:, None] * self.cos[ir, ic]
        return np.sum((model - x[None, :]) ** 2, axis=-1)


_GRID_CACHE: dict = {}


def _grid_table(grid: EstimatorGrid, ofdm: OfdmConfig, indices) -> _Grid:
    key = (grid.set_a, grid.set_c, grid.set_rho, grid.signed_b, ofdm, tuple(indices))
    table = _GRID_CACHE.get(key)
    if table is None:
        if len(_GRID_CACHE) > 32:
            _GRID_CACHE.clear()
        table = _GRID_CACHE[key] = _Grid(grid, ofdm, indices)
    return table


def brute_force_batch(x: np.ndarray, grid: EstimatorGrid, ofdm: OfdmConfig, indices=None,
                      chunk: int = 256) -> BatchRanging:
    """Exhaustive search for every row of ``x``.

    Candidates are visited in the order range, offset ``A``, phase ``C`` and,
    when ``grid.signed_b``, the sign of ``B``; exact ties go to the first one
    visited. Residuals are screened with a closed-form expansion and the
    near-minimal candidates are re-evaluated directly, so the reported
    ``eps_min`` is the plain sum of squared differences.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if indices is None:
        indices = ofdm.nonzero_subcarriers
    g = _grid_table(grid, ofdm, indices)
    if x.shape[1] != g.m.size:
        raise ValueError(f"metric length {x.shape[1]} does not match {g.m.size} subcarriers")
    n = g.m.size
    t = x.shape[0]
    b = np.quantile(np.abs(x), grid.b_quantile, axis=1)
    out = {k: np.empty(t) for k in ("eps", "rho", "A", "B", "C", "D")}
    for lo in range(0, t, chunk):
        xs = x[lo:lo + chunk]
        bs = b[lo:lo + chunk]
        sxx = np.sum(xs * xs, axis=1)
        sx = np.sum(xs, axis=1)
        p = np.einsum("tm,rcm->trc", xs, g.cos)
        # sum (A + sB cos - x)^2 expanded, shape (t, rho, A, C, sign)
        A = g.a[None, None, :, None, None]
        S = g.s[None, None, None, None, :]
        B = bs[:, None, None, None, None]
        res = (sxx[:, None, None, None, None] + n * A**2 - 2 * A * sx[:, None, None, None, None]
               - 2 * S * B * p[:, :, None, :, None] + B**2 * g.q[None, :, None, :, None]
               + 2 * S * A * B * g.r[None, :, None, :, None])
        flat = res.reshape(res.shape[0], -1)
        mins = flat.min(axis=1)
        tol = 1e-9 * np.maximum(1.0, sxx + bs**2 * n)
        for k in range(flat.shape[0]):
            cand = np.flatnonzero(flat[k] <= mins[k] + tol[k])
            ir, ia, ic, js = g.unravel(cand)
            exact = g.direct(xs[k], bs[k], ir, ia, ic, js)
            j = int(np.argmin(exact))
            row = lo + k
            sign = g.s[js[j]]
            out["eps"][row] = exact[j]
            out["rho"][row] = g.rho[ir[j]]
            out["A"][row] = g.a[ia[j]]
            out["B"][row] = bs[k]
            out["C"][row] = (g.c[ic[j]] + (np.pi if sign < 0 else 0.0)) % TWO_PI
            out["D"][row] = g.d[ir[j]]
    return BatchRanging(out["eps"], out["rho"], out["A"], out["B"], out["C"], out["D"])


def brute_force_range(observed: MetricVector, grid: EstimatorGrid, ofdm: OfdmConfig) -> RangingResult:
    """Grid search over ``(rho, A, C)`` with ``B`` from the magnitude quantile.

    A negative ``B`` found with ``signed_b`` is reported as ``B >= 0`` with
    ``C`` advanced by pi, which is the same model.
    """
    batch = brute_force_batch(observed.values[None, :], grid, ofdm, observed.indices)
    return batch.result(0, grid.epsilon_t)


def prepare_metric(values: np.ndarray, grid: EstimatorGrid,
                   transform: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """Estimates to search-ready metric rows: normalize, optional transform, scale."""
    x = energy_normalize(values)
    if transform is not None:
        x = transform(x)
    if grid.metric_scale == "rms":
        x = rms_scale(x)
    return x


def estimate_range(estimate: ChannelEstimate, grid: EstimatorGrid, ofdm: OfdmConfig,
                   transform: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> RangingResult:
    """Full pipeline from one channel estimate to a ranging decision."""
    x = prepare_metric(estimate.values, grid, transform)
    return brute_force_range(MetricVector(x, estimate.indices), grid, ofdm)
