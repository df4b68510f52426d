"""Continuous-delay check of the cosine approximation.

The exact normalized energy of a single reflection is fitted, over the delay
only, with the small-reflection cosine model. The gap between the fitted and
the true range is the error the approximation alone introduces.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .channel import TargetSpec, direct_alpha, reflected_beta, round_trip_delay
from .config import LinkBudget, NelderMeadConfig, NoiseModel, OfdmConfig
from .ranging import MetricVector, energy_normalize, increment_to_rho

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimplexResult:
    x: np.ndarray
    fun: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray


def nelder_mead(f: Callable[[np.ndarray], np.ndarray], x0, step,
                cfg: NelderMeadConfig = NelderMeadConfig(), xatol: Optional[float] = None) -> SimplexResult:
    """Minimize many independent problems at once with the Nelder-Mead simplex.

    ``f`` maps points of shape ``(T, n)`` to values of shape ``(T,)``; row
    ``t`` of every call belongs to problem ``t``. ``step`` (broadcast to
    ``(T, n)``) offsets the initial simplex vertices along each axis. A problem
    stops once every vertex lies within ``xatol`` of the best one in each
    coordinate; problems still moving after ``cfg.max_iter`` iterations are
    returned with ``converged`` false and their best vertex so far.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    t, n = x0.shape
    xatol = cfg.xatol if xatol is None else xatol
    step = np.broadcast_to(np.asarray(step, dtype=float), (t, n))
    sim = np.repeat(x0[:, None, :], n + 1, axis=1)
    for k in range(n):
        sim[:, k + 1, k] += step[:, k]
    fs = np.stack([f(sim[:, j]) for j in range(n + 1)], axis=1)
    rho, chi, psi, sigma = cfg.reflection, cfg.expansion, cfg.contraction, cfg.shrink
    rows = np.arange(t)
    iters = np.zeros(t, dtype=int)
    done = np.zeros(t, dtype=bool)

    for it in range(cfg.max_iter + 1):
        order = np.argsort(fs, axis=1, kind="stable")
        sim = sim[rows[:, None], order]
        fs = fs[rows[:, None], order]
        spread = np.max(np.abs(sim[:, 1:] - sim[:, :1]), axis=(1, 2))
        done |= spread <= xatol
        if done.all() or it == cfg.max_iter:
            break
        act = ~done
        iters[act] += 1

        best, worst = sim[:, 0], sim[:, -1]
        cen = sim[:, :-1].mean(axis=1)
        xr = cen + rho * (cen - worst)
        fr = f(xr)
        xe = cen + rho * chi * (cen - worst)
        fe = f(xe)
        xoc = cen + psi * rho * (cen - worst)
        foc = f(xoc)
        xic = cen - psi * (cen - worst)
        fic = f(xic)

        f_best, f_second, f_worst = fs[:, 0], fs[:, -2], fs[:, -1]
        new_x = worst.copy()
        new_f = f_worst.copy()
        shrink = np.zeros(t, dtype=bool)

        expand = fr < f_best
        take_e = expand & (fe < fr)
        take_r = (expand & ~take_e) | (~expand & (fr < f_second))
        contract = ~expand & ~(fr < f_second)
        outside = contract & (fr < f_worst)
        inside = contract & ~outside
        take_oc = outside & (foc <= fr)
        take_ic = inside & (fic < f_worst)
        shrink = (outside & ~take_oc) | (inside & ~take_ic)

        for mask, xv, fv in ((take_e, xe, fe), (take_r, xr, fr), (take_oc, xoc, foc), (take_ic, xic, fic)):
            new_x[mask] = xv[mask]
            new_f[mask] = fv[mask]
        upd = act & ~shrink
        sim[upd, -1] = new_x[upd]
        fs[upd, -1] = new_f[upd]

        shr = act & shrink
        if shr.any():
            for j in range(1, n + 1):
                sim[shr, j] = best[shr] + sigma * (sim[shr, j] - best[shr])
                fs[shr, j] = f(sim[:, j])[shr]

    return SimplexResult(sim[:, 0].copy(), fs[:, 0].copy(), iters, done)


@dataclass(frozen=True)
class DelayFit:
    tau: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray


def cosine_model(tau, ratio, theta, ofdm: OfdmConfig) -> np.ndarray:
    """``(2 beta/alpha) cos(2 pi m Delta tau - theta)`` per row; inputs broadcast over rows."""
    m = ofdm.indices
    tau = np.asarray(tau, dtype=float).reshape(-1, 1)
    ratio = np.asarray(ratio, dtype=float).reshape(-1, 1)
    theta = np.asarray(theta, dtype=float).reshape(-1, 1)
    return 2 * ratio * np.cos(2 * np.pi * m * ofdm.subcarrier_spacing * tau - theta)


def nelder_mead_delay_fit(observed, initial_tau, ratio, theta, ofdm: OfdmConfig,
                          cfg: NelderMeadConfig = NelderMeadConfig()) -> DelayFit:
    """Least-squares delay of the cosine model with ``beta/alpha`` and ``theta`` held at truth.

    ``observed`` is a MetricVector or an array with one metric per row; the
    other arguments broadcast over rows. The simplex starts at
    ``initial_tau`` with a relative spread of ``cfg.initial_spread`` (or that
    fraction of a sample period when the start is zero).
    """
    x = observed.values if isinstance(observed, MetricVector) else observed
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rows = x.shape[0]
    tau0 = np.broadcast_to(np.asarray(initial_tau, dtype=float), (rows,)).copy()
    if np.any(tau0 < 0):
        raise ValueError("initial_tau must be >= 0")
    ratio = np.broadcast_to(np.asarray(ratio, dtype=float), (rows,))
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (rows,))
    step = np.where(tau0 > 0, cfg.initial_spread * tau0, cfg.initial_spread / ofdm.bandwidth)

    def objective(p):
        return np.sum((x - cosine_model(p[:, 0], ratio, theta, ofdm)) ** 2, axis=1)

    res = nelder_mead(objective, tau0[:, None], step[:, None], cfg)
    if not res.converged.all():
        logger.info("%d of %d delay fits hit the iteration limit", int(np.sum(~res.converged)), rows)
    return DelayFit(res.x[:, 0], res.converged, res.iterations)


@dataclass(frozen=True)
class VerificationPoint:
    true_range: float
    bandwidth: float
    rms_error: float
    trials: int
    failures: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.rms_error >= 0:
            raise ValueError("rms_error must be >= 0")


def two_path_rows(alpha, beta, theta, tau, ofdm: OfdmConfig) -> np.ndarray:
    """``alpha + beta e^{-j(2 pi m Delta tau - theta)}`` with one row per parameter set."""
    m = ofdm.indices
    tau = np.asarray(tau, dtype=float).reshape(-1, 1)
    theta = np.asarray(theta, dtype=float).reshape(-1, 1)
    beta = np.asarray(beta, dtype=float).reshape(-1, 1)
    h = alpha + beta * np.exp(-1j * (2 * np.pi * m * ofdm.subcarrier_spacing * tau - theta))
    return h


def verification_sweep(ranges: Sequence[float], ofdm: OfdmConfig, trials: int, seed: int,
                       budget: LinkBudget = LinkBudget(), cfg: NelderMeadConfig = NelderMeadConfig(),
                       noise: Optional[NoiseModel] = None, exclude_failures: bool = False,
                       theta: Optional[float] = None) -> list[VerificationPoint]:
    """RMS range error of the delay-only fit at each true range.

    Each trial draws the reflection phase uniformly (unless ``theta`` is
    fixed), builds the exact channel for ``budget`` with a target of the
    budget's RCS, and fits from the true delay. With ``noise`` enabled,
    complex Gaussian estimate noise of the two-symbol LS variance is added
    first. Trials that hit the iteration limit are counted as failures and
    kept in the RMS unless ``exclude_failures``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    alpha = direct_alpha(budget)
    points = []
    for rho in ranges:
        rng = np.random.default_rng([seed, int(round(rho * 1000))])
        beta = reflected_beta(budget, TargetSpec(rho, budget.rcs))
        tau = round_trip_delay(rho)
        th = rng.uniform(0, 2 * np.pi, trials) if theta is None else np.full(trials, float(theta))
        h = two_path_rows(alpha, beta, th, tau, ofdm)
        if noise is not None and noise.enabled:
            var = noise.estimate_variance(ofdm)
            h = h + np.sqrt(var / 2) * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))
        x = energy_normalize(h)
        fit = nelder_mead_delay_fit(x, tau, beta / alpha, th, ofdm, cfg)
        err = increment_to_rho(2 * np.pi * ofdm.subcarrier_spacing * fit.tau, ofdm) - rho
        keep = fit.converged if exclude_failures else np.ones(trials, dtype=bool)
        if not keep.any():
            keep = ~keep
        rms = float(np.sqrt(np.mean(err[keep] ** 2)))
        points.append(VerificationPoint(float(rho), ofdm.bandwidth, rms, trials, int(np.sum(~fit.converged))))
        logger.debug("verify %.1f m: rms %.4f m", rho, rms)
    return points
