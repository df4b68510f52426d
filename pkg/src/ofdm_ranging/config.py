"""Shared domain types, physical constants and the key-value config format.

Config grammar (UTF-8, one entry per line)::

    # comment                      full-line or trailing comments start with '#'
    key = value

``value`` is one of

* a number, optionally an arithmetic expression using ``pi`` (``3*pi/16``),
* ``true`` / ``false``,
* a bare word (only for enumerated keys such as ``metric_scale``),
* a comma-separated list of numbers,
* an inclusive range ``start:step:stop`` (expressions allowed in each part).

Keys are snake_case with a unit suffix. Powers and gains may be given either
linear (``tx_power_w``, ``feedthrough``) or in dB (``tx_power_dbm``,
``feedthrough_db``); they are stored linear. Unknown keys are rejected.
"""

from __future__ import annotations

import ast
import logging
import math
import operator
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
BOLTZMANN = 1.380649e-23

CONFIG_ENV_VAR = "OFDM_RANGING_CONFIG"

DEFAULT_SUBCARRIERS = tuple(range(-26, 0)) + tuple(range(1, 27))


class ConfigError(ValueError):
    """Invalid configuration value, tagged with the offending key."""

    def __init__(self, key: str, value: Any, reason: str):
        self.key = key
        self.value = value
        super().__init__(f"{key}={value!r}: {reason}")


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


@dataclass(frozen=True)
class OfdmConfig:
    """OFDM numerology.

    ``ranging_sample_rate`` is the sample rate used in the delay-increment
    mapping ``D = 4*pi*f_s*rho / (c*fft_size)``; it defaults to the bandwidth
    so that ``f_s / fft_size`` equals the subcarrier spacing. The PHY sample
    rate (``oversample * bandwidth``) only sets the thermal-noise bandwidth.
    """

    bandwidth: float = 20e6
    fft_size: int = 64
    nonzero_subcarriers: tuple[int, ...] = DEFAULT_SUBCARRIERS
    oversample: int = 4
    ranging_sample_rate: Optional[float] = None

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ConfigError("bandwidth_hz", self.bandwidth, "must be > 0")
        if self.fft_size < 2:
            raise ConfigError("fft_size", self.fft_size, "must be >= 2")
        if self.oversample < 1:
            raise ConfigError("oversample", self.oversample, "must be >= 1")
        sc = tuple(int(m) for m in self.nonzero_subcarriers)
        object.__setattr__(self, "nonzero_subcarriers", sc)
        if not sc or 0 in sc:
            raise ConfigError("nonzero_subcarriers", sc, "must be nonempty and exclude DC")
        if sorted(sc) != sorted(-m for m in sc) or len(set(sc)) != len(sc):
            raise ConfigError("nonzero_subcarriers", sc, "must be symmetric about 0 without repeats")
        if max(abs(m) for m in sc) >= self.fft_size // 2:
            raise ConfigError("nonzero_subcarriers", sc, "exceeds the FFT size")
        if self.ranging_sample_rate is not None and not self.ranging_sample_rate > 0:
            raise ConfigError("ranging_sample_rate_hz", self.ranging_sample_rate, "must be > 0")

    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth / self.fft_size

    @property
    def n_subcarriers(self) -> int:
        return len(self.nonzero_subcarriers)

    @property
    def indices(self) -> np.ndarray:
        return np.asarray(self.nonzero_subcarriers, dtype=float)

    @property
    def phy_sample_rate(self) -> float:
        return self.oversample * self.bandwidth

    @property
    def increment_sample_rate(self) -> float:
        return self.bandwidth if self.ranging_sample_rate is None else self.ranging_sample_rate

    @property
    def symbol_period(self) -> float:
        return 1.0 / self.bandwidth


@dataclass(frozen=True)
class LinkBudget:
    """Radar link budget, all quantities linear SI (W, power ratios, Hz, m, m^2)."""

    tx_power: float = 0.1
    feedthrough: float = 1e-7
    direct_gain_tx: float = 1.0
    direct_gain_rx: float = 1.0
    reflect_gain_tx: float = db_to_linear(15.0)
    reflect_gain_rx: float = db_to_linear(15.0)
    carrier_frequency: float = 5.89e9
    direct_path_range: float = 0.1
    rcs: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f.name, v, "must be finite and nonnegative")
        if not self.tx_power > 0:
            raise ConfigError("tx_power", self.tx_power, "must be > 0")
        if not self.carrier_frequency > 0:
            raise ConfigError("carrier_frequency_hz", self.carrier_frequency, "must be > 0")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency


def _default_phases() -> tuple[float, ...]:
    return tuple(k * math.pi / 16 for k in range(16))


@dataclass(frozen=True)
class EstimatorGrid:
    """Brute-force search sets and detection threshold.

    ``signed_b`` also tries ``-B`` for every candidate, which extends the
    half-circle phase set to the full circle. ``metric_scale='rms'`` scales
    the metric to unit RMS before the search so that ``set_a`` and
    ``epsilon_t`` are independent of the direct-to-reflected power ratio.
    """

    set_a: tuple[float, ...] = (-1.0, -0.5, 0.0, 0.5, 1.0)
    set_c: tuple[float, ...] = field(default_factory=_default_phases)
    set_rho: tuple[float, ...] = tuple(float(r) for r in range(5, 51))
    epsilon_t: float = 25.0
    b_quantile: float = 0.9
    signed_b: bool = True
    metric_scale: str = "rms"

    def __post_init__(self):
        for name in ("set_a", "set_c", "set_rho"):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            if not vals:
                raise ConfigError(name, vals, "must contain at least one value")
            if not all(math.isfinite(v) for v in vals):
                raise ConfigError(name, vals, "values must be finite")
        rho = self.set_rho
        if any(r <= 0 for r in rho) or any(b <= a for a, b in zip(rho, rho[1:])):
            raise ConfigError("set_rho_m", rho, "must be strictly increasing and > 0")
        if not self.epsilon_t > 0:
            raise ConfigError("epsilon_t", self.epsilon_t, "must be > 0")
        if not 0 < self.b_quantile <= 1:
            raise ConfigError("b_quantile", self.b_quantile, "must lie in (0, 1]")
        if self.metric_scale not in ("rms", "raw"):
            raise ConfigError("metric_scale", self.metric_scale, "must be 'rms' or 'raw'")


@dataclass(frozen=True)
class NoiseModel:
    noise_figure_db: float = 5.0
    temperature: float = 290.0
    enabled: bool = True

    def __post_init__(self):
        if not self.noise_figure_db >= 0:
            raise ConfigError("noise_figure_db", self.noise_figure_db, "must be >= 0")
        if not self.temperature > 0:
            raise ConfigError("temperature_k", self.temperature, "must be > 0")

    def sample_variance(self, ofdm: OfdmConfig) -> float:
        """Per-sample complex noise variance N0 at the PHY sample rate.

        No receive channel-select filter is modelled, so decimating to the
        symbol rate keeps the full PHY-bandwidth variance.
        """
        if not self.enabled:
            return 0.0
        return BOLTZMANN * self.temperature * ofdm.phy_sample_rate * db_to_linear(self.noise_figure_db)

    def estimate_variance(self, ofdm: OfdmConfig, symbols: int = 2) -> float:
        """Per-bin variance of the least-squares estimate from ``symbols`` LTF repeats."""
        bin_gain = ofdm.fft_size / ofdm.n_subcarriers
        return self.sample_variance(ofdm) / (symbols * bin_gain)


@dataclass(frozen=True)
class NelderMeadConfig:
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    initial_spread: float = 0.05
    xatol: float = 1e-12
    max_iter: int = 500

    def __post_init__(self):
        if not (self.reflection > 0 and self.expansion > 1 and 0 < self.contraction < 1 and 0 < self.shrink < 1):
            raise ConfigError("nm_*", (self.reflection, self.expansion, self.contraction, self.shrink),
                              "need reflection>0, expansion>1, 0<contraction<1, 0<shrink<1")
        if not self.initial_spread > 0:
            raise ConfigError("nm_initial_spread", self.initial_spread, "must be > 0")
        if not self.xatol > 0 or self.max_iter < 1:
            raise ConfigError("nm_xatol_s", (self.xatol, self.max_iter), "need xatol>0, max_iter>=1")


@dataclass(frozen=True)
class CampaignSpec:
    bandwidths: tuple[float, ...] = (20e6,)
    target1_ranges: tuple[float, ...] = tuple(float(r) for r in range(5, 51, 5))
    rcs_values: tuple[float, ...] = (0.01, 0.1, 1.0)
    target2_range: Optional[float] = None
    target2_rcs: float = 1.0
    iterations: int = 5000
    seed: int = 0
    epsilon_sweep: Optional[tuple[float, ...]] = None
    full_phy: bool = False

    def __post_init__(self):
        for name in ("bandwidths", "target1_ranges", "rcs_values"):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            if not vals:
                raise ConfigError(name, vals, "must be nonempty")
        if any(b <= 0 for b in self.bandwidths):
            raise ConfigError("bandwidths_hz", self.bandwidths, "must be > 0")
        if any(r <= 0 for r in self.target1_ranges):
            raise ConfigError("target1_ranges_m", self.target1_ranges, "must be > 0")
        if any(s < 0 for s in self.rcs_values):
            raise ConfigError("rcs_values_m2", self.rcs_values, "must be >= 0")
        if self.target2_range is not None and not self.target2_range > 0:
            raise ConfigError("target2_range_m", self.target2_range, "must be > 0")
        if self.target2_rcs < 0:
            raise ConfigError("target2_rcs_m2", self.target2_rcs, "must be >= 0")
        if self.iterations < 1:
            raise ConfigError("iterations", self.iterations, "must be >= 1")
        if self.epsilon_sweep is not None:
            object.__setattr__(self, "epsilon_sweep", tuple(float(e) for e in self.epsilon_sweep))


@dataclass(frozen=True)
class ChannelEstimate:
    """Complex frequency-domain channel estimate, one value per nonzero subcarrier."""

    values: np.ndarray
    indices: tuple[int, ...] = DEFAULT_SUBCARRIERS
    source: str = "synthetic"

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex)
        if vals.ndim != 1 or len(vals) != len(self.indices):
            raise ValueError(f"estimate has {vals.size} values for {len(self.indices)} subcarriers")
        if not np.all(np.isfinite(vals)):
            raise ValueError("estimate contains non-finite values")
        if self.source not in ("synthetic", "simulated-ltf", "ingested"):
            raise ValueError(f"unknown source tag {self.source!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "indices", tuple(int(m) for m in self.indices))

    def __len__(self):
        return len(self.values)

    def scaled(self, factor: complex) -> "ChannelEstimate":
        return replace(self, values=self.values * factor)


@dataclass(frozen=True)
class Settings:
    """Effective configuration: every section with defaults applied."""

    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    budget: LinkBudget = field(default_factory=LinkBudget)
    grid: EstimatorGrid = field(default_factory=EstimatorGrid)
    noise: NoiseModel = field(default_factory=NoiseModel)
    campaign: CampaignSpec = field(default_factory=CampaignSpec)
    nelder_mead: NelderMeadConfig = field(default_factory=NelderMeadConfig)
    range_bias: float = 0.125


# --------------------------------------------------------------------------
# parsing

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def _eval_expr(text: str) -> float:
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError(f"unsupported expression {text!r}")

    return ev(ast.parse(text.strip(), mode="eval"))


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if ":" in raw:
        parts = raw.split(":")
        if len(parts) != 3:
            raise ValueError("range must be start:step:stop")
        start, step, stop = (_eval_expr(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError("range needs step > 0 and stop >= start")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + k * step for k in range(n)]
    if "," in raw:
        return [_eval_expr(p) for p in raw.split(",") if p.strip()]
    try:
        return _eval_expr(raw)
    except (ValueError, SyntaxError):
        if raw.replace("_", "").replace("-", "").isalnum():
            return raw
        raise


def _as_list(v) -> list:
    return list(v) if isinstance(v, list) else [v]


def _num(v) -> float:
    if isinstance(v, (bool, str, list)):
        raise ValueError("expected a single number")
    return float(v)


def _int(v) -> int:
    x = _num(v)
    if x != int(x):
        raise ValueError("expected an integer")
    return int(x)


def _nums(v) -> tuple[float, ...]:
    return tuple(_num(x) for x in _as_list(v))


def _bool(v) -> bool:
    if not isinstance(v, bool):
        raise ValueError("expected true or false")
    return v


def _word(v) -> str:
    if not isinstance(v, str):
        raise ValueError("expected a word")
    return v


def _dbm_w(v):
    return db_to_linear(_num(v)) / 1000.0


def _db(v):
    return db_to_linear(_num(v))


# key -> (section, field, converter)
_KEYS: dict[str, tuple[str, str, Any]] = {
    "bandwidth_hz": ("ofdm", "bandwidth", _num),
    "fft_size": ("ofdm", "fft_size", _int),
    "nonzero_subcarriers": ("ofdm", "nonzero_subcarriers", lambda v: tuple(_int(x) for x in _as_list(v))),
    "oversample": ("ofdm", "oversample", _int),
    "ranging_sample_rate_hz": ("ofdm", "ranging_sample_rate", _num),
    "tx_power_w": ("budget", "tx_power", _num),
    "tx_power_dbm": ("budget", "tx_power", _dbm_w),
    "feedthrough": ("budget", "feedthrough", _num),
    "feedthrough_db": ("budget", "feedthrough", _db),
    "direct_gain_tx": ("budget", "direct_gain_tx", _num),
    "direct_gain_tx_dbi": ("budget", "direct_gain_tx", _db),
    "direct_gain_rx": ("budget", "direct_gain_rx", _num),
    "direct_gain_rx_dbi": ("budget", "direct_gain_rx", _db),
    "reflect_gain_tx": ("budget", "reflect_gain_tx", _num),
    "reflect_gain_tx_dbi": ("budget", "reflect_gain_tx", _db),
    "reflect_gain_rx": ("budget", "reflect_gain_rx", _num),
    "reflect_gain_rx_dbi": ("budget", "reflect_gain_rx", _db),
    "carrier_frequency_hz": ("budget", "carrier_frequency", _num),
    "direct_path_range_m": ("budget", "direct_path_range", _num),
    "rcs_m2": ("budget", "rcs", _num),
    "set_a": ("grid", "set_a", _nums),
    "set_c_rad": ("grid", "set_c", _nums),
    "set_rho_m": ("grid", "set_rho", _nums),
    "epsilon_t": ("grid", "epsilon_t", _num),
    "b_quantile": ("grid", "b_quantile", _num),
    "signed_b": ("grid", "signed_b", _bool),
    "metric_scale": ("grid", "metric_scale", _word),
    "noise_figure_db": ("noise", "noise_figure_db", _num),
    "temperature_k": ("noise", "temperature", _num),
    "noise_enabled": ("noise", "enabled", _bool),
    "bandwidths_hz": ("campaign", "bandwidths", _nums),
    "target1_ranges_m": ("campaign", "target1_ranges", _nums),
    "rcs_values_m2": ("campaign", "rcs_values", _nums),
    "target2_range_m": ("campaign", "target2_range", _num),
    "target2_rcs_m2": ("campaign", "target2_rcs", _num),
    "iterations": ("campaign", "iterations", _int),
    "seed": ("campaign", "seed", _int),
    "epsilon_sweep": ("campaign", "epsilon_sweep", _nums),
    "full_phy": ("campaign", "full_phy", _bool),
    "nm_reflection": ("nelder_mead", "reflection", _num),
    "nm_expansion": ("nelder_mead", "expansion", _num),
    "nm_contraction": ("nelder_mead", "contraction", _num),
    "nm_shrink": ("nelder_mead", "shrink", _num),
    "nm_initial_spread": ("nelder_mead", "initial_spread", _num),
    "nm_xatol_s": ("nelder_mead", "xatol", _num),
    "nm_max_iter": ("nelder_mead", "max_iter", _int),
    "range_bias_m": ("", "range_bias", _num),
}

_SECTIONS = {"ofdm": OfdmConfig, "budget": LinkBudget, "grid": EstimatorGrid, "noise": NoiseModel,
             "campaign": CampaignSpec, "nelder_mead": NelderMeadConfig}


def parse_config(text: str, source: str = "<string>") -> Settings:
    """Parse config text into effective :class:`Settings`."""
    overrides: dict[str, dict[str, Any]] = {s: {} for s in _SECTIONS}
    top: dict[str, Any] = {}
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(body, None, f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(key, raw, f"{source}:{lineno}: unknown key")
        section, name, conv = _KEYS[key]
        target = overrides[section] if section else top
        if name in seen and seen[name] != lineno:
            raise ConfigError(key, raw, f"{source}:{lineno}: quantity already set on line {seen[name]}")
        seen[name] = lineno
        try:
            target[name] = conv(_parse_value(raw))
        except (ValueError, SyntaxError, ZeroDivisionError, OverflowError) as exc:
            raise ConfigError(key, raw, f"{source}:{lineno}: {exc}") from None

    built = {}
    for section, cls in _SECTIONS.items():
        built[section] = cls(**overrides[section])
    if "bandwidths" not in overrides["campaign"]:
        built["campaign"] = replace(built["campaign"], bandwidths=(built["ofdm"].bandwidth,))
    rb = top.get("range_bias", Settings.range_bias)
    if not (rb >= 0 and math.isfinite(rb)):
        raise ConfigError("range_bias_m", rb, "must be finite and >= 0")
    return Settings(range_bias=rb, **built)


def load_config(path: Optional[os.PathLike | str] = None, verbose: bool = False) -> Settings:
    """Load a config file; ``None`` falls back to ``$OFDM_RANGING_CONFIG`` or defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        settings = Settings()
    else:
        settings = parse_config(Path(path).read_text(encoding="utf-8"), str(path))
    if verbose:
        for line in dump_config(settings).splitlines():
            logger.info("config: %s", line)
    return settings


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def dump_config(settings: Settings) -> str:
    """Serialize effective settings using linear-unit keys (exact round trip)."""
    lines = []
    written = set()
    for key, (section, name, conv) in _KEYS.items():
        if conv in (_db, _dbm_w):
            continue
        if (section, name) in written:
            continue
        obj = getattr(settings, section) if section else settings
        value = getattr(obj, name)
        if value is None:
            continue
        written.add((section, name))
        lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"

