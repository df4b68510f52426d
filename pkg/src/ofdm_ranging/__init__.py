"""Closest-target radar ranging from 802.11 OFDM channel estimates."""

from .channel import (TargetSpec, TwoPathChannel, direct_alpha, friis_loss, reflected_beta, reflection_loss,
                      round_trip_delay, synthesize_estimate, target_channel)
from .config import (ChannelEstimate, CampaignSpec, ConfigError, EstimatorGrid, LinkBudget, NelderMeadConfig,
                     NoiseModel, OfdmConfig, Settings, dump_config, load_config, parse_config)
from .ranging import (CosineFit, MetricVector, RangingResult, brute_force_range, estimate_cosine_magnitude,
                      estimate_range, mean_normalized_metric, model_metric, residual, rho_to_increment)

__all__ = [
    "CampaignSpec", "ChannelEstimate", "ConfigError", "CosineFit", "EstimatorGrid", "LinkBudget", "MetricVector",
    "NelderMeadConfig", "NoiseModel", "OfdmConfig", "RangingResult", "Settings", "TargetSpec", "TwoPathChannel",
    "brute_force_range", "direct_alpha", "dump_config", "estimate_cosine_magnitude", "estimate_range",
    "friis_loss", "load_config", "mean_normalized_metric", "model_metric", "parse_config", "reflected_beta",
    "reflection_loss", "residual", "rho_to_increment", "round_trip_delay", "synthesize_estimate", "target_channel",
]
