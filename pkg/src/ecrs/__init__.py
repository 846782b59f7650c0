"""Two-phase cooperative rate-splitting link simulator."""

from .scene import SceneConfig, Channels, sample_scene, pathloss
from .rates import (IecrsPrecoders, DecrsPrecoders, RateReport,
                    iecrs_rates, decrs_rates, ofdm_gains,
                    rate_phase2_iecrs, rate_phase2_decrs,
                    combine_rates_iecrs, combine_rates_decrs)

__version__ = "0.1.0"
