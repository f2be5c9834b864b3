"""Learning causal digital twin: SVAR couplings learned online by an
identity-mapping recurrent network with a simulation layer."""

__version__ = "0.1.0"

from .graph import CausalGraph, CouplingSet, ParamLayout, flatten, unflatten, validate_graph
from .svar import (
    MultichannelSeries,
    NoiseSpec,
    companion_spectral_radius,
    counterfactual_remove,
    generate_series,
    simulate_step,
    whatif_run,
)
from .imrnns import NetworkConfig, train_online
from .baselines import direction_test, ols_svar_fit, variance_ratios
from .spectral import band_power_ratio, collapse_spectrum, spectral_similarity, spectrogram

__all__ = [
    "CausalGraph", "CouplingSet", "ParamLayout", "flatten", "unflatten", "validate_graph",
    "MultichannelSeries", "NoiseSpec", "companion_spectral_radius", "counterfactual_remove",
    "generate_series", "simulate_step", "whatif_run",
    "NetworkConfig", "train_online",
    "direction_test", "ols_svar_fit", "variance_ratios",
    "band_power_ratio", "collapse_spectrum", "spectral_similarity", "spectrogram",
]
