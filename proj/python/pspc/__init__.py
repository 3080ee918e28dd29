"""Empirical optimal and patch-composite denoisers for variance-exploding diffusion."""

from ._core import (
    ConfigError,
    Dataset,
    DegenerateHeatmap,
    Denoiser,
    DomainError,
    EmptyDataset,
    FormatError,
    MissingData,
    PspcError,
    RangeError,
    ShapeMismatch,
    UncoveredPixel,
    concentration_side_length,
    edm_schedule,
    flex_crop,
    make_denoiser,
    optimal_denoise,
    posterior_weights,
    pspc_flex,
    pspc_square,
    read_tensor,
    sample,
    sample_prior,
    sensitivity_map,
    write_tensor,
)

__version__ = "0.1.0"
