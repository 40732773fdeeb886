"""Gap-tooth particle simulation, distribution distances and diffusion-map coordinates."""

from ._core import (
    ConfigError,
    NumericError,
    apportion,
    diffusion_embedding,
    fraction_anti,
    fraction_down,
    fraction_same,
    fv_solve,
    independence_residuals,
    run,
    simulate_gap_tooth,
    spearman,
    truncated_moments,
    unbalanced_ot,
    uw1_distance,
)

__all__ = [
    "ConfigError",
    "NumericError",
    "apportion",
    "diffusion_embedding",
    "fraction_anti",
    "fraction_down",
    "fraction_same",
    "fv_solve",
    "independence_residuals",
    "run",
    "simulate_gap_tooth",
    "spearman",
    "truncated_moments",
    "unbalanced_ot",
    "uw1_distance",
]
