"""Simulation engine for two-party bosonic rotation-code entanglement distillation."""

from .noise import (
    DephasingTable,
    ErrorConfig,
    LossTable,
    NoiseParams,
    default_l_max,
    dephasing_probs,
    error_ensemble,
    loss_probs,
)

__version__ = "0.1.0"

__all__ = [
    "DephasingTable",
    "ErrorConfig",
    "LossTable",
    "NoiseParams",
    "default_l_max",
    "dephasing_probs",
    "error_ensemble",
    "loss_probs",
    "__version__",
]
