"""Learned tangent slopes for PDE surrogates."""

from ._core import (
    DimensionError,
    DivergenceError,
    Error,
    IoError,
    StabilityError,
    TangentNetwork,
    TruthTangent,
    ValidationError,
    advection_matrix,
    advection_tangent,
    config_keys,
    generate_data,
    linear_optimum,
    predict,
    randomization_check,
    read_array,
    run_cli,
    write_array,
)

__all__ = [
    "DimensionError",
    "DivergenceError",
    "Error",
    "IoError",
    "StabilityError",
    "TangentNetwork",
    "TruthTangent",
    "ValidationError",
    "advection_matrix",
    "advection_tangent",
    "config_keys",
    "generate_data",
    "linear_optimum",
    "predict",
    "randomization_check",
    "read_array",
    "run_cli",
    "write_array",
]
