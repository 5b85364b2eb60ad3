"""Accelerated value iteration for finite Markov decision processes.

The top level re-exports the working surface: model construction and
(de)serialization, the backup operators and acceleration steps, random
instance generators, the solve driver, and the verification oracles.
Submodules carry the full APIs.
"""

from __future__ import annotations

from .model import (
    MdpModel,
    ModelFormatError,
    ModelValidationError,
    RewardMode,
    Violation,
    adjust_rewards_nonnegative,
    initial_feasible_point,
    initial_feasible_point_total_reward,
    load_model,
    save_model,
    validate_model,
)
from .operators import (
    OperatorKind,
    apply_operator,
    is_feasible,
    is_feasible_gs,
    sup_norm,
    weighted_sums,
)
from .accelerators import (
    AlphaResult,
    apply_linear_extension,
    apply_projective,
    linear_extension_alpha,
    projective_alpha,
)
from .generators import GeneratorFamily, GeneratorSpec, generate
from .solver import (
    AcceleratorKind,
    SolveResult,
    SolverConfig,
    SolverConfigError,
    algorithm_label,
    solve,
    stopping_threshold,
)
from .verification import bisect_alpha, exact_fixed_point, run_property_suite

__all__ = [
    "AcceleratorKind",
    "AlphaResult",
    "GeneratorFamily",
    "GeneratorSpec",
    "MdpModel",
    "ModelFormatError",
    "ModelValidationError",
    "OperatorKind",
    "RewardMode",
    "SolveResult",
    "SolverConfig",
    "SolverConfigError",
    "Violation",
    "adjust_rewards_nonnegative",
    "algorithm_label",
    "apply_linear_extension",
    "apply_operator",
    "apply_projective",
    "bisect_alpha",
    "exact_fixed_point",
    "generate",
    "initial_feasible_point",
    "initial_feasible_point_total_reward",
    "is_feasible",
    "is_feasible_gs",
    "linear_extension_alpha",
    "load_model",
    "projective_alpha",
    "run_property_suite",
    "save_model",
    "solve",
    "stopping_threshold",
    "sup_norm",
    "validate_model",
    "weighted_sums",
]

__version__ = "0.1.0"
