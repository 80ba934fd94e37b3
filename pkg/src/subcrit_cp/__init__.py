"""Subcritical contact processes on countable groups: exact spectral
computation on truncated quotient chains and Monte Carlo over the graphical
representation."""

__version__ = "0.1.0"

from .backend import BACKEND
from .errors import (BracketError, CapsTooLargeError, ConfigError, ConvergenceError, DisconnectedMetricError,
                     EmptyLawError, InvalidKernelError, NoClassError, SubcritError)
from .groups import FreeProductGroup, Group, ZdGroup, group_from_spec
from .kernel import (K_gamma, Kernel, Metric, build_metric, check_irreducibility, dual_kernel, e_gamma,
                     kernel_from_spec, zero_kernel)
from .measures import (HomogeneousMeasure, IntersectionStats, TildeLaw, bracket_of, cform_constant, chi,
                       duality_residual, evolve_measure, growth_derivative, h_eval, intersection_stats,
                       tightness_check)
from .quotient import (ShiftClass, SparseGenerator, StateSpace, apply_semigroup, build_generator, canonicalize,
                       enumerate_states, expected_size, symmetry_m)
from .spectral import (DoobChain, SpectralResult, doob_transform, h_from_dual, leading_eigen,
                       normalize_eigenmeasure, quasi_convergence_check, right_eigen, spectral_solve)

__all__ = [
    "BACKEND", "BracketError", "CapsTooLargeError", "ConfigError", "ConvergenceError", "DisconnectedMetricError",
    "DoobChain", "EmptyLawError", "FreeProductGroup", "Group", "HomogeneousMeasure", "IntersectionStats",
    "InvalidKernelError", "K_gamma", "Kernel", "Metric", "NoClassError", "ShiftClass", "SparseGenerator",
    "SpectralResult", "StateSpace", "SubcritError", "TildeLaw", "ZdGroup", "__version__", "apply_semigroup",
    "bracket_of", "build_generator", "build_metric", "canonicalize", "cform_constant", "check_irreducibility",
    "chi", "doob_transform", "dual_kernel", "duality_residual", "e_gamma", "enumerate_states", "evolve_measure",
    "expected_size", "group_from_spec", "growth_derivative", "h_eval", "h_from_dual", "intersection_stats",
    "kernel_from_spec", "leading_eigen", "normalize_eigenmeasure", "quasi_convergence_check", "right_eigen",
    "spectral_solve", "symmetry_m", "tightness_check", "zero_kernel",
]
