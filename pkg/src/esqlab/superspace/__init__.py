"""Grassmann calculus, superfields and the reduction identities."""

from .grassmann import GrassmannElement, apply_function, reorder_sign
from .poleq import (
    ACCEPTANCE_MATRIX,
    PolEqReport,
    ReductionCheck,
    gaussian_side,
    reduction_formula_check,
    verify_pol_eq,
)
from .superfunction import (
    SuperFunction,
    SuperPoint,
    SusyReport,
    apply_Q,
    berezin_integral,
    evaluate_at,
    susy_check,
    tau,
    tau_invariance_residual,
)
from .wick import (
    PairingGuardError,
    SuperCovariance,
    isserlis_moment,
    pairing_patterns,
    perfect_matchings,
    wick_superfield_expectation,
)

__all__ = [
    "ACCEPTANCE_MATRIX",
    "GrassmannElement",
    "PairingGuardError",
    "PolEqReport",
    "ReductionCheck",
    "SuperCovariance",
    "SuperFunction",
    "SuperPoint",
    "SusyReport",
    "apply_Q",
    "apply_function",
    "berezin_integral",
    "evaluate_at",
    "gaussian_side",
    "isserlis_moment",
    "pairing_patterns",
    "perfect_matchings",
    "reduction_formula_check",
    "reorder_sign",
    "susy_check",
    "tau",
    "tau_invariance_residual",
    "verify_pol_eq",
    "wick_superfield_expectation",
]
