"""Human–fauna population dynamics with hunting, migration and anthropisation."""
from .model import (
    Formulation,
    ModelParams,
    RegionBounds,
    StateCompet,
    StateFull,
    StateReduced,
    beta_star,
    from_compet,
    region_bounds,
    rhs_compet,
    rhs_full,
    rhs_reduced,
    to_compet,
    validate,
)

__all__ = [
    "Formulation",
    "ModelParams",
    "RegionBounds",
    "StateCompet",
    "StateFull",
    "StateReduced",
    "beta_star",
    "from_compet",
    "region_bounds",
    "rhs_compet",
    "rhs_full",
    "rhs_reduced",
    "to_compet",
    "validate",
]
