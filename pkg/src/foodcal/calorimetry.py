"""Mass/calorie conversion and training-set parameter fitting.

Mass is density times volume; calories are energy density times mass. The
per-food compensation factor and density are both fitted as ratios of sums
over the training records (not means of ratios; the two differ whenever the
references vary).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DegenerateFitError, MissingDataError


@dataclass
class EstimationRecord:
    """One food's estimated vs. reference quantities for a scene."""

    scene_id: str
    food: str
    est_volume: float  # cm3
    ref_volume: float | None = None
    est_mass: float | None = None
    ref_mass: float | None = None
    est_calorie: float | None = None

    def __post_init__(self) -> None:
        for name in ("est_volume", "est_mass", "est_calorie"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")
        for name in ("ref_volume", "ref_mass"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be > 0, got {value}")


@dataclass(frozen=True)
class FitResult:
    food: str
    value: float
    n_samples: int


def estimate_mass(volume_cm3: float, rho: float) -> float:
    """m = rho * v (grams)."""
    if volume_cm3 < 0:
        raise ValueError("volume must be >= 0")
    if rho <= 0:
        raise ValueError("density must be positive")
    return rho * volume_cm3


def estimate_calorie(mass_g: float, energy_kcal_per_g: float | None) -> float:
    """C = c * m (Kcal); the energy density must be known."""
    if mass_g < 0:
        raise ValueError("mass must be >= 0")
    if energy_kcal_per_g is None:
        raise MissingDataError("no energy density available for this food")
    if energy_kcal_per_g < 0:
        raise ValueError("energy density must be >= 0")
    return energy_kcal_per_g * mass_g


def _one_food(records: list[EstimationRecord]) -> str:
    foods = {r.food for r in records}
    if len(foods) != 1:
        raise ValueError(f"records mix food types: {sorted(foods)}")
    return foods.pop()


def fit_beta(records: list[EstimationRecord]) -> FitResult:
    """Compensation factor: sum of reference volumes over sum of raw estimates.

    Estimates must have been produced with the factor at its default of 1.
    """
    if not records:
        raise ValueError("need at least one record")
    food = _one_food(records)
    missing = [r for r in records if r.ref_volume is None]
    if missing:
        raise MissingDataError(f"{food}: {len(missing)} record(s) without reference volume")
    est = sum(r.est_volume for r in records)
    ref = sum(r.ref_volume for r in records)
    if est == 0:
        raise DegenerateFitError(f"{food}: estimated volumes sum to zero")
    return FitResult(food=food, value=ref / est, n_samples=len(records))


def fit_density(records: list[EstimationRecord]) -> FitResult:
    """Density: sum of reference masses over sum of reference volumes."""
    if not records:
        raise ValueError("need at least one record")
    food = _one_food(records)
    missing = [r for r in records if r.ref_volume is None or r.ref_mass is None]
    if missing:
        raise MissingDataError(f"{food}: {len(missing)} record(s) without reference mass/volume")
    ref_v = sum(r.ref_volume for r in records)
    ref_m = sum(r.ref_mass for r in records)
    if ref_v == 0:
        raise DegenerateFitError(f"{food}: reference volumes sum to zero")
    return FitResult(food=food, value=ref_m / ref_v, n_samples=len(records))
