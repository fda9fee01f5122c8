"""Recipe representation: 4-locus genomes, simplex formulations and oil data.

A genome holds four raw quantitative trait loci in [0, 1]. It only becomes a
recipe (a Formulation, a point on the 4-component unit simplex) when it is
normalized at phenotype time; genetic operators act on the raw loci.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

GENOME_LENGTH = 4
WELL_TOTAL_UL = 360.0

# Fixed component order in every serialized formulation. The fourth slot is
# either octanoic acid or dodecane, chosen per run configuration.
DEFAULT_OIL_ORDER = ("1-octanol", "1-pentanol", "DEP", "octanoic acid")
ALT_OIL_ORDER = ("1-octanol", "1-pentanol", "DEP", "dodecane")


class FormulationError(ValueError):
    pass


class AllZeroError(FormulationError):
    """Every raw component is zero; no direction on the simplex."""


class NegativeComponentError(FormulationError):
    """A raw component is negative."""


@dataclass(frozen=True)
class OilProperties:
    """One row of the oil property table.

    solubility is g/L in water; None marks an insoluble oil (treated as
    0 g/L in simulator arithmetic).
    """

    name: str
    density: float
    solubility: float | None
    surface_tension: float
    viscosity: float

    def __post_init__(self):
        for field in ("density", "surface_tension", "viscosity"):
            if getattr(self, field) <= 0:
                raise FormulationError(f"{self.name}: {field} must be positive")
        if self.solubility is not None and self.solubility <= 0:
            raise FormulationError(f"{self.name}: solubility must be positive or None")

    @property
    def effective_solubility(self) -> float:
        return 0.0 if self.solubility is None else self.solubility


def oil_table() -> list[OilProperties]:
    """The five stock oils, loaded from the versioned data file."""
    raw = json.loads(resources.files("dropevo.data").joinpath("oils.json").read_text())
    return [OilProperties(**row) for row in raw["oils"]]


def oil_lookup(name: str) -> OilProperties:
    for oil in oil_table():
        if oil.name == name:
            return oil
    raise KeyError(name)


def oils_for_order(order: tuple[str, ...] = DEFAULT_OIL_ORDER) -> list[OilProperties]:
    """The four OilProperties rows in serialization order."""
    return [oil_lookup(name) for name in order]


@dataclass(frozen=True)
class Formulation:
    """A point on the 4-component unit simplex: the proportion of each oil."""

    proportions: tuple[float, float, float, float]

    def __post_init__(self):
        p = np.asarray(self.proportions, dtype=float)
        if p.shape != (GENOME_LENGTH,):
            raise FormulationError(f"expected {GENOME_LENGTH} proportions, got {p.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise FormulationError("proportions must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-12:
            raise FormulationError(f"proportions sum to {p.sum()!r}, not 1")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.proportions, dtype=float)


def normalize(raw) -> Formulation:
    """Scale four nonnegative components so they sum to 1.

    Raises AllZeroError if every component is 0 and NegativeComponentError
    if any component is negative.
    """
    r = np.asarray(raw, dtype=float)
    if r.shape != (GENOME_LENGTH,):
        raise FormulationError(f"expected {GENOME_LENGTH} components, got {r.shape}")
    if np.any(r < 0):
        raise NegativeComponentError(f"negative component in {r.tolist()}")
    total = r.sum()
    if total == 0:
        raise AllZeroError("all components are zero")
    # Inputs already on the simplex (to within a few ulps) pass through
    # unchanged; dividing by a total this close to 1 could only churn the
    # last bit, and passing through makes normalize exactly idempotent.
    if abs(total - 1.0) <= 16 * np.finfo(float).eps:
        return Formulation(tuple(r.tolist()))
    return Formulation(tuple((r / total).tolist()))


def well_volumes(f: Formulation, total: float = WELL_TOTAL_UL) -> np.ndarray:
    """Per-oil volumes (uL) for a mixing well holding `total` uL."""
    return f.as_array() * total
