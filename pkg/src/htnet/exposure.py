"""Exposure mappings ``e_i = f(z_{N_i})`` and treatment-exposure combinations."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .graph import InterferenceGraph


class ExposureModel(str, Enum):
    SYMMETRIC = "symmetric"  # number of treated neighbors
    BINARY = "binary"  # at least one treated neighbor

    @classmethod
    def parse(cls, name: str | ExposureModel) -> ExposureModel:
        if isinstance(name, ExposureModel):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            valid = ", ".join(repr(m.value) for m in cls)
            raise ValueError(f"unknown exposure model {name!r}; valid options: {valid}") from None


@dataclass(frozen=True, order=True)
class TreatmentExposure:
    """A treatment-exposure combination ``(z, e)``."""

    z: int
    e: int

    def __post_init__(self):
        if self.z not in (0, 1):
            raise ValueError(f"treatment level must be 0 or 1, got {self.z}")
        if self.e < 0:
            raise ValueError(f"exposure level must be non-negative, got {self.e}")

    @classmethod
    def of(cls, pair) -> TreatmentExposure:
        if isinstance(pair, TreatmentExposure):
            return pair
        z, e = pair
        return cls(int(z), int(e))

    def __iter__(self):
        yield self.z
        yield self.e

    def __str__(self):
        return f"({self.z},{self.e})"


def _check_assignment(g: InterferenceGraph, z) -> np.ndarray:
    z = np.asarray(z)
    if z.shape[-1] != g.n:
        raise ValueError(f"assignment has length {z.shape[-1]}, graph has {g.n} units")
    return z


def exposure_level(m: ExposureModel, g: InterferenceGraph, z: Sequence[int], i: int) -> int:
    z = _check_assignment(g, z)
    count = int(sum(int(z[j]) for j in g.neighbors(i)))
    if m is ExposureModel.SYMMETRIC:
        return count
    return int(count >= 1)


def exposures(m: ExposureModel, g: InterferenceGraph, z) -> np.ndarray:
    """Exposure levels for every unit; ``z`` may be a vector or a stack of rows."""
    z = _check_assignment(g, z)
    counts = np.asarray(z, dtype=np.int64) @ g.adjacency.T
    if m is ExposureModel.SYMMETRIC:
        return counts
    return (counts >= 1).astype(np.int64)


def num_levels(m: ExposureModel, g: InterferenceGraph, i: int) -> int:
    """``K_i``: attainable exposure levels for unit ``i``."""
    d = g.degree(i)
    if m is ExposureModel.SYMMETRIC:
        return d + 1
    return 2 if d > 0 else 1


def levels(m: ExposureModel, g: InterferenceGraph) -> list[int]:
    return [num_levels(m, g, i) for i in range(g.n)]


def combinations(m: ExposureModel, g: InterferenceGraph, i: int) -> list[TreatmentExposure]:
    """All ``2 K_i`` combinations for unit ``i``, ordered by ``(z, e)``."""
    k = num_levels(m, g, i)
    return [TreatmentExposure(z, e) for z in (0, 1) for e in range(k)]
