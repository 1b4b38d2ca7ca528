"""Potential-outcome tables, estimands and observed data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutcomeError
from .exposure import ExposureModel, TreatmentExposure, exposures, levels
from .graph import InterferenceGraph


@dataclass(frozen=True)
class Estimand:
    """Average contrast between combinations ``tau1`` and ``tau0``."""

    tau1: TreatmentExposure
    tau0: TreatmentExposure
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "tau1", TreatmentExposure.of(self.tau1))
        object.__setattr__(self, "tau0", TreatmentExposure.of(self.tau0))
        if self.tau1 == self.tau0:
            raise ValueError(f"estimand contrasts {self.tau1} with itself")

    @property
    def label(self) -> str:
        return self.name or f"{self.tau1}vs{self.tau0}"


PRESETS = {
    "TTE": ((1, 1), (0, 0)),
    "DIRECT": ((1, 0), (0, 0)),
    "ADDITIVE_INTERFERENCE": ((0, 1), (0, 0)),
}


def preset(name: str) -> Estimand:
    key = name.upper()
    if key not in PRESETS:
        raise ValueError(f"unknown estimand preset {name!r}; valid options: {sorted(PRESETS)}")
    tau1, tau0 = PRESETS[key]
    return Estimand(tau1, tau0, key)


class PotentialOutcomeTable:
    """Dense outcomes ``Y_i(z, e)`` for ``z in {0, 1}`` and ``e < K_i``.

    Values live in one flat vector; unit ``i``'s block starts at
    ``offsets[i]`` and is laid out as ``z * K_i + e``.
    """

    def __init__(self, num_levels, data):
        self.num_levels = tuple(int(k) for k in num_levels)
        self.offsets = np.concatenate([[0], np.cumsum([2 * k for k in self.num_levels])]).astype(np.int64)
        data = np.array(data, dtype=float)
        if data.shape != (int(self.offsets[-1]),):
            raise OutcomeError(
                f"table needs {int(self.offsets[-1])} values for levels {self.num_levels}, got shape {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise OutcomeError("potential outcomes must be finite")
        data.setflags(write=False)
        self.data = data

    @classmethod
    def zeros(cls, num_levels):
        return cls(num_levels, np.zeros(sum(2 * k for k in num_levels)))

    @classmethod
    def from_entries(cls, num_levels, entries):
        """Build from ``{(unit, z, e): value}``; every combination must be present."""
        table = cls.zeros(num_levels)
        data = np.full(table.size, np.nan)
        for (i, z, e), v in entries.items():
            data[table.index(i, z, e)] = v
        missing = [table.label(j) for j in np.flatnonzero(np.isnan(data))]
        if missing:
            raise OutcomeError(f"table is missing combinations {missing[:5]}")
        return cls(num_levels, data)

    @property
    def n(self) -> int:
        return len(self.num_levels)

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def has(self, i: int, z: int, e: int) -> bool:
        return 0 <= i < self.n and z in (0, 1) and 0 <= e < self.num_levels[i]

    def index(self, i: int, z: int, e: int) -> int:
        if not self.has(i, z, e):
            raise OutcomeError(
                f"unit {i} has no potential outcome at (z={z}, e={e}); "
                f"its exposure levels are 0..{self.num_levels[i] - 1}"
                if 0 <= i < self.n
                else f"unit {i} is not in the table"
            )
        return int(self.offsets[i]) + z * self.num_levels[i] + e

    def label(self, flat: int) -> tuple[int, int, int]:
        i = int(np.searchsorted(self.offsets, flat, side="right")) - 1
        z, e = divmod(flat - int(self.offsets[i]), self.num_levels[i])
        return i, z, e

    def value(self, i: int, z: int, e: int) -> float:
        return float(self.data[self.index(i, z, e)])

    def entries(self):
        for flat in range(self.size):
            i, z, e = self.label(flat)
            yield i, z, e, float(self.data[flat])

    def with_data(self, data) -> PotentialOutcomeTable:
        return PotentialOutcomeTable(self.num_levels, data)

    def __add__(self, other):
        self._check_layout(other)
        return self.with_data(self.data + other.data)

    def __mul__(self, scalar):
        return self.with_data(self.data * float(scalar))

    __rmul__ = __mul__

    def _check_layout(self, other):
        if self.num_levels != other.num_levels:
            raise OutcomeError("tables have different exposure-level layouts")

    def __eq__(self, other):
        return (
            isinstance(other, PotentialOutcomeTable)
            and self.num_levels == other.num_levels
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return f"PotentialOutcomeTable(n={self.n}, size={self.size})"


def table_layout(g: InterferenceGraph, m: ExposureModel) -> tuple[int, ...]:
    return tuple(levels(m, g))


def contrast_indices(t: PotentialOutcomeTable, est: Estimand) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices of ``Y_i(tau1)`` and ``Y_i(tau0)`` for every unit."""
    idx1 = np.array([t.index(i, est.tau1.z, est.tau1.e) for i in range(t.n)], dtype=np.int64)
    idx0 = np.array([t.index(i, est.tau0.z, est.tau0.e) for i in range(t.n)], dtype=np.int64)
    return idx1, idx0


def contrast_vector(t: PotentialOutcomeTable, est: Estimand) -> np.ndarray:
    """Vector ``c`` with ``true_effect(t, est) == c @ t.data``."""
    idx1, idx0 = contrast_indices(t, est)
    c = np.zeros(t.size)
    c[idx1] += 1.0 / t.n
    c[idx0] -= 1.0 / t.n
    return c


def true_effect(t: PotentialOutcomeTable, est: Estimand) -> float:
    idx1, idx0 = contrast_indices(t, est)
    return float(np.sum(t.data[idx1] - t.data[idx0]) / t.n)


@dataclass(frozen=True)
class ObservedData:
    z: np.ndarray
    exposures: np.ndarray
    y: np.ndarray


def realize(t: PotentialOutcomeTable, m: ExposureModel, g: InterferenceGraph, z) -> ObservedData:
    """Observed outcomes under assignment ``z``, by consistency."""
    z = np.asarray(z, dtype=np.int64)
    e = exposures(m, g, z)
    y = np.array([t.value(i, int(z[i]), int(e[i])) for i in range(g.n)])
    return ObservedData(z, e, y)


def random_table(g: InterferenceGraph, m: ExposureModel, box=(0.0, 1.0), seed=None) -> PotentialOutcomeTable:
    lo, hi = float(box[0]), float(box[1])
    if lo > hi:
        raise ValueError(f"box lower bound {lo} exceeds upper bound {hi}")
    layout = table_layout(g, m)
    rng = np.random.default_rng(seed)
    return PotentialOutcomeTable(layout, rng.uniform(lo, hi, sum(2 * k for k in layout)))
