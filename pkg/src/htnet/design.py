"""Randomization designs as explicit distributions over assignment vectors.

Every design supports exact ``pmf`` evaluation, seeded sampling, and
enumeration of its support. Enumeration is capped by ``ENUMERATION_BUDGET``.
"""

from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import DesignError, EnumerationTooLarge
from .exposure import ExposureModel, TreatmentExposure, exposures
from .graph import ClusterPartition, InterferenceGraph, is_independent_set

ENUMERATION_BUDGET = 2**22


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _first_k_of_shuffle(rng: np.random.Generator, size: int, n: int, k: int) -> np.ndarray:
    """Boolean ``(size, n)`` masks marking the first ``k`` items of a random shuffle."""
    order = rng.random((size, n)).argsort(axis=1)
    mask = np.zeros((size, n), dtype=bool)
    np.put_along_axis(mask, order[:, :k], True, axis=1)
    return mask


class Design(ABC):
    """A probability distribution over ``{0, 1}^n``."""

    kind: str
    n: int

    @abstractmethod
    def pmf(self, z: Sequence[int]) -> float:
        ...

    @abstractmethod
    def support_size(self) -> int:
        """Number of assignment vectors with positive probability."""

    @abstractmethod
    def _support_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        ...

    @abstractmethod
    def sample_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` assignments as rows of an int8 matrix."""

    def sample(self, seed=None) -> np.ndarray:
        return self.sample_many(_rng(seed), 1)[0]

    def check_budget(self, budget: int = ENUMERATION_BUDGET) -> int:
        size = self.support_size()
        if size > budget:
            raise EnumerationTooLarge(size, budget)
        return size

    def support_arrays(self, budget: int = ENUMERATION_BUDGET) -> tuple[np.ndarray, np.ndarray]:
        """Support as ``(Z, p)``: an ``(S, n)`` int8 matrix and its probabilities."""
        self.check_budget(budget)
        Z, p = self._support_arrays()
        Z.setflags(write=False)
        p.setflags(write=False)
        return Z, p

    def support(self, budget: int = ENUMERATION_BUDGET) -> Iterator[tuple[tuple[int, ...], float]]:
        Z, p = self.support_arrays(budget)
        for row, prob in zip(Z, p):
            yield tuple(int(v) for v in row), float(prob)

    def _check_length(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.int64)
        if z.shape != (self.n,):
            raise ValueError(f"assignment has shape {z.shape}, design has n={self.n}")
        return z

    def describe(self) -> dict:
        return {"kind": self.kind, "n": self.n}


@dataclass(frozen=True)
class Bernoulli(Design):
    n: int
    p: float
    kind = "bernoulli"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DesignError(f"Bernoulli p must lie in [0, 1], got {self.p}")
        if self.n < 0:
            raise DesignError(f"n must be non-negative, got {self.n}")

    def pmf(self, z):
        z = self._check_length(z)
        if np.any((z != 0) & (z != 1)):
            return 0.0
        k = int(z.sum())
        return self.p**k * (1.0 - self.p) ** (self.n - k)

    def support_size(self):
        if self.p in (0.0, 1.0):
            return 1
        return 2**self.n

    def _support_arrays(self):
        if self.p in (0.0, 1.0):
            Z = np.full((1, self.n), int(self.p), dtype=np.int8)
            return Z, np.ones(1)
        codes = np.arange(2**self.n, dtype=np.int64)
        shifts = np.arange(self.n - 1, -1, -1, dtype=np.int64)
        Z = ((codes[:, None] >> shifts) & 1).astype(np.int8)
        k = Z.sum(axis=1)
        probs = self.p**k * (1.0 - self.p) ** (self.n - k)
        return Z, probs

    def sample_many(self, rng, size):
        return (rng.random((size, self.n)) < self.p).astype(np.int8)

    def describe(self):
        return {**super().describe(), "p": self.p}


@dataclass(frozen=True)
class CompletelyRandomized(Design):
    n: int
    n_t: int
    kind = "crd"

    def __post_init__(self):
        if not 0 <= self.n_t <= self.n:
            raise DesignError(f"CRD needs 0 <= n_t <= n, got n_t={self.n_t}, n={self.n}")

    @property
    def n_c(self) -> int:
        return self.n - self.n_t

    def pmf(self, z):
        z = self._check_length(z)
        if np.any((z != 0) & (z != 1)) or int(z.sum()) != self.n_t:
            return 0.0
        return 1.0 / math.comb(self.n, self.n_t)

    def support_size(self):
        return math.comb(self.n, self.n_t)

    def _support_arrays(self):
        size = self.support_size()
        Z = np.zeros((size, self.n), dtype=np.int8)
        for row, treated in enumerate(itertools.combinations(range(self.n), self.n_t)):
            Z[row, list(treated)] = 1
        return Z, np.full(size, 1.0 / size)

    def sample_many(self, rng, size):
        return _first_k_of_shuffle(rng, size, self.n, self.n_t).astype(np.int8)

    def describe(self):
        return {**super().describe(), "n_t": self.n_t}


@dataclass(frozen=True)
class ClusterRandomized(Design):
    """Treat every unit of ``K_t`` clusters drawn without replacement."""

    partition: ClusterPartition
    K_t: int
    kind = "cluster"

    def __post_init__(self):
        if not 0 <= self.K_t <= self.partition.K:
            raise DesignError(
                f"cluster design needs 0 <= K_t <= K, got K_t={self.K_t}, K={self.partition.K}"
            )

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def K(self) -> int:
        return self.partition.K

    @property
    def K_c(self) -> int:
        return self.partition.K - self.K_t

    def _vector(self, clusters) -> np.ndarray:
        chosen = np.zeros(self.K, dtype=bool)
        chosen[list(clusters)] = True
        return chosen[np.asarray(self.partition.assignment)].astype(np.int8)

    def pmf(self, z):
        z = self._check_length(z)
        treated = {self.partition.assignment[i] for i in range(self.n) if z[i] == 1}
        if len(treated) != self.K_t or not np.array_equal(z, self._vector(treated)):
            return 0.0
        return 1.0 / math.comb(self.K, self.K_t)

    def support_size(self):
        return math.comb(self.K, self.K_t)

    def _support_arrays(self):
        rows = [self._vector(c) for c in itertools.combinations(range(self.K), self.K_t)]
        size = len(rows)
        return np.array(rows, dtype=np.int8).reshape(size, self.n), np.full(size, 1.0 / size)

    def sample_many(self, rng, size):
        chosen = _first_k_of_shuffle(rng, size, self.K, self.K_t)
        return chosen[:, np.asarray(self.partition.assignment)].astype(np.int8)

    def describe(self):
        return {**super().describe(), "K": self.K, "K_t": self.K_t, "sizes": self.partition.sizes}


@dataclass(frozen=True)
class _IndependentSetDesign(Design):
    graph: InterferenceGraph
    independent_set: tuple[int, ...]
    n_1: int

    def __post_init__(self):
        object.__setattr__(self, "independent_set", tuple(sorted(self.independent_set)))
        if not is_independent_set(self.graph, self.independent_set):
            raise DesignError(f"units {list(self.independent_set)} are not an independent set")
        if not 0 <= self.n_1 <= len(self.independent_set):
            raise DesignError(
                f"n_1={self.n_1} must lie in [0, {len(self.independent_set)}] "
                "(size of the independent set)"
            )
        object.__setattr__(self, "_sym", self.graph.symmetrized())

    @property
    def n(self) -> int:
        return self.graph.n

    @abstractmethod
    def _vector(self, chosen) -> np.ndarray:
        ...

    def pmf(self, z):
        z = self._check_length(z)
        chosen = [u for u in self.independent_set if z[u] == 1]
        if len(chosen) != self.n_1 or not np.array_equal(z, self._vector(chosen)):
            return 0.0
        return 1.0 / math.comb(len(self.independent_set), self.n_1)

    def support_size(self):
        return math.comb(len(self.independent_set), self.n_1)

    def _support_arrays(self):
        rows = [
            self._vector(c) for c in itertools.combinations(self.independent_set, self.n_1)
        ]
        size = len(rows)
        return np.array(rows, dtype=np.int8).reshape(size, self.n), np.full(size, 1.0 / size)

    def sample_many(self, rng, size):
        units = np.asarray(self.independent_set)
        picks = _first_k_of_shuffle(rng, size, len(units), self.n_1)
        return np.array(
            [self._vector(units[row]) for row in picks], dtype=np.int8
        ).reshape(size, self.n)

    def describe(self):
        return {**super().describe(), "independent_set": list(self.independent_set), "n_1": self.n_1}


class IndependentSetATE(_IndependentSetDesign):
    """Treat ``n_1`` chosen independent-set units; everyone else is control."""

    kind = "is_ate"

    def _vector(self, chosen):
        z = np.zeros(self.n, dtype=np.int8)
        z[list(chosen)] = 1
        return z


class IndependentSetTTE(_IndependentSetDesign):
    """Treat ``n_1`` chosen independent-set units and all their neighbors."""

    kind = "is_tte"

    def _vector(self, chosen):
        z = np.zeros(self.n, dtype=np.int8)
        for u in chosen:
            z[u] = 1
            z[list(self._sym.neighbors(u))] = 1
        return z


@dataclass(frozen=True)
class ExposureCountSummary:
    """Mean and variance of ``N_tau``, the number of units at combination ``tau``."""

    tau: TreatmentExposure
    mean: float
    variance: float
    fixed: bool
    approximate: bool = False
    replicates: int | None = None

    @property
    def classification(self) -> str:
        return "Fixed" if self.fixed else "Random"


def exposure_counts(Z: np.ndarray, g: InterferenceGraph, m: ExposureModel, tau) -> np.ndarray:
    tau = TreatmentExposure.of(tau)
    E = exposures(m, g, Z)
    return ((Z == tau.z) & (E == tau.e)).sum(axis=1)


MC_FIXED_THRESHOLD = 1e-12


def exposure_count_summary(
    d: Design,
    g: InterferenceGraph,
    m: ExposureModel,
    tau,
    mode: str = "exact",
    R: int = 10_000,
    seed=None,
    budget: int = ENUMERATION_BUDGET,
) -> ExposureCountSummary:
    """Moments of ``N_tau`` by enumeration (exact) or simulation (approximate).

    In exact mode the classification compares counts across support points,
    so ``fixed`` is decided without floating-point tolerance.
    """
    tau = TreatmentExposure.of(tau)
    if mode == "exact":
        Z, p = d.support_arrays(budget)
        counts = exposure_counts(Z, g, m, tau)
        if np.all(counts == counts[0]):
            return ExposureCountSummary(tau, float(counts[0]), 0.0, True)
        mean = math.fsum(p * counts)
        var = math.fsum(p * (counts - mean) ** 2)
        return ExposureCountSummary(tau, mean, var, False)
    if mode in ("mc", "montecarlo"):
        Z = d.sample_many(_rng(seed), R)
        counts = exposure_counts(Z, g, m, tau).astype(float)
        var = float(counts.var(ddof=1)) if R > 1 else 0.0
        return ExposureCountSummary(
            tau, float(counts.mean()), var, var < MC_FIXED_THRESHOLD, approximate=True, replicates=R
        )
    raise ValueError(f"unknown mode {mode!r}; expected 'exact' or 'mc'")


@dataclass(frozen=True)
class DesignClassification:
    """Random / fixed exposure verdict for a contrast ``tau1`` vs ``tau0``.

    ``verdict`` is ``"Random"`` when both counts vary, ``"Fixed"`` when both
    are constant, and ``"Mixed"`` otherwise (neither definition applies).
    ``constant_design`` records a single-point support separately.
    """

    tau1: ExposureCountSummary
    tau0: ExposureCountSummary
    constant_design: bool

    @property
    def verdict(self) -> str:
        if self.tau1.fixed and self.tau0.fixed:
            return "Fixed"
        if not self.tau1.fixed and not self.tau0.fixed:
            return "Random"
        return "Mixed"

    @property
    def approximate(self) -> bool:
        return self.tau1.approximate or self.tau0.approximate


def classify_design(
    d: Design,
    g: InterferenceGraph,
    m: ExposureModel,
    tau1,
    tau0,
    mode: str = "exact",
    R: int = 10_000,
    seed=None,
    budget: int = ENUMERATION_BUDGET,
) -> DesignClassification:
    ss = np.random.SeedSequence(seed)
    s1, s0 = (np.random.default_rng(s) for s in ss.spawn(2))
    return DesignClassification(
        exposure_count_summary(d, g, m, tau1, mode, R, s1, budget),
        exposure_count_summary(d, g, m, tau0, mode, R, s0, budget),
        d.support_size() == 1,
    )
