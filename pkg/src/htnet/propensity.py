"""Propensity scores ``pi_i(z, e)``: exact enumeration, closed forms, Monte Carlo.

The closed forms cover CRD and Bernoulli designs under both exposure
models, and the cluster design under binary exposure. Exact enumeration
certifies them on small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design import (
    ENUMERATION_BUDGET,
    Bernoulli,
    ClusterRandomized,
    CompletelyRandomized,
    Design,
    _rng,
)
from .errors import DesignError
from .exposure import ExposureModel, TreatmentExposure, combinations, exposures
from .graph import InterferenceGraph


@dataclass(frozen=True)
class PropensityTable:
    """Per-unit propensities over every ``(z, e)`` combination of that unit.

    ``method`` is ``"exact"``, ``"analytic"`` or ``"montecarlo"``; MC tables
    carry binomial standard errors and the replicate count.
    """

    values: tuple[dict[TreatmentExposure, float], ...]
    method: str
    stderr: tuple[dict[TreatmentExposure, float], ...] | None = None
    replicates: int | None = None

    @property
    def n(self) -> int:
        return len(self.values)

    def __getitem__(self, key) -> float:
        i, tau = key
        return self.values[i].get(TreatmentExposure.of(tau), 0.0)

    def rows(self):
        """``(unit, z, e, pi, stderr)`` in unit, then combination order."""
        for i, row in enumerate(self.values):
            for tau in sorted(row):
                se = None if self.stderr is None else self.stderr[i][tau]
                yield i, tau.z, tau.e, row[tau], se


def _exposure_hits(Z, g, m, i, tau) -> np.ndarray:
    tau = TreatmentExposure.of(tau)
    E = exposures(m, g, Z)
    return (Z[:, i] == tau.z) & (E[:, i] == tau.e)


def propensity_exact(
    d: Design, g: InterferenceGraph, m: ExposureModel, i: int, tau, budget: int = ENUMERATION_BUDGET
) -> float:
    """Sum of ``p(z)`` over the assignments that reveal ``Y_i(tau)``."""
    Z, p = d.support_arrays(budget)
    return math.fsum(p[_exposure_hits(Z, g, m, i, tau)])


def propensity_table_exact(
    d: Design, g: InterferenceGraph, m: ExposureModel, budget: int = ENUMERATION_BUDGET
) -> PropensityTable:
    Z, p = d.support_arrays(budget)
    E = exposures(m, g, Z)
    values = []
    for i in range(g.n):
        row = {}
        for tau in combinations(m, g, i):
            hits = (Z[:, i] == tau.z) & (E[:, i] == tau.e)
            row[tau] = math.fsum(p[hits])
        values.append(row)
    return PropensityTable(tuple(values), "exact")


def _binary_crd(d: CompletelyRandomized, deg: int, tau: TreatmentExposure) -> float:
    n, n_t, n_c = d.n, d.n_t, d.n_c
    if tau.z == 1:
        share, pool_c = n_t / n, n_c
    else:
        share, pool_c = n_c / n, n_c - 1
    if share == 0.0:
        return 0.0
    if deg == 0:
        none_treated = 1.0
    elif deg <= pool_c:
        none_treated = math.comb(pool_c, deg) / math.comb(n - 1, deg)
    else:
        none_treated = 0.0
    if tau.e == 0:
        return share * none_treated
    return share * (1.0 - none_treated) if deg > 0 else 0.0


def _symmetric_crd(d: CompletelyRandomized, deg: int, tau: TreatmentExposure) -> float:
    n, n_t, n_c = d.n, d.n_t, d.n_c
    e = tau.e
    if e > deg:
        return 0.0
    if tau.z == 1:
        if n_t >= e + 1 and n_c >= deg - e:
            return n_t / n * math.comb(n_t - 1, e) * math.comb(n_c, deg - e) / math.comb(n - 1, deg)
        return 0.0
    if n_t >= e and n_c >= deg - e + 1:
        return n_c / n * math.comb(n_t, e) * math.comb(n_c - 1, deg - e) / math.comb(n - 1, deg)
    return 0.0


def _binary_bernoulli(p: float, deg: int, tau: TreatmentExposure) -> float:
    own = p if tau.z == 1 else 1.0 - p
    none_treated = (1.0 - p) ** deg
    return own * (none_treated if tau.e == 0 else 1.0 - none_treated)


def _symmetric_bernoulli(p: float, deg: int, tau: TreatmentExposure) -> float:
    e = tau.e
    if e > deg:
        return 0.0
    own = p if tau.z == 1 else 1.0 - p
    return own * math.comb(deg, e) * p**e * (1.0 - p) ** (deg - e)


def _falling_ratio(top: int, bottom: int, terms: int) -> float:
    """``prod_{j=1..terms} (top - j + 1) / (bottom - j + 1)``."""
    out = 1.0
    for j in range(1, terms + 1):
        num = top - j + 1
        if num <= 0:
            return 0.0
        out *= num / (bottom - j + 1)
    return out


def _binary_cluster(d: ClusterRandomized, g: InterferenceGraph, i: int, tau: TreatmentExposure) -> float:
    K, K_t, K_c = d.K, d.K_t, d.K_c
    part = d.partition
    own = part.assignment[i]
    touching = part.clusters_touching(g, i)
    u = len(touching)
    if tau.z == 0:
        # all u touched clusters drawn into control
        all_control = _falling_ratio(K_c, K, u)
        return all_control if tau.e == 0 else K_c / K - all_control
    if any(part.assignment[j] == own for j in g.neighbors(i)):
        # a same-cluster neighbor is treated along with unit i
        return K_t / K if tau.e == 1 else 0.0
    foreign = u - 1
    isolated = K_t / K * _falling_ratio(K_c, K - 1, foreign)
    return isolated if tau.e == 0 else K_t / K - isolated


def propensity_analytic(
    d: Design, g: InterferenceGraph, m: ExposureModel, i: int, tau
) -> float | None:
    """Closed-form propensity, or ``None`` when no formula covers the pair.

    Unattainable combinations (for instance exposure 1 for an isolated
    unit) return 0.
    """
    tau = TreatmentExposure.of(tau)
    deg = g.degree(i)
    if m is ExposureModel.BINARY and tau.e > 1:
        return 0.0
    if isinstance(d, CompletelyRandomized):
        if m is ExposureModel.BINARY:
            return _binary_crd(d, deg, tau)
        return _symmetric_crd(d, deg, tau)
    if isinstance(d, Bernoulli):
        if m is ExposureModel.BINARY:
            return _binary_bernoulli(d.p, deg, tau)
        return _symmetric_bernoulli(d.p, deg, tau)
    if isinstance(d, ClusterRandomized) and m is ExposureModel.BINARY:
        return _binary_cluster(d, g, i, tau)
    return None


def has_formula(d: Design, m: ExposureModel) -> bool:
    if isinstance(d, (CompletelyRandomized, Bernoulli)):
        return True
    return isinstance(d, ClusterRandomized) and m is ExposureModel.BINARY


def propensity_table_analytic(d: Design, g: InterferenceGraph, m: ExposureModel) -> PropensityTable:
    if not has_formula(d, m):
        raise DesignError(f"no closed-form propensities for {d.kind} design with {m.value} exposure")
    values = tuple(
        {tau: propensity_analytic(d, g, m, i, tau) for tau in combinations(m, g, i)}
        for i in range(g.n)
    )
    return PropensityTable(values, "analytic")


def propensity_mc(
    d: Design, g: InterferenceGraph, m: ExposureModel, i: int, tau, R: int, seed=None
) -> tuple[float, float]:
    """Frequency estimate of ``pi_i(tau)`` with its binomial standard error."""
    if R < 1:
        raise ValueError(f"need R >= 1 replicates, got {R}")
    Z = d.sample_many(_rng(seed), R)
    est = float(np.mean(_exposure_hits(Z, g, m, i, tau)))
    return est, math.sqrt(est * (1.0 - est) / R)


def propensity_table_mc(
    d: Design, g: InterferenceGraph, m: ExposureModel, R: int, seed=None
) -> PropensityTable:
    if R < 1:
        raise ValueError(f"need R >= 1 replicates, got {R}")
    Z = d.sample_many(_rng(seed), R)
    E = exposures(m, g, Z)
    values, errors = [], []
    for i in range(g.n):
        row, se_row = {}, {}
        for tau in combinations(m, g, i):
            est = float(np.mean((Z[:, i] == tau.z) & (E[:, i] == tau.e)))
            row[tau] = est
            se_row[tau] = math.sqrt(est * (1.0 - est) / R)
        values.append(row)
        errors.append(se_row)
    return PropensityTable(tuple(values), "montecarlo", tuple(errors), R)


def positivity_violations(ptable: PropensityTable, taus) -> list[tuple[int, TreatmentExposure, float]]:
    """Units and combinations whose propensity is 0 or 1."""
    out = []
    for i in range(ptable.n):
        for tau in taus:
            tau = TreatmentExposure.of(tau)
            pi = ptable[i, tau]
            if pi <= 0.0 or pi >= 1.0:
                out.append((i, tau, pi))
    return out


def alpha_normalized_inclusion(
    d: Design,
    g: InterferenceGraph,
    m: ExposureModel,
    i: int,
    e: int,
    mode: str = "exact",
    budget: int = ENUMERATION_BUDGET,
) -> float:
    """``E[I(Z_i = 1, E_i = e) / sum(Z)]``.

    Exact mode sums over the support with the summand set to 0 when no unit
    is treated. Analytic mode gives the CRD closed form, and for Bernoulli
    designs the expectation conditional on at least one treated unit.
    """
    if mode == "exact":
        Z, p = d.support_arrays(budget)
        hits = _exposure_hits(Z, g, m, i, (1, e))
        total = Z.sum(axis=1)
        ratio = np.divide(hits, total, out=np.zeros(len(p)), where=total > 0)
        return math.fsum(p * ratio)
    if mode != "analytic":
        raise ValueError(f"unknown mode {mode!r}; expected 'exact' or 'analytic'")
    if m is not ExposureModel.SYMMETRIC:
        raise DesignError("the closed-form normalized inclusion needs symmetric exposure")
    deg, n = g.degree(i), g.n
    if isinstance(d, CompletelyRandomized):
        return _crd_alpha(n, d.n_t, deg, e)
    if isinstance(d, Bernoulli):
        if d.p == 0.0:
            return 0.0
        q = 1.0 - d.p
        norm = 1.0 - q**n
        # K = sum(Z) given K >= 1; conditional on K = k the design is CRD(k)
        return math.fsum(
            math.comb(n, k) * d.p**k * q ** (n - k) / norm * _crd_alpha(n, k, deg, e)
            for k in range(1, n + 1)
        )
    raise DesignError(f"no closed-form normalized inclusion for the {d.kind} design")


def _crd_alpha(n: int, n_t: int, deg: int, e: int) -> float:
    n_c = n - n_t
    if e > deg or n_t < e + 1 or n_c < deg - e:
        return 0.0
    return math.comb(n_t - 1, e) * math.comb(n_c, deg - e) / math.comb(n - 1, deg) / n
