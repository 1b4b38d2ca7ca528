"""Linear weighted estimators, the unbiasedness system, and shrinkage.

Two weight families are supported. ``RestrictedWeights`` depend on a unit's
own ``(z_i, e_i)`` and include the Horvitz-Thompson estimator.
``GeneralWeights`` assign ``w_i(z)`` per support point of the design.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .design import ENUMERATION_BUDGET, Design
from .errors import PositivityError
from .evaluation import exact_context, table_indices, variance_form
from .exposure import ExposureModel, TreatmentExposure, combinations, exposures
from .graph import InterferenceGraph
from .outcomes import Estimand, ObservedData, PotentialOutcomeTable, contrast_vector, table_layout
from .propensity import PropensityTable, positivity_violations, propensity_table_exact


class LinearEstimator:
    """Estimate ``sum_i w_i * Y_i^obs`` with weights supplied by subclasses."""

    name = "linear"

    def weights_for(self, Z: np.ndarray, E: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Per-unit weights for each row of assignments ``Z`` with exposures ``E``."""
        raise NotImplementedError

    def estimate(self, obs: ObservedData) -> float:
        return linear_estimate(self, obs)


class RestrictedWeights(LinearEstimator):
    """Weights ``w_i(z_i, e_i)`` stored in the same flat layout as a table."""

    def __init__(self, num_levels, data, name="restricted"):
        self.table = PotentialOutcomeTable(num_levels, data)
        self.name = name

    @property
    def num_levels(self):
        return self.table.num_levels

    def weight(self, i: int, z: int, e: int) -> float:
        return self.table.value(i, z, e)

    def weights_for(self, Z, E, idx):
        return self.table.data[idx]

    def entries(self):
        return self.table.entries()


def ht_weights(
    ptable: PropensityTable,
    est: Estimand,
    n: int | None = None,
    num_levels=None,
    require_positivity: bool = True,
) -> RestrictedWeights:
    """Horvitz-Thompson weights ``+-1 / (n pi_i(tau))`` at the contrasted combinations.

    Raises ``PositivityError`` if any ``pi_i(tau1)`` or ``pi_i(tau0)`` is 0 or 1.
    With ``require_positivity=False`` a zero propensity gets weight 0, since
    that combination is never observed under the design.
    """
    n = ptable.n if n is None else n
    if require_positivity:
        bad = positivity_violations(ptable, (est.tau1, est.tau0))
        if bad:
            raise PositivityError(bad)
    if num_levels is None:
        num_levels = tuple(1 + max(t.e for t in row) for row in ptable.values)
    w = PotentialOutcomeTable.zeros(num_levels)
    data = np.zeros(w.size)
    for i in range(ptable.n):
        for tau, sign in ((est.tau1, 1.0), (est.tau0, -1.0)):
            pi = ptable[i, tau]
            if pi > 0.0:
                data[w.index(i, tau.z, tau.e)] = sign / (n * pi)
    return RestrictedWeights(num_levels, data, name="HT")


def ht_estimator(
    d: Design,
    g: InterferenceGraph,
    m: ExposureModel,
    est: Estimand,
    require_positivity: bool = True,
    budget: int = ENUMERATION_BUDGET,
) -> RestrictedWeights:
    """H-T estimator with exactly enumerated propensities."""
    ptable = propensity_table_exact(d, g, m, budget)
    return ht_weights(ptable, est, g.n, table_layout(g, m), require_positivity)


def zero_estimator(num_levels) -> RestrictedWeights:
    return RestrictedWeights(num_levels, np.zeros(sum(2 * k for k in num_levels)), name="zero")


class GeneralWeights(LinearEstimator):
    """Weights ``w_i(z)`` indexed by the rows of an enumerated support ``Z``."""

    def __init__(self, Z: np.ndarray, W: np.ndarray, name="general"):
        self.Z = np.asarray(Z, dtype=np.int8)
        self.W = np.asarray(W, dtype=float)
        if self.W.shape != self.Z.shape:
            raise ValueError(f"weights shape {self.W.shape} does not match support {self.Z.shape}")
        if not np.all(np.isfinite(self.W)):
            raise ValueError("general weights must be finite")
        self.name = name
        self._row = {row.tobytes(): s for s, row in enumerate(self.Z)}

    def rows_for(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.int8)
        try:
            return np.array([self._row[row.tobytes()] for row in Z], dtype=np.int64)
        except KeyError:
            raise ValueError("weights are undefined for an assignment outside the support") from None

    def weights_for(self, Z, E, idx):
        return self.W[self.rows_for(Z)]


class ShrunkEstimator(LinearEstimator):
    """``(1 - k)`` times a base linear estimator."""

    def __init__(self, base: LinearEstimator, k: float):
        self.base = base
        self.k = float(k)
        self.name = f"shrunk-{base.name}"

    def weights_for(self, Z, E, idx):
        return (1.0 - self.k) * self.base.weights_for(Z, E, idx)


def shrink(estimator: LinearEstimator, k: float) -> ShrunkEstimator:
    if not 0.0 < k <= 1.0:
        raise ValueError(f"shrinkage constant must lie in (0, 1], got {k}")
    return ShrunkEstimator(estimator, k)


def linear_estimate(w: LinearEstimator, obs: ObservedData) -> float:
    Z = np.asarray(obs.z, dtype=np.int8)[None, :]
    E = np.asarray(obs.exposures, dtype=np.int64)[None, :]
    idx = None
    if isinstance(w, (RestrictedWeights, ShrunkEstimator)):
        levels = _levels_of(w)
        if np.any(E[0] >= np.asarray(levels)):
            raise ValueError("weights are undefined at a realized exposure level")
        idx = table_indices(levels, Z, E)
    weights = w.weights_for(Z, E, idx)[0]
    return float(np.dot(weights, obs.y))


def _levels_of(w):
    while isinstance(w, ShrunkEstimator):
        w = w.base
    return w.num_levels if isinstance(w, RestrictedWeights) else None


# unbiasedness system ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class UnbiasednessSystem:
    """``A x = b`` over variables ``w_i(z)``, one row per unit and combination.

    Columns are unit-major: variable ``w_i(z_s)`` sits at column ``i * S + s``.
    """

    A: np.ndarray
    b: np.ndarray
    row_labels: list[tuple[int, TreatmentExposure]]
    Z: np.ndarray
    p: np.ndarray
    n: int

    @property
    def support_size(self) -> int:
        return len(self.p)

    def block(self, i: int):
        rows = [r for r, (u, _) in enumerate(self.row_labels) if u == i]
        S = self.support_size
        return rows, self.A[np.ix_(rows, range(i * S, (i + 1) * S))], self.b[rows]

    def residual(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.A @ x - self.b))) if len(self.b) else 0.0

    def triplets(self):
        """Nonzero ``(row, col, value)`` entries, for matrix-market style export."""
        rows, cols = np.nonzero(self.A)
        for r, c in zip(rows, cols):
            yield int(r), int(c), float(self.A[r, c])


def unbiasedness_system(
    d: Design,
    g: InterferenceGraph,
    m: ExposureModel,
    est: Estimand,
    budget: int = ENUMERATION_BUDGET,
) -> UnbiasednessSystem:
    ctx = exact_context(d, g, m, budget)
    n, S = g.n, ctx.size
    labels, rows, rhs = [], [], []
    for i in range(n):
        for tau in combinations(m, g, i):
            row = np.zeros(n * S)
            hits = (ctx.Z[:, i] == tau.z) & (ctx.E[:, i] == tau.e)
            row[i * S : (i + 1) * S] = np.where(hits, ctx.p, 0.0)
            labels.append((i, tau))
            rows.append(row)
            rhs.append(1.0 / n if tau == est.tau1 else -1.0 / n if tau == est.tau0 else 0.0)
    A = np.array(rows).reshape(len(rows), n * S)
    return UnbiasednessSystem(A, np.array(rhs), labels, ctx.Z, ctx.p, n)


@dataclass(frozen=True, eq=False)
class UnbiasedFamily:
    """Solution set ``particular + span(null basis)`` or an infeasible verdict."""

    feasible: bool
    particular: np.ndarray | None
    null_blocks: list[np.ndarray]
    rank: int
    residual: float
    reason: str = ""
    block_columns: list[slice] = field(default_factory=list)

    @property
    def null_dim(self) -> int:
        return sum(b.shape[1] for b in self.null_blocks)

    @property
    def null_basis(self) -> np.ndarray:
        """Dense orthonormal basis, one column per null direction."""
        total = sum(sl.stop - sl.start for sl in self.block_columns)
        basis = np.zeros((total, self.null_dim))
        col = 0
        for sl, blk in zip(self.block_columns, self.null_blocks):
            basis[sl, col : col + blk.shape[1]] = blk
            col += blk.shape[1]
        return basis

    def perturbation(self, rng: np.random.Generator) -> np.ndarray:
        """Random vector in the null space."""
        total = sum(sl.stop - sl.start for sl in self.block_columns)
        out = np.zeros(total)
        for sl, blk in zip(self.block_columns, self.null_blocks):
            if blk.shape[1]:
                out[sl] = blk @ rng.standard_normal(blk.shape[1])
        return out


def _solve_blocks(blocks, rtol):
    particular, nulls, rank_total, worst = [], [], 0, 0.0
    for A_i, b_i in blocks:
        cols = A_i.shape[1]
        if A_i.shape[0] == 0:
            particular.append(np.zeros(cols))
            nulls.append(np.eye(cols))
            continue
        U, s, Vt = np.linalg.svd(A_i, full_matrices=True)
        cutoff = rtol * s[0] if s.size and s[0] > 0 else 0.0
        rank = int(np.sum(s > cutoff)) if s.size and s[0] > 0 else 0
        coef = (U[:, :rank].T @ b_i) / s[:rank]
        x_i = Vt[:rank].T @ coef
        particular.append(x_i)
        nulls.append(Vt[rank:].T.copy())
        rank_total += rank
        worst = max(worst, float(np.max(np.abs(A_i @ x_i - b_i))))
    return particular, nulls, rank_total, worst


def unbiased_family(
    sys: UnbiasednessSystem, rtol: float = 1e-9, feasibility_tol: float = 1e-10
) -> UnbiasedFamily:
    """Least-norm solution and null space of the unbiasedness system.

    The system decouples by unit, so each unit's block is solved by SVD with
    rank decided at relative tolerance ``rtol``.
    """
    S = sys.support_size
    blocks, slices = [], []
    for i in range(sys.n):
        _, A_i, b_i = sys.block(i)
        blocks.append((A_i, b_i))
        slices.append(slice(i * S, (i + 1) * S))
    particular, nulls, rank, residual = _solve_blocks(blocks, rtol)
    scale = max(1.0, float(np.max(np.abs(sys.b)))) if len(sys.b) else 1.0
    if residual > feasibility_tol * scale:
        bad = [
            (u, str(t)) for (u, t), a, rhs in zip(sys.row_labels, sys.A, sys.b)
            if rhs != 0.0 and not np.any(a)
        ]
        reason = "no solution: least-squares residual {:.3g}".format(residual)
        if bad:
            reason += f"; rows with empty Omega but nonzero target: {bad}"
        return UnbiasedFamily(False, None, nulls, rank, residual, reason, slices)
    return UnbiasedFamily(True, np.concatenate(particular), nulls, rank, residual, "", slices)


def general_weights(sys: UnbiasednessSystem, x: np.ndarray, name="general") -> GeneralWeights:
    """Reshape a unit-major solution vector into ``GeneralWeights``."""
    S = sys.support_size
    W = np.asarray(x, dtype=float).reshape(sys.n, S).T
    return GeneralWeights(sys.Z, W, name)


def expand_restricted(w: LinearEstimator, sys: UnbiasednessSystem, g, m) -> np.ndarray:
    """Write any linear estimator as a unit-major ``w_i(z)`` vector over the support."""
    S = sys.support_size
    E = exposures(m, g, sys.Z)
    idx = table_indices(table_layout(g, m), sys.Z, E)
    W = w.weights_for(sys.Z, E, idx)
    return W.T.reshape(sys.n * S)


def restricted_solution(
    sys: UnbiasednessSystem, g: InterferenceGraph, m: ExposureModel, rtol: float = 1e-9
) -> tuple[UnbiasedFamily, RestrictedWeights | None]:
    """Solve the system with weights constrained to be constant on each ``Omega_i``.

    Substituting ``w_i(z) = v_i(z_i, e_i)`` gives one variable per unit and
    combination. When the solution is unique it is returned as weights.
    """
    E = exposures(m, g, sys.Z)
    layout = table_layout(g, m)
    template = PotentialOutcomeTable.zeros(layout)
    blocks, slices = [], []
    for i in range(sys.n):
        rows, A_i, b_i = sys.block(i)
        combos = combinations(m, g, i)
        P = np.zeros((sys.support_size, len(combos)))
        for c, tau in enumerate(combos):
            P[:, c] = (sys.Z[:, i] == tau.z) & (E[:, i] == tau.e)
        blocks.append((A_i @ P, b_i))
        start = template.index(i, 0, 0)
        slices.append(slice(start, start + len(combos)))
    particular, nulls, rank, residual = _solve_blocks(blocks, rtol)
    scale = max(1.0, float(np.max(np.abs(sys.b)))) if len(sys.b) else 1.0
    if residual > 1e-10 * scale:
        return UnbiasedFamily(False, None, nulls, rank, residual, "restricted system has no solution", slices), None
    fam = UnbiasedFamily(True, np.concatenate(particular), nulls, rank, residual, "", slices)
    weights = RestrictedWeights(layout, fam.particular, name="restricted-unbiased")
    return fam, weights if fam.null_dim == 0 else None


# shrinkage -------------------------------------------------------------------


@dataclass(frozen=True)
class ShrinkageSearch:
    """Budget for the sphere search of ``min 2 Var / (Var + theta^2)``."""

    restarts: int = 8
    iterations: int = 2000
    tolerance: float = 1e-12
    seed: int | None = 0
    samples: int = 2000
    scale: float = 1.0
    agreement: float = 1e-6
    zero_tol: float = 1e-10
    fd_step: float = 1e-6
    workers: int = 1


@dataclass(frozen=True, eq=False)
class ShrinkageResult:
    """Outcome of the shrinkage-constant search.

    ``status`` is ``"ok"`` or ``"hypothesis fails"`` (a table with zero
    variance and nonzero effect was found). ``certified`` is true only when
    every restart converged to the same minimum within ``agreement``;
    otherwise ``k0`` is an upper bound on the true minimum.
    """

    status: str
    k: float | None
    k0: float
    certified: bool
    restart_values: list[float]
    iterations: list[int]
    witness: np.ndarray
    witness_variance: float
    witness_theta: float
    unbiased: bool

    @property
    def certificate(self) -> str:
        return "global at tolerance" if self.certified else "upper bound on k0 only"

    def as_dict(self) -> dict:
        return {
            "status": self.status,
            "k": self.k,
            "k0": self.k0,
            "certificate": self.certificate,
            "restart_values": self.restart_values,
            "iterations": self.iterations,
            "witness_variance": self.witness_variance,
            "witness_theta": self.witness_theta,
            "unbiased_base": self.unbiased,
        }


class _Ratio:
    """``2 y'Vy / y'(V + C)y`` on the unit sphere; undefined (inf) where both vanish."""

    def __init__(self, V, C):
        self.V = V
        self.D = V + C
        self.floor = 1e-13 * max(float(np.linalg.norm(self.D, 2)), 1e-300)

    def __call__(self, y):
        y = y / np.linalg.norm(y)
        den = float(y @ self.D @ y)
        if den <= self.floor:
            return math.inf
        return max(2.0 * float(y @ self.V @ y), 0.0) / den


def _fd_gradient(f, y, h):
    g = np.zeros_like(y)
    for j in range(len(y)):
        step = np.zeros_like(y)
        step[j] = h
        fp, fm = f(y + step), f(y - step)
        if math.isinf(fp) or math.isinf(fm):
            g[j] = 0.0
        else:
            g[j] = (fp - fm) / (2 * h)
    return g


def _descend(f, y0, search: ShrinkageSearch):
    y = y0 / np.linalg.norm(y0)
    fy = f(y)
    step = 1.0
    it = 0
    for it in range(1, search.iterations + 1):
        grad = _fd_gradient(f, y, search.fd_step)
        grad -= (grad @ y) * y
        gnorm2 = float(grad @ grad)
        if gnorm2 < search.tolerance**2 or fy <= search.zero_tol:
            break
        t = min(step * 4.0, 1e6)
        while t > 1e-18:
            cand = y - t * grad
            cand /= np.linalg.norm(cand)
            fc = f(cand)
            if fc <= fy - 1e-4 * t * gnorm2:
                break
            t *= 0.5
        else:
            break
        improvement = fy - fc
        y, fy, step = cand, fc, t
        if improvement < search.tolerance * max(1.0, abs(fy)):
            break
    return y, fy, it


def _structured_candidates(V, c):
    """Axis tables and the contrast direction for the coarse pre-pass."""
    dim = V.shape[0]
    out = [np.eye(dim)[j] for j in range(dim)]
    if np.any(c):
        out.append(c.copy())
    return out


def shrinkage_k(
    d: Design,
    g: InterferenceGraph,
    m: ExposureModel,
    est: Estimand,
    search: ShrinkageSearch = ShrinkageSearch(),
    estimator: LinearEstimator | None = None,
    budget: int = ENUMERATION_BUDGET,
) -> ShrinkageResult:
    """Search the unit sphere of tables for ``k0 = min 2 Var / (Var + theta^2)``.

    The objective is evaluated from exact design moments. A random pre-pass
    (plus axis and propensity-shaped tables) seeds several projected gradient
    descents with finite-difference gradients.

    The base estimator defaults to H-T with exact propensities. When
    positivity fails, H-T gets zero weight at unobservable combinations and
    the search is confined to tables that vanish there. If that search
    still finds no zero-variance table, ``PositivityError`` is raised.
    """
    ctx = exact_context(d, g, m, budget)
    unbiased = True
    witnesses = []
    V, c = None, None
    if estimator is None:
        ptable = propensity_table_exact(d, g, m, budget)
        violations = positivity_violations(ptable, (est.tau1, est.tau0))
        unbiased = not violations
        estimator = ht_weights(ptable, est, g.n, ctx.layout, require_positivity=False)
        witnesses = [_propensity_witness(ptable, ctx.layout, tau) for tau in (est.tau1, est.tau0)]
    V, c = variance_form(estimator, ctx, est)
    if not unbiased:
        template = PotentialOutcomeTable.zeros(ctx.layout)
        for i, tau, pi in violations:
            if pi <= 0.0:
                c[template.index(i, tau.z, tau.e)] = 0.0
    f = _Ratio(V, np.outer(c, c))

    master = np.random.SeedSequence(search.seed)
    pre_seed, *restart_seeds = master.spawn(search.restarts + 1)
    pre_rng = np.random.default_rng(pre_seed)
    samples = pre_rng.uniform(-search.scale, search.scale, (search.samples, ctx.dim))
    candidates = list(samples) + _structured_candidates(V, c) + witnesses
    scores = np.array([f(y) if np.linalg.norm(y) > 0 else math.inf for y in candidates])
    order = np.argsort(scores, kind="stable")
    starts = [candidates[j] for j in order[: max(1, search.restarts // 2)]]
    while len(starts) < search.restarts:
        starts.append(np.random.default_rng(restart_seeds[len(starts)]).standard_normal(ctx.dim))

    def run(y0):
        return _descend(f, y0, search)

    if search.workers > 1:
        with ThreadPoolExecutor(max_workers=search.workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(y0) for y0 in starts]

    finals = [r[1] for r in results]
    best = int(np.argmin(finals))
    y_best, k0, _ = results[best]
    certified = all(
        math.isfinite(v) and abs(v - k0) <= search.agreement * max(1.0, abs(k0)) for v in finals
    )
    common = dict(
        k0=float(k0),
        certified=certified,
        restart_values=[float(v) for v in finals],
        iterations=[int(r[2]) for r in results],
        witness=y_best,
        witness_variance=float(y_best @ V @ y_best),
        witness_theta=float(c @ y_best),
        unbiased=unbiased,
    )
    if k0 <= search.zero_tol:
        return ShrinkageResult(status="hypothesis fails", k=None, **common)
    if not unbiased:
        raise PositivityError(violations)
    return ShrinkageResult(status="ok", k=min(float(k0), 1.0), **common)


def _propensity_witness(ptable, layout, tau):
    """Table with ``Y_i(tau) = pi_i(tau)`` and zeros elsewhere."""
    t = PotentialOutcomeTable.zeros(layout)
    data = np.zeros(t.size)
    for i in range(ptable.n):
        data[t.index(i, tau.z, tau.e)] = ptable[i, tau]
    return data
