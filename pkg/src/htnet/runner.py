"""Run the tasks of one scenario and write its report bundle."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig
from .design import classify_design
from .errors import EnumerationTooLarge, PositivityError
from .estimators import (
    ShrinkageResult,
    expand_restricted,
    general_weights,
    ht_estimator,
    restricted_solution,
    shrink,
    shrinkage_k,
    unbiased_family,
    unbiasedness_system,
    zero_estimator,
)
from .evaluation import (
    compare_mse,
    default_table_grid,
    exact_moments,
    mc_moments,
)
from .files import read_table, sha256_file, write_csv, write_json, write_table, write_triplets
from .outcomes import PotentialOutcomeTable, random_table, table_layout
from .propensity import has_formula, propensity_table_analytic, propensity_table_exact, propensity_table_mc

log = logging.getLogger(__name__)

MOMENT_HEADER = ["table_id", "estimator", "expectation", "bias", "variance", "mse"]


class TaskError(RuntimeError):
    """Wraps a module error with the task it came from."""

    def __init__(self, task: str, cause: Exception):
        super().__init__(f"task {task!r} failed: {cause}")
        self.task = task
        self.cause = cause


@dataclass
class ReportBundle:
    out: Path
    files: list[Path] = field(default_factory=list)
    results: dict = field(default_factory=dict)
    manifest: Path | None = None


def _table(cfg: ScenarioConfig) -> tuple[str, PotentialOutcomeTable]:
    layout = table_layout(cfg.graph, cfg.model)
    if cfg.table.source == "file":
        return cfg.table.file.stem, read_table(cfg.table.file, layout)
    t = random_table(cfg.graph, cfg.model, cfg.table.box, cfg.table.seed)
    return f"random-seed{cfg.table.seed}", t


def _moment_row(table_id, name, rep):
    return [table_id, name, rep.expectation, rep.bias, rep.variance, rep.mse]


class _Scenario:
    def __init__(self, cfg: ScenarioConfig, bundle: ReportBundle):
        self.cfg = cfg
        self.bundle = bundle
        self._shrinkage: ShrinkageResult | None = None

    def path(self, name: str) -> Path:
        p = self.cfg.out / name
        self.bundle.files.append(p)
        return p

    def args(self):
        return self.cfg.design, self.cfg.graph, self.cfg.model

    # tasks ------------------------------------------------------------------

    def propensity(self):
        cfg = self.cfg
        if cfg.mode == "mc":
            tables = [propensity_table_mc(*self.args(), cfg.mc_reps, cfg.seed)]
        else:
            tables = [propensity_table_exact(*self.args())]
        if has_formula(cfg.design, cfg.model):
            tables.append(propensity_table_analytic(*self.args()))
        rows = [
            [i, z, e, pi, t.method, se] for t in tables for i, z, e, pi, se in t.rows()
        ]
        write_csv(self.path("propensity.csv"), ["unit", "z", "e", "pi", "method", "stderr"], rows)
        self.bundle.results["propensity"] = tables
        if cfg.plots:
            from .plotting import propensity_chart

            propensity_chart(tables, self.path("propensity.svg"))

    def classify(self):
        cfg = self.cfg
        est = cfg.estimand
        c = classify_design(*self.args(), est.tau1, est.tau0, cfg.mode, cfg.mc_reps, cfg.seed)
        summary = lambda s: {
            "tau": [s.tau.z, s.tau.e],
            "mean": s.mean,
            "variance": s.variance,
            "classification": s.classification,
            "replicates": s.replicates,
        }
        payload = {
            "verdict": c.verdict,
            "approximate": c.approximate,
            "constant_design": c.constant_design,
            "tau1": summary(c.tau1),
            "tau0": summary(c.tau0),
        }
        write_json(self.path("classify.json"), payload)
        self.bundle.results["classify"] = c

    def unbiased_family(self):
        cfg = self.cfg
        system = unbiasedness_system(*self.args(), cfg.estimand)
        fam = unbiased_family(system)
        ht = ht_estimator(*self.args(), cfg.estimand, require_positivity=False)
        ht_residual = system.residual(expand_restricted(ht, system, cfg.graph, cfg.model))
        rfam, rweights = restricted_solution(system, cfg.graph, cfg.model)
        payload = {
            "feasible": fam.feasible,
            "rank": fam.rank,
            "null_dim": fam.null_dim,
            "residual": fam.residual,
            "reason": fam.reason,
            "rows": len(system.b),
            "columns": int(system.A.shape[1]),
            "ht_residual": ht_residual,
            "restricted_feasible": rfam.feasible,
            "restricted_null_dim": rfam.null_dim if rfam.feasible else None,
            "restricted_equals_ht": (
                float(np.max(np.abs(rweights.table.data - ht.table.data))) if rweights is not None else None
            ),
        }
        write_json(self.path("unbiased_family.json"), payload)
        write_triplets(self.path("system.txt"), system)
        write_csv(self.path("ht_weights.csv"), ["unit", "z", "e", "weight"], ht.entries())
        if fam.feasible:
            W = general_weights(system, fam.particular).W
            rows = [[i, s, float(W[s, i])] for i in range(system.n) for s in range(system.support_size)]
            write_csv(self.path("particular_weights.csv"), ["unit", "support_index", "weight"], rows)
        self.bundle.results["unbiased-family"] = fam

    def moments(self):
        cfg = self.cfg
        table_id, table = _table(cfg)
        write_table(self.path("table.csv"), table)
        estimators = [
            ht_estimator(*self.args(), cfg.estimand, require_positivity=False),
            zero_estimator(table.num_levels),
        ]
        rows, reports = [], []
        for w in estimators:
            if cfg.mode == "mc":
                rep = mc_moments(w, *self.args(), table, cfg.estimand, cfg.mc_reps, cfg.seed, cfg.workers, table_id)
                rows.append(_moment_row(table_id, w.name, rep) + [rep.stderr[k] for k in ("expectation", "variance", "mse")])
            else:
                rep = exact_moments(w, *self.args(), table, cfg.estimand, table_id)
                rows.append(_moment_row(table_id, w.name, rep))
            reports.append(rep)
        header = MOMENT_HEADER + (["se_expectation", "se_variance", "se_mse"] if cfg.mode == "mc" else [])
        write_csv(self.path("moments.csv"), header, rows)
        self.bundle.results["moments"] = reports
        if cfg.plots:
            from .plotting import moments_chart

            moments_chart(rows, self.path("moments.svg"))

    def _shrinkage_result(self) -> ShrinkageResult:
        if self._shrinkage is None:
            self._shrinkage = shrinkage_k(*self.args(), self.cfg.estimand, self.cfg.shrinkage)
        return self._shrinkage

    def shrinkage(self):
        sk = self._shrinkage_result()
        search = self.cfg.shrinkage
        payload = {
            **sk.as_dict(),
            "search": {
                "restarts": search.restarts,
                "iterations": search.iterations,
                "samples": search.samples,
                "seed": search.seed,
                "tolerance": search.tolerance,
                "agreement": search.agreement,
            },
            "witness": sk.witness.tolist(),
        }
        write_json(self.path("shrinkage.json"), payload)
        self.bundle.results["shrinkage"] = sk

    def dominance(self):
        cfg = self.cfg
        sk = self._shrinkage_result()
        grid = {"sphere_tables": cfg.dominance_tables, "seed": cfg.dominance_seed, "axis_tables": True}
        if sk.status != "ok":
            payload = {"verdict": None, "reason": f"shrinkage {sk.status}", "table_set": grid}
            write_json(self.path("dominance.json"), payload)
            self.bundle.results["dominance"] = payload
            return
        ht = ht_estimator(*self.args(), cfg.estimand)
        shrunk = shrink(ht, sk.k)
        tables = default_table_grid(table_layout(cfg.graph, cfg.model), cfg.dominance_tables, cfg.dominance_seed)
        rows, mse_a, mse_b = [], [], []
        for tid, t in tables:
            ra = exact_moments(shrunk, *self.args(), t, cfg.estimand, tid)
            rb = exact_moments(ht, *self.args(), t, cfg.estimand, tid)
            rows += [_moment_row(tid, shrunk.name, ra), _moment_row(tid, ht.name, rb)]
            mse_a.append(ra.mse)
            mse_b.append(rb.mse)
        verdict = compare_mse(mse_a, mse_b, [tid for tid, _ in tables])
        labels = {"A-dominates": f"{shrunk.name} dominates {ht.name}", "B-dominates": f"{ht.name} dominates {shrunk.name}"}
        payload = {
            **verdict.as_dict(),
            "A": shrunk.name,
            "B": ht.name,
            "summary": labels.get(verdict.verdict, verdict.verdict),
            "k": sk.k,
            "table_set": grid,
        }
        write_csv(self.path("dominance.csv"), MOMENT_HEADER, rows)
        write_json(self.path("dominance.json"), payload)
        self.bundle.results["dominance"] = verdict
        if cfg.plots:
            from .plotting import dominance_chart

            dominance_chart([tid for tid, _ in tables], mse_a, mse_b, shrunk.name, ht.name, self.path("dominance.svg"))


_TASKS = {
    "propensity": _Scenario.propensity,
    "classify": _Scenario.classify,
    "unbiased-family": _Scenario.unbiased_family,
    "moments": _Scenario.moments,
    "shrinkage": _Scenario.shrinkage,
    "dominance": _Scenario.dominance,
}


def run_scenario(cfg: ScenarioConfig) -> ReportBundle:
    """Run every configured task in order, then write ``manifest.json``.

    Module errors are re-raised as ``TaskError`` naming the task, except
    budget and positivity failures, which keep their own types so callers
    can map them to exit codes.
    """
    cfg.out.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(cfg.out)
    scenario = _Scenario(cfg, bundle)
    start = time.perf_counter()
    for task in cfg.tasks:
        log.info("running task %s", task)
        try:
            _TASKS[task](scenario)
        except (EnumerationTooLarge, PositivityError) as exc:
            exc.task = task
            raise
        except (ValueError, RuntimeError) as exc:
            raise TaskError(task, exc) from exc
    manifest = {
        "tool": "htnet",
        "version": __version__,
        "config": str(cfg.source) if cfg.source else None,
        "config_sha256": cfg.config_hash,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "mode": cfg.mode,
        "mc_reps": cfg.mc_reps if cfg.mode == "mc" else None,
        "tasks": list(cfg.tasks),
        "wall_time_s": time.perf_counter() - start,
        "files": {p.name: sha256_file(p) for p in bundle.files},
    }
    bundle.manifest = write_json(cfg.out / "manifest.json", manifest)
    return bundle
