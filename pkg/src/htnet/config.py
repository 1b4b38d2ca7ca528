"""Scenario configuration: parsing, validation and defaults."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .design import (
    Bernoulli,
    ClusterRandomized,
    CompletelyRandomized,
    Design,
    IndependentSetATE,
    IndependentSetTTE,
)
from .errors import ConfigError, DesignError
from .estimators import ShrinkageSearch
from .exposure import ExposureModel
from .files import graph_from_mapping, load_structured, read_clusters, read_graph
from .graph import (
    InterferenceGraph,
    complete_graph,
    cycle_graph,
    empty_graph,
    greedy_independent_set,
    path_graph,
    star_graph,
)
from .outcomes import PRESETS, Estimand, preset

TASKS = ("propensity", "classify", "unbiased-family", "moments", "dominance", "shrinkage")
DESIGN_KINDS = ("bernoulli", "crd", "cluster", "is_ate", "is_tte")
MODES = ("exact", "mc")
TABLE_SOURCES = ("random", "file")
GRAPH_FAMILIES = {
    "path": path_graph,
    "cycle": cycle_graph,
    "star": star_graph,
    "complete": complete_graph,
    "empty": empty_graph,
}


@dataclass(frozen=True)
class TableSource:
    source: str
    box: tuple[float, float] = (0.0, 1.0)
    seed: int | None = None
    file: Path | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    graph: InterferenceGraph
    model: ExposureModel
    design: Design
    estimand: Estimand
    table: TableSource
    tasks: tuple[str, ...]
    mode: str = "exact"
    mc_reps: int = 10_000
    seed: int = 0
    workers: int = 1
    out: Path = Path("out")
    plots: bool = False
    shrinkage: ShrinkageSearch = field(default_factory=ShrinkageSearch)
    dominance_tables: int = 200
    dominance_seed: int = 0
    config_hash: str = ""
    source: Path | None = None


def _get(table: dict, key: str, kind, where: str, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{where}{key}", "missing field")
        return default
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigError(f"{where}{key}", f"expected {names}, got {value!r}")
    return value


def _choice(value: str, options, where: str) -> str:
    if value not in options:
        raise ConfigError(where, f"unknown value {value!r}; valid options: {list(options)}")
    return value


def _parse_graph(raw, base: Path) -> InterferenceGraph:
    if isinstance(raw, str):
        path = base / raw
        if not path.is_file():
            raise ConfigError("graph", f"file {str(path)!r} does not exist")
        return read_graph(path)
    if not isinstance(raw, dict):
        raise ConfigError("graph", "expected a file path or a table")
    if "family" in raw:
        family = _choice(raw["family"], GRAPH_FAMILIES, "graph.family")
        return GRAPH_FAMILIES[family](_get(raw, "n", int, "graph.", required=True))
    return graph_from_mapping(raw, "graph")


def _parse_design(raw: dict, g: InterferenceGraph, base: Path) -> Design:
    kind = _choice(_get(raw, "kind", str, "design.", required=True), DESIGN_KINDS, "design.kind")
    try:
        if kind == "bernoulli":
            return Bernoulli(g.n, _get(raw, "p", float, "design.", required=True))
        if kind == "crd":
            return CompletelyRandomized(g.n, _get(raw, "n_t", int, "design.", required=True))
        if kind == "cluster":
            rel = _get(raw, "cluster_file", str, "design.", required=True)
            path = base / rel
            if not path.is_file():
                raise ConfigError("design.cluster_file", f"file {str(path)!r} does not exist")
            part = read_clusters(path)
            if part.n != g.n:
                raise ConfigError("design.cluster_file", f"assigns {part.n} units but the graph has {g.n}")
            return ClusterRandomized(part, _get(raw, "K_t", int, "design.", required=True))
        n_1 = _get(raw, "n_1", int, "design.", required=True)
        chosen = _get(raw, "independent_set", list, "design.")
        units = greedy_independent_set(g) if chosen is None else [int(u) for u in chosen]
        if n_1 > len(units):
            raise ConfigError(
                "design.n_1", f"n_1={n_1} exceeds the independent set size {len(units)} (set {units})"
            )
        cls = IndependentSetATE if kind == "is_ate" else IndependentSetTTE
        return cls(g, tuple(units), n_1)
    except DesignError as exc:
        raise ConfigError("design", str(exc)) from None


def _parse_estimand(raw: dict) -> Estimand:
    if "preset" in raw:
        if "tau1" in raw or "tau0" in raw:
            raise ConfigError("estimand", "give either preset or tau1/tau0, not both")
        name = _get(raw, "preset", str, "estimand.")
        _choice(name.upper(), PRESETS, "estimand.preset")
        return preset(name)
    pair = []
    for key in ("tau1", "tau0"):
        v = _get(raw, key, list, "estimand.", required=True)
        if len(v) != 2 or not all(isinstance(x, int) for x in v) or v[0] not in (0, 1) or v[1] < 0:
            raise ConfigError(f"estimand.{key}", f"expected [z, e] with z in {{0, 1}} and e >= 0, got {v!r}")
        pair.append(tuple(v))
    if pair[0] == pair[1]:
        raise ConfigError("estimand", "tau1 and tau0 must differ")
    return Estimand(pair[0], pair[1], _get(raw, "name", str, "estimand."))


def _parse_table(raw: dict, base: Path, seed: int) -> TableSource:
    source = _choice(_get(raw, "source", str, "table.", required=True), TABLE_SOURCES, "table.source")
    if source == "file":
        if "box" in raw:
            raise ConfigError("table.box", "only applies to source 'random'")
        path = base / _get(raw, "file", str, "table.", required=True)
        if not path.is_file():
            raise ConfigError("table.file", f"file {str(path)!r} does not exist")
        return TableSource("file", file=path)
    if "file" in raw:
        raise ConfigError("table.file", "only applies to source 'file'")
    box = _get(raw, "box", list, "table.", default=[0.0, 1.0])
    if len(box) != 2 or not all(isinstance(x, (int, float)) for x in box) or box[0] > box[1]:
        raise ConfigError("table.box", f"expected [low, high] with low <= high, got {box!r}")
    return TableSource("random", (float(box[0]), float(box[1])), _get(raw, "seed", int, "table.", default=seed))


def _parse_shrinkage(raw: dict, seed: int, workers: int) -> ShrinkageSearch:
    kw = {"seed": _get(raw, "seed", int, "shrinkage.", default=seed), "workers": workers}
    for key, kind in (("restarts", int), ("iterations", int), ("samples", int), ("tolerance", float), ("agreement", float)):
        if key in raw:
            kw[key] = _get(raw, key, kind, "shrinkage.")
    unknown = set(raw) - set(kw) - {"seed"}
    if unknown:
        raise ConfigError("shrinkage", f"unknown keys {sorted(unknown)}")
    return ShrinkageSearch(**kw)


_TOP_KEYS = {
    "graph", "model", "design", "estimand", "table", "tasks", "mode", "mc_reps",
    "seed", "workers", "out", "plots", "shrinkage", "dominance",
}


def parse_config(path, overrides: dict | None = None) -> ScenarioConfig:
    """Read and validate a TOML (or JSON) scenario file.

    Relative file paths resolve against the directory holding the config.
    ``overrides`` replaces top-level keys (``seed``, ``workers``, ``mode``,
    ``mc_reps``, ``plots``) before validation, so seeds derived from the
    top-level seed follow it; an ``out`` override is taken as given.
    """
    path = Path(path)
    raw = load_structured(path)
    base = path.parent
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    out_override = overrides.pop("out", None)
    raw.update(overrides)
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], f"unknown key; valid keys: {sorted(_TOP_KEYS)}")
    if "graph" not in raw:
        raise ConfigError("graph", "missing field")
    g = _parse_graph(raw["graph"], base)
    try:
        model = ExposureModel.parse(_get(raw, "model", str, "", required=True))
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None
    seed = _get(raw, "seed", int, "", default=0)
    workers = _get(raw, "workers", int, "", default=1)
    if workers < 1:
        raise ConfigError("workers", "must be at least 1")
    mode = _choice(_get(raw, "mode", str, "", default="exact"), MODES, "mode")
    mc_reps = _get(raw, "mc_reps", int, "", default=10_000)
    if mc_reps < 2:
        raise ConfigError("mc_reps", "must be at least 2")
    tasks = _get(raw, "tasks", list, "", required=True)
    if not tasks:
        raise ConfigError("tasks", f"must list at least one of {list(TASKS)}")
    for t in tasks:
        _choice(t, TASKS, "tasks")
    for section in ("design", "estimand", "table"):
        if section not in raw:
            raise ConfigError(section, "missing table")
        if not isinstance(raw[section], dict):
            raise ConfigError(section, "expected a table")
    dominance = raw.get("dominance", {})
    return ScenarioConfig(
        graph=g,
        model=model,
        design=_parse_design(raw["design"], g, base),
        estimand=_parse_estimand(raw["estimand"]),
        table=_parse_table(raw["table"], base, seed),
        tasks=tuple(dict.fromkeys(tasks)),
        mode=mode,
        mc_reps=mc_reps,
        seed=seed,
        workers=workers,
        out=Path(out_override) if out_override is not None else base / _get(raw, "out", str, "", default="out"),
        plots=_get(raw, "plots", bool, "", default=False),
        shrinkage=_parse_shrinkage(raw.get("shrinkage", {}), seed, workers),
        dominance_tables=_get(dominance, "tables", int, "dominance.", default=200),
        dominance_seed=_get(dominance, "seed", int, "dominance.", default=seed),
        config_hash=hashlib.sha256(path.read_bytes()).hexdigest(),
        source=path,
    )
