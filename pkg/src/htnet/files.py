"""Reading graph, cluster and table files; writing byte-stable CSV and JSON."""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from pathlib import Path

from .errors import ConfigError, GraphError
from .graph import ClusterPartition, InterferenceGraph, build_graph
from .outcomes import PotentialOutcomeTable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def load_structured(path) -> dict:
    """Parse a JSON or TOML file, chosen by extension (TOML unless ``.json``)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file: {exc.strerror}") from None
    try:
        if path.suffix.lower() == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(str(path), f"malformed file: {exc}") from None


def graph_from_mapping(data: dict, source: str = "graph") -> InterferenceGraph:
    for key in ("n", "neighborhoods"):
        if key not in data:
            raise ConfigError(f"{source}.{key}", "missing field")
    try:
        return build_graph(int(data["n"]), [list(map(int, row)) for row in data["neighborhoods"]])
    except (TypeError, ValueError, GraphError) as exc:
        raise ConfigError(f"{source}.neighborhoods", str(exc)) from None


def read_graph(path) -> InterferenceGraph:
    return graph_from_mapping(load_structured(path), str(path))


def read_clusters(path) -> ClusterPartition:
    data = load_structured(path)
    for key in ("K", "cluster"):
        if key not in data:
            raise ConfigError(f"{path}:{key}", "missing field")
    try:
        return ClusterPartition(int(data["K"]), tuple(int(c) for c in data["cluster"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}:cluster", str(exc)) from None


def read_table(path, layout) -> PotentialOutcomeTable:
    """Outcome table from a CSV with header ``unit,z,e,value``."""
    entries = {}
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"unit", "z", "e", "value"} - set(reader.fieldnames or ())
            if missing:
                raise ConfigError(str(path), f"table CSV lacks columns {sorted(missing)}")
            for line, row in enumerate(reader, start=2):
                try:
                    key = (int(row["unit"]), int(row["z"]), int(row["e"]))
                    entries[key] = float(row["value"])
                except ValueError:
                    raise ConfigError(f"{path}:{line}", "non-numeric table entry") from None
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file: {exc.strerror}") from None
    return PotentialOutcomeTable.from_entries(layout, entries)


def fmt(value) -> str:
    """Shortest round-trip text for floats; empty for ``None``."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def write_table(path, table: PotentialOutcomeTable) -> Path:
    return write_csv(path, ["unit", "z", "e", "value"], table.entries())


def write_triplets(path, system) -> Path:
    """Coordinate-format text: a size line, then ``row col value`` (1-based)."""
    entries = list(system.triplets())
    rows, cols = system.A.shape
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{rows} {cols} {len(entries)}\n")
        for r, c, v in entries:
            fh.write(f"{r + 1} {c + 1} {v!r}\n")
        fh.write("% rhs\n")
        for v in system.b:
            fh.write(f"{float(v)!r}\n")
    return Path(path)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
