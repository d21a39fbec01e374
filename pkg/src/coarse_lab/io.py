"""JSON space/map files, CSV control tables and label sequences."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from .maps import ControlTable, MapWitness
from .metric import (FiniteMetricSpace, MetricError, WeightedGraph, format_label, model_space,
                     shortest_path_metric)

REPORT_COLUMNS = ("check", "scale", "constant", "bound", "verdict")


class InputError(ValueError):
    """Malformed or inconsistent input; the CLI maps it to exit status 2."""


def _read_json(path) -> object:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from exc


def space_from_json(data: dict, name: str = "") -> FiniteMetricSpace:
    if not isinstance(data, dict):
        raise InputError("space file must hold a JSON object")
    if "graph" in data:
        g = data["graph"]
        try:
            verts = [str(v) for v in g["vertices"]]
            edges = [(str(u), str(v), float(w)) for u, v, w in g["edges"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad graph description: {exc}") from exc
        try:
            return shortest_path_metric(WeightedGraph(tuple(verts), tuple(edges)), name=name)
        except MetricError as exc:
            raise InputError(str(exc)) from exc
    if "points" not in data or "matrix" not in data:
        raise InputError("space file needs 'points' and 'matrix' (or 'graph')")
    pts = [str(p) for p in data["points"]]
    try:
        D = np.array(data["matrix"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"distance matrix is not numeric: {exc}") from exc
    try:
        return FiniteMetricSpace(pts, D, name=name)
    except MetricError as exc:
        raise InputError(str(exc)) from exc


def space_to_json(space: FiniteMetricSpace) -> dict:
    D = space.dist
    return {"points": [format_label(p) for p in space.points],
            "matrix": [[_num(v) for v in row] for row in D]}


def _num(v: float):
    v = float(v)
    if math.isfinite(v) and v == int(v):
        return int(v)
    return v


def load_space(spec: str) -> FiniteMetricSpace:
    """A JSON file path, or ``family:size`` naming a model truncation."""
    if os.path.exists(spec):
        return space_from_json(_read_json(spec), name=Path(spec).stem)
    family, sep, size = spec.rpartition(":")
    if sep and family:
        try:
            return model_space(family).space(int(size))
        except (MetricError, ValueError) as exc:
            raise InputError(f"cannot build {spec!r}: {exc}") from exc
    raise InputError(f"no such space file {spec!r}")


def map_from_json(data: dict, source: FiniteMetricSpace, target: FiniteMetricSpace) -> MapWitness:
    if not isinstance(data, dict) or "map" not in data or not isinstance(data["map"], dict):
        raise InputError("map file needs a 'map' object")
    try:
        return MapWitness.from_mapping(source, target, {str(k): str(v) for k, v in data["map"].items()},
                                       name=str(data.get("name", "")))
    except (KeyError, ValueError) as exc:
        raise InputError(f"bad map: {exc}") from exc


def map_to_json(w: MapWitness) -> dict:
    return {"source": w.source.name, "target": w.target.name,
            "map": {format_label(x): format_label(w.target.points[j])
                    for x, j in zip(w.source.points, w.images)}}


def load_map(path, source, target) -> MapWitness:
    return map_from_json(_read_json(path), source, target)


def load_sequence(path) -> list[str]:
    """A JSON list of labels, or one label per line."""
    text = Path(path).read_text(encoding="utf-8") if os.path.exists(path) else None
    if text is None:
        raise InputError(f"no such sequence file {path!r}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not isinstance(data, list):
        raise InputError("sequence file must hold a JSON list")
    return [str(x) for x in data]


def control_to_csv(table: ControlTable) -> str:
    return table.to_csv()


def control_from_csv(text: str) -> ControlTable:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["scale", "bound"]:
        raise InputError("control table CSV needs a 'scale,bound' header")
    try:
        pairs = [(float(a), float(b)) for a, b in rows[1:] if a.strip()]
    except ValueError as exc:
        raise InputError(f"bad control table row: {exc}") from exc
    return ControlTable([a for a, _ in pairs], [b for _, b in pairs])


def report_csv(rows) -> str:
    """Rows of (check, scale, constant, bound, verdict) as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for check, scale, constant, bound, verdict in rows:
        w.writerow([check, _fmt(scale), _fmt(constant), _fmt(bound),
                    verdict if isinstance(verdict, str) else ("pass" if verdict else "fail")])
    return buf.getvalue()


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isinf(v):
        return "inf"
    return repr(int(v)) if v == int(v) else f"{v:.12g}"


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return format_label(o)
