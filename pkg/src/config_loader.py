"""JSON graph configs: compact component, edges and hanging half-lines."""
import json
import math
import os
from typing import Any, Dict, Mapping, Tuple, Union

from loguru import logger

from config import MEASURE_DEPTH
from errors import ConfigError, GraphValidationError, PreconditionError
from graph_model import (HalfLineCoefficients, HalfLineData, JacobiCoefficients, StarLikeGraph, TailRule,
                         build_graph, validate)
from measure_tools import measure_from_dict, measure_halfline, measure_to_dict
from random_graphs import generator_description, generator_tail


def _floats(values, what: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a list of numbers")


def _generator_from_dict(root: str, tail: Mapping[str, Any]) -> TailRule:
    if "name" not in tail:
        raise ConfigError(f"generator tail of {root!r} needs a name")
    try:
        return generator_tail(str(tail["name"]), _floats(tail.get("params", []), f"halflines.{root}.tail.params"),
                              seed=tail.get("seed"), bound=tail.get("bound"), offset=int(tail.get("offset", 0)))
    except (PreconditionError, TypeError, ValueError) as e:
        raise ConfigError(f"bad generator tail of {root!r}: {str(e)}")


def _halfline_from_dict(root: str, entry: Mapping[str, Any]) -> Tuple[HalfLineData, Union[float, None]]:
    """Half-line data plus the root potential a measure tail imposes, if any"""
    tail = dict(entry.get("tail", {"rule": "constant", "b": 0.0, "a": 1.0}))
    rule = tail.get("rule")
    if rule == "measure":
        spec = measure_from_dict(tail.get("measure", {}))
        depth = int(tail.get("depth", MEASURE_DEPTH))
        theta = float(tail.get("theta_shift", 0.0))
        root_b, data = measure_halfline(spec, depth, theta)
        return data, root_b

    a = _floats(entry.get("a", [1.0]), f"halflines.{root}.a")
    b = _floats(entry.get("b", []), f"halflines.{root}.b")
    if not a:
        raise ConfigError(f"halflines.{root}.a needs at least the lead weight")
    if rule == "constant":
        tail_rule = TailRule("constant", (float(tail.get("b", 0.0)),), (float(tail.get("a", 1.0)),))
    elif rule == "periodic":
        tail_rule = TailRule("periodic", _floats(tail.get("b", []), "periodic b"), _floats(tail.get("a", []), "periodic a"))
        if not tail_rule.b or not tail_rule.a:
            raise ConfigError(f"periodic tail of {root!r} needs nonempty b and a patterns")
    elif rule == "generator":
        tail_rule = _generator_from_dict(root, tail)
    else:
        raise ConfigError(f"unknown tail rule {rule!r} for half-line {root!r}")
    line = HalfLineCoefficients(b=b, a=a[1:], tail=tail_rule)
    return HalfLineData(lead=a[0], line=line), None


def graph_from_dict(data: Mapping[str, Any]) -> Tuple[StarLikeGraph, JacobiCoefficients]:
    try:
        compact = {str(k): float(v) for k, v in data["graph"]["compact"].items()}
        edges = [(str(u), str(v), float(a)) for u, v, a in data["graph"].get("edges", [])]
        raw_lines = data.get("halflines", {})
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise ConfigError(f"bad graph config: {str(e)}")

    lines = {}
    for root, entry in raw_lines.items():
        line, root_b = _halfline_from_dict(str(root), entry)
        lines[str(root)] = line
        if root_b is not None and str(root) in compact:
            compact[str(root)] = root_b
    graph, coeffs = build_graph(compact, edges, lines)
    report = validate(graph, coeffs)
    if not report.ok:
        raise ConfigError(str(GraphValidationError(report)))
    return graph, coeffs


def load_graph_config(source: Union[str, Mapping[str, Any]]) -> Tuple[StarLikeGraph, JacobiCoefficients]:
    """Read a graph from a JSON file path or an already parsed mapping"""
    if isinstance(source, Mapping):
        return graph_from_dict(source)
    if not os.path.exists(source):
        raise ConfigError(f"graph config not found: {source}")
    try:
        with open(source, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {source}: {str(e)}")
    graph, coeffs = graph_from_dict(data)
    logger.info(f"Loaded graph from {source}: n={graph.n}, k={graph.k}")
    return graph, coeffs


def graph_to_dict(graph: StarLikeGraph, coeffs: JacobiCoefficients) -> Dict[str, Any]:
    out = {
        "graph": {
            "compact": {v: coeffs.b_compact[v] for v in graph.compact_vertices},
            "edges": [[u, v, coeffs.edge_weight(u, v)] for u, v in graph.compact_edges],
        },
        "halflines": {},
    }
    for root in graph.halfline_roots:
        data = coeffs.halfline_data[root]
        if data.measure is not None:
            depth = max(len(data.line.b) + 1, 2)
            out["halflines"][root] = {"tail": {
                "rule": "measure", "measure": measure_to_dict(data.measure.spec),
                "depth": depth, "theta_shift": data.measure.theta,
            }}
            continue
        tail = data.line.tail
        if tail.rule == "constant":
            tail_out = {"rule": "constant", "b": tail.b[0], "a": tail.a[0]}
        elif tail.rule == "periodic":
            tail_out = {"rule": "periodic", "b": list(tail.b), "a": list(tail.a)}
        elif tail.rule == "generator" and tail.name is not None:
            try:
                tail_out = generator_description(tail)
            except PreconditionError as e:
                raise ConfigError(f"half-line {root!r}: {str(e)}")
        else:
            raise ConfigError(f"half-line {root!r} with a {tail.rule} tail cannot be written as JSON")
        out["halflines"][root] = {"b": list(data.line.b), "a": [data.lead] + list(data.line.a), "tail": tail_out}
    return out


def dump_graph_config(graph: StarLikeGraph, coeffs: JacobiCoefficients, path: str) -> str:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(graph_to_dict(graph, coeffs), f, indent=2)
    logger.info(f"Wrote graph config to {path}")
    return path


def load_run_config(path: str) -> Dict[str, Any]:
    """Run settings as a plain mapping; the CLI layers its flags on top"""
    if not os.path.exists(path):
        raise ConfigError(f"run config not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {str(e)}")
    if not isinstance(data, dict):
        raise ConfigError("run config must be a JSON object")
    for key in ("threshold", "eps_min"):
        if key in data and not (isinstance(data[key], (int, float)) and data[key] > 0 and math.isfinite(data[key])):
            raise ConfigError(f"{key} must be a positive number")
    return data
