"""Scenario document parsing, validation, and serialization.

Scenario files are JSON.  Validation runs before any computation, rejects
unknown keys, and reports every violation it finds with a dotted key path;
only a clean document is turned into runtime objects.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Optional

import numpy as np

from . import paths as pathlib
from .errors import ScenarioValidationError
from .field import GainSet
from .graph import CommGraph, OffsetSpec, complete_graph, cycle_graph, path_graph
from .sim import OutputSpec, SafetyConfig, Scenario, ToleranceSpec

_TOP_KEYS = {"name", "mode", "dt", "t_end", "comm_hz", "seed", "record_stride",
             "paths", "robots", "graph", "gains", "safety", "outputs", "tolerances"}
_ROBOT_KEYS = {"count", "path", "initial"}
_GRAPH_KEYS = {"edges", "w_star"}
_GAIN_KEYS = {"k", "k_c", "v", "k_theta", "sat", "gamma"}
_SAFETY_KEYS = {"enabled", "R"}
_OUTPUT_KEYS = {"trace", "plots", "summary"}
_TOLERANCE_KEYS = {"phi_final", "coord_final"}
_PATH_KEYS_CATALOG = {"catalog", "params"}
_PATH_KEYS_TERMS = {"terms", "period", "window"}


class _Check:
    def __init__(self):
        self.violations = []

    def fail(self, where, message):
        self.violations.append(f"{where}: {message}")

    def unknown_keys(self, doc, allowed, where):
        for key in doc:
            if key not in allowed:
                self.fail(f"{where}.{key}" if where else key, "unknown key")

    def number(self, doc, key, where, default=None, required=False,
               positive=False, nonnegative=False):
        label = f"{where}.{key}" if where else key
        if key not in doc:
            if required:
                self.fail(label, "required")
            return default
        v = doc[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(label, "must be a number")
            return default
        v = float(v)
        if positive and v <= 0:
            self.fail(label, "must be > 0")
            return default
        if nonnegative and v < 0:
            self.fail(label, "must be >= 0")
            return default
        return v

    def integer(self, doc, key, where, default=None, required=False, minimum=None):
        label = f"{where}.{key}" if where else key
        if key not in doc:
            if required:
                self.fail(label, "required")
            return default
        v = doc[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(label, "must be an integer")
            return default
        if minimum is not None and v < minimum:
            self.fail(label, f"must be >= {minimum}")
            return default
        return v

    def boolean(self, doc, key, where, default):
        label = f"{where}.{key}" if where else key
        if key not in doc:
            return default
        v = doc[key]
        if not isinstance(v, bool):
            self.fail(label, "must be a boolean")
            return default
        return v


def _parse_path(spec, where, check: _Check) -> Optional[pathlib.ParametricPath]:
    if not isinstance(spec, dict):
        check.fail(where, "must be an object")
        return None
    if "catalog" in spec:
        check.unknown_keys(spec, _PATH_KEYS_CATALOG, where)
        name = spec["catalog"]
        params = spec.get("params", {})
        if not isinstance(params, dict):
            check.fail(f"{where}.params", "must be an object")
            return None
        try:
            return pathlib.from_catalog(name, **params)
        except (ValueError, TypeError) as err:
            check.fail(where, str(err))
            return None
    if "terms" in spec:
        check.unknown_keys(spec, _PATH_KEYS_TERMS, where)
        terms = spec["terms"]
        if not isinstance(terms, list) or len(terms) < 2:
            check.fail(f"{where}.terms", "must be a list of >= 2 coordinate term lists")
            return None
        coords = []
        for j, coord_terms in enumerate(terms):
            if not isinstance(coord_terms, list) or not coord_terms:
                check.fail(f"{where}.terms[{j}]", "must be a nonempty list of terms")
                return None
            built = []
            for q, term in enumerate(coord_terms):
                if not isinstance(term, list) or not 2 <= len(term) <= 5:
                    check.fail(f"{where}.terms[{j}][{q}]",
                               "term must be [kind, amplitude, rate?, phase?, offset?]")
                    return None
                kind = term[0]
                numbers = term[1:] + [1.0, 0.0, 0.0][len(term) - 2:]
                try:
                    built.append(pathlib.Term(kind, *[float(x) for x in numbers]))
                except (ValueError, TypeError) as err:
                    check.fail(f"{where}.terms[{j}][{q}]", str(err))
                    return None
            coords.append(pathlib.CoordFunction(built))
        period = spec.get("period")
        window = spec.get("window")
        if window is not None and (not isinstance(window, list) or len(window) != 2):
            check.fail(f"{where}.window", "must be [lo, hi]")
            return None
        try:
            return pathlib.ParametricPath(coords, period=period,
                                          window=tuple(window) if window else None)
        except (ValueError, TypeError) as err:
            check.fail(where, str(err))
            return None
    check.fail(where, "needs either 'catalog' or 'terms'")
    return None


def _parse_graph(spec, count, check: _Check):
    if not isinstance(spec, dict):
        check.fail("graph", "must be an object")
        return None, None
    check.unknown_keys(spec, _GRAPH_KEYS, "graph")
    edges = spec.get("edges", "cycle")
    graph = None
    try:
        if edges == "cycle":
            graph = cycle_graph(count)
        elif edges == "path":
            graph = path_graph(count)
        elif edges == "complete":
            graph = complete_graph(count)
        elif isinstance(edges, list):
            pairs = []
            for q, e in enumerate(edges):
                if not isinstance(e, list) or len(e) != 2:
                    check.fail(f"graph.edges[{q}]", "must be [i, j]")
                    return None, None
                pairs.append((e[0], e[1]))
            graph = CommGraph(count, pairs)
        else:
            check.fail("graph.edges",
                       "must be 'cycle', 'path', 'complete', or an edge list")
    except ValueError as err:
        check.fail("graph.edges", str(err))
    if graph is None:
        return None, None

    w_star_spec = spec.get("w_star", {"uniform_spacing": 0.0})
    if isinstance(w_star_spec, dict):
        extra = set(w_star_spec) - {"uniform_spacing"}
        for key in extra:
            check.fail(f"graph.w_star.{key}", "unknown key")
        s = w_star_spec.get("uniform_spacing")
        if not isinstance(s, (int, float)) or isinstance(s, bool):
            check.fail("graph.w_star.uniform_spacing", "must be a number")
            return graph, None
        w_star = np.arange(count) * float(s)
    elif isinstance(w_star_spec, list):
        if len(w_star_spec) != count:
            check.fail("graph.w_star", f"must have {count} entries")
            return graph, None
        w_star = np.array([float(v) for v in w_star_spec])
    else:
        check.fail("graph.w_star", "must be a list or {'uniform_spacing': s}")
        return graph, None
    return graph, OffsetSpec.from_reference(graph, w_star)


def _parse_gains(spec, count, dim, check: _Check):
    if not isinstance(spec, dict):
        check.fail("gains", "must be an object")
        return None
    check.unknown_keys(spec, _GAIN_KEYS, "gains")
    k_c = check.number(spec, "k_c", "gains", default=1.0, positive=True)
    v = check.number(spec, "v", "gains", default=1.0, positive=True)
    k_theta = check.number(spec, "k_theta", "gains", default=1.0, positive=True)
    gamma = check.number(spec, "gamma", "gains", default=1e-6, positive=True)
    sat = spec.get("sat", [-10.0, 10.0])
    if (not isinstance(sat, list) or len(sat) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in sat)):
        check.fail("gains.sat", "must be [lo, hi]")
        return None
    if not (sat[0] < 0 < sat[1]):
        check.fail("gains.sat", "must satisfy lo < 0 < hi")
        return None

    k_spec = spec.get("k", [1.0] * dim)
    if not isinstance(k_spec, list) or not k_spec:
        check.fail("gains.k", "must be a list")
        return None
    if isinstance(k_spec[0], list):
        if len(k_spec) != count:
            check.fail("gains.k", f"per-robot form needs {count} vectors")
            return None
        k_rows = k_spec
    else:
        k_rows = [k_spec] * count
    gains = []
    for i, row in enumerate(k_rows):
        label = f"gains.k[{i}]" if isinstance(k_spec[0], list) else "gains.k"
        if (not isinstance(row, list) or len(row) != dim
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row)):
            check.fail(label, f"must be a numeric vector of length {dim}")
            return None
        if any(x <= 0 for x in row):
            check.fail(label, "entries must be > 0")
            return None
        if None in (k_c, v, k_theta, gamma):
            return None
        gains.append(GainSet(k=np.array(row, dtype=float), k_c=k_c, v=v,
                             k_theta=k_theta, sat_lo=float(sat[0]),
                             sat_hi=float(sat[1]), gamma=gamma))
    return gains


def parse_scenario(doc: dict) -> Scenario:
    """Validate a scenario document and build the runtime Scenario.

    Raises ScenarioValidationError listing every violation (dotted key
    paths) when the document is invalid.
    """
    check = _Check()
    if not isinstance(doc, dict):
        raise ScenarioValidationError(["document: must be a JSON object"])
    check.unknown_keys(doc, _TOP_KEYS, "")

    name = doc.get("name", "scenario")
    if not isinstance(name, str):
        check.fail("name", "must be a string")
        name = "scenario"
    mode = doc.get("mode", "integrator")
    if mode not in ("integrator", "dubins"):
        check.fail("mode", "must be 'integrator' or 'dubins'")
        mode = "integrator"
    dt = check.number(doc, "dt", "", default=1e-2, positive=True)
    t_end = check.number(doc, "t_end", "", default=30.0, positive=True)
    comm_hz = check.number(doc, "comm_hz", "", default=0.0, nonnegative=True)
    seed = check.integer(doc, "seed", "", default=0, minimum=0)
    record_stride = check.integer(doc, "record_stride", "", default=1, minimum=1)

    path_specs = doc.get("paths")
    robot_paths = None
    dim = None
    count = None
    paths_list = []
    if not isinstance(path_specs, list) or not path_specs:
        check.fail("paths", "must be a nonempty list")
    else:
        for i, spec in enumerate(path_specs):
            paths_list.append(_parse_path(spec, f"paths[{i}]", check))

    robots = doc.get("robots")
    initial_states = initial_box = None
    if not isinstance(robots, dict):
        check.fail("robots", "must be an object")
    else:
        check.unknown_keys(robots, _ROBOT_KEYS, "robots")
        count = check.integer(robots, "count", "robots", required=True, minimum=1)
        assignment = robots.get("path", 0)
        if count is not None and paths_list and all(p is not None for p in paths_list):
            if isinstance(assignment, int) and not isinstance(assignment, bool):
                if not 0 <= assignment < len(paths_list):
                    check.fail("robots.path", "path index out of range")
                else:
                    robot_paths = [paths_list[assignment]] * count
            elif isinstance(assignment, list):
                if len(assignment) != count:
                    check.fail("robots.path", f"must have {count} entries")
                elif not all(isinstance(q, int) and 0 <= q < len(paths_list)
                             for q in assignment):
                    check.fail("robots.path", "path indices out of range")
                else:
                    robot_paths = [paths_list[q] for q in assignment]
            else:
                check.fail("robots.path", "must be an index or a list of indices")
        if robot_paths is not None:
            dims = {p.dim for p in robot_paths}
            if len(dims) > 1:
                check.fail("robots.path", "assigned paths must share one dimension")
                robot_paths = None
            else:
                dim = dims.pop()

        initial = robots.get("initial")
        state_dim = None
        if dim is not None:
            state_dim = dim + 1 if mode == "integrator" else 5
        if not isinstance(initial, dict) or ("box" in initial) == ("states" in initial):
            check.fail("robots.initial", "needs exactly one of 'box' or 'states'")
        elif "box" in initial:
            box = initial["box"]
            if (not isinstance(box, list)
                    or (state_dim is not None and len(box) != state_dim)
                    or not all(isinstance(r, list) and len(r) == 2 for r in box)):
                check.fail("robots.initial.box",
                           f"must be a list of {state_dim or '?'} [lo, hi] pairs")
            else:
                initial_box = np.array(box, dtype=float)
        else:
            states = initial["states"]
            if (not isinstance(states, list)
                    or (count is not None and len(states) != count)
                    or not all(isinstance(r, list) for r in states)
                    or (state_dim is not None
                        and not all(len(r) == state_dim for r in states))):
                check.fail("robots.initial.states",
                           f"must be {count or '?'} state vectors of length {state_dim or '?'}")
            else:
                initial_states = np.array(states, dtype=float)

    graph = offsets = None
    if count is not None:
        graph_spec = doc.get("graph", {"edges": "cycle"})
        graph, offsets = _parse_graph(graph_spec, count, check)

    gains = None
    if count is not None and dim is not None:
        gains = _parse_gains(doc.get("gains", {}), count, dim, check)

    safety_spec = doc.get("safety", {})
    safety = SafetyConfig()
    if not isinstance(safety_spec, dict):
        check.fail("safety", "must be an object")
    else:
        check.unknown_keys(safety_spec, _SAFETY_KEYS, "safety")
        enabled = check.boolean(safety_spec, "enabled", "safety", False)
        R = check.number(safety_spec, "R", "safety", default=1.0, positive=True)
        if R is not None:
            safety = SafetyConfig(enabled=enabled, R=R)
            if gains is not None:  # keep the per-robot gain record in sync
                gains = [dataclasses.replace(g, R=R) for g in gains]

    outputs_spec = doc.get("outputs", {})
    outputs = OutputSpec()
    if not isinstance(outputs_spec, dict):
        check.fail("outputs", "must be an object")
    else:
        check.unknown_keys(outputs_spec, _OUTPUT_KEYS, "outputs")
        outputs = OutputSpec(
            trace=check.boolean(outputs_spec, "trace", "outputs", True),
            plots=check.boolean(outputs_spec, "plots", "outputs", True),
            summary=check.boolean(outputs_spec, "summary", "outputs", True),
        )

    tolerances = None
    tol_spec = doc.get("tolerances")
    if tol_spec is not None:
        if not isinstance(tol_spec, dict):
            check.fail("tolerances", "must be an object")
        else:
            check.unknown_keys(tol_spec, _TOLERANCE_KEYS, "tolerances")
            tolerances = ToleranceSpec(
                phi_final=check.number(tol_spec, "phi_final", "tolerances", positive=True),
                coord_final=check.number(tol_spec, "coord_final", "tolerances", positive=True),
            )

    if check.violations:
        raise ScenarioValidationError(check.violations)

    try:
        return Scenario(name=name, mode=mode, paths=robot_paths, gains=gains,
                        graph=graph, offsets=offsets, dt=dt, t_end=t_end,
                        comm_hz=comm_hz, seed=seed, record_stride=record_stride,
                        initial_states=initial_states, initial_box=initial_box,
                        safety=safety, outputs=outputs, tolerances=tolerances)
    except ValueError as err:
        raise ScenarioValidationError([f"scenario: {err}"]) from None


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        doc = json.load(fh)
    return parse_scenario(doc)


def _serialize_path(path: pathlib.ParametricPath) -> dict:
    terms = [
        [[t.kind, t.amplitude, t.rate, t.phase, t.offset] for t in coord.terms]
        for coord in path.coords
    ]
    spec = {"terms": terms}
    if path.period is not None:
        spec["period"] = path.period
    spec["window"] = list(path.window)
    return spec


def serialize(scenario: Scenario) -> dict:
    """Canonical document form; parse(serialize(s)) reproduces the scenario."""
    unique = []
    index = []
    for p in scenario.paths:
        for q, existing in enumerate(unique):
            if existing is p:
                index.append(q)
                break
        else:
            unique.append(p)
            index.append(len(unique) - 1)
    g0 = scenario.gains[0]
    k_rows = [[float(x) for x in g.k] for g in scenario.gains]
    k_field = k_rows[0] if all(row == k_rows[0] for row in k_rows) else k_rows
    doc = {
        "name": scenario.name,
        "mode": scenario.mode,
        "dt": scenario.dt,
        "t_end": scenario.t_end,
        "comm_hz": scenario.comm_hz,
        "seed": scenario.seed,
        "record_stride": scenario.record_stride,
        "paths": [_serialize_path(p) for p in unique],
        "robots": {
            "count": scenario.graph.n_nodes,
            "path": index[0] if all(q == index[0] for q in index) else index,
            "initial": ({"states": scenario.initial_states.tolist()}
                        if scenario.initial_states is not None
                        else {"box": scenario.initial_box.tolist()}),
        },
        "graph": {
            "edges": [[int(i), int(j)] for i, j in scenario.graph.edges],
            "w_star": [float(w) for w in scenario.offsets.w_star],
        },
        "gains": {
            "k": k_field,
            "k_c": g0.k_c,
            "v": g0.v,
            "k_theta": g0.k_theta,
            "sat": [g0.sat_lo, g0.sat_hi],
            "gamma": g0.gamma,
        },
        "safety": {"enabled": scenario.safety.enabled, "R": scenario.safety.R},
        "outputs": {"trace": scenario.outputs.trace, "plots": scenario.outputs.plots,
                    "summary": scenario.outputs.summary},
    }
    if scenario.tolerances is not None:
        doc["tolerances"] = {}
        if scenario.tolerances.phi_final is not None:
            doc["tolerances"]["phi_final"] = scenario.tolerances.phi_final
        if scenario.tolerances.coord_final is not None:
            doc["tolerances"]["coord_final"] = scenario.tolerances.coord_final
    return doc
