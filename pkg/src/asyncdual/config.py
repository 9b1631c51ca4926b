"""JSON experiment documents: parsing with field diagnostics, and serialization.

A document has the sections ``graph``, ``problem``, ``scheduler``,
``stepsize``, ``noise`` and ``run``, plus optional ``name``, ``variants`` and
``outputs``. Box bounds written as ``null`` mean unbounded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from asyncdual.dual import ClosedFormShift, Constant, LogDecay, PowerDecay
from asyncdual.noise import Biased, NoNoise, ZeroMean
from asyncdual.problem import AffineLinear, Entropy, Hinge, LocalProblem, Quadratic
from asyncdual.scheduler import (
    AdaptiveCounter,
    Cyclic,
    IidBernoulli,
    PersistentlyExciting,
    ScriptedMask,
    Synchronous,
)
from asyncdual.topology import build_topology, path_graph, random_geometric_graph

__all__ = ["ConfigError", "GraphSpec", "loads_document", "dumps_document", "locate"]


class ConfigError(ValueError):
    """Invalid experiment document. ``path`` names the field, ``line`` its location."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path:
            where.append(f"field {path}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def locate(text: str | None, path: tuple) -> int | None:
    """Best-effort line number of a field path inside the source text."""
    if not text:
        return None
    pos = 0
    found = None
    for key in path:
        if isinstance(key, int):
            continue
        hit = text.find(f'"{key}"', pos)
        if hit < 0:
            break
        pos = found = hit
    return None if found is None else text.count("\n", 0, found) + 1


@dataclass
class _Reader:
    """Typed field access that raises :class:`ConfigError` with a location."""

    text: str | None

    def fail(self, path: tuple, message: str):
        name = ".".join(str(p) if not isinstance(p, int) else f"[{p}]" for p in path).replace(".[", "[")
        raise ConfigError(message, name, locate(self.text, path))

    def section(self, obj, key, path, required=True, default=None):
        if not isinstance(obj, dict):
            self.fail(path, "expected an object")
        if key not in obj:
            if required:
                self.fail(path + (key,), "missing required field")
            return default
        return obj[key]

    def number(self, obj, key, path, required=True, default=None, allow_null=False):
        val = self.section(obj, key, path, required, default)
        if val is None and (allow_null or not required):
            return val
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(path + (key,), f"expected a number, got {val!r}")
        return float(val)

    def integer(self, obj, key, path, required=True, default=None):
        val = self.section(obj, key, path, required, default)
        if val is None and not required:
            return val
        if isinstance(val, bool) or not isinstance(val, int):
            self.fail(path + (key,), f"expected an integer, got {val!r}")
        return val

    def build(self, path, factory, *args, **kwargs):
        try:
            return factory(*args, **kwargs)
        except (ValueError, TypeError) as exc:
            self.fail(path, str(exc))


# ------------------------------------------------------------------ sections


def _bound(v):
    return None if v is None or math.isinf(v) else float(v)


@dataclass(frozen=True)
class GraphSpec:
    """How to build the communication graph: ``path``, ``rgg`` or explicit ``edges``."""

    kind: str
    num_agents: int
    edges: tuple[tuple[int, int], ...] | None = None
    radius: float | None = None
    seed: int | None = None

    def build(self):
        if self.kind == "path":
            return path_graph(self.num_agents)
        if self.kind == "rgg":
            return random_geometric_graph(self.num_agents, self.radius, self.seed)
        if self.kind == "edges":
            return build_topology(self.num_agents, self.edges)
        raise ValueError(f"unknown graph kind {self.kind!r} (path, rgg, edges)")

    @classmethod
    def from_topology(cls, topology) -> "GraphSpec":
        return cls("edges", topology.num_agents, tuple(topology.oriented_edges))


def parse_graph(r: _Reader, obj, path=("graph",)) -> GraphSpec:
    kind = r.section(obj, "kind", path)
    n = r.integer(obj, "num_agents", path)
    if kind == "path":
        spec = GraphSpec("path", n)
    elif kind == "rgg":
        spec = GraphSpec("rgg", n, radius=r.number(obj, "radius", path), seed=r.integer(obj, "seed", path))
    elif kind == "edges":
        edges = r.section(obj, "edges", path)
        if not isinstance(edges, list) or any(not isinstance(e, list) or len(e) != 2 for e in edges):
            r.fail(path + ("edges",), "expected a list of [i, j] pairs")
        spec = GraphSpec("edges", n, tuple(tuple(e) for e in edges))
    else:
        r.fail(path + ("kind",), f"unknown graph kind {kind!r} (path, rgg, edges)")
    r.build(path, spec.build)
    return spec


def dump_graph(spec: GraphSpec) -> dict:
    out = {"kind": spec.kind, "num_agents": spec.num_agents}
    if spec.kind == "rgg":
        out.update(radius=spec.radius, seed=spec.seed)
    if spec.kind == "edges":
        out["edges"] = [list(e) for e in spec.edges]
    return out


_ATOMS = {
    "quadratic": (Quadratic, ("center",), ("weight",)),
    "hinge": (Hinge, ("slope", "knee"), ("offset",)),
    "entropy": (Entropy, ("scale",), ()),
    "linear": (AffineLinear, ("coef",), ()),
}


def parse_atom(r: _Reader, obj, path):
    kind = r.section(obj, "type", path)
    if kind not in _ATOMS:
        r.fail(path + ("type",), f"unknown atom type {kind!r} ({', '.join(_ATOMS)})")
    cls, req, opt = _ATOMS[kind]
    kwargs = {k: r.number(obj, k, path) for k in req}
    for k in opt:
        if k in obj:
            kwargs[k] = r.number(obj, k, path)
    kwargs["coord"] = r.integer(obj, "coord", path, required=False, default=0)
    return r.build(path, cls, **kwargs)


def dump_atom(atom) -> dict:
    for name, (cls, req, opt) in _ATOMS.items():
        if type(atom) is cls:
            out = {"type": name}
            for k in req + opt:
                out[k] = getattr(atom, k)
            if atom.coord:
                out["coord"] = atom.coord
            return out
    raise TypeError(f"cannot serialize atom {atom!r}")


def parse_agent(r: _Reader, obj, path):
    atoms = r.section(obj, "atoms", path)
    if not isinstance(atoms, list):
        r.fail(path + ("atoms",), "expected a list")
    parsed = tuple(parse_atom(r, a, path + ("atoms", i)) for i, a in enumerate(atoms))
    dim = r.integer(obj, "dim", path, required=False, default=1)
    box = r.section(obj, "box", path, required=False)
    if box is not None:
        if not isinstance(box, list):
            r.fail(path + ("box",), "expected [lo, hi] or a list of them")
        rows = box if box and isinstance(box[0], list) else [box]
        out = []
        for row in rows:
            if len(row) != 2 or any(v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))) for v in row):
                r.fail(path + ("box",), f"bad bound pair {row!r}")
            out.append((-math.inf if row[0] is None else float(row[0]), math.inf if row[1] is None else float(row[1])))
        box = out[0] if len(out) == 1 and dim == 1 else tuple(out)
    rho = r.number(obj, "rho", path, required=False, default=0.0)
    return r.build(path, LocalProblem, parsed, dim, box, rho)


def dump_agent(lp: LocalProblem) -> dict:
    box = [[_bound(lo), _bound(hi)] for lo, hi in lp.box]
    out = {"atoms": [dump_atom(a) for a in lp.atoms], "box": box[0] if lp.dim == 1 else box}
    if lp.dim != 1:
        out["dim"] = lp.dim
    if lp.rho:
        out["rho"] = lp.rho
    return out


def parse_problem(r: _Reader, obj, path=("problem",)):
    agents = r.section(obj, "agents", path)
    if not isinstance(agents, list) or not agents:
        r.fail(path + ("agents",), "expected a non-empty list of agents")
    return tuple(parse_agent(r, a, path + ("agents", i)) for i, a in enumerate(agents))


def dump_problem(locals_) -> dict:
    return {"agents": [dump_agent(lp) for lp in locals_]}


def parse_scheduler(r: _Reader, obj, path=("scheduler",)):
    kind = r.section(obj, "type", path)
    if kind == "synchronous":
        return Synchronous()
    if kind == "iid":
        p = r.section(obj, "p", path)
        return r.build(path + ("p",), IidBernoulli, tuple(p) if isinstance(p, list) else p)
    if kind == "cyclic":
        order = r.section(obj, "order", path, required=False)
        return r.build(path + ("order",), Cyclic, None if order is None else tuple(order))
    if kind == "persistent":
        return r.build(path, PersistentlyExciting, r.integer(obj, "window", path))
    if kind == "adaptive":
        pt = r.section(obj, "ptilde", path)
        if not isinstance(pt, list):
            r.fail(path + ("ptilde",), "expected a list of per-agent probabilities")
        return r.build(
            path, AdaptiveCounter, tuple(pt),
            r.number(obj, "decay", path, required=False, default=0.7),
            r.integer(obj, "window", path, required=False, default=10),
        )
    if kind == "scripted":
        masks = r.section(obj, "masks", path)
        return r.build(path + ("masks",), ScriptedMask, np.asarray(masks, dtype=np.uint8),
                       bool(r.section(obj, "repeat", path, required=False, default=False)))
    r.fail(path + ("type",), f"unknown scheduler {kind!r} (synchronous, iid, cyclic, persistent, adaptive, scripted)")


def dump_scheduler(spec) -> dict:
    if isinstance(spec, Synchronous):
        return {"type": "synchronous"}
    if isinstance(spec, IidBernoulli):
        return {"type": "iid", "p": list(spec.p) if isinstance(spec.p, tuple) else spec.p}
    if isinstance(spec, Cyclic):
        return {"type": "cyclic", "order": None if spec.order is None else list(spec.order)}
    if isinstance(spec, PersistentlyExciting):
        return {"type": "persistent", "window": spec.window}
    if isinstance(spec, AdaptiveCounter):
        return {"type": "adaptive", "ptilde": list(spec.ptilde), "decay": spec.decay, "window": spec.window}
    if isinstance(spec, ScriptedMask):
        return {"type": "scripted", "masks": spec.masks.tolist(), "repeat": spec.repeat}
    raise TypeError(f"cannot serialize scheduler {spec!r}")


_RULES = {
    "power": (PowerDecay, ("c", "q")),
    "log": (LogDecay, ("c",)),
    "shift": (ClosedFormShift, ("c0", "q")),
    "constant": (Constant, ("c",)),
}


def parse_rule(r: _Reader, obj, path):
    kind = r.section(obj, "type", path)
    if kind not in _RULES:
        r.fail(path + ("type",), f"unknown stepsize rule {kind!r} ({', '.join(_RULES)})")
    cls, names = _RULES[kind]
    return r.build(path, cls, *(r.number(obj, k, path) for k in names))


def dump_rule(rule) -> dict:
    for name, (cls, names) in _RULES.items():
        if type(rule) is cls:
            return {"type": name, **{k: getattr(rule, k) for k in names}}
    raise TypeError(f"cannot serialize stepsize rule {rule!r}")


def parse_stepsize(r: _Reader, obj, path=("stepsize",)):
    """Returns ``(rule or tuple of rules, global_clock)``."""
    gc = r.section(obj, "global_clock", path, required=False, default=False)
    if not isinstance(gc, bool):
        r.fail(path + ("global_clock",), "expected true or false")
    if "rules" in obj:
        rules = obj["rules"]
        if not isinstance(rules, list):
            r.fail(path + ("rules",), "expected a list of per-edge rules")
        return tuple(parse_rule(r, x, path + ("rules", i)) for i, x in enumerate(rules)), gc
    return parse_rule(r, obj, path), gc


def dump_stepsize(rule, global_clock: bool) -> dict:
    out = {"rules": [dump_rule(x) for x in rule]} if isinstance(rule, tuple) else dump_rule(rule)
    out["global_clock"] = bool(global_clock)
    return out


def parse_noise(r: _Reader, obj, path=("noise",)):
    kind = r.section(obj, "type", path)
    if kind == "none":
        return NoNoise()
    if kind == "zero_mean":
        return r.build(path, ZeroMean, r.number(obj, "b", path),
                       r.section(obj, "distribution", path, required=False, default="uniform"))
    if kind == "biased":
        bias = r.section(obj, "bias", path)
        core = parse_noise(r, obj["core"], path + ("core",)) if "core" in obj else NoNoise()
        decay = r.number(obj, "decay", path, required=False, default=0.0)
        return r.build(path, Biased, tuple(bias) if isinstance(bias, list) else bias, core, decay)
    r.fail(path + ("type",), f"unknown noise {kind!r} (none, zero_mean, biased)")


def dump_noise(spec) -> dict:
    if isinstance(spec, NoNoise):
        return {"type": "none"}
    if isinstance(spec, ZeroMean):
        return {"type": "zero_mean", "b": spec.b, "distribution": spec.distribution}
    if isinstance(spec, Biased):
        return {
            "type": "biased",
            "bias": list(spec.bias) if isinstance(spec.bias, tuple) else spec.bias,
            "core": dump_noise(spec.core),
            "decay": spec.decay,
        }
    raise TypeError(f"cannot serialize noise {spec!r}")


def loads_document(text: str) -> dict:
    """Parse JSON text; syntax errors become :class:`ConfigError` with a line."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, "", exc.lineno) from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", "", 1)
    return doc


def dumps_document(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"
