"""JSON scenario documents: parsing, validation and serialization.

Top-level keys::

    space       {"atoms": [...], "weights": [...], "blocks": [label per atom],
                 "min_block_size": 2}
    beliefs     {name: [density per atom] | {block: density}}; "P" is implicit
    agents      [{"kind": ..., "params": {...}, "belief": name, "name": ...}]
    target      [value per atom]
    securities  optional {"pricing_density": belief name,
                          "bases": [[[security per atom], ...] per agent],
                          "units": optional [[unit share per atom] per agent]}
    options     optional {"tolerance", "box", "grid", "seed", "restarts",
                          "box_schedule", "probes"}
    allocation  optional [[share per atom] per agent] (used by ``improve``)

Agent kinds and their params: ``expectation`` {}, ``esssup`` {},
``es`` {"level"}, ``entropic`` {"beta"}, ``spectral`` {"bands": [[level,
weight], ...]}, ``var`` {"alpha"}, ``mixture`` {"weights", "components"},
``min`` {"options"}, ``shifted`` {"inner", "constant"}, ``starhull``
{"inner", "s_min"}.  Nested specs (components, options, inner) are agent
specs themselves.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, UnknownBelief, ValidationError
from .measures import (
    Entropic,
    EssentialSup,
    Expectation,
    ExpectedShortfall,
    MinOf,
    Mixture,
    Shifted,
    SpectralTail,
    StarHull,
    ValueAtRisk,
)
from .space import Belief, belief_from_block_density, build_space, reference_belief

TOP_KEYS = ("space", "beliefs", "agents", "target", "securities", "options", "allocation")
OPTION_KEYS = ("tolerance", "box", "grid", "seed", "restarts", "box_schedule", "probes")
DEFAULT_OPTIONS = {
    "tolerance": 1e-9,
    "box": None,
    "grid": 0.05,
    "seed": 0,
    "restarts": 10,
    "box_schedule": [4.0, 8.0, 16.0, 32.0],
    "probes": 100,
}


def _require(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ParseError(f"missing key {key!r}", field=f"{where}.{key}" if where else key)
    return d[key]


def _numbers(values, where, length=None):
    if not isinstance(values, list):
        raise ParseError("expected a list of numbers", field=where)
    out = []
    for k, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError("expected a number", field=f"{where}[{k}]")
        if not math.isfinite(v):
            raise ValidationError(f"{where}[{k}] is not finite")
        out.append(float(v))
    if length is not None and len(out) != length:
        raise ValidationError(f"{where} has {len(out)} entries, expected {length}")
    return out


def _number(v, where):
    return _numbers([v], where)[0]


@dataclass(eq=False)
class ScenarioFile:
    """A parsed scenario: normalized document plus the built objects."""

    document: dict
    space: object = field(repr=False)
    beliefs: dict = field(repr=False)
    agents: tuple = field(repr=False)
    agent_names: tuple = ()
    target: np.ndarray = field(default=None, repr=False)
    options: dict = field(default_factory=dict)
    regimes: tuple | None = field(default=None, repr=False)
    units: np.ndarray | None = field(default=None, repr=False)
    allocation: np.ndarray | None = field(default=None, repr=False)

    def __eq__(self, other):
        return isinstance(other, ScenarioFile) and self.document == other.document

    def solver_options(self):
        from .sharing import SolverOptions

        o = self.options
        return SolverOptions(box=o["box"], restarts=int(o["restarts"]), seed=int(o["seed"]), tol=float(o["tolerance"]))


# --------------------------------------------------------------------------
# agents


def _build_agent(spec, beliefs, where):
    if not isinstance(spec, dict):
        raise ParseError("agent spec must be an object", field=where)
    kind = _require(spec, "kind", where)
    params = spec.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ParseError("params must be an object", field=f"{where}.params")

    def belief():
        name = spec.get("belief", "P")
        if name not in beliefs:
            raise UnknownBelief(f"unknown belief {name!r}", field=f"{where}.belief")
        return beliefs[name]

    def nested(key):
        items = _require(params, key, f"{where}.params")
        if not isinstance(items, list) or not items:
            raise ParseError("expected a non-empty list of agent specs", field=f"{where}.params.{key}")
        return tuple(_build_agent(s, beliefs, f"{where}.params.{key}[{k}]") for k, s in enumerate(items))

    try:
        if kind == "expectation":
            return Expectation(belief())
        if kind == "esssup":
            return EssentialSup(belief())
        if kind == "es":
            return ExpectedShortfall(_number(_require(params, "level", where), f"{where}.params.level"), belief())
        if kind == "entropic":
            return Entropic(_number(_require(params, "beta", where), f"{where}.params.beta"), belief())
        if kind == "var":
            return ValueAtRisk(_number(_require(params, "alpha", where), f"{where}.params.alpha"), belief())
        if kind == "spectral":
            bands = _require(params, "bands", where)
            if not isinstance(bands, list):
                raise ParseError("bands must be a list of [level, weight]", field=f"{where}.params.bands")
            pairs = tuple(tuple(_numbers(b, f"{where}.params.bands[{k}]", 2)) for k, b in enumerate(bands))
            return SpectralTail(pairs, belief())
        if kind == "mixture":
            weights = _numbers(_require(params, "weights", where), f"{where}.params.weights")
            return Mixture(tuple(weights), nested("components"))
        if kind == "min":
            return MinOf(nested("options"))
        if kind == "shifted":
            inner = _build_agent(_require(params, "inner", where), beliefs, f"{where}.params.inner")
            return Shifted(inner, _number(_require(params, "constant", where), f"{where}.params.constant"))
        if kind == "starhull":
            inner = _build_agent(_require(params, "inner", where), beliefs, f"{where}.params.inner")
            return StarHull(inner, _number(params.get("s_min", 1e-4), f"{where}.params.s_min"))
    except ValueError as err:
        if isinstance(err, ValidationError):
            raise
        raise ValidationError(f"{where}: {err}") from err
    raise ParseError(f"unknown agent kind {kind!r}", field=f"{where}.kind")


# --------------------------------------------------------------------------
# document


def _normalize(doc):
    doc = copy.deepcopy(doc)
    stray = set(doc) - set(TOP_KEYS)
    if stray:
        raise ParseError(f"unknown top-level keys {sorted(stray)}", field=sorted(stray)[0])
    options = dict(DEFAULT_OPTIONS)
    given = doc.get("options") or {}
    if not isinstance(given, dict):
        raise ParseError("options must be an object", field="options")
    for key, value in given.items():
        if key not in OPTION_KEYS:
            raise ParseError(f"unknown option {key!r}", field=f"options.{key}")
        options[key] = value
    for key in ("tolerance", "grid"):
        options[key] = _number(options[key], f"options.{key}")
    if options["box"] is not None:
        options["box"] = _number(options["box"], "options.box")
    options["box_schedule"] = _numbers(options["box_schedule"], "options.box_schedule")
    for key in ("seed", "restarts", "probes"):
        if isinstance(options[key], bool) or not isinstance(options[key], int):
            raise ParseError("expected an integer", field=f"options.{key}")
    doc["options"] = options
    doc.setdefault("beliefs", {})
    return doc


def from_document(doc: dict) -> ScenarioFile:
    if not isinstance(doc, dict):
        raise ParseError("scenario must be a JSON object")
    doc = _normalize(doc)
    sp = _require(doc, "space", "")
    atoms = _require(sp, "atoms", "space")
    if not isinstance(atoms, list):
        raise ParseError("atoms must be a list", field="space.atoms")
    m = len(atoms)
    weights = _numbers(_require(sp, "weights", "space"), "space.weights", m)
    labels = _require(sp, "blocks", "space")
    if not isinstance(labels, list) or len(labels) != m:
        raise ValidationError("space.blocks must give one block label per atom")
    space = build_space([str(a) for a in atoms], weights, [str(b) for b in labels],
                        min_block_size=int(sp.get("min_block_size", 2)))

    beliefs = {"P": reference_belief(space)}
    raw = doc["beliefs"]
    if not isinstance(raw, dict):
        raise ParseError("beliefs must be an object", field="beliefs")
    for name, spec in raw.items():
        where = f"beliefs.{name}"
        if isinstance(spec, dict):
            dens = {str(b): _number(v, f"{where}.{b}") for b, v in spec.items()}
            beliefs[name] = belief_from_block_density(space, dens, name=name)
        else:
            beliefs[name] = Belief(space, np.array(_numbers(spec, where, m)), name=name)

    specs = _require(doc, "agents", "")
    if not isinstance(specs, list) or not specs:
        raise ParseError("agents must be a non-empty list", field="agents")
    agents = tuple(_build_agent(s, beliefs, f"agents[{k}]") for k, s in enumerate(specs))
    names = tuple(str(s.get("name", f"agent{k + 1}")) for k, s in enumerate(specs))
    target = np.array(_numbers(_require(doc, "target", ""), "target", m))

    allocation = None
    if doc.get("allocation") is not None:
        rows = doc["allocation"]
        if not isinstance(rows, list) or len(rows) != len(agents):
            raise ValidationError("allocation needs one row per agent")
        allocation = np.array([_numbers(r, f"allocation[{k}]", m) for k, r in enumerate(rows)])

    regimes, units = None, None
    if doc.get("securities") is not None:
        regimes, units = _build_securities(doc["securities"], beliefs, agents, m)
    return ScenarioFile(doc, space, beliefs, agents, names, target, doc["options"], regimes, units, allocation)


def _build_securities(sec, beliefs, agents, m):
    from .capital import RiskMeasurementRegime

    name = _require(sec, "pricing_density", "securities")
    if name not in beliefs:
        raise UnknownBelief(f"unknown belief {name!r}", field="securities.pricing_density")
    bases = _require(sec, "bases", "securities")
    if not isinstance(bases, list) or len(bases) != len(agents):
        raise ValidationError("securities.bases needs one basis per agent")
    regimes = []
    for k, (rho, basis) in enumerate(zip(agents, bases)):
        if not isinstance(basis, list) or not basis:
            raise ParseError("a basis is a non-empty list of securities", field=f"securities.bases[{k}]")
        B = np.array([_numbers(v, f"securities.bases[{k}][{j}]", m) for j, v in enumerate(basis)])
        regimes.append(RiskMeasurementRegime(rho, B, beliefs[name].density))
    units = None
    if sec.get("units") is not None:
        rows = sec["units"]
        if not isinstance(rows, list) or len(rows) != len(agents):
            raise ValidationError("securities.units needs one row per agent")
        units = np.array([_numbers(r, f"securities.units[{k}]", m) for k, r in enumerate(rows)])
    return tuple(regimes), units


def parse_text(text: str) -> ScenarioFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(err.msg, line=err.lineno) from err
    return from_document(doc)


def parse_scenario(path) -> ScenarioFile:
    return parse_text(Path(path).read_text(encoding="utf-8"))


def serialize(scenario: ScenarioFile) -> str:
    return json.dumps(scenario.document, indent=2, sort_keys=True) + "\n"


def with_overrides(scenario: ScenarioFile, **options) -> ScenarioFile:
    """Re-parse with some options replaced (``None`` values are ignored)."""
    doc = copy.deepcopy(scenario.document)
    for key, value in options.items():
        if value is not None:
            doc["options"][key] = value
    return from_document(doc)
