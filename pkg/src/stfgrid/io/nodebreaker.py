"""JSON node-breaker network documents (format ``stfgrid-nodebreaker``, version 1).

A document lists bus sections, elements tagged by kind, generators and loads,
all in per-unit on ``base_mva``.  Bus ids are strings (or integers) and are
mapped to dense indices in document order.  See ``docs/nodebreaker.md``.
"""

from __future__ import annotations

import json
import math
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ..errors import InputError, SchemaError, UnknownElementKind
from ..netmodel import (Bus, ElementKind, Generator, Load, Network, breaker_element,
                        ideal_transformer_element, impedance_element, line_element,
                        shunt_element, tap_transformer_element, three_winding_element,
                        turns_ratio_element, voltage_source_element)
from ..powerflow import BusSpec, BusType

FORMAT = "stfgrid-nodebreaker"
VERSION = 1


@lru_cache(maxsize=1)
def schema() -> dict:
    text = (resources.files("stfgrid") / "io" / "nodebreaker_schema.json").read_text()
    return json.loads(text)


def _validate(instance, sub: dict, where: str):
    full = schema()
    resolver_root = dict(sub)
    resolver_root["$defs"] = full["$defs"]
    try:
        jsonschema.validate(instance, resolver_root, cls=jsonschema.Draft202012Validator)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise SchemaError(f"{where}{'/' + path if path else ''}: {exc.message}") from None


def _limit(value, default):
    return default if value is None else float(value)


def document_to_network(doc: dict) -> tuple[Network, BusSpec]:
    """Validate a parsed document and build the network and its bus roles."""
    try:
        return _build(doc)
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _build(doc: dict) -> tuple[Network, BusSpec]:
    _validate(doc, schema(), "document")
    kinds = schema()["$defs"]["kinds"]
    ids = [str(b["id"]) for b in doc["buses"]]
    if len(set(ids)) != len(ids):
        raise SchemaError("duplicate bus ids")
    index = {b: k for k, b in enumerate(ids)}

    def bus(ref, where):
        try:
            return index[str(ref)]
        except KeyError:
            raise InputError(f"{where} references unknown bus {ref!r}") from None

    buses = tuple(Bus(k, float(b.get("base_kv", 1.0)), float(b.get("v_min", 0.9)),
                      float(b.get("v_max", 1.1)), name=ids[k])
                  for k, b in enumerate(doc["buses"]))
    elements = []
    for n, e in enumerate(doc["elements"]):
        kind = e["kind"]
        if kind not in kinds:
            raise UnknownElementKind(f"element {e['id']!r}: unknown kind {kind!r}")
        _validate(e, kinds[kind], f"elements/{n}")
        at = [bus(b, f"element {e['id']!r}") for b in e["buses"]]
        eid, i_max = e["id"], e.get("i_max")
        if kind == "line":
            el = line_element(eid, *at, e["r"], e["x"], e.get("b", 0.0), i_max)
        elif kind == "tap_xfmr":
            el = tap_transformer_element(eid, *at, e["r"], e["x"], e.get("b", 0.0), e["tap"],
                                         e.get("shift_deg", 0.0), i_max)
        elif kind == "ideal_xfmr":
            if "n1" in e:
                el = turns_ratio_element(eid, *at, e["n1"], e["n2"])
            else:
                el = ideal_transformer_element(eid, *at, e["tap"], e.get("shift_deg", 0.0), i_max)
        elif kind == "breaker":
            el = breaker_element(eid, *at, e["gamma"])
        elif kind == "three_winding":
            el = three_winding_element(eid, *at, *e["turns"])
        elif kind == "shunt":
            el = shunt_element(eid, *at, complex(e.get("g", 0.0), e.get("b", 0.0)))
        elif kind == "impedance":
            el = impedance_element(eid, *at, complex(e["r"], e["x"]))
        else:
            el = voltage_source_element(eid, *at, complex(e.get("e_re", 1.0), e.get("e_im", 0.0)))
        elements.append(el)

    gens = []
    for g in doc.get("generators", []):
        gens.append(Generator(bus(g["bus"], "generator"),
                              _limit(g.get("p_min"), 0.0), _limit(g.get("p_max"), math.inf),
                              _limit(g.get("q_min"), -math.inf), _limit(g.get("q_max"), math.inf),
                              tuple(g.get("cost", (0.0, 0.0, 0.0))), float(g.get("p_set", 0.0)),
                              float(g.get("q_set", 0.0)), float(g.get("v_set", 1.0))))
    loads = [Load(bus(ld["bus"], "load"), complex(ld.get("p", 0.0), ld.get("q", 0.0)))
             for ld in doc.get("loads", [])]
    net = Network(buses, tuple(elements), tuple(gens), tuple(loads),
                  float(doc.get("base_mva", 100.0)))
    return net, _bus_spec(doc, net)


def _bus_spec(doc: dict, net: Network) -> BusSpec:
    n = net.n_buses
    s = -net.load_vector()
    vm = np.array([float(b.get("v_set", 1.0)) for b in doc["buses"]])
    ang = np.radians([float(b.get("angle_deg", 0.0)) for b in doc["buses"]])
    has_gen = set()
    for g in net.generators:
        s[g.bus] += complex(g.p_set, g.q_set)
        if g.bus not in has_gen and "v_set" not in doc["buses"][g.bus]:
            vm[g.bus] = g.v_set
        has_gen.add(g.bus)
    kinds = [BusType(b.get("type", "pq")) for b in doc["buses"]]
    if n and BusType.SLACK not in kinds:
        # default reference: first generator bus, else bus 0
        kinds[net.generators[0].bus if net.generators else 0] = BusType.SLACK
    return BusSpec(tuple(kinds), s, vm, ang) if n else None


def parse_nodebreaker(path) -> tuple[Network, BusSpec]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") \
            from None
    return document_to_network(doc)


def _num(v):
    return None if not math.isfinite(v) else float(v)


def _element_doc(el, names) -> dict:
    d = {"id": el.id, "kind": el.kind.value, "buses": [names[b] for b in el.buses]}
    p = el.params
    k = el.kind
    if k is ElementKind.LINE:
        d.update(r=p["r"], x=p["x"], b=p["b"])
    elif k is ElementKind.TAP_TRANSFORMER:
        d.update(r=p["r"], x=p["x"], b=p["b"], tap=p["tap"], shift_deg=p["shift_deg"])
    elif k is ElementKind.IDEAL_TRANSFORMER:
        d.update({key: p[key] for key in ("n1", "n2")} if "n1" in p
                 else {"tap": p["tap"], "shift_deg": p["shift_deg"]})
    elif k is ElementKind.BREAKER:
        d["gamma"] = int(p["gamma"])
    elif k is ElementKind.THREE_WINDING:
        d["turns"] = [p["Na"], p["Nb"], p["Nc"]]
    elif k is ElementKind.SHUNT:
        d.update(g=p["g"], b=p["b"])
    elif k is ElementKind.IMPEDANCE:
        d.update(r=p["r"], x=p["x"])
    elif k is ElementKind.VOLTAGE_SOURCE:
        d.update(e_re=p["e_re"], e_im=p["e_im"])
    if el.i_max is not None:
        d["i_max"] = el.i_max
    return d


def network_to_document(network: Network, spec: BusSpec | None = None, name: str = "") -> dict:
    """Inverse of :func:`document_to_network` (bus names become ids)."""
    names = [b.name if b.name is not None else str(b.id) for b in network.buses]
    if len(set(names)) != len(names):
        names = [str(b.id) for b in network.buses]
    buses = []
    for k, b in enumerate(network.buses):
        d = {"id": names[k], "base_kv": b.base_kv, "v_min": b.v_min, "v_max": b.v_max}
        if spec is not None:
            d["type"] = spec.kinds[k].value
            d["v_set"] = float(spec.v_mag[k])
            d["angle_deg"] = math.degrees(float(spec.v_angle[k]))
        buses.append(d)
    gens = [{"bus": names[g.bus], "p_min": _num(g.p_min), "p_max": _num(g.p_max),
             "q_min": _num(g.q_min), "q_max": _num(g.q_max), "cost": list(g.cost),
             "p_set": g.p_set, "q_set": g.q_set, "v_set": g.v_set} for g in network.generators]
    loads = [{"bus": names[ld.bus], "p": ld.s_d.real, "q": ld.s_d.imag} for ld in network.loads]
    doc = {"format": FORMAT, "version": VERSION}
    if name:
        doc["name"] = name
    doc.update(base_mva=network.base_mva, buses=buses,
               elements=[_element_doc(el, names) for el in network.elements],
               generators=gens, loads=loads)
    return doc


def serialize(network: Network, spec: BusSpec | None = None, path=None, name: str = "") -> str:
    text = json.dumps(network_to_document(network, spec, name), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def bundled_nodebreaker(name: str) -> Path:
    stem = name[:-5] if name.endswith(".json") else name
    p = resources.files("stfgrid") / "data" / "nodebreaker" / f"{stem}.json"
    if not p.is_file():
        raise InputError(f"no bundled node-breaker case {name!r}")
    return Path(str(p))
