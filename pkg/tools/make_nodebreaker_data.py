"""Regenerate the node-breaker documents bundled in ``stfgrid/data/nodebreaker``."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from stfgrid.fixtures import three_bus
from stfgrid.io.matpower import load_case
from stfgrid.io.nodebreaker import serialize
from stfgrid.netmodel import (Bus, Generator, Load, Network, breaker_element, line_element,
                              three_winding_element)
from stfgrid.powerflow import BusSpec, BusType

OUT = Path(__file__).resolve().parents[1] / "src" / "stfgrid" / "data" / "nodebreaker"


def case9_split():
    """case9 with bus 7 split into two sections (ring stays closed through BK7)
    and the load of bus 5 on its own section behind BK5."""
    net, spec = load_case("case9")
    b7, b5 = net.bus_index("7"), net.bus_index("5")
    n = net.n_buses
    buses = [replace(b, name={"7": "7a", "5": "5a"}.get(b.name, b.name)) for b in net.buses]
    buses += [Bus(n, net.buses[b7].base_kv, net.buses[b7].v_min, net.buses[b7].v_max, name="7b"),
              Bus(n + 1, net.buses[b5].base_kv, net.buses[b5].v_min, net.buses[b5].v_max, name="5b")]
    b8 = net.bus_index("8")
    elements = []
    for el in net.elements:
        if set(el.buses) == {b7, b8}:
            el = replace(el, buses=tuple(n if b == b7 else b for b in el.buses))
        elements.append(el)
    elements += [breaker_element("BK7", b7, n, 1), breaker_element("BK5", b5, n + 1, 1)]
    loads = [Load(n + 1, ld.s_d) if ld.bus == b5 else ld for ld in net.loads]
    nb = Network(tuple(buses), tuple(elements), net.generators, tuple(loads), net.base_mva)
    kinds = list(spec.kinds) + [BusType.PQ, BusType.PQ]
    s = list(spec.s_inj) + [0.0, 0.0]
    s[n + 1], s[b5] = s[b5], 0.0
    nbspec = BusSpec(tuple(kinds), s, list(spec.v_mag) + [1.0, 1.0], list(spec.v_angle) + [0.0, 0.0])
    return nb, nbspec


def three_winding_sample():
    """Source bus, HV line, ideal three-winding unit feeding MV and LV loads."""
    buses = tuple(Bus(k, kv, 0.9, 1.1, name=nm) for k, (nm, kv) in
                  enumerate([("1", 230.0), ("2", 230.0), ("3", 115.0), ("4", 13.8),
                             ("5", 115.0), ("6", 13.8)]))
    elements = (line_element("L12", 0, 1, 0.005, 0.05, 0.02, i_max=3.0),
                three_winding_element("TW", 1, 2, 3, 1.0, 1.05, 0.95),
                line_element("L35", 2, 4, 0.01, 0.08, 0.01, i_max=2.0),
                line_element("L46", 3, 5, 0.02, 0.1, 0.0, i_max=2.0))
    gens = (Generator(0, 0.1, 3.0, -2.0, 2.0, (0.02, 20.0, 100.0), p_set=1.2, v_set=1.02),
            Generator(5, 0.0, 0.6, -0.5, 0.5, (0.05, 30.0, 50.0), p_set=0.3, v_set=1.0))
    loads = (Load(4, 0.8 + 0.25j), Load(5, 0.6 + 0.2j))
    net = Network(buses, elements, gens, loads, 100.0)
    return net, BusSpec.from_network(net, slack=0, pv=[])


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    net, spec = case9_split()
    serialize(net, spec, OUT / "case9_nb.json", "case9 with split bus sections")
    net, spec = three_winding_sample()
    serialize(net, spec, OUT / "three_winding.json", "three-winding sample")
    net = three_bus()
    serialize(net, BusSpec.from_network(net, slack=0, pv=[]), OUT / "three_bus.json", "three-bus")


if __name__ == "__main__":
    main()
