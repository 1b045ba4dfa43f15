"""Small reference networks and a random network generator.

These are used by the tests, the demos and the ``random:N`` case name of the
command line tool.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .netmodel import (Bus, Generator, Load, Network, breaker_element,
                       ideal_transformer_element, impedance_element, line_element,
                       shunt_element, tap_transformer_element, three_winding_element,
                       turns_ratio_element, voltage_source_element)
from .powerflow import BusSpec, BusType


def source_transformer_circuit(n1=1.0, n2=1.0, Z=1.0, E=1.0) -> Network:
    """Voltage source at node 0, ideal ``n1:n2`` transformer 0-1, impedance ``Z`` at node 1.

    Ports are ordered transformer a, transformer b, impedance, source, so the
    incidence matrix is ``[[1, 0, 0, 1], [0, 1, 1, 0]]``.
    """
    buses = (Bus(0), Bus(1))
    elements = (turns_ratio_element("xf", 0, 1, n1, n2),
                impedance_element("z", 1, Z),
                voltage_source_element("src", 0, E))
    return Network(buses, elements, base_mva=1.0)


def three_bus(z=0.1j, y=0.0, with_injections=True) -> Network:
    """Three lines: 0-2, 2-1, 0-1, all with series impedance ``z`` and charging ``y``."""
    z, y = complex(z), complex(y)
    buses = tuple(Bus(k, name=str(k + 1)) for k in range(3))
    elements = (line_element("L1", 0, 2, z.real, z.imag, y.imag),
                line_element("L2", 2, 1, z.real, z.imag, y.imag),
                line_element("L3", 0, 1, z.real, z.imag, y.imag))
    gens, loads = (), ()
    if with_injections:
        gens = (Generator(0, 0.0, 2.0, -1.0, 1.0, (0.11, 5.0, 150.0), v_set=1.0),
                Generator(1, 0.0, 1.5, -1.0, 1.0, (0.085, 1.2, 600.0), v_set=1.0))
        loads = (Load(2, 0.9 + 0.3j),)
    return Network(buses, elements, gens, loads, base_mva=100.0)


def two_bus(z=0.1j, load=0.5 + 0.2j, cost=(0.0, 10.0, 0.0), p_max=2.0) -> Network:
    """Generator at bus 0, load at bus 1, one series line."""
    z = complex(z)
    return Network((Bus(0, v_min=0.8, v_max=1.2), Bus(1, v_min=0.8, v_max=1.2)),
                   (line_element("L", 0, 1, z.real, z.imag, 0.0),),
                   (Generator(0, 0.0, p_max, -2.0, 2.0, cost),),
                   (Load(1, load),), base_mva=100.0)


def slack_spec(network: Network, slack: int = 0, v_slack: float = 1.0) -> BusSpec:
    """All non-slack buses PQ with their scheduled injection (generator set points minus load)."""
    s = -network.load_vector()
    for g in network.generators:
        if g.bus != slack:
            s[g.bus] += complex(g.p_set, g.q_set)
    kinds = [BusType.PQ] * network.n_buses
    kinds[slack] = BusType.SLACK
    vm = np.ones(network.n_buses)
    vm[slack] = v_slack
    return BusSpec(tuple(kinds), s, vm, np.zeros(network.n_buses))


SPECIAL = ("ideal", "breaker", "three_winding", "open_breaker")


def random_network(rng: np.random.Generator, n_bus: int = 8, extra_edges: int | None = None,
                   tap_fraction: float = 0.2, shift_fraction: float = 0.1,
                   shunt_fraction: float = 0.2, special: str | None = None,
                   n_gen: int | None = None, load_scale: float = 0.3,
                   line_limits: bool = False) -> Network:
    """Connected random network of pi lines, tap and phase-shifting transformers and shunts.

    ``special`` inserts one element that has no admittance form: ``"ideal"``,
    ``"breaker"`` (closed), ``"open_breaker"`` (parallel to a line so the
    network stays connected) or ``"three_winding"``.
    """
    if n_bus < 2:
        raise InputError("need at least two buses")
    extra = n_bus // 2 if extra_edges is None else extra_edges
    edges = [(int(rng.integers(0, k)), k) for k in range(1, n_bus)]
    for _ in range(extra):
        a, b = rng.choice(n_bus, size=2, replace=False)
        edges.append((int(a), int(b)))
    buses = tuple(Bus(k, 1.0, 0.94, 1.06) for k in range(n_bus))
    elements = []
    for k, (a, b) in enumerate(edges):
        r = float(rng.uniform(0.001, 0.05))
        x = float(rng.uniform(0.02, 0.3))
        bsh = float(rng.uniform(0.0, 0.1))
        i_max = float(rng.uniform(1.0, 3.0)) if line_limits else None
        u = rng.random()
        if u < shift_fraction:
            elements.append(tap_transformer_element(f"br{k}", a, b, r, x, bsh,
                                                    float(rng.uniform(0.95, 1.05)),
                                                    float(rng.uniform(-10, 10)), i_max))
        elif u < shift_fraction + tap_fraction:
            elements.append(tap_transformer_element(f"br{k}", a, b, r, x, bsh,
                                                    float(rng.uniform(0.9, 1.1)), 0.0, i_max))
        else:
            elements.append(line_element(f"br{k}", a, b, r, x, bsh, i_max))
    for j in range(n_bus):
        if rng.random() < shunt_fraction:
            elements.append(shunt_element(f"sh{j}", j, complex(rng.uniform(0, 0.02),
                                                               rng.uniform(-0.1, 0.1))))
    extra_buses = []
    if special is not None:
        a, b = (int(v) for v in rng.choice(n_bus, size=2, replace=False))
        if special == "ideal":
            elements.append(ideal_transformer_element("X1", a, b, float(rng.uniform(0.95, 1.05))))
        elif special == "breaker":
            # breaker to a new bus section that takes part of the load
            extra_buses.append(n_bus)
            elements.append(breaker_element("BK1", a, n_bus, 1))
        elif special == "open_breaker":
            elements.append(breaker_element("BK1", a, b, 0))
        elif special == "three_winding":
            extra_buses += [n_bus, n_bus + 1]
            turns = rng.uniform(0.95, 1.05, size=3)
            elements.append(three_winding_element("TW1", a, n_bus, n_bus + 1, *map(float, turns)))
            elements.append(line_element("TWL", n_bus, b, 0.01, 0.1, 0.0))
        else:
            raise InputError(f"unknown special element {special!r}")
    buses = buses + tuple(Bus(k, 1.0, 0.94, 1.06) for k in extra_buses)
    nb = len(buses)
    ng = max(1, n_bus // 3) if n_gen is None else n_gen
    gen_buses = rng.choice(n_bus, size=ng, replace=False)
    gens = []
    loads = []
    total = 0.0
    for j in range(nb):
        if j in gen_buses:
            continue
        s = complex(rng.uniform(0.0, load_scale), rng.uniform(-0.1, 0.2) * load_scale)
        loads.append(Load(j, s))
        total += s.real
    for g in gen_buses:
        gens.append(Generator(int(g), 0.0, 2.0 * total / ng + 0.5, -2.0, 2.0,
                              (float(rng.uniform(0.01, 0.1)), float(rng.uniform(5, 40)), 0.0),
                              p_set=total / ng))
    return Network(buses, tuple(elements), tuple(gens), tuple(loads), base_mva=100.0)
