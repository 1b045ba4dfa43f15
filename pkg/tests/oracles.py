"""Independent reference computations used by the tests."""

from __future__ import annotations

import numpy as np

from stfgrid.netmodel import Bus, ElementKind, Generator, Load, Network
from stfgrid.powerflow import BusSpec, BusType

# incidence of the three-line fixture: L1 0-2, L2 2-1, L3 0-1
THREE_BUS_A = np.array([[1, 0, 0, 0, 1, 0],
                        [0, 0, 0, 1, 0, 1],
                        [0, 1, 1, 0, 0, 0]])


def circuit_tableau(n1, n2, Z):
    """Tableau of the source/transformer/impedance circuit, written out by hand.

    Columns ``(V1, V2, v1..v4, i1..i4)``; rows are KCL at both nodes, KVL for the
    four ports, the two transformer equations, ``v3 - Z i3 = 0`` and ``v4 = E``.
    """
    return np.array([
        [0, 0, 0, 0, 0, 0, 1, 0, 0, 1],
        [0, 0, 0, 0, 0, 0, 0, 1, 1, 0],
        [-1, 0, 1, 0, 0, 0, 0, 0, 0, 0],
        [0, -1, 0, 1, 0, 0, 0, 0, 0, 0],
        [0, -1, 0, 0, 1, 0, 0, 0, 0, 0],
        [-1, 0, 0, 0, 0, 1, 0, 0, 0, 0],
        [0, 0, n2, -n1, 0, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 0, n1, n2, 0, 0],
        [0, 0, 0, 0, 1, 0, 0, 0, -Z, 0],
        [0, 0, 0, 0, 0, 1, 0, 0, 0, 0],
    ], dtype=complex)


def central_jacobian(fun, x, h=1e-6):
    """Dense central-difference Jacobian of a vector function."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(fun(x))
    J = np.zeros((f0.size, x.size))
    for k in range(x.size):
        d = np.zeros_like(x)
        d[k] = h
        J[:, k] = (np.atleast_1d(fun(x + d)) - np.atleast_1d(fun(x - d))) / (2 * h)
    return J


def relative_error(A, B) -> float:
    A, B = np.asarray(A), np.asarray(B)
    scale = max(np.max(np.abs(B)) if B.size else 0.0, 1.0)
    return float(np.max(np.abs(A - B)) / scale) if A.size else 0.0


def merge_closed_breakers(network: Network, spec: BusSpec):
    """Bus-branch equivalent: buses joined by closed breakers merged (union-find).

    Returns the merged network, its spec and the map old bus -> new bus.
    """
    parent = list(range(network.n_buses))

    def find(j):
        while parent[j] != j:
            parent[j] = parent[parent[j]]
            j = parent[j]
        return j

    for el in network.elements:
        if el.kind is ElementKind.BREAKER and not el.is_open:
            a, b = find(el.buses[0]), find(el.buses[1])
            parent[max(a, b)] = min(a, b)
    roots = sorted({find(j) for j in range(network.n_buses)})
    new = {r: k for k, r in enumerate(roots)}
    mapping = np.array([new[find(j)] for j in range(network.n_buses)])
    buses = tuple(Bus(k, network.buses[r].base_kv, network.buses[r].v_min, network.buses[r].v_max)
                  for k, r in enumerate(roots))
    elements = []
    for el in network.elements:
        if el.kind is ElementKind.BREAKER:
            continue  # closed ones are merged, open ones carry nothing
        elements.append(type(el)(el.id, el.kind, el.stamp, tuple(mapping[list(el.buses)]),
                                 el.params, el.i_max))
    gens = tuple(Generator(int(mapping[g.bus]), g.p_min, g.p_max, g.q_min, g.q_max, g.cost,
                           g.p_set, g.q_set, g.v_set) for g in network.generators)
    loads = tuple(Load(int(mapping[ld.bus]), ld.s_d) for ld in network.loads)
    merged = Network(buses, tuple(elements), gens, loads, network.base_mva)

    n = len(roots)
    kinds = [BusType.PQ] * n
    s = np.zeros(n, dtype=complex)
    vm = np.ones(n)
    ang = np.zeros(n)
    rank = {BusType.PQ: 0, BusType.PV: 1, BusType.SLACK: 2}
    for j, k in enumerate(spec.kinds):
        m = mapping[j]
        s[m] += spec.s_inj[j]
        if rank[k] > rank[kinds[m]]:
            kinds[m] = k
            vm[m] = spec.v_mag[j]
            ang[m] = spec.v_angle[j]
    return merged, BusSpec(tuple(kinds), s, vm, ang), mapping


def gauss_seidel_two_bus(v_slack: complex, z: complex, s_load: complex,
                         tol: float = 1e-14, max_iter: int = 10000) -> complex:
    """Receiving-end voltage of a series impedance feeding a PQ load."""
    y = 1 / z
    Y21, Y22 = -y, y
    S2 = -s_load
    V2 = complex(v_slack)
    for _ in range(max_iter):
        new = (np.conj(S2 / V2) - Y21 * v_slack) / Y22
        if abs(new - V2) < tol:
            return new
        V2 = new
    raise RuntimeError("Gauss-Seidel did not converge")


def _cmax(z) -> float:
    z = np.atleast_1d(z)
    return float(max(np.max(np.abs(z.real)), np.max(np.abs(z.imag)))) if z.size else 0.0


def brute_force_violations(problem, x) -> dict:
    """Per-family violations evaluated element by element, without the tableau matrix."""
    net = problem.network
    Pg, Qg, V, v, i, I = problem.unpack(np.asarray(x, dtype=float))
    out = {}
    off = net.port_offsets()
    lin = kvl = 0.0
    kcl = np.array(I, dtype=complex)
    for k, el in enumerate(net.elements):
        sl = slice(off[k], off[k + 1])
        st = el.stamp
        us = st.us if st.us is not None else 0
        lin = max(lin, _cmax(st.Fv @ v[sl] + st.Fi @ i[sl] - us))
        for p, bus in enumerate(el.buses):
            kvl = max(kvl, _cmax(v[off[k] + p] - V[bus]))
            kcl[bus] -= i[off[k] + p]
    out["linear_element"] = lin
    out["kvl"] = kvl
    out["kcl"] = _cmax(kcl)
    Sg = np.zeros(net.n_buses, dtype=complex)
    for g, p, q in zip(net.generators, Pg, Qg):
        Sg[g.bus] += complex(p, q)
    mis = Sg - net.load_vector() - V * np.conj(I)
    out["nonlinear_element"] = _cmax(mis)
    out["reference"] = abs(V[problem.ref_bus].imag)
    gp = gq = 0.0
    for g, p, q in zip(net.generators, Pg, Qg):
        gp = max(gp, g.p_min - p if np.isfinite(g.p_min) else 0.0,
                 p - g.p_max if np.isfinite(g.p_max) else 0.0)
        gq = max(gq, g.q_min - q if np.isfinite(g.q_min) else 0.0,
                 q - g.q_max if np.isfinite(g.q_max) else 0.0)
    out["gen_p"], out["gen_q"] = max(gp, 0.0), max(gq, 0.0)
    vv = 0.0
    for b in net.buses:
        m2 = abs(V[b.id]) ** 2
        vv = max(vv, b.v_min ** 2 - m2, m2 - b.v_max ** 2)
    out["voltage"] = max(vv, 0.0)
    ln = 0.0
    for k, el in enumerate(net.elements):
        if el.i_max is None or not problem.options.line_limits:
            continue
        for p in range(el.ports):
            ln = max(ln, abs(i[off[k] + p]) ** 2 - el.i_max ** 2)
    out["line"] = max(ln, 0.0)
    return out
