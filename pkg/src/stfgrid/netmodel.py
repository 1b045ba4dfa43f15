"""Network domain types and per-element constitutive stamps.

Every element ``k`` with ``p`` ports is described by the affine relation

    Fv @ v_k + Fi @ i_k = us

on its port voltages ``v_k`` and port currents ``i_k`` (currents oriented from
the bus into the element).  Two-port stamps are written in the transmission
matrix layout::

    [v_a]   [A  B] [ v_b]
    [i_a] = [C  D] [-i_b]   <=>   Fv = [[1, -A], [0, -C]],  Fi = [[0, B], [1, D]]
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DanglingPort, InputError, IslandedNetwork, NotCascadable

PORT_LABELS = "abc"
RANK_TOL = 1e-10


class ElementKind(str, Enum):
    LINE = "line"
    IDEAL_TRANSFORMER = "ideal_xfmr"
    TAP_TRANSFORMER = "tap_xfmr"
    BREAKER = "breaker"
    THREE_WINDING = "three_winding"
    SHUNT = "shunt"
    # one-port circuit elements (used by small circuit examples)
    IMPEDANCE = "impedance"
    VOLTAGE_SOURCE = "voltage_source"


def _frozen(a, dtype=complex) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ElementStamp:
    """Constitutive matrices ``(Fv, Fi, us)`` of one element."""

    Fv: np.ndarray
    Fi: np.ndarray
    us: np.ndarray = None

    def __post_init__(self):
        Fv = _frozen(np.atleast_2d(self.Fv))
        Fi = _frozen(np.atleast_2d(self.Fi))
        p = Fv.shape[0]
        us = np.zeros(p) if self.us is None else self.us
        us = _frozen(np.atleast_1d(us))
        if Fv.shape != (p, p) or Fi.shape != (p, p) or us.shape != (p,):
            raise InputError(f"inconsistent stamp shapes {Fv.shape}, {Fi.shape}, {us.shape}")
        if p not in (1, 2, 3):
            raise InputError(f"unsupported port arity {p}")
        if not (np.all(np.isfinite(Fv)) and np.all(np.isfinite(Fi)) and np.all(np.isfinite(us))):
            raise InputError("stamp entries must be finite")
        object.__setattr__(self, "Fv", Fv)
        object.__setattr__(self, "Fi", Fi)
        object.__setattr__(self, "us", us)

    @property
    def ports(self) -> int:
        return self.Fv.shape[0]

    @property
    def has_source(self) -> bool:
        return bool(np.any(self.us != 0))

    def rank(self, tol: float = RANK_TOL) -> int:
        """Numerical rank of ``[Fv | Fi]`` (relative singular value threshold)."""
        return _rank(np.hstack([self.Fv, self.Fi]), tol)

    def current_block_rank(self, tol: float = RANK_TOL) -> int:
        return _rank(self.Fi, tol)

    def __eq__(self, other):
        if not isinstance(other, ElementStamp):
            return NotImplemented
        return (np.array_equal(self.Fv, other.Fv) and np.array_equal(self.Fi, other.Fi)
                and np.array_equal(self.us, other.us))

    __hash__ = None

    def allclose(self, other: "ElementStamp", atol: float = 1e-12) -> bool:
        return (np.allclose(self.Fv, other.Fv, rtol=0, atol=atol)
                and np.allclose(self.Fi, other.Fi, rtol=0, atol=atol)
                and np.allclose(self.us, other.us, rtol=0, atol=atol))


def _rank(M: np.ndarray, tol: float) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def _check_finite(**values):
    for name, val in values.items():
        if not cmath.isfinite(complex(val)):
            raise InputError(f"{name} must be finite, got {val!r}")


# ---------------------------------------------------------------------------
# stamps

def line_stamp(R: float, X: float, B: float = 0.0) -> ElementStamp:
    """Pi-equivalent line with series ``Z = R + jX`` and total charging ``Y = jB``."""
    _check_finite(R=R, X=X, B=B)
    Z = complex(R, X)
    Y = complex(0.0, B)
    h = 1 + Z * Y / 2
    return ElementStamp(Fv=[[1, -h], [0, -Y * (1 + Z * Y / 4)]],
                        Fi=[[0, Z], [1, h]])


def ideal_transformer_stamp(T: complex) -> ElementStamp:
    """Ideal (possibly phase-shifting) transformer ``v_a = T v_b``, ``i_a = -i_b / conj(T)``."""
    _check_finite(T=T)
    T = complex(T)
    if T == 0:
        raise InputError("transformer gain must be nonzero")
    return ElementStamp(Fv=[[1, -T], [0, 0]], Fi=[[0, 0], [1, 1 / T.conjugate()]])


def turns_ratio_stamp(n1: float, n2: float) -> ElementStamp:
    """Ideal transformer ``n1:n2`` written as ``n2 v1 - n1 v2 = 0``, ``n1 i1 + n2 i2 = 0``."""
    _check_finite(n1=n1, n2=n2)
    if n1 == 0 or n2 == 0:
        raise InputError("turns must be nonzero")
    return ElementStamp(Fv=[[n2, -n1], [0, 0]], Fi=[[0, 0], [n1, n2]])


def breaker_stamp(gamma: int) -> ElementStamp:
    """Switch with state ``gamma`` (1 closed, 0 open)."""
    if isinstance(gamma, bool):
        gamma = int(gamma)
    if gamma not in (0, 1):
        raise InputError(f"breaker state must be 0 or 1, got {gamma!r}")
    g = int(gamma)
    return ElementStamp(Fv=[[g, -g], [0, 0]], Fi=[[1 - g, 0], [g, 1]])


def three_winding_stamp(Na: float, Nb: float, Nc: float) -> ElementStamp:
    """Ideal three-winding transformer: equal volts per turn, zero net ampere-turns."""
    for name, n in (("Na", Na), ("Nb", Nb), ("Nc", Nc)):
        if not (math.isfinite(n) and n > 0):
            raise InputError(f"{name} must be a positive turn count, got {n!r}")
    return ElementStamp(Fv=[[1 / Na, -1 / Nb, 0], [0, 1 / Nb, -1 / Nc], [0, 0, 0]],
                        Fi=[[0, 0, 0], [0, 0, 0], [Na, Nb, Nc]])


def shunt_stamp(y_sh: complex) -> ElementStamp:
    """One-port admittance to ground, ``i = y_sh v``."""
    _check_finite(y_sh=y_sh)
    return ElementStamp(Fv=[[-complex(y_sh)]], Fi=[[1]], us=[0])


def impedance_stamp(Z: complex) -> ElementStamp:
    """One-port impedance to ground, ``v - Z i = 0``."""
    _check_finite(Z=Z)
    return ElementStamp(Fv=[[1]], Fi=[[-complex(Z)]], us=[0])


def voltage_source_stamp(E: complex) -> ElementStamp:
    """Independent one-port voltage source, ``v = E``."""
    _check_finite(E=E)
    return ElementStamp(Fv=[[1]], Fi=[[0]], us=[complex(E)])


def abcd_matrix(stamp: ElementStamp) -> np.ndarray:
    """Transmission matrix of a source-free two-port, or raise :class:`NotCascadable`."""
    if stamp.ports != 2:
        raise NotCascadable(f"cascade needs two-port stamps, got arity {stamp.ports}")
    if stamp.has_source:
        raise NotCascadable("cascade of elements with internal sources is not supported")
    left = np.column_stack([stamp.Fv[:, 0], stamp.Fi[:, 0]])
    right = np.column_stack([stamp.Fv[:, 1], -stamp.Fi[:, 1]])
    s = np.linalg.svd(left, compute_uv=False)
    scale = max(np.linalg.norm(np.hstack([left, right]), 2), 1.0)
    if s[-1] < RANK_TOL * scale:
        raise NotCascadable("stamp has no transmission-matrix form")
    return -np.linalg.solve(left, right)


def stamp_from_abcd(M) -> ElementStamp:
    M = np.asarray(M, dtype=complex)
    return ElementStamp(Fv=[[1, -M[0, 0]], [0, -M[1, 0]]], Fi=[[0, M[0, 1]], [1, M[1, 1]]])


def cascade(first: ElementStamp, second: ElementStamp) -> ElementStamp:
    """Series connection: port b of ``first`` feeds port a of ``second``."""
    return stamp_from_abcd(abcd_matrix(first) @ abcd_matrix(second))


def complex_tap(tap: float, shift_deg: float = 0.0) -> complex:
    """Complex gain from a MATPOWER-style ratio (0 means 1) and shift in degrees."""
    ratio = 1.0 if tap == 0 else float(tap)
    return ratio * cmath.exp(1j * math.radians(shift_deg))


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class Bus:
    id: int
    base_kv: float = 1.0
    v_min: float = 0.9
    v_max: float = 1.1
    name: str | None = field(default=None, compare=False)  # label only

    def __post_init__(self):
        if not (0 < self.v_min <= self.v_max):
            raise InputError(f"bus {self.id}: need 0 < v_min <= v_max, got {self.v_min}, {self.v_max}")
        if not self.base_kv >= 0:
            raise InputError(f"bus {self.id}: base_kv must be non-negative")


@dataclass(frozen=True)
class NetworkElement:
    id: str
    kind: ElementKind
    stamp: ElementStamp
    buses: tuple[int, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    i_max: float | None = None  # per-unit current limit applied to every port

    def __post_init__(self):
        object.__setattr__(self, "kind", ElementKind(self.kind))
        object.__setattr__(self, "buses", tuple(int(b) for b in self.buses))
        object.__setattr__(self, "params", dict(self.params))
        if len(self.buses) != self.stamp.ports:
            raise InputError(f"element {self.id}: {len(self.buses)} attachments "
                             f"for a {self.stamp.ports}-port stamp")

    @property
    def ports(self) -> int:
        return self.stamp.ports

    @property
    def attachment(self) -> list[tuple[str, int]]:
        return list(zip(PORT_LABELS, self.buses))

    @property
    def is_open(self) -> bool:
        return self.kind is ElementKind.BREAKER and self.params.get("gamma", 1) == 0

    def with_breaker_state(self, gamma: int) -> "NetworkElement":
        if self.kind is not ElementKind.BREAKER:
            raise InputError(f"element {self.id} is a {self.kind.value}, not a breaker")
        return replace(self, stamp=breaker_stamp(gamma), params={"gamma": int(gamma)})


def line_element(eid, a, b, r, x, b_sh=0.0, i_max=None) -> NetworkElement:
    return NetworkElement(eid, ElementKind.LINE, line_stamp(r, x, b_sh), (a, b),
                          {"r": r, "x": x, "b": b_sh}, i_max)


def tap_transformer_element(eid, a, b, r, x, b_sh=0.0, tap=1.0, shift_deg=0.0,
                            i_max=None) -> NetworkElement:
    """Off-nominal transformer: ideal gain on the ``a`` side in cascade with a pi line."""
    T = complex_tap(tap, shift_deg)
    stamp = cascade(ideal_transformer_stamp(T), line_stamp(r, x, b_sh))
    return NetworkElement(eid, ElementKind.TAP_TRANSFORMER, stamp, (a, b),
                          {"r": r, "x": x, "b": b_sh, "tap": tap, "shift_deg": shift_deg}, i_max)


def ideal_transformer_element(eid, a, b, tap=1.0, shift_deg=0.0, i_max=None) -> NetworkElement:
    return NetworkElement(eid, ElementKind.IDEAL_TRANSFORMER,
                          ideal_transformer_stamp(complex_tap(tap, shift_deg)), (a, b),
                          {"tap": tap, "shift_deg": shift_deg}, i_max)


def turns_ratio_element(eid, a, b, n1, n2) -> NetworkElement:
    return NetworkElement(eid, ElementKind.IDEAL_TRANSFORMER, turns_ratio_stamp(n1, n2),
                          (a, b), {"n1": n1, "n2": n2})


def breaker_element(eid, a, b, gamma=1) -> NetworkElement:
    return NetworkElement(eid, ElementKind.BREAKER, breaker_stamp(gamma), (a, b),
                          {"gamma": int(gamma)})


def three_winding_element(eid, a, b, c, Na, Nb, Nc) -> NetworkElement:
    return NetworkElement(eid, ElementKind.THREE_WINDING, three_winding_stamp(Na, Nb, Nc),
                          (a, b, c), {"Na": Na, "Nb": Nb, "Nc": Nc})


def shunt_element(eid, bus, y_sh) -> NetworkElement:
    y_sh = complex(y_sh)
    return NetworkElement(eid, ElementKind.SHUNT, shunt_stamp(y_sh), (bus,),
                          {"g": y_sh.real, "b": y_sh.imag})


def impedance_element(eid, bus, Z) -> NetworkElement:
    Z = complex(Z)
    return NetworkElement(eid, ElementKind.IMPEDANCE, impedance_stamp(Z), (bus,),
                          {"r": Z.real, "x": Z.imag})


def voltage_source_element(eid, bus, E) -> NetworkElement:
    E = complex(E)
    return NetworkElement(eid, ElementKind.VOLTAGE_SOURCE, voltage_source_stamp(E), (bus,),
                          {"e_re": E.real, "e_im": E.imag})


@dataclass(frozen=True)
class Generator:
    """Dispatchable unit.  Powers in per-unit, cost coefficients in $/h on MW."""

    bus: int
    p_min: float = 0.0
    p_max: float = math.inf
    q_min: float = -math.inf
    q_max: float = math.inf
    cost: tuple[float, float, float] = (0.0, 0.0, 0.0)  # (alpha, beta, gamma_cost)
    p_set: float = 0.0
    q_set: float = 0.0
    v_set: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "cost", tuple(float(c) for c in self.cost))
        if len(self.cost) != 3:
            raise InputError("cost must be (alpha, beta, gamma_cost)")
        if self.p_min > self.p_max or self.q_min > self.q_max:
            raise InputError(f"generator at bus {self.bus}: inverted limits")
        if self.cost[0] < 0:
            raise InputError(f"generator at bus {self.bus}: non-convex cost (alpha < 0)")


@dataclass(frozen=True)
class Load:
    bus: int
    s_d: complex

    def __post_init__(self):
        object.__setattr__(self, "s_d", complex(self.s_d))
        if not cmath.isfinite(self.s_d):
            raise InputError("load must be finite")


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    elements: tuple[NetworkElement, ...] = ()
    generators: tuple[Generator, ...] = ()
    loads: tuple[Load, ...] = ()
    base_mva: float = 100.0

    def __post_init__(self):
        for name in ("buses", "elements", "generators", "loads"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.base_mva > 0:
            raise InputError("base_mva must be positive")
        n = len(self.buses)
        if [b.id for b in self.buses] != list(range(n)):
            raise InputError("bus ids must be dense 0..N-1 in order")
        seen = set()
        for el in self.elements:
            if el.id in seen:
                raise InputError(f"duplicate element id {el.id!r}")
            seen.add(el.id)
            for label, bus in el.attachment:
                if not 0 <= bus < n:
                    raise DanglingPort(f"element {el.id} port {label} -> unknown bus {bus}")
        for obj in self.generators + self.loads:
            if not 0 <= obj.bus < n:
                raise DanglingPort(f"{type(obj).__name__} at unknown bus {obj.bus}")

    # -- sizes and indexing
    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_ports(self) -> int:
        return sum(el.ports for el in self.elements)

    def port_offsets(self) -> np.ndarray:
        """Offset of each element's first port in the global port vector (length l+1)."""
        return np.concatenate([[0], np.cumsum([el.ports for el in self.elements], dtype=int)])

    def element_index(self, eid: str) -> int:
        for k, el in enumerate(self.elements):
            if el.id == eid:
                return k
        raise KeyError(eid)

    def element(self, eid: str) -> NetworkElement:
        return self.elements[self.element_index(eid)]

    def bus_index(self, name: str) -> int:
        for b in self.buses:
            if b.name == name:
                return b.id
        raise KeyError(name)

    def load_vector(self) -> np.ndarray:
        sd = np.zeros(self.n_buses, dtype=complex)
        for ld in self.loads:
            sd[ld.bus] += ld.s_d
        return sd

    def generator_buses(self) -> np.ndarray:
        return np.array([g.bus for g in self.generators], dtype=int)

    # -- topology
    def components(self) -> tuple[int, np.ndarray]:
        """Connected components of the bus graph over closed multi-port elements."""
        rows, cols = [], []
        for el in self.elements:
            if el.ports < 2 or el.is_open:
                continue
            first = el.buses[0]
            for other in el.buses[1:]:
                rows.append(first)
                cols.append(other)
        n = self.n_buses
        adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        return connected_components(adj, directed=False)

    def check_connected(self) -> None:
        if self.n_buses == 0:
            return
        ncomp, _ = self.components()
        if ncomp > 1:
            raise IslandedNetwork(ncomp)

    # -- functional updates
    def with_elements(self, elements: Iterable[NetworkElement]) -> "Network":
        return replace(self, elements=tuple(elements))

    def without_element(self, eid: str) -> "Network":
        return self.with_elements(el for el in self.elements if el.id != eid)

    def with_breaker_state(self, eid: str, gamma: int) -> "Network":
        k = self.element_index(eid)
        els = list(self.elements)
        els[k] = els[k].with_breaker_state(gamma)
        return self.with_elements(els)

    def permute_elements(self, order: Sequence[int]) -> "Network":
        order = list(order)
        if sorted(order) != list(range(len(self.elements))):
            raise InputError("order must be a permutation of element positions")
        return self.with_elements(self.elements[k] for k in order)
