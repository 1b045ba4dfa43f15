"""Incidence matrix, sparse tableau assembly, residuals and linear solves.

Unknowns are ordered ``x = (V, v, i)``: bus voltages, then port voltages, then
port currents, with the ports of each element adjacent (a, b, c) and elements
in network order.  Rows are ordered KCL (one per bus), KVL (one per port),
element equations (one per port)::

    [  0   0   A  ] [V]   [I ]
    [ -A'  I   0  ] [v] = [0 ]
    [  0   Fv  Fi ] [i]   [us]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InputError, SingularTableau
from .netmodel import PORT_LABELS, Network

PIVOT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class IncidenceMatrix:
    A: sp.csr_matrix
    port_index: dict
    port_bus: np.ndarray
    port_element: np.ndarray

    @property
    def shape(self):
        return self.A.shape


def build_incidence(network: Network) -> IncidenceMatrix:
    """Bus-by-port 0/1 matrix; every port current is oriented from its bus into the element."""
    port_bus = []
    port_element = []
    port_index = {}
    for k, el in enumerate(network.elements):
        for label, bus in zip(PORT_LABELS, el.buses):
            port_index[(el.id, label)] = len(port_bus)
            port_bus.append(bus)
            port_element.append(k)
    port_bus = np.asarray(port_bus, dtype=int)
    n_port = port_bus.size
    A = sp.csr_matrix((np.ones(n_port), (port_bus, np.arange(n_port))),
                      shape=(network.n_buses, n_port))
    return IncidenceMatrix(A, port_index, port_bus, np.asarray(port_element, dtype=int))


def _element_triplets(network: Network):
    """Coordinates of the block-diagonal ``Fv``/``Fi`` entries and the source vector ``us``."""
    rows, cols, fv, fi = [], [], [], []
    us = np.zeros(network.n_ports, dtype=complex)
    off = 0
    for el in network.elements:
        p = el.ports
        r, c = np.divmod(np.arange(p * p), p)
        rows.append(r + off)
        cols.append(c + off)
        fv.append(el.stamp.Fv.ravel())
        fi.append(el.stamp.Fi.ravel())
        us[off:off + p] = el.stamp.us
        off += p
    if not rows:
        empty = np.zeros(0, dtype=int)
        return empty, empty, np.zeros(0, dtype=complex), np.zeros(0, dtype=complex), us
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(fv), np.concatenate(fi), us


def element_blocks(network: Network):
    """Block-diagonal ``Fv``, ``Fi`` (CSR) and the stacked source vector ``us``."""
    rows, cols, fv, fi, us = _element_triplets(network)
    P = network.n_ports
    return _block_csr(rows, cols, fv, P), _block_csr(rows, cols, fi, P), us


def _block_csr(rows, cols, vals, n) -> sp.csr_matrix:
    # triplets come row-major and block by block, so rows are already sorted
    keep = vals != 0
    rows = rows[keep]
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n))])
    return sp.csr_matrix((vals[keep].astype(complex), cols[keep], indptr), shape=(n, n))


@dataclass(frozen=True, eq=False)
class TableauSystem:
    T: sp.csc_matrix
    u: np.ndarray
    n_bus: int
    n_port: int
    incidence: IncidenceMatrix
    Fv: sp.csr_matrix
    Fi: sp.csr_matrix
    us: np.ndarray
    element_ids: tuple

    @property
    def A(self) -> sp.csr_matrix:
        return self.incidence.A

    @property
    def size(self) -> int:
        return self.n_bus + 2 * self.n_port

    @property
    def V_slice(self) -> slice:
        return slice(0, self.n_bus)

    @property
    def v_slice(self) -> slice:
        return slice(self.n_bus, self.n_bus + self.n_port)

    @property
    def i_slice(self) -> slice:
        return slice(self.n_bus + self.n_port, self.size)

    def split(self, x):
        x = np.asarray(x)
        return x[self.V_slice], x[self.v_slice], x[self.i_slice]

    def variable_label(self, k: int) -> str:
        if k < self.n_bus:
            return f"V[{k}]"
        k -= self.n_bus
        kind = "v"
        if k >= self.n_port:
            k -= self.n_port
            kind = "i"
        el = self.incidence.port_element[k]
        first = np.searchsorted(self.incidence.port_element, el)
        return f"{kind}[{self.element_ids[el]}.{PORT_LABELS[k - first]}]"

    def with_injections(self, injections) -> "TableauSystem":
        u = self.u.copy()
        u[:self.n_bus] = _injection_vector(injections, self.n_bus)
        return TableauSystem(self.T, u, self.n_bus, self.n_port, self.incidence, self.Fv,
                             self.Fi, self.us, self.element_ids)


def _injection_vector(injections, n_bus):
    if injections is None:
        return np.zeros(n_bus, dtype=complex)
    inj = np.asarray(injections, dtype=complex).ravel()
    if inj.size == 0 and n_bus > 0:
        return np.zeros(n_bus, dtype=complex)
    if inj.shape != (n_bus,):
        raise InputError(f"injections must have length {n_bus}, got {inj.size}")
    if not np.all(np.isfinite(inj)):
        raise InputError("injections must be finite")
    return inj


def tableau_matrix(incidence: IncidenceMatrix, Fv, Fi) -> sp.csc_matrix:
    Fv, Fi = Fv.tocoo(), Fi.tocoo()
    return _tableau_from_triplets(incidence, Fv.row, Fv.col, Fv.data, Fi.row, Fi.col, Fi.data)


def _tableau_from_triplets(incidence, rv, cv, fv, ri, ci, fi) -> sp.csc_matrix:
    N, P = incidence.A.shape
    pb = incidence.port_bus
    ar = np.arange(P)
    one = np.ones(P)
    rows = np.concatenate([pb, N + ar, N + ar, N + P + rv, N + P + ri])
    cols = np.concatenate([N + P + ar, pb, N + ar, N + cv, N + P + ci])
    vals = np.concatenate([one, -one, one, fv, fi]).astype(complex)
    keep = vals != 0
    n = N + 2 * P
    return sp.csc_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))


def assemble_tableau(network: Network, injections=None) -> TableauSystem:
    """Sparse tableau ``T x = u`` with ``u = (injections, 0, us)``."""
    inc = build_incidence(network)
    rows, cols, fv, fi, us = _element_triplets(network)
    T = _tableau_from_triplets(inc, rows, cols, fv, rows, cols, fi)
    P = network.n_ports
    Fv, Fi = _block_csr(rows, cols, fv, P), _block_csr(rows, cols, fi, P)
    u = np.concatenate([_injection_vector(injections, network.n_buses),
                        np.zeros(P, dtype=complex), us])
    return TableauSystem(T, u, network.n_buses, P, inc, Fv, Fi, us,
                         tuple(el.id for el in network.elements))


@dataclass(frozen=True)
class TableauResiduals:
    kcl: np.ndarray
    kvl: np.ndarray
    elem: np.ndarray

    @property
    def max_norms(self) -> dict:
        def mx(r):
            return float(np.max(np.abs(r))) if r.size else 0.0
        return {"kcl": mx(self.kcl), "kvl": mx(self.kvl), "element": mx(self.elem)}

    @property
    def max(self) -> float:
        return max(self.max_norms.values())


def residuals(system: TableauSystem, x) -> TableauResiduals:
    """KCL ``u_I - A i``, KVL ``v - A' V`` and element ``Fv v + Fi i - us`` residuals."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (system.size,):
        raise InputError(f"x must have length {system.size}, got {x.shape}")
    V, v, i = system.split(x)
    A = system.A
    kcl = system.u[:system.n_bus] - A @ i
    kvl = v - A.T @ V
    elem = system.Fv @ v + system.Fi @ i - system.us
    return TableauResiduals(kcl, kvl, elem)


def _null_direction(T: sp.spmatrix) -> int | None:
    if T.shape[0] > 3000:
        return None
    _, s, vh = np.linalg.svd(T.toarray())
    w = np.abs(vh[-1])
    # ties go to the lowest index, so a floating bus is reported by its V
    return int(np.flatnonzero(w >= w.max() * (1 - 1e-8))[0])


def solve_linear_tableau(system: TableauSystem) -> np.ndarray:
    """Sparse LU solve of ``T x = u``; raises :class:`SingularTableau` on a tiny pivot."""
    T = system.T
    n = T.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    try:
        lu = spla.splu(T.tocsc())
    except RuntimeError:
        k = _null_direction(T)
        raise SingularTableau(k, None if k is None else system.variable_label(k)) from None
    d = np.abs(lu.U.diagonal())
    if d.min() <= PIVOT_TOL * max(d.max(), 1.0):
        k = _null_direction(T)
        if k is None:
            k = int(np.argsort(lu.perm_c)[int(np.argmin(d))])
        raise SingularTableau(k, system.variable_label(k))
    x = lu.solve(system.u.astype(complex))
    res = np.max(np.abs(T @ x - system.u))
    if not np.isfinite(res) or res > 1e-9 * (1 + np.max(np.abs(system.u))):
        k = _null_direction(T)
        raise SingularTableau(k, None if k is None else system.variable_label(k))
    return x
