"""Elimination of port variables from the tableau, yielding the bus admittance matrix.

With ``i = -Fi^-1 Fv v``, ``v = A' V`` and ``I = A i`` the tableau collapses to
``I = Ybus V`` with ``Ybus = -A Fi^-1 Fv A'``.  This only exists when every
element's current block ``Fi_k`` is invertible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NotReducible, Unrepresentable
from .netmodel import RANK_TOL, ElementKind, Network, complex_tap
from .tableau import build_incidence


@dataclass(frozen=True)
class ReducibilityEntry:
    element_id: str
    kind: ElementKind
    rank: int
    arity: int


@dataclass(frozen=True)
class ReducibilityReport:
    singular: tuple[ReducibilityEntry, ...]
    with_sources: tuple[str, ...] = ()

    @property
    def reducible(self) -> bool:
        return not self.singular and not self.with_sources

    @property
    def element_ids(self) -> list[str]:
        return [e.element_id for e in self.singular]

    def __bool__(self):
        return self.reducible


def _stacked(network: Network, arity: int):
    idx = [k for k, el in enumerate(network.elements) if el.ports == arity]
    if not idx:
        return idx, None, None
    Fv = np.stack([network.elements[k].stamp.Fv for k in idx])
    Fi = np.stack([network.elements[k].stamp.Fi for k in idx])
    return idx, Fv, Fi


def is_reducible(network: Network) -> ReducibilityReport:
    """List every element whose ``Fi`` block is rank deficient (relative tolerance 1e-10)."""
    bad = {}
    for p in (1, 2, 3):
        idx, _, Fi = _stacked(network, p)
        if not idx:
            continue
        s = np.linalg.svd(Fi, compute_uv=False)
        smax = s[:, 0]
        ranks = np.sum(s > RANK_TOL * smax[:, None], axis=1)
        ranks[smax == 0] = 0
        for k, r in zip(idx, ranks):
            if r < p:
                el = network.elements[k]
                bad[k] = ReducibilityEntry(el.id, el.kind, int(r), p)
    sources = tuple(el.id for el in network.elements if el.stamp.has_source)
    return ReducibilityReport(tuple(bad[k] for k in sorted(bad)), sources)


def primitive_admittances(network: Network) -> sp.csr_matrix:
    """Block-diagonal ``-Fi^-1 Fv`` over all ports; blocks solved per arity in one batch."""
    P = network.n_ports
    off = network.port_offsets()
    rows, cols, vals = [], [], []
    for p in (1, 2, 3):
        idx, Fv, Fi = _stacked(network, p)
        if not idx:
            continue
        Yk = -np.linalg.solve(Fi, Fv)
        r, c = np.divmod(np.arange(p * p), p)
        base = off[idx][:, None]
        rows.append((base + r).ravel())
        cols.append((base + c).ravel())
        vals.append(Yk.reshape(len(idx), -1).ravel())
    if not rows:
        return sp.csr_matrix((P, P), dtype=complex)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(P, P), dtype=complex)


def reduce_to_ybus(network: Network) -> sp.csr_matrix:
    """``-A Fi^-1 Fv A'`` computed block-wise; raises :class:`NotReducible`."""
    report = is_reducible(network)
    if report.singular:
        raise NotReducible(report.element_ids)
    if report.with_sources:
        raise NotReducible(report.with_sources, reason="internal sources")
    A = build_incidence(network).A.astype(complex)
    Y = (A @ primitive_admittances(network) @ A.T).tocsr()
    Y.sum_duplicates()
    return Y


def textbook_admittances(network: Network) -> list[np.ndarray]:
    """Per-element nodal admittance blocks from physical parameters.

    Each block maps the element's attached bus voltages to its port currents
    (pi lines with the tap on the from side, shunts, one-port impedances).
    """
    blocks, bad = [], []
    for el in network.elements:
        prm = el.params
        if el.kind in (ElementKind.LINE, ElementKind.TAP_TRANSFORMER):
            z = complex(prm["r"], prm["x"])
            if z == 0:
                bad.append(el.id)
                continue
            ys = 1 / z
            ytt = ys + 0.5j * prm["b"]
            T = complex_tap(prm.get("tap", 1.0), prm.get("shift_deg", 0.0))
            blocks.append(np.array([[ytt / (T * T.conjugate()), -ys / T.conjugate()],
                                    [-ys / T, ytt]]))
        elif el.kind is ElementKind.SHUNT:
            blocks.append(np.array([[complex(prm["g"], prm["b"])]]))
        elif el.kind is ElementKind.IMPEDANCE and complex(prm["r"], prm["x"]) != 0:
            blocks.append(np.array([[1 / complex(prm["r"], prm["x"])]]))
        else:
            bad.append(el.id)
    if bad:
        raise Unrepresentable(bad)
    return blocks


def direct_ybus(network: Network) -> sp.csr_matrix:
    """Textbook nodal assembly from physical parameters (pi lines, tap model, shunts)."""
    n = network.n_buses
    rows, cols, vals = [], [], []
    for el, Yk in zip(network.elements, textbook_admittances(network)):
        idx = np.asarray(el.buses)
        rows.append(np.repeat(idx, idx.size))
        cols.append(np.tile(idx, idx.size))
        vals.append(Yk.ravel())
    if not rows:
        return sp.csr_matrix((n, n), dtype=complex)
    Y = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    Y.sum_duplicates()
    return Y
