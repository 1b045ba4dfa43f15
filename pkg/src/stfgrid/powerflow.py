"""AC power flow on the sparse tableau, plus a polar Ybus Newton solver used as a reference.

The tableau unknowns ``(V, v, i)`` are augmented with the bus injection
currents ``I``; each bus closes the system with two real equations:

* PQ: ``P - Re(V conj(I)) = 0`` and ``Q - Im(V conj(I)) = 0``
* PV: ``P - Re(V conj(I)) = 0`` and ``|V|^2 - Vset^2 = 0``
* slack: ``V = Vset``

Complex quantities are split into Cartesian pairs, so every tableau row stays
linear and only the injection rows are (bilinear) nonlinear.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InputError, NonConvergence, SingularJacobian
from .netmodel import Network
from .reduction import primitive_admittances, reduce_to_ybus
from .tableau import TableauSystem, assemble_tableau, residuals

log = logging.getLogger(__name__)


class BusType(str, Enum):
    SLACK = "slack"
    PV = "pv"
    PQ = "pq"


@dataclass(frozen=True, eq=False)
class BusSpec:
    """Per-bus power flow roles.

    ``s_inj`` is the specified net injection (generation minus load, per-unit);
    PV buses use only its real part.  ``v_mag`` is used at PV and slack buses,
    ``v_angle`` (radians) only at the slack.
    """

    kinds: tuple[BusType, ...]
    s_inj: np.ndarray
    v_mag: np.ndarray
    v_angle: np.ndarray

    def __post_init__(self):
        kinds = tuple(BusType(k) for k in self.kinds)
        n = len(kinds)
        object.__setattr__(self, "kinds", kinds)
        for name, dtype in (("s_inj", complex), ("v_mag", float), ("v_angle", float)):
            arr = np.array(getattr(self, name), dtype=dtype).ravel()
            if arr.shape != (n,):
                raise InputError(f"{name} must have one entry per bus")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if sum(k is BusType.SLACK for k in kinds) != 1:
            raise InputError("exactly one slack bus is required")

    @property
    def n_buses(self) -> int:
        return len(self.kinds)

    @property
    def slack(self) -> int:
        return self.kinds.index(BusType.SLACK)

    def indices(self, kind: BusType) -> np.ndarray:
        return np.array([j for j, k in enumerate(self.kinds) if k is kind], dtype=int)

    @property
    def slack_voltage(self) -> complex:
        j = self.slack
        return self.v_mag[j] * np.exp(1j * self.v_angle[j])

    def validate(self, network: Network) -> None:
        if self.n_buses != network.n_buses:
            raise InputError(f"bus spec covers {self.n_buses} buses, network has {network.n_buses}")
        gen_buses = set(network.generator_buses().tolist())
        for j in self.indices(BusType.PV):
            if j not in gen_buses:
                raise InputError(f"PV bus {j} hosts no generator")

    @classmethod
    def from_network(cls, network: Network, slack: int, pv=None, slack_angle: float = 0.0):
        """Derive a spec from generator setpoints; by default every generator bus is PV."""
        n = network.n_buses
        kinds = [BusType.PQ] * n
        pv = set(network.generator_buses().tolist()) if pv is None else set(pv)
        for j in pv:
            kinds[j] = BusType.PV
        kinds[slack] = BusType.SLACK
        s = -network.load_vector()
        vm = np.ones(n)
        for g in network.generators:
            s[g.bus] += complex(g.p_set, g.q_set)
            vm[g.bus] = g.v_set
        ang = np.zeros(n)
        ang[slack] = slack_angle
        return cls(tuple(kinds), s, vm, ang)

    def with_kinds(self, kinds) -> "BusSpec":
        return BusSpec(tuple(kinds), self.s_inj, self.v_mag, self.v_angle)


@dataclass
class PowerFlowOptions:
    tol: float = 1e-8
    max_iter: int = 50
    max_halvings: int = 8
    warm_start: np.ndarray | None = None


@dataclass
class PowerFlowSolution:
    V: np.ndarray
    v: np.ndarray
    i: np.ndarray
    I_inj: np.ndarray
    iterations: int
    residual_report: dict
    formulation: str = "stf"
    converged: bool = True

    @property
    def S_inj(self) -> np.ndarray:
        return self.V * np.conj(self.I_inj)

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.V, self.v, self.i])


def injection_residual(V, I_inj, S) -> np.ndarray:
    """``S - V conj(I)`` per bus (multiplied-through form, no division by ``V``)."""
    return np.asarray(S) - np.asarray(V) * np.conj(I_inj)


def _realify(M: sp.spmatrix) -> sp.csr_matrix:
    M = sp.csr_matrix(M)
    Mr, Mi = M.real, M.imag
    return sp.bmat([[Mr, -Mi], [Mi, Mr]], format="csr")


class StfPowerFlowModel:
    """Realified residual ``F(z)`` and Jacobian of the tableau power flow.

    ``z = [Re w, Im w]`` with ``w = (V, v, i, I)``.
    """

    def __init__(self, network: Network, spec: BusSpec):
        spec.validate(network)
        self.network = network
        self.spec = spec
        self.system: TableauSystem = assemble_tableau(network)
        N, P = network.n_buses, network.n_ports
        self.N, self.P = N, P
        self.nw = 2 * N + 2 * P
        E = sp.vstack([-sp.identity(N, format="csr"), sp.csr_matrix((2 * P, N))])
        L = sp.hstack([self.system.T, E], format="csr")
        self.n_lin = 2 * (N + 2 * P)
        self.L = _realify(L)
        c = np.concatenate([np.zeros(N + P), self.system.us])
        self.c = np.concatenate([c.real, c.imag])

        kinds = spec.kinds
        self.pq = spec.indices(BusType.PQ)
        self.pv = spec.indices(BusType.PV)
        self.sl = spec.indices(BusType.SLACK)
        self.e_idx = np.arange(N)
        self.f_idx = self.nw + np.arange(N)
        self.a_idx = N + 2 * P + np.arange(N)
        self.b_idx = self.nw + N + 2 * P + np.arange(N)
        self.is_pq = np.array([k is BusType.PQ for k in kinds])
        self.is_pv = np.array([k is BusType.PV for k in kinds])
        self.is_sl = np.array([k is BusType.SLACK for k in kinds])

    @property
    def size(self) -> int:
        return 2 * self.nw

    def pack(self, w: np.ndarray) -> np.ndarray:
        return np.concatenate([w.real, w.imag])

    def unpack(self, z: np.ndarray) -> np.ndarray:
        return z[:self.nw] + 1j * z[self.nw:]

    def initial_point(self, V0=None) -> np.ndarray:
        N = self.N
        V = np.ones(N, dtype=complex) if V0 is None else np.asarray(V0, dtype=complex)
        v = self.system.A.T @ V
        w = np.concatenate([V, v, np.zeros(self.P, dtype=complex), np.zeros(N, dtype=complex)])
        return self.pack(w)

    def _parts(self, z):
        return z[self.e_idx], z[self.f_idx], z[self.a_idx], z[self.b_idx]

    def injection_rows(self, z) -> np.ndarray:
        e, f, a, b = self._parts(z)
        s = self.spec
        p_calc = e * a + f * b
        q_calc = f * a - e * b
        r1 = s.s_inj.real - p_calc
        r2 = np.where(self.is_pq, s.s_inj.imag - q_calc, e * e + f * f - s.v_mag ** 2)
        vs = s.v_mag * np.exp(1j * s.v_angle)
        r1 = np.where(self.is_sl, e - vs.real, r1)
        r2 = np.where(self.is_sl, f - vs.imag, r2)
        return np.concatenate([r1, r2])

    def residual(self, z) -> np.ndarray:
        return np.concatenate([self.L @ z - self.c, self.injection_rows(z)])

    def injection_jacobian(self, z) -> sp.csr_matrix:
        N = self.N
        e, f, a, b = self._parts(z)
        pq, sl = self.is_pq, self.is_sl
        rows, cols, vals = [], [], []

        def put(r, c, v, mask):
            rows.append(r[mask])
            cols.append(c[mask])
            vals.append(np.broadcast_to(v, r.shape)[mask])

        r1 = np.arange(N)
        r2 = N + r1
        nsl = ~sl
        # active power rows (PQ, PV)
        put(r1, self.e_idx, -a, nsl)
        put(r1, self.f_idx, -b, nsl)
        put(r1, self.a_idx, -e, nsl)
        put(r1, self.b_idx, -f, nsl)
        # reactive power rows (PQ)
        put(r2, self.e_idx, b, pq)
        put(r2, self.f_idx, -a, pq)
        put(r2, self.a_idx, -f, pq)
        put(r2, self.b_idx, e, pq)
        # voltage magnitude rows (PV)
        pv = self.is_pv
        put(r2, self.e_idx, 2 * e, pv)
        put(r2, self.f_idx, 2 * f, pv)
        # slack rows
        put(r1, self.e_idx, 1.0, sl)
        put(r2, self.f_idx, 1.0, sl)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(2 * N, self.size))

    def jacobian(self, z) -> sp.csc_matrix:
        return sp.vstack([self.L, self.injection_jacobian(z)], format="csc")

    def residual_report(self, z) -> dict:
        w = self.unpack(z)
        N, P = self.N, self.P
        x, I = w[:N + 2 * P], w[N + 2 * P:]
        report = residuals(self.system.with_injections(I), x).max_norms
        inj = self.injection_rows(z)
        report["injection"] = float(np.max(np.abs(inj))) if inj.size else 0.0
        return report

    def solution(self, z, iterations: int) -> PowerFlowSolution:
        w = self.unpack(z)
        N, P = self.N, self.P
        return PowerFlowSolution(V=w[:N], v=w[N:N + P], i=w[N + P:N + 2 * P], I_inj=w[N + 2 * P:],
                                 iterations=iterations, residual_report=self.residual_report(z),
                                 formulation="stf")


def _factor(J, iteration):
    try:
        lu = spla.splu(sp.csc_matrix(J))
    except RuntimeError:
        raise SingularJacobian(iteration) from None
    d = np.abs(lu.U.diagonal())
    if d.size and d.min() <= 1e-14 * max(d.max(), 1.0):
        raise SingularJacobian(iteration)
    return lu


def solve_powerflow_stf(network: Network, spec: BusSpec,
                        options: PowerFlowOptions | None = None) -> PowerFlowSolution:
    """Damped Newton on the realified tableau power flow equations."""
    opt = options or PowerFlowOptions()
    network.check_connected()
    model = StfPowerFlowModel(network, spec)
    z = model.initial_point(opt.warm_start)
    F = model.residual(z)
    res = float(np.max(np.abs(F))) if F.size else 0.0
    it = 0
    while res >= opt.tol:
        if it >= opt.max_iter:
            raise NonConvergence(it, res)
        it += 1
        lu = _factor(model.jacobian(z), it)
        dz = lu.solve(-F)
        if not np.all(np.isfinite(dz)):
            raise SingularJacobian(it)
        norm0 = np.linalg.norm(F)
        alpha = 1.0
        for _ in range(opt.max_halvings + 1):
            z_new = z + alpha * dz
            F_new = model.residual(z_new)
            if np.linalg.norm(F_new) < norm0:
                break
            alpha *= 0.5
        z, F = z_new, F_new
        res = float(np.max(np.abs(F)))
        log.debug("stf newton it=%d step=%.3g max|F|=%.3e", it, alpha, res)
    return model.solution(z, it)


def _dS_dV(Y, V):
    Ibus = Y @ V
    diagV = sp.diags(V)
    diagI = sp.diags(Ibus)
    diagVn = sp.diags(V / np.abs(V))
    dS_dVm = diagV @ (Y @ diagVn).conj() + diagI.conj() @ diagVn
    dS_dVa = 1j * diagV @ (diagI - Y @ diagV).conj()
    return sp.csr_matrix(dS_dVa), sp.csr_matrix(dS_dVm)


def solve_powerflow_ybus(network: Network, spec: BusSpec,
                         options: PowerFlowOptions | None = None) -> PowerFlowSolution:
    """Polar Newton on the nodal mismatch ``V conj(Ybus V) - S``; port quantities recovered after."""
    opt = options or PowerFlowOptions()
    spec.validate(network)
    network.check_connected()
    Y = reduce_to_ybus(network).tocsr()
    pv, pq = spec.indices(BusType.PV), spec.indices(BusType.PQ)
    pvpq = np.concatenate([pv, pq])
    if opt.warm_start is not None:
        V = np.asarray(opt.warm_start, dtype=complex).copy()
    else:
        V = np.ones(network.n_buses, dtype=complex)
    Vm, Va = np.abs(V), np.angle(V)
    Vm[pv] = spec.v_mag[pv]
    Vm[spec.slack] = spec.v_mag[spec.slack]
    Va[spec.slack] = spec.v_angle[spec.slack]
    V = Vm * np.exp(1j * Va)

    def mismatch(V):
        mis = V * np.conj(Y @ V) - spec.s_inj
        return np.concatenate([mis[pvpq].real, mis[pq].imag])

    F = mismatch(V)
    res = float(np.max(np.abs(F))) if F.size else 0.0
    it = 0
    npvpq = pvpq.size
    while res >= opt.tol:
        if it >= opt.max_iter:
            raise NonConvergence(it, res)
        it += 1
        dVa, dVm = _dS_dV(Y, V)
        J = sp.bmat([[dVa[pvpq][:, pvpq].real, dVm[pvpq][:, pq].real],
                     [dVa[pq][:, pvpq].imag, dVm[pq][:, pq].imag]], format="csc")
        lu = _factor(J, it)
        dx = lu.solve(-F)
        norm0 = np.linalg.norm(F)
        alpha = 1.0
        for _ in range(opt.max_halvings + 1):
            Va_new, Vm_new = Va.copy(), Vm.copy()
            Va_new[pvpq] += alpha * dx[:npvpq]
            Vm_new[pq] += alpha * dx[npvpq:]
            V = Vm_new * np.exp(1j * Va_new)
            F = mismatch(V)
            if np.linalg.norm(F) < norm0:
                break
            alpha *= 0.5
        Va, Vm = Va_new, Vm_new
        res = float(np.max(np.abs(F)))
        log.debug("ybus newton it=%d step=%.3g max|F|=%.3e", it, alpha, res)

    system = assemble_tableau(network)
    v = system.A.T @ V
    i = primitive_admittances(network) @ v
    I_inj = Y @ V
    report = residuals(system.with_injections(I_inj), np.concatenate([V, v, i])).max_norms
    report["injection"] = res
    return PowerFlowSolution(V=V, v=v, i=i, I_inj=I_inj, iterations=it,
                             residual_report=report, formulation="ybus")
