"""Independent OPF formulations on the bus admittance matrix, used as cross-checks.

* :class:`YbusIvOpf`: rectangular current-voltage form, ``I = Ybus V`` with the
  same power balance, limits and interior-point solver as the tableau OPF.
* :func:`solve_polar_opf`: the classic polar power-voltage form solved by SLSQP
  (small cases only, no line limits).

Both assemble the admittances from physical parameters, not from the stamps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from ..errors import NonConvergence
from ..netmodel import Network
from ..reduction import direct_ybus, textbook_admittances
from .ipm import IpmOptions, IpmResult, NonlinearProgram, interior_point


@dataclass
class OracleResult:
    objective: float
    V: np.ndarray
    Pg: np.ndarray
    Qg: np.ndarray
    iterations: int


def _gen_bounds(network: Network):
    g = network.generators
    return (np.array([x.p_min for x in g]), np.array([x.p_max for x in g]),
            np.array([x.q_min for x in g]), np.array([x.q_max for x in g]))


def _cost(network: Network, Pg) -> float:
    c = np.array([g.cost for g in network.generators], dtype=float).reshape(-1, 3)
    P = network.base_mva * Pg
    return float(np.sum(c[:, 0] * P ** 2 + c[:, 1] * P + c[:, 2]))


def _realify(M: sp.spmatrix) -> sp.csr_matrix:
    return sp.bmat([[M.real, -M.imag], [M.imag, M.real]], format="csr")


class YbusIvOpf:
    """Variables ``[Pg | Qg | e | f | Ir | Ii]``; port current limits via textbook branch blocks."""

    def __init__(self, network: Network, ref_bus: int | None = None, line_limits: bool = True):
        self.network = network
        N, ng = network.n_buses, len(network.generators)
        self.N, self.ng = N, ng
        self.base = network.base_mva
        self.nx = 2 * ng + 4 * N
        self.iPg, self.iQg = np.arange(ng), ng + np.arange(ng)
        self.ie = 2 * ng + np.arange(N)
        self.if_ = self.ie + N
        self.ia = self.ie + 2 * N
        self.ib = self.ie + 3 * N
        gen_bus = network.generator_buses()
        self.gen_bus = gen_bus
        self.ref = int(gen_bus[0]) if ref_bus is None else int(ref_bus)
        self.cost = np.array([g.cost for g in network.generators], dtype=float).reshape(-1, 3)
        self.Sd = network.load_vector()
        Y = direct_ybus(network)
        # I - Y V = 0 over [e f a b]
        self.Iy = sp.hstack([sp.csr_matrix((2 * N, 2 * ng)), -_realify(Y),
                             sp.identity(2 * N, format="csr")], format="csr")

        rows, cols, vals, imax = [], [], [], []
        r = 0
        for el, Yk in zip(network.elements, textbook_admittances(network)):
            if el.i_max is None or not line_limits:
                continue
            for p in range(len(el.buses)):
                for q, bus in enumerate(el.buses):
                    rows.append(r); cols.append(bus); vals.append(Yk[p, q])
                imax.append(el.i_max)
                r += 1
        C = sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(r, N))
        self.Cbr = sp.hstack([sp.csr_matrix((2 * r, 2 * ng)), _realify(C),
                              sp.csr_matrix((2 * r, 2 * N))], format="csr")
        self.n_lim = r
        self.imax2 = np.asarray(imax, dtype=float) ** 2
        vmin = np.array([b.v_min for b in network.buses])
        vmax = np.array([b.v_max for b in network.buses])
        self.vmin2, self.vmax2 = vmin ** 2, vmax ** 2
        self.pmin, self.pmax, self.qmin, self.qmax = _gen_bounds(network)

        brow, bcol, bval, brhs = [], [], [], []
        k = 0
        for idx, lo, hi in ((self.iPg, self.pmin, self.pmax), (self.iQg, self.qmin, self.qmax)):
            for j in range(ng):
                if np.isfinite(hi[j]):
                    brow.append(k); bcol.append(idx[j]); bval.append(1.0); brhs.append(-hi[j]); k += 1
                if np.isfinite(lo[j]):
                    brow.append(k); bcol.append(idx[j]); bval.append(-1.0); brhs.append(lo[j]); k += 1
        self.Jbox = sp.csr_matrix((bval, (brow, bcol)), shape=(k, self.nx))
        self.rbox = np.array(brhs)
        self.Cg = sp.csr_matrix((np.ones(ng), (gen_bus, np.arange(ng))), shape=(N, ng))

    def objective(self, x):
        return _cost(self.network, x[self.iPg])

    def gradient(self, x):
        g = np.zeros(self.nx)
        P = self.base * x[self.iPg]
        g[self.iPg] = self.base * (2 * self.cost[:, 0] * P + self.cost[:, 1])
        return g

    def eq(self, x):
        e, f, a, b = x[self.ie], x[self.if_], x[self.ia], x[self.ib]
        Sg = self.Cg @ (x[self.iPg] + 1j * x[self.iQg])
        p = Sg.real - self.Sd.real - (e * a + f * b)
        q = Sg.imag - self.Sd.imag - (f * a - e * b)
        return np.concatenate([self.Iy @ x, p, q, [f[self.ref]]])

    def eq_jac(self, x):
        N, ng = self.N, self.ng
        e, f, a, b = x[self.ie], x[self.if_], x[self.ia], x[self.ib]
        r = np.arange(N)
        rows = np.concatenate([self.gen_bus, r, r, r, r, N + self.gen_bus, N + r, N + r, N + r, N + r])
        cols = np.concatenate([self.iPg, self.ie, self.if_, self.ia, self.ib,
                               self.iQg, self.ie, self.if_, self.ia, self.ib])
        vals = np.concatenate([np.ones(ng), -a, -b, -e, -f, np.ones(ng), b, -a, -f, e])
        J = sp.csr_matrix((vals, (rows, cols)), shape=(2 * N, self.nx))
        ref = sp.csr_matrix(([1.0], ([0], [self.if_[self.ref]])), shape=(1, self.nx))
        return sp.vstack([self.Iy, J, ref], format="csr")

    def ineq(self, x):
        e, f = x[self.ie], x[self.if_]
        vm2 = e * e + f * f
        c = self.Cbr @ x
        i2 = c[:self.n_lim] ** 2 + c[self.n_lim:] ** 2
        return np.concatenate([self.Jbox @ x + self.rbox, self.vmin2 - vm2, vm2 - self.vmax2,
                               i2 - self.imax2])

    def ineq_jac(self, x):
        N = self.N
        e, f = x[self.ie], x[self.if_]
        r = np.arange(N)
        Jv = sp.csr_matrix((np.concatenate([-2 * e, -2 * f, 2 * e, 2 * f]),
                            (np.concatenate([r, r, N + r, N + r]),
                             np.concatenate([self.ie, self.if_, self.ie, self.if_]))),
                           shape=(2 * N, self.nx))
        c = self.Cbr @ x
        nl = self.n_lim
        Jl = sp.diags(2 * c[:nl]) @ self.Cbr[:nl] + sp.diags(2 * c[nl:]) @ self.Cbr[nl:]
        return sp.vstack([self.Jbox, Jv, Jl], format="csr")

    def hessian(self, x, lam, mu, obj_factor=1.0):
        N = self.N
        n0 = 2 * N
        lp, lq = lam[n0:n0 + N], lam[n0 + N:n0 + 2 * N]
        nb = self.Jbox.shape[0]
        dv = 2 * (mu[nb + N:nb + 2 * N] - mu[nb:nb + N])
        ml = mu[nb + 2 * N:]
        rows = np.concatenate([self.iPg, self.ie, self.if_, self.ie, self.ia, self.if_, self.ib,
                               self.if_, self.ia, self.ie, self.ib])
        cols = np.concatenate([self.iPg, self.ie, self.if_, self.ia, self.ie, self.ib, self.if_,
                               self.ia, self.if_, self.ib, self.ie])
        vals = np.concatenate([obj_factor * 2 * self.cost[:, 0] * self.base ** 2, dv, dv,
                               -lp, -lp, -lp, -lp, -lq, -lq, lq, lq])
        H = sp.csr_matrix((vals, (rows, cols)), shape=(self.nx, self.nx))
        if self.n_lim:
            w = np.concatenate([ml, ml])
            H = H + 2 * (self.Cbr.T @ sp.diags(w) @ self.Cbr)
        return H.tocsr()

    def initial_point(self):
        x = np.zeros(self.nx)
        x[self.ie] = 1.0
        V = np.ones(self.N, dtype=complex)
        I = direct_ybus(self.network) @ V
        x[self.ia], x[self.ib] = I.real, I.imag
        for idx, lo, hi in ((self.iPg, self.pmin, self.pmax), (self.iQg, self.qmin, self.qmax)):
            x[idx] = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi),
                              np.clip(0.0, lo, hi))
        return x

    def nlp(self) -> NonlinearProgram:
        return NonlinearProgram(self.initial_point(), self.objective, self.gradient, self.eq,
                                self.eq_jac, self.ineq, self.ineq_jac, self.hessian)


def solve_ybus_iv_opf(network: Network, ref_bus: int | None = None, line_limits: bool = True,
                      options: IpmOptions | None = None) -> OracleResult:
    prob = YbusIvOpf(network, ref_bus, line_limits)
    res: IpmResult = interior_point(prob.nlp(), options)
    x = res.x
    V = x[prob.ie] + 1j * x[prob.if_]
    return OracleResult(res.objective, V, x[prob.iPg], x[prob.iQg], res.iterations)


def solve_polar_opf(network: Network, ref_bus: int | None = None,
                    max_iter: int = 500) -> OracleResult:
    """Polar power-voltage OPF ``(Pg, Qg, Va, Vm)`` by SLSQP, without line limits."""
    N, ng = network.n_buses, len(network.generators)
    Y = direct_ybus(network).toarray()
    gen_bus = network.generator_buses()
    ref = int(gen_bus[0]) if ref_bus is None else int(ref_bus)
    Cg = np.zeros((N, ng))
    Cg[gen_bus, np.arange(ng)] = 1.0
    Sd = network.load_vector()
    pmin, pmax, qmin, qmax = _gen_bounds(network)
    vmin = np.array([b.v_min for b in network.buses])
    vmax = np.array([b.v_max for b in network.buses])
    scale = 1e-3

    def split(z):
        return z[:ng], z[ng:2 * ng], z[2 * ng:2 * ng + N], z[2 * ng + N:]

    def fun(z):
        return scale * _cost(network, z[:ng])

    def jac_f(z):
        g = np.zeros_like(z)
        c = np.array([x.cost for x in network.generators], dtype=float).reshape(-1, 3)
        P = network.base_mva * z[:ng]
        g[:ng] = scale * network.base_mva * (2 * c[:, 0] * P + c[:, 1])
        return g

    def cons(z):
        Pg, Qg, Va, Vm = split(z)
        V = Vm * np.exp(1j * Va)
        mis = V * np.conj(Y @ V) + Sd - Cg @ (Pg + 1j * Qg)
        return np.concatenate([mis.real, mis.imag, [Va[ref]]])

    def jac_c(z):
        _, _, Va, Vm = split(z)
        V = Vm * np.exp(1j * Va)
        Ib = Y @ V
        dVa = 1j * np.diag(V) @ np.conj(np.diag(Ib) - Y @ np.diag(V))
        dVm = np.diag(V) @ np.conj(Y @ np.diag(np.exp(1j * Va))) + np.conj(np.diag(Ib)) @ np.diag(np.exp(1j * Va))
        J = np.zeros((2 * N + 1, 2 * ng + 2 * N))
        J[:N, :ng] = -Cg
        J[N:2 * N, ng:2 * ng] = -Cg
        J[:N, 2 * ng:2 * ng + N] = dVa.real
        J[N:2 * N, 2 * ng:2 * ng + N] = dVa.imag
        J[:N, 2 * ng + N:] = dVm.real
        J[N:2 * N, 2 * ng + N:] = dVm.imag
        J[2 * N, 2 * ng + ref] = 1.0
        return J

    def fin(v):
        return None if not np.isfinite(v) else float(v)

    bounds = ([(fin(a), fin(b)) for a, b in zip(pmin, pmax)]
              + [(fin(a), fin(b)) for a, b in zip(qmin, qmax)]
              + [(None, None)] * N + list(zip(vmin, vmax)))
    z0 = np.concatenate([0.5 * (pmin + pmax), np.where(np.isfinite(qmin + qmax), 0.5 * (qmin + qmax), 0.0),
                         np.zeros(N), 0.5 * (vmin + vmax)])
    res = minimize(fun, z0, jac=jac_f, bounds=bounds, method="SLSQP",
                   constraints=[{"type": "eq", "fun": cons, "jac": jac_c}],
                   options={"maxiter": max_iter, "ftol": 1e-12})
    if not res.success:
        raise NonConvergence(int(res.nit), float(np.max(np.abs(cons(res.x)))))
    Pg, Qg, Va, Vm = split(res.x)
    return OracleResult(_cost(network, Pg), Vm * np.exp(1j * Va), Pg, Qg, int(res.nit))
