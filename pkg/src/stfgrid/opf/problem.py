"""AC optimal power flow posed directly on the sparse tableau.

Decision vector ``z = [Pg | Qg | Re w | Im w]`` with ``w = (V, v, i, I)``.

Equalities: realified tableau rows (KCL, KVL, element), bus power balance
``Cg Sg - Sd - V conj(I) = 0``, a zero reference angle, and any generator
bound with equal ends.  Inequalities (``h <= 0``): generator boxes, squared
bus voltage magnitudes, squared port current magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import MissingLimits
from ..netmodel import ElementKind, Network
from ..tableau import TableauSystem, assemble_tableau, residuals
from .ipm import IpmOptions, NonlinearProgram, interior_point

FAMILIES = ("linear_element", "kcl", "kvl", "nonlinear_element", "reference",
            "gen_p", "gen_q", "voltage", "line")


def cost_eval(Pg, generators, base_mva: float = 1.0) -> float:
    """Total cost in $/h; ``Pg`` in per-unit, coefficients on MW."""
    P = base_mva * np.asarray(Pg, dtype=float)
    coef = np.array([g.cost for g in generators], dtype=float).reshape(-1, 3)
    return float(np.sum(coef[:, 0] * P ** 2 + coef[:, 1] * P + coef[:, 2]))


@dataclass
class OpfOptions:
    ref_bus: int | None = None        # default: first generator bus
    line_limits: bool = True
    require_line_limits: bool = False


@dataclass
class _Rows:
    """Index bookkeeping for one family of constraint rows."""
    eq: dict = field(default_factory=dict)
    ineq: dict = field(default_factory=dict)


class OpfProblem:
    """The tableau OPF as a :class:`NonlinearProgram` plus its variable/row layout."""

    def __init__(self, network: Network, options: OpfOptions | None = None):
        opt = options or OpfOptions()
        self.network = network
        self.options = opt
        N, P, ng = network.n_buses, network.n_ports, len(network.generators)
        self.N, self.P, self.ng = N, P, ng
        self.base = network.base_mva
        self.system: TableauSystem = assemble_tableau(network)
        nw = 2 * N + 2 * P
        self.nw = nw
        self.nx = 2 * ng + 2 * nw
        ow = 2 * ng  # offset of Re w
        self.iPg = np.arange(ng)
        self.iQg = ng + np.arange(ng)
        self.ie = ow + np.arange(N)
        self.if_ = ow + nw + np.arange(N)
        self.ivr = ow + N + np.arange(P)
        self.ivi = ow + nw + N + np.arange(P)
        self.iir = ow + N + P + np.arange(P)
        self.iii = ow + nw + N + P + np.arange(P)
        self.ia = ow + N + 2 * P + np.arange(N)
        self.ib = ow + nw + N + 2 * P + np.arange(N)

        gens = network.generators
        self.gen_bus = network.generator_buses()
        self.Cg = sp.csr_matrix((np.ones(ng), (self.gen_bus, np.arange(ng))), shape=(N, ng))
        self.Sd = network.load_vector()
        self.cost = np.array([g.cost for g in gens], dtype=float).reshape(-1, 3)
        self.ref_bus = (int(self.gen_bus[0]) if opt.ref_bus is None else int(opt.ref_bus)) \
            if ng or opt.ref_bus is not None else 0

        # realified linear rows [T, -E] w = (0, 0, us)
        E = sp.vstack([-sp.identity(N, format="csr"), sp.csr_matrix((2 * P, N))])
        L = sp.hstack([self.system.T, E], format="csr")
        Lr, Li = L.real, L.imag
        self.Llin = sp.hstack([sp.csr_matrix((2 * (N + 2 * P), 2 * ng)),
                               sp.bmat([[Lr, -Li], [Li, Lr]])], format="csr")
        cl = np.concatenate([np.zeros(N + P), self.system.us])
        self.clin = np.concatenate([cl.real, cl.imag])
        n_lin = 2 * (N + 2 * P)
        nl = N + 2 * P

        rows = _Rows()
        rows.eq["kcl"] = np.r_[0:N, nl:nl + N]
        rows.eq["kvl"] = np.r_[N:N + P, nl + N:nl + N + P]
        rows.eq["linear_element"] = np.r_[N + P:nl, nl + N + P:2 * nl]
        rows.eq["nonlinear_element"] = n_lin + np.arange(2 * N)
        rows.eq["reference"] = np.array([n_lin + 2 * N])
        k = n_lin + 2 * N + 1

        # generator bounds: equal ends become equalities
        def split_bounds(lo, hi):
            fixed = np.isfinite(lo) & np.isfinite(hi) & (hi - lo < 1e-10)
            return fixed, np.isfinite(hi) & ~fixed, np.isfinite(lo) & ~fixed

        pmin = np.array([g.p_min for g in gens])
        pmax = np.array([g.p_max for g in gens])
        qmin = np.array([g.q_min for g in gens])
        qmax = np.array([g.q_max for g in gens])
        if np.any(np.isnan(np.r_[pmin, pmax, qmin, qmax])):
            raise MissingLimits("generator limits must not be NaN")
        self.pmin, self.pmax, self.qmin, self.qmax = pmin, pmax, qmin, qmax
        self.p_fix, self.p_hi, self.p_lo = split_bounds(pmin, pmax)
        self.q_fix, self.q_hi, self.q_lo = split_bounds(qmin, qmax)
        nfix_p, nfix_q = int(self.p_fix.sum()), int(self.q_fix.sum())
        rows.eq["gen_p"] = k + np.arange(nfix_p)
        rows.eq["gen_q"] = k + nfix_p + np.arange(nfix_q)
        self.n_eq = k + nfix_p + nfix_q

        # inequalities
        vmin = np.array([b.v_min for b in network.buses])
        vmax = np.array([b.v_max for b in network.buses])
        self.vmin2, self.vmax2 = vmin ** 2, vmax ** 2
        lim_ports, lim_vals, missing = [], [], []
        off = network.port_offsets()
        for kk, el in enumerate(network.elements):
            if el.i_max is None:
                if el.kind is ElementKind.LINE:
                    missing.append(el.id)
                continue
            if not opt.line_limits:
                continue
            for p in range(el.ports):
                lim_ports.append(off[kk] + p)
                lim_vals.append(el.i_max)
        if opt.require_line_limits and missing:
            raise MissingLimits(f"lines without current rating: {missing[:10]}")
        self.lim_ports = np.array(lim_ports, dtype=int)
        self.imax2 = np.array(lim_vals, dtype=float) ** 2
        k = 0
        sizes = [("gen_p", int(self.p_hi.sum()) + int(self.p_lo.sum())),
                 ("gen_q", int(self.q_hi.sum()) + int(self.q_lo.sum())),
                 ("voltage", 2 * N), ("line", self.lim_ports.size)]
        for name, sz in sizes:
            rows.ineq[name] = k + np.arange(sz)
            k += sz
        self.n_ineq = k
        self.rows = rows
        self._box = self._box_rows()

    # -- sizes
    @property
    def n_var(self) -> int:
        return self.nx

    def complex_equalities(self) -> int:
        return self.N + 2 * self.P

    # -- pieces
    def _box_rows(self):
        """Constant Jacobian/offset of the generator box inequalities."""
        rows, cols, vals, rhs = [], [], [], []
        r = 0
        for idx, hi_mask, lo_mask, hi, lo in ((self.iPg, self.p_hi, self.p_lo, self.pmax, self.pmin),
                                              (self.iQg, self.q_hi, self.q_lo, self.qmax, self.qmin)):
            for j in np.flatnonzero(hi_mask):
                rows.append(r); cols.append(idx[j]); vals.append(1.0); rhs.append(-hi[j]); r += 1
            for j in np.flatnonzero(lo_mask):
                rows.append(r); cols.append(idx[j]); vals.append(-1.0); rhs.append(lo[j]); r += 1
        J = sp.csr_matrix((vals, (rows, cols)), shape=(r, self.nx))
        return J, np.array(rhs, dtype=float)

    def _fixed_rows(self):
        rows, cols, rhs = [], [], []
        r = 0
        for idx, mask, lo in ((self.iPg, self.p_fix, self.pmin), (self.iQg, self.q_fix, self.qmin)):
            for j in np.flatnonzero(mask):
                rows.append(r); cols.append(idx[j]); rhs.append(lo[j]); r += 1
        J = sp.csr_matrix((np.ones(r), (rows, cols)), shape=(r, self.nx))
        return J, np.array(rhs, dtype=float)

    def unpack(self, x):
        """``(Pg, Qg, V, v, i, I)`` from a decision vector."""
        Pg, Qg = x[self.iPg], x[self.iQg]
        w = x[2 * self.ng:2 * self.ng + self.nw] + 1j * x[2 * self.ng + self.nw:]
        N, P = self.N, self.P
        return Pg, Qg, w[:N], w[N:N + P], w[N + P:N + 2 * P], w[N + 2 * P:]

    # -- callbacks
    def objective(self, x) -> float:
        P = self.base * x[self.iPg]
        c = self.cost
        return float(np.sum(c[:, 0] * P ** 2 + c[:, 1] * P + c[:, 2]))

    def gradient(self, x) -> np.ndarray:
        grad = np.zeros(self.nx)
        P = self.base * x[self.iPg]
        grad[self.iPg] = self.base * (2 * self.cost[:, 0] * P + self.cost[:, 1])
        return grad

    def eq(self, x) -> np.ndarray:
        e, f, a, b = x[self.ie], x[self.if_], x[self.ia], x[self.ib]
        lin = self.Llin @ x - self.clin
        Sg = self.Cg @ (x[self.iPg] + 1j * x[self.iQg])
        p = Sg.real - self.Sd.real - (e * a + f * b)
        q = Sg.imag - self.Sd.imag - (f * a - e * b)
        Jf, rf = self._fixed_rows()
        return np.concatenate([lin, p, q, [f[self.ref_bus]] if self.N else [], Jf @ x - rf])

    def eq_jac(self, x) -> sp.csr_matrix:
        N = self.N
        e, f, a, b = x[self.ie], x[self.if_], x[self.ia], x[self.ib]
        r = np.arange(N)
        gr = self.gen_bus
        gc = np.arange(self.ng)
        rows = [gr, r, r, r, r, N + gr, N + r, N + r, N + r, N + r]
        cols = [self.iPg[gc], self.ie, self.if_, self.ia, self.ib,
                self.iQg[gc], self.ie, self.if_, self.ia, self.ib]
        vals = [np.ones(self.ng), -a, -b, -e, -f, np.ones(self.ng), b, -a, -f, e]
        J_inj = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(2 * N, self.nx))
        blocks = [self.Llin, J_inj]
        if N:
            blocks.append(sp.csr_matrix(([1.0], ([0], [self.if_[self.ref_bus]])), shape=(1, self.nx)))
        blocks.append(self._fixed_rows()[0])
        return sp.vstack(blocks, format="csr")

    def ineq(self, x) -> np.ndarray:
        Jb, rb = self._box
        e, f = x[self.ie], x[self.if_]
        vm2 = e * e + f * f
        ir, ii = x[self.iir[self.lim_ports]], x[self.iii[self.lim_ports]]
        return np.concatenate([Jb @ x + rb, self.vmin2 - vm2, vm2 - self.vmax2,
                               ir * ir + ii * ii - self.imax2])

    def ineq_jac(self, x) -> sp.csr_matrix:
        N = self.N
        e, f = x[self.ie], x[self.if_]
        r = np.arange(N)
        ir_idx, ii_idx = self.iir[self.lim_ports], self.iii[self.lim_ports]
        nl = self.lim_ports.size
        rl = 2 * N + np.arange(nl)
        rows = np.concatenate([r, r, N + r, N + r, rl, rl])
        cols = np.concatenate([self.ie, self.if_, self.ie, self.if_, ir_idx, ii_idx])
        vals = np.concatenate([-2 * e, -2 * f, 2 * e, 2 * f, 2 * x[ir_idx], 2 * x[ii_idx]])
        J = sp.csr_matrix((vals, (rows, cols)), shape=(2 * N + nl, self.nx))
        return sp.vstack([self._box[0], J], format="csr")

    def hessian(self, x, lam, mu, obj_factor=1.0) -> sp.csr_matrix:
        N = self.N
        n_lin = self.Llin.shape[0]
        lp = lam[n_lin:n_lin + N]
        lq = lam[n_lin + N:n_lin + 2 * N]
        nb = self._box[0].shape[0]
        mlo = mu[nb:nb + N]
        mhi = mu[nb + N:nb + 2 * N]
        ml = mu[nb + 2 * N:]
        ir_idx, ii_idx = self.iir[self.lim_ports], self.iii[self.lim_ports]
        dv = 2 * (mhi - mlo)
        rows = [self.iPg, self.ie, self.if_,
                self.ie, self.ia, self.if_, self.ib,
                self.if_, self.ia, self.ie, self.ib,
                ir_idx, ii_idx]
        cols = [self.iPg, self.ie, self.if_,
                self.ia, self.ie, self.ib, self.if_,
                self.ia, self.if_, self.ib, self.ie,
                ir_idx, ii_idx]
        vals = [obj_factor * 2 * self.cost[:, 0] * self.base ** 2, dv, dv,
                -lp, -lp, -lp, -lp,
                -lq, -lq, lq, lq,
                2 * ml, 2 * ml]
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.nx, self.nx))

    # -- starting point
    def initial_point(self) -> np.ndarray:
        x = np.zeros(self.nx)
        N, P = self.N, self.P
        V = np.ones(N, dtype=complex)
        sysm = self.system
        v = sysm.A.T @ V
        rhs = sysm.us - sysm.Fv @ v
        if P:
            i = spla.lsqr(sysm.Fi.tocsr(), rhs, atol=1e-14, btol=1e-14, iter_lim=10 * P)[0] \
                if np.any(rhs) else np.zeros(P, dtype=complex)
        else:
            i = np.zeros(0, dtype=complex)
        I = sysm.A @ i
        w = np.concatenate([V, v, i, I])
        x[2 * self.ng:2 * self.ng + self.nw] = w.real
        x[2 * self.ng + self.nw:] = w.imag

        def mid(lo, hi, fallback):
            out = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), fallback)
            out = np.where(np.isfinite(lo) & ~np.isfinite(hi), np.maximum(lo, fallback), out)
            return np.where(~np.isfinite(lo) & np.isfinite(hi), np.minimum(hi, fallback), out)

        x[self.iPg] = mid(self.pmin, self.pmax, 0.0)
        x[self.iQg] = mid(self.qmin, self.qmax, 0.0)
        return x

    def nlp(self) -> NonlinearProgram:
        return NonlinearProgram(self.initial_point(), self.objective, self.gradient, self.eq,
                                self.eq_jac, self.ineq, self.ineq_jac, self.hessian)


def build_opf(network: Network, options: OpfOptions | None = None) -> OpfProblem:
    network.check_connected()
    if not network.generators:
        raise MissingLimits("OPF needs at least one generator")
    return OpfProblem(network, options)


@dataclass
class OpfSolution:
    x: np.ndarray
    objective: float
    Pg: np.ndarray
    Qg: np.ndarray
    V: np.ndarray
    v: np.ndarray
    i: np.ndarray
    I_inj: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    status: str
    iterations: int
    kkt_error: float
    primal_infeasibility: float
    problem: OpfProblem = field(repr=False, default=None)

    @property
    def active_line_limits(self) -> int:
        if self.problem is None:
            return 0
        rows = self.problem.rows.ineq["line"]
        if rows.size == 0:
            return 0
        h = self.problem.ineq(self.x)[rows]
        return int(np.sum(h > -1e-5))

    def tableau_residuals(self):
        sysm = self.problem.system.with_injections(self.I_inj)
        return residuals(sysm, np.concatenate([self.V, self.v, self.i]))


def solve_opf(problem: OpfProblem, options: IpmOptions | None = None,
              x0: np.ndarray | None = None) -> OpfSolution:
    nlp = problem.nlp()
    if x0 is not None:
        nlp.x0 = np.asarray(x0, dtype=float)
    res = interior_point(nlp, options)
    Pg, Qg, V, v, i, I = problem.unpack(res.x)
    return OpfSolution(res.x, res.objective, Pg, Qg, V, v, i, I, res.lam, res.mu, res.status,
                       res.iterations, res.kkt_error, res.primal_infeasibility, problem)


@dataclass
class FeasibilityReport:
    violations: dict
    tol: float

    @property
    def passed(self) -> dict:
        return {k: v <= self.tol for k, v in self.violations.items()}

    @property
    def failed(self) -> list[str]:
        return [k for k, ok in self.passed.items() if not ok]

    @property
    def ok(self) -> bool:
        return not self.failed


def check_feasibility(solution, problem, tol: float = 1e-6) -> FeasibilityReport:
    """Max violation per constraint family.

    ``solution`` is an :class:`OpfSolution` or a raw decision vector; ``problem``
    an :class:`OpfProblem` or a :class:`Network` (the problem is then rebuilt).
    """
    if isinstance(problem, Network):
        problem = OpfProblem(problem)
    x = solution.x if isinstance(solution, OpfSolution) else np.asarray(solution, dtype=float)
    g = problem.eq(x)
    h = problem.ineq(x)
    out = {}
    for name in FAMILIES:
        viol = 0.0
        r_eq = problem.rows.eq.get(name)
        if r_eq is not None and r_eq.size:
            viol = max(viol, float(np.max(np.abs(g[r_eq]))))
        r_in = problem.rows.ineq.get(name)
        if r_in is not None and r_in.size:
            viol = max(viol, float(np.max(np.maximum(h[r_in], 0.0))))
        out[name] = viol
    return FeasibilityReport(out, tol)
