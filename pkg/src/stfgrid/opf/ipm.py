"""Primal-dual interior point method for smooth nonlinear programs

    min f(x)  s.t.  g(x) = 0,  h(x) <= 0

Inequalities get slacks ``h(x) + s = 0, s > 0`` with a logarithmic barrier.
Each iteration solves the condensed Newton/KKT system::

    [ Lxx + Jh' Z S^-1 Jh   Jg' ] [dx  ]     [ Lx + Jh' S^-1 (mu e + Z h) ]
    [ Jg                    0   ] [dlam] = - [ g                          ]

by sparse LU, then takes fraction-to-boundary steps separately in the primal
and dual spaces.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import Infeasible, InputError, MaxIterations, NumericalFailure

log = logging.getLogger(__name__)


@dataclass
class NonlinearProgram:
    """Callbacks of an NLP.  ``hessian(x, lam, mu, obj_factor)`` returns the
    Hessian of ``obj_factor * f + lam' g + mu' h`` as a sparse matrix."""

    x0: np.ndarray
    objective: Callable
    gradient: Callable
    eq: Callable
    eq_jac: Callable
    ineq: Callable
    ineq_jac: Callable
    hessian: Callable


@dataclass
class IpmOptions:
    max_iter: int = 200
    tol: float = 1e-6          # scaled KKT error
    feastol: float = 1e-8      # unscaled primal infeasibility
    barrier_init: float = 1.0
    print_level: int = 0
    cost_scale: float = 1e-4   # objective multiplier used inside the solver
    step_to_boundary: float = 0.995
    centering: float = 0.1
    slack_min: float = 0.1

    @classmethod
    def from_mapping(cls, values: dict) -> "IpmOptions":
        known = set(cls.__dataclass_fields__)
        unknown = set(values) - known
        if unknown:
            raise InputError(f"unknown solver options: {sorted(unknown)}")
        return cls(**values)


@dataclass
class IpmResult:
    x: np.ndarray
    objective: float
    lam: np.ndarray           # equality multipliers (unscaled objective units)
    mu: np.ndarray            # inequality multipliers
    s: np.ndarray
    iterations: int
    kkt_error: float
    primal_infeasibility: float
    status: str = "converged"
    history: list = field(default_factory=list)


def _kkt_solve(M, Jg, rhs_x, rhs_g):
    n, m = M.shape[0], Jg.shape[0]
    for delta in (0.0, 1e-10, 1e-8, 1e-6, 1e-4):
        if delta:
            K = sp.bmat([[M + delta * sp.identity(n), Jg.T],
                         [Jg, -delta * sp.identity(m)]], format="csc")
        else:
            K = sp.bmat([[M, Jg.T], [Jg, None]], format="csc")
        try:
            lu = spla.splu(K)
        except RuntimeError:
            continue
        sol = lu.solve(np.concatenate([rhs_x, rhs_g]))
        if np.all(np.isfinite(sol)):
            return sol[:n], sol[n:]
    raise NumericalFailure("KKT matrix could not be factorized")


def interior_point(nlp: NonlinearProgram, options: IpmOptions | None = None) -> IpmResult:
    opt = options or IpmOptions()
    c = opt.cost_scale
    x = np.array(nlp.x0, dtype=float)
    h = nlp.ineq(x)
    g = nlp.eq(x)
    niq, neq = h.size, g.size
    s = np.maximum(-h, opt.slack_min)
    mu_b = opt.barrier_init
    z = mu_b / s
    lam = np.zeros(neq)
    history = []

    for it in range(opt.max_iter + 1):
        f = nlp.objective(x)
        df = c * nlp.gradient(x)
        Jg = sp.csr_matrix(nlp.eq_jac(x))
        Jh = sp.csr_matrix(nlp.ineq_jac(x))
        Lx = df + Jg.T @ lam + Jh.T @ z
        g_inf = np.max(np.abs(g)) if neq else 0.0
        h_inf = max(np.max(h), 0.0) if niq else 0.0
        infeas = max(g_inf, h_inf)
        xnorm = np.max(np.abs(x)) if x.size else 0.0
        feascond = infeas / (1 + xnorm)
        dnorm = max(np.max(np.abs(lam)) if neq else 0.0, np.max(np.abs(z)) if niq else 0.0)
        gradcond = np.max(np.abs(Lx)) / (1 + dnorm) if x.size else 0.0
        compcond = (z @ s) / (1 + xnorm) if niq else 0.0
        kkt = max(feascond, gradcond, compcond)
        history.append((it, f, kkt, infeas, mu_b))
        log.log(logging.INFO if opt.print_level > 0 else logging.DEBUG, "ipm %3d  f=%.8g  kkt=%.2e  infeas=%.2e  mu=%.2e", it, f, kkt, infeas, mu_b)
        if not (np.isfinite(kkt) and np.isfinite(f)):
            raise NumericalFailure(f"non-finite iterate at iteration {it}")
        if kkt < opt.tol and infeas < opt.feastol:
            return IpmResult(x, f, lam / c, z / c, s, it, kkt, infeas, "converged", history)
        if it == opt.max_iter:
            break

        H = sp.csr_matrix(nlp.hessian(x, lam, z, c))
        zs = z / s
        M = H + Jh.T @ sp.diags(zs) @ Jh
        N = Lx + Jh.T @ ((mu_b + z * h) / s)
        dx, dlam = _kkt_solve(M, Jg, -N, -g)
        ds = -h - s - Jh @ dx
        dz = -z + (mu_b - z * ds) / s

        xi = opt.step_to_boundary
        neg = ds < 0
        alpha_p = min(1.0, xi * np.min(-s[neg] / ds[neg])) if np.any(neg) else 1.0
        neg = dz < 0
        alpha_d = min(1.0, xi * np.min(-z[neg] / dz[neg])) if np.any(neg) else 1.0

        x = x + alpha_p * dx
        s = s + alpha_p * ds
        lam = lam + alpha_d * dlam
        z = z + alpha_d * dz
        if niq:
            mu_b = min(mu_b, max(mu_b / 10, opt.centering * (z @ s) / niq))
        g = nlp.eq(x)
        h = nlp.ineq(x)

    if infeas > 1e-3:
        raise Infeasible(f"primal infeasibility {infeas:.3e} after {opt.max_iter} iterations")
    raise MaxIterations(opt.max_iter, kkt)
