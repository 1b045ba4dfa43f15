"""JSON solution reports for power flow and OPF results (schema: ``docs/report.md``)."""

from __future__ import annotations

import json
import math
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ..netmodel import PORT_LABELS, Network
from ..powerflow import PowerFlowSolution

REPORT_VERSION = 1


@lru_cache(maxsize=1)
def report_schema() -> dict:
    return json.loads((resources.files("stfgrid") / "io" / "report_schema.json").read_text())


def _c(z) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def _bus_name(network: Network, j: int) -> str:
    b = network.buses[j]
    return b.name if b.name is not None else str(j)


def _bus_rows(network: Network, V, I_inj) -> list[dict]:
    S = V * np.conj(I_inj)
    return [{"index": j, "name": _bus_name(network, j), "vm": float(abs(V[j])),
             "va_deg": math.degrees(float(np.angle(V[j]))), "v": _c(V[j]),
             "injection": _c(I_inj[j]), "s_inj": _c(S[j])}
            for j in range(network.n_buses)]


def _element_rows(network: Network, v, i) -> list[dict]:
    rows = []
    off = network.port_offsets()
    for k, el in enumerate(network.elements):
        ports = []
        for p in range(el.ports):
            g = off[k] + p
            ports.append({"label": PORT_LABELS[p], "bus": _bus_name(network, el.buses[p]),
                          "v": _c(v[g]), "i": _c(i[g]), "s": _c(v[g] * np.conj(i[g])),
                          "i_mag": float(abs(i[g]))})
        row = {"id": el.id, "kind": el.kind.value, "ports": ports}
        if el.i_max is not None:
            row["i_max"] = el.i_max
        rows.append(row)
    return rows


def powerflow_report(network: Network, sol: PowerFlowSolution, case: str = "") -> dict:
    return {
        "report": "powerflow", "version": REPORT_VERSION, "case": case,
        "formulation": sol.formulation, "converged": bool(sol.converged),
        "iterations": int(sol.iterations), "base_mva": network.base_mva,
        "buses": _bus_rows(network, sol.V, sol.I_inj),
        "elements": _element_rows(network, sol.v, sol.i),
        "residuals": {k: float(v) for k, v in sol.residual_report.items()},
    }


def opf_report(network: Network, sol, case: str = "") -> dict:
    """Report for an :class:`~stfgrid.opf.problem.OpfSolution`.

    Multipliers are given per constraint family; ``lmp_p``/``lmp_q`` are the
    bus power-balance prices in $/MWh and $/MVArh.
    """
    prob = sol.problem
    lam, mu = sol.lam, sol.mu
    n = network.n_buses
    n_lin = prob.Llin.shape[0]
    eq = {name: lam[rows].tolist() for name, rows in prob.rows.eq.items() if rows.size}
    ineq = {name: mu[rows].tolist() for name, rows in prob.rows.ineq.items() if rows.size}
    base = network.base_mva
    res = sol.tableau_residuals().max_norms
    h = prob.ineq(sol.x)
    return {
        "report": "opf", "version": REPORT_VERSION, "case": case,
        "formulation": "stf", "converged": sol.status == "converged",
        "status": sol.status, "iterations": int(sol.iterations), "base_mva": base,
        "objective": float(sol.objective), "kkt_error": float(sol.kkt_error),
        "buses": _bus_rows(network, sol.V, sol.I_inj),
        "elements": _element_rows(network, sol.v, sol.i),
        "generators": [{"index": k, "bus": _bus_name(network, g.bus),
                        "pg": float(sol.Pg[k]), "qg": float(sol.Qg[k]),
                        "pg_mw": float(base * sol.Pg[k]), "qg_mvar": float(base * sol.Qg[k])}
                       for k, g in enumerate(network.generators)],
        "residuals": {k: float(v) for k, v in res.items()}
        | {"primal_infeasibility": float(sol.primal_infeasibility)},
        "multipliers": {
            "lmp_p": (-lam[n_lin:n_lin + n] / base).tolist(),
            "lmp_q": (-lam[n_lin + n:n_lin + 2 * n] / base).tolist(),
            "equality": eq,
            "inequality": ineq,
            "active_inequalities": int(np.sum(h > -1e-5)),
        },
    }


def validate_report(report: dict) -> None:
    jsonschema.validate(report, report_schema(), cls=jsonschema.Draft202012Validator)


def write_report(report: dict, path=None) -> str:
    text = json.dumps(report, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
