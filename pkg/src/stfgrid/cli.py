"""``stfgrid`` command line tool.

Exit status: 0 success, 1 solver failure, 2 input error.  ``STFGRID_LOG`` sets
the log level (``DEBUG``, ``INFO``, ``WARNING`` ...; default ``WARNING``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from .errors import InputError, SolverError, StfGridError
from .fixtures import random_network, slack_spec
from .io.matpower import case_path, parse_matpower
from .io.matrix_market import write_matrix_market
from .io.nodebreaker import bundled_nodebreaker, parse_nodebreaker, serialize
from .io.report import opf_report, powerflow_report, write_report
from .opf.ipm import IpmOptions
from .opf.problem import OpfOptions, build_opf, check_feasibility, solve_opf
from .powerflow import PowerFlowOptions, solve_powerflow_stf, solve_powerflow_ybus
from .reduction import direct_ybus, reduce_to_ybus
from .tableau import assemble_tableau

log = logging.getLogger("stfgrid")


def configure_logging(env=None) -> int:
    value = (os.environ if env is None else env).get("STFGRID_LOG", "WARNING").strip()
    level = int(value) if value.isdigit() else logging.getLevelName(value.upper())
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("stfgrid").setLevel(level)
    return level


def load_config(path) -> dict:
    """Solver options file (JSON).  Either flat interior-point options or
    sections ``{"opf": {...}, "powerflow": {...}}``."""
    if path is None:
        return {"opf": {}, "powerflow": {}}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise InputError("config must be a JSON object")
    if set(data) <= {"opf", "powerflow"}:
        cfg = {"opf": dict(data.get("opf", {})), "powerflow": dict(data.get("powerflow", {}))}
    else:
        cfg = {"opf": dict(data), "powerflow": {}}
    for section, cls in (("opf", IpmOptions), ("powerflow", PowerFlowOptions)):
        known = {f.name for f in fields(cls)} - {"warm_start"}
        unknown = set(cfg[section]) - known
        if unknown:
            raise InputError(f"config section {section!r}: unknown options {sorted(unknown)}")
    return cfg


def load_network(name: str, seed: int | None):
    """Resolve ``random:N``, node-breaker ``.json`` documents and MATPOWER cases."""
    if name.startswith("random:"):
        try:
            n = int(name.split(":", 1)[1])
        except ValueError:
            raise InputError(f"bad random case {name!r}, expected random:N") from None
        net = random_network(np.random.default_rng(seed), n)
        return net, slack_spec(net, int(net.generators[0].bus))
    if name.endswith(".json"):
        path = Path(name)
        return parse_nodebreaker(path if path.exists() else bundled_nodebreaker(path.name))
    return parse_matpower(case_path(name))


def _emit(args, report: dict) -> None:
    if args.report:
        write_report(report, args.report)
    if args.json:
        sys.stdout.write(write_report(report))


def _voltage_table(net, V) -> list[str]:
    lines = [f"{'bus':>6} {'vm':>10} {'va_deg':>11}"]
    for j in range(net.n_buses):
        name = net.buses[j].name or str(j)
        lines.append(f"{name:>6} {abs(V[j]):10.6f} {np.degrees(np.angle(V[j])):11.6f}")
    return lines


def _pf_options(args, cfg) -> PowerFlowOptions:
    opts = PowerFlowOptions(**cfg["powerflow"])
    if getattr(args, "tol", None) is not None:
        opts.tol = args.tol
    if getattr(args, "max_iter", None) is not None:
        opts.max_iter = args.max_iter
    return opts


def _run_pf(args, net, spec, cfg, case) -> int:
    solver = solve_powerflow_stf if args.formulation == "stf" else solve_powerflow_ybus
    t0 = time.perf_counter()
    sol = solver(net, spec, _pf_options(args, cfg))
    dt = time.perf_counter() - t0
    log.info("%s power flow on %s: %d iterations, %.1f ms", args.formulation, case,
             sol.iterations, dt * 1e3)
    if args.json:
        _emit(args, powerflow_report(net, sol, case))
        return 0
    if args.report:
        write_report(powerflow_report(net, sol, case), args.report)
    print(f"case {case}: {args.formulation} power flow converged in {sol.iterations} "
          f"iterations ({dt * 1e3:.1f} ms), max residual {max(sol.residual_report.values()):.2e}")
    print("\n".join(_voltage_table(net, sol.V)))
    return 0


def cmd_pf(args, cfg) -> int:
    net, spec = load_network(args.case, args.seed)
    return _run_pf(args, net, spec, cfg, args.case)


def cmd_opf(args, cfg) -> int:
    net, spec = load_network(args.case, args.seed)
    ipm = IpmOptions.from_mapping(cfg["opf"])
    if args.tol is not None:
        ipm.tol = args.tol
    if args.max_iter is not None:
        ipm.max_iter = args.max_iter
    if ipm.print_level > 0:
        logging.getLogger("stfgrid.opf").setLevel(logging.INFO)
    t0 = time.perf_counter()
    prob = build_opf(net, OpfOptions(ref_bus=spec.slack, line_limits=not args.no_line_limits))
    sol = solve_opf(prob, ipm)
    dt = time.perf_counter() - t0
    log.info("opf on %s: %s, %d iterations, %.2f s", args.case, sol.status, sol.iterations, dt)
    feas = check_feasibility(sol, prob)
    if not feas.ok:
        log.warning("feasibility check failed for families %s", feas.failed)
    report = opf_report(net, sol, args.case)
    if args.json:
        _emit(args, report)
        return 0
    if args.report:
        write_report(report, args.report)
    print(f"case {args.case}: OPF {sol.status} in {sol.iterations} iterations ({dt:.2f} s)")
    print(f"objective: {sol.objective:.2f} $/h")
    print(f"kkt error: {sol.kkt_error:.2e}  primal infeasibility: {sol.primal_infeasibility:.2e}")
    print(f"active inequalities: {report['multipliers']['active_inequalities']}")
    return 0


def cmd_ybus(args, cfg) -> int:
    net, _ = load_network(args.case, args.seed)
    Y = reduce_to_ybus(net)
    print(f"case {args.case}: Ybus {Y.shape[0]}x{Y.shape[1]}, {Y.nnz} nonzeros")
    if args.dump:
        write_matrix_market(args.dump, Y, comment=f"Ybus of {args.case}")
        print(f"wrote {args.dump}")
    if args.check_lemma1:
        diff = abs(Y - direct_ybus(net)).max() if net.n_buses else 0.0
        ok = diff < 1e-9
        print(f"max |reduced - direct| = {diff:.3e}  ({'ok' if ok else 'MISMATCH'})")
        return 0 if ok else 1
    return 0


def cmd_tableau(args, cfg) -> int:
    net, _ = load_network(args.case, args.seed)
    system = assemble_tableau(net)
    T = system.T
    density = T.nnz / max(1, T.shape[0] * T.shape[1])
    write_matrix_market(args.dump, T, comment=f"tableau of {args.case}; x = (V, v, i)")
    print(f"case {args.case}: tableau {T.shape[0]}x{T.shape[1]}, {T.nnz} nonzeros "
          f"(density {density:.3%}); wrote {args.dump}")
    return 0


def cmd_toggle(args, cfg) -> int:
    net, spec = load_network(args.case, args.seed)
    try:
        net = net.with_breaker_state(args.element, args.state)
    except KeyError:
        raise InputError(f"no element {args.element!r} in {args.case}") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    net.check_connected()
    if args.output:
        serialize(net, spec, args.output)
    if not args.json:
        print(f"breaker {args.element} set to {'closed' if args.state else 'open'}")
    return _run_pf(args, net, spec, cfg, args.case)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stfgrid", description="Sparse tableau power network tools.")
    p.add_argument("--seed", type=int, default=0, help="seed for random:N cases")
    p.add_argument("--config", help="JSON file with solver options")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("case", help="MATPOWER file or bundled name, node-breaker .json, or random:N")
        sp.add_argument("--json", action="store_true", help="print a JSON report")
        sp.add_argument("--report", help="also write the JSON report to this path")

    sp = sub.add_parser("pf", help="power flow")
    common(sp)
    sp.add_argument("--formulation", choices=("stf", "ybus"), default="stf")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int)
    sp.set_defaults(func=cmd_pf)

    sp = sub.add_parser("opf", help="AC optimal power flow on the tableau")
    common(sp)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int)
    sp.add_argument("--no-line-limits", action="store_true")
    sp.set_defaults(func=cmd_opf)

    sp = sub.add_parser("ybus", help="reduce the tableau to a bus admittance matrix")
    sp.add_argument("case")
    sp.add_argument("--check-lemma1", action="store_true",
                    help="compare against direct nodal assembly")
    sp.add_argument("--dump", help="write Ybus in MatrixMarket format")
    sp.set_defaults(func=cmd_ybus)

    sp = sub.add_parser("tableau", help="dump the tableau matrix")
    sp.add_argument("case")
    sp.add_argument("--dump", required=True, help="MatrixMarket output path")
    sp.set_defaults(func=cmd_tableau)

    sp = sub.add_parser("toggle-breaker", help="set a breaker state and re-solve the power flow")
    common(sp)
    sp.add_argument("--element", required=True)
    sp.add_argument("--state", type=int, choices=(0, 1), required=True)
    sp.add_argument("--formulation", choices=("stf",), default="stf")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int)
    sp.add_argument("--output", help="write the modified node-breaker document")
    sp.set_defaults(func=cmd_toggle)
    return p


def main(argv=None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    except StfGridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
