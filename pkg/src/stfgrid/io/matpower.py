"""Reader for the MATPOWER version-2 case format (``.m`` files).

Only the ``baseMVA``, ``bus``, ``gen``, ``branch`` and ``gencost`` tables are
interpreted; other assignments (``bus_name`` cell arrays, ``areas`` ...) are
skipped.  Bus numbers are remapped to dense indices in file order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import InputError, ParseError, UnsupportedCostModel
from ..netmodel import (Bus, Generator, Load, Network, line_element, shunt_element,
                        tap_transformer_element)
from ..powerflow import BusSpec, BusType

# column indices of the MATPOWER tables
BUS_I, BUS_TYPE, PD, QD, GS, BS, VM, VA, BASE_KV, VMAX, VMIN = 0, 1, 2, 3, 4, 5, 7, 8, 9, 11, 12
GEN_BUS, PG, QG, QMAX, QMIN, VG, GEN_STATUS, PMAX, PMIN = 0, 1, 2, 3, 4, 5, 7, 8, 9
F_BUS, T_BUS, BR_R, BR_X, BR_B, RATE_A, TAP, SHIFT, BR_STATUS = 0, 1, 2, 3, 4, 5, 8, 9, 10
MODEL, NCOST, COST = 0, 3, 4

_MIN_COLS = {"bus": 13, "gen": 10, "branch": 11, "gencost": 4}

_ASSIGN = re.compile(r"mpc\.(\w+)\s*=\s*")
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|Inf|inf|NaN|nan)$")


@dataclass
class CaseFile:
    """Raw numeric tables of a case, in MATPOWER units (MW, MVAr, degrees)."""

    base_mva: float
    bus: np.ndarray
    gen: np.ndarray
    branch: np.ndarray
    gencost: np.ndarray | None = None
    name: str = ""


def _strip_comments(text: str) -> str:
    out = []
    for line in text.split("\n"):
        in_str = False
        cut = len(line)
        for k, ch in enumerate(line):
            if ch == "'":
                in_str = not in_str
            elif ch == "%" and not in_str:
                cut = k
                break
        # keep column positions stable for error messages
        out.append(line[:cut] + " " * (len(line) - cut))
    return "\n".join(out)


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _closing(text: str, start: int, open_ch: str, close_ch: str, path) -> int:
    depth = 0
    for k in range(start, len(text)):
        ch = text[k]
        if ch == open_ch:
            depth += 1
        elif ch == close_ch:
            depth -= 1
            if depth == 0:
                return k
    raise ParseError(f"unterminated '{open_ch}'", *_position(text, start), path=path)


def _parse_matrix(text: str, start: int, end: int, name: str, path) -> np.ndarray:
    rows = []
    row: list[float] = []
    for m in re.finditer(r";|\n|[^\s,;]+", text[start:end]):
        tok = m.group(0)
        if tok in (";", "\n"):
            if row:
                rows.append(row)
                row = []
            continue
        if not _NUMBER.match(tok):
            raise ParseError(f"bad number {tok!r} in mpc.{name}",
                             *_position(text, start + m.start()), path=path)
        row.append(float(tok))
    if row:
        rows.append(row)
    if not rows:
        return np.zeros((0, _MIN_COLS.get(name, 0)))
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ParseError(f"ragged rows in mpc.{name}", *_position(text, start), path=path)
    return np.array(rows, dtype=float)


def parse_case_file(path) -> CaseFile:
    """Tokenize a MATPOWER case into a :class:`CaseFile` (no semantic checks)."""
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read case file {path}: {exc}") from exc
    text = _strip_comments(raw)
    tables: dict[str, np.ndarray] = {}
    base_mva = None
    pos = 0
    while True:
        m = _ASSIGN.search(text, pos)
        if m is None:
            break
        name, k = m.group(1), m.end()
        ch = text[k:k + 1]
        if ch == "[":
            end = _closing(text, k, "[", "]", path)
            if name in _MIN_COLS:
                tables[name] = _parse_matrix(text, k + 1, end, name, path)
            pos = end + 1
        elif ch == "{":
            pos = _closing(text, k, "{", "}", path) + 1
        else:
            semi = text.find(";", k)
            stop = semi if semi >= 0 else text.find("\n", k)
            value = text[k:stop].strip()
            if name == "baseMVA":
                if not _NUMBER.match(value):
                    raise ParseError(f"bad baseMVA {value!r}", *_position(text, k), path=path)
                base_mva = float(value)
            pos = stop + 1 if stop >= 0 else len(text)
    if base_mva is None:
        raise ParseError("missing mpc.baseMVA", path=path)
    for name in ("bus", "gen", "branch"):
        if name not in tables:
            raise ParseError(f"missing mpc.{name}", path=path)
    for name, tab in tables.items():
        if tab.size and tab.shape[1] < _MIN_COLS[name]:
            raise ParseError(f"mpc.{name} needs at least {_MIN_COLS[name]} columns", path=path)
    return CaseFile(base_mva, tables["bus"], tables["gen"], tables["branch"],
                    tables.get("gencost"), name=path.stem)


def _costs(case: CaseFile, in_service: np.ndarray) -> list[tuple[float, float, float]]:
    ng_total = case.gen.shape[0]
    gc = case.gencost
    if gc is None:
        return [(0.0, 0.0, 0.0)] * int(in_service.sum())
    if gc.shape[0] == ng_total:
        rows = gc[in_service]
    elif gc.shape[0] == int(in_service.sum()):
        rows = gc
    else:
        raise InputError(f"gencost has {gc.shape[0]} rows for {ng_total} generators "
                         "(reactive cost rows are not supported)")
    out = []
    for r in rows:
        if int(r[MODEL]) != 2:
            raise UnsupportedCostModel(f"cost model {int(r[MODEL])} (only polynomial model 2)")
        n = int(r[NCOST])
        if n > 3:
            raise UnsupportedCostModel(f"polynomial cost of degree {n - 1} (max 2)")
        coeffs = list(r[COST:COST + n])
        coeffs = [0.0] * (3 - n) + coeffs
        out.append(tuple(float(c) for c in coeffs))
    return out


def case_to_network(case: CaseFile) -> tuple[Network, BusSpec]:
    """Semantic conversion of tables into a :class:`Network` and its :class:`BusSpec`."""
    base = case.base_mva
    if not base > 0:
        raise InputError("baseMVA must be positive")
    ids = case.bus[:, BUS_I].astype(int)
    index = {b: k for k, b in enumerate(ids)}
    if len(index) != len(ids):
        raise InputError("duplicate bus numbers")

    def bus_of(num, what):
        try:
            return index[int(num)]
        except KeyError:
            raise InputError(f"{what} references unknown bus {int(num)}") from None

    if np.any(case.bus[:, BUS_TYPE] == 4):
        raise InputError("isolated buses (type 4) are not supported")
    buses = [Bus(k, float(r[BASE_KV]), float(r[VMIN]), float(r[VMAX]), name=str(int(r[BUS_I])))
             for k, r in enumerate(case.bus)]
    loads = [Load(k, complex(r[PD], r[QD]) / base) for k, r in enumerate(case.bus)
             if r[PD] != 0 or r[QD] != 0]

    on = case.gen[:, GEN_STATUS] > 0
    costs = _costs(case, on)
    gens = []
    for r, c in zip(case.gen[on], costs):
        gens.append(Generator(bus=bus_of(r[GEN_BUS], "generator"),
                              p_min=r[PMIN] / base, p_max=r[PMAX] / base,
                              q_min=r[QMIN] / base, q_max=r[QMAX] / base, cost=c,
                              p_set=r[PG] / base, q_set=r[QG] / base, v_set=float(r[VG])))

    elements = []
    for k, r in enumerate(case.branch):
        if r[BR_STATUS] <= 0:
            continue
        f, t = bus_of(r[F_BUS], "branch"), bus_of(r[T_BUS], "branch")
        i_max = r[RATE_A] / base if r[RATE_A] > 0 else None
        tap = 1.0 if r[TAP] == 0 else float(r[TAP])
        eid = f"br{k + 1}"
        if tap == 1.0 and r[SHIFT] == 0:
            elements.append(line_element(eid, f, t, r[BR_R], r[BR_X], r[BR_B], i_max))
        else:
            elements.append(tap_transformer_element(eid, f, t, r[BR_R], r[BR_X], r[BR_B],
                                                    tap, float(r[SHIFT]), i_max))
    for k, r in enumerate(case.bus):
        if r[GS] != 0 or r[BS] != 0:
            elements.append(shunt_element(f"sh{int(r[BUS_I])}", k, complex(r[GS], r[BS]) / base))

    net = Network(tuple(buses), tuple(elements), tuple(gens), tuple(loads), base)

    n = len(buses)
    gen_at = {}
    for g in gens:
        gen_at.setdefault(g.bus, []).append(g)
    kinds = [BusType.PQ] * n
    vm = case.bus[:, VM].astype(float).copy()
    s = -net.load_vector()
    for j, glist in gen_at.items():
        s[j] += sum(complex(g.p_set, g.q_set) for g in glist)
        vm[j] = glist[0].v_set
    slack = [k for k, r in enumerate(case.bus) if r[BUS_TYPE] == 3]
    if len(slack) != 1:
        raise InputError(f"expected exactly one reference bus, found {len(slack)}")
    for k, r in enumerate(case.bus):
        if r[BUS_TYPE] in (2, 3) and k in gen_at:
            kinds[k] = BusType.PV
    kinds[slack[0]] = BusType.SLACK
    ang = np.zeros(n)
    ang[slack[0]] = math.radians(case.bus[slack[0], VA])
    return net, BusSpec(tuple(kinds), s, vm, ang)


def parse_matpower(path) -> tuple[Network, BusSpec]:
    return case_to_network(parse_case_file(path))


def bundled_cases() -> list[str]:
    root = resources.files("stfgrid") / "data" / "cases"
    return sorted(p.name[:-2] for p in root.iterdir() if p.name.endswith(".m"))


def case_path(name) -> Path:
    """Resolve a file path, or the name of a bundled case (``"case118"`` / ``"case118.m"``)."""
    p = Path(name)
    if p.exists():
        return p
    stem = p.name[:-2] if p.name.endswith(".m") else p.name
    candidate = resources.files("stfgrid") / "data" / "cases" / f"{stem}.m"
    if candidate.is_file():
        return Path(str(candidate))
    raise InputError(f"no such case file or bundled case: {name}")


def load_case(name) -> tuple[Network, BusSpec]:
    return parse_matpower(case_path(name))
