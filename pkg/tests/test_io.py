from __future__ import annotations

import json

import jsonschema
import numpy as np
import pytest

from stfgrid.errors import (InputError, IslandedNetwork, ParseError, SchemaError, UnknownElementKind,
                            UnsupportedCostModel)
from stfgrid.fixtures import random_network, slack_spec, three_bus
from stfgrid.io.matpower import bundled_cases, case_path, parse_matpower
from stfgrid.io.nodebreaker import (document_to_network, network_to_document, parse_nodebreaker,
                                    schema, serialize)
from stfgrid.io.report import opf_report, powerflow_report, report_schema, validate_report, write_report
from stfgrid.netmodel import ElementKind
from stfgrid.opf.problem import build_opf, solve_opf
from stfgrid.powerflow import BusType, solve_powerflow_stf
from stfgrid.reduction import direct_ybus, is_reducible, reduce_to_ybus

TINY_CASE = """function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
\t2\t1\t50\t20\t0\t10\t1\t1\t0\t230\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t300\t-300\t1\t100\t1\t250\t10;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0.02\t250\t250\t250\t{tap}\t{shift}\t1\t-360\t360;
];
mpc.gencost = [
\t{model}\t0\t0\t3\t0.01\t20\t5;
];
"""


def _tiny(tmp_path, tap=0, shift=0, model=2):
    p = tmp_path / "tiny.m"
    p.write_text(TINY_CASE.format(tap=tap, shift=shift, model=model))
    return p


def test_case9_counts(cases):
    net, spec = cases("case9")
    assert net.n_buses == 9
    two_ports = [el for el in net.elements if el.ports == 2]
    assert len(two_ports) == len(net.elements) == 9
    assert len(net.generators) == 3
    assert spec.kinds.count(BusType.SLACK) == 1


def test_case118_counts(cases):
    net, _ = cases("case118")
    assert net.base_mva == 100
    assert len(net.generators) == 54
    assert net.n_buses == 118


def test_unit_tap_is_plain_line(tmp_path):
    net, _ = parse_matpower(_tiny(tmp_path, tap=1.0))
    assert net.elements[0].kind is ElementKind.LINE
    net0, _ = parse_matpower(_tiny(tmp_path, tap=0))
    assert net0.elements[0].kind is ElementKind.LINE
    assert net0.elements[0].stamp == net.elements[0].stamp


def test_off_nominal_tap_is_cascade(tmp_path):
    net, _ = parse_matpower(_tiny(tmp_path, tap=1.05, shift=3))
    el = net.elements[0]
    assert el.kind is ElementKind.TAP_TRANSFORMER
    assert el.params["tap"] == 1.05 and el.params["shift_deg"] == 3


def test_tiny_case_units(tmp_path):
    net, spec = parse_matpower(_tiny(tmp_path))
    assert net.loads[0].s_d == pytest.approx(0.5 + 0.2j)
    shunt = [el for el in net.elements if el.kind is ElementKind.SHUNT][0]
    assert shunt.params["b"] == pytest.approx(0.1)
    assert net.elements[0].i_max == pytest.approx(2.5)
    assert net.generators[0].cost == (0.01, 20.0, 5.0)
    assert spec.kinds == (BusType.SLACK, BusType.PQ)


def test_parse_error_position(tmp_path):
    p = tmp_path / "bad.m"
    p.write_text("mpc.baseMVA = 100;\nmpc.bus = [\n 1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;\n 2 1 x 0;\n];\n"
                 "mpc.gen = [];\nmpc.branch = [];\n")
    with pytest.raises(ParseError) as exc:
        parse_matpower(p)
    assert exc.value.line == 4
    assert exc.value.column is not None
    assert "line 4" in str(exc.value)


def test_missing_table(tmp_path):
    p = tmp_path / "bad.m"
    p.write_text("mpc.baseMVA = 100;\n")
    with pytest.raises(ParseError):
        parse_matpower(p)


def test_piecewise_linear_cost_rejected(tmp_path):
    with pytest.raises(UnsupportedCostModel):
        parse_matpower(_tiny(tmp_path, model=1))


def test_unknown_case_name():
    with pytest.raises(InputError):
        case_path("case_does_not_exist")


@pytest.mark.parametrize("name", bundled_cases())
def test_every_shipped_case_reduces_to_direct(cases, name):
    net, _ = cases(name)
    assert abs(reduce_to_ybus(net) - direct_ybus(net)).max() < 1e-9


def test_breaker_document_lists_breaker(nodebreaker):
    net, _ = nodebreaker("case9_nb.json")
    assert is_reducible(net).element_ids == ["BK7", "BK5"]


def test_empty_element_list_islands():
    doc = network_to_document(three_bus())
    doc["elements"] = []
    doc["generators"] = []
    net, spec = document_to_network(doc)
    with pytest.raises(IslandedNetwork):
        solve_powerflow_stf(net, spec)


def test_three_bus_document_equals_fixture(nodebreaker):
    net, spec = nodebreaker("three_bus.json")
    assert net == three_bus()
    assert spec.slack == 0


@pytest.mark.parametrize("name", ["case9_nb.json", "three_winding.json", "three_bus.json"])
def test_round_trip_bundled(nodebreaker, tmp_path, name):
    net, spec = nodebreaker(name)
    path = tmp_path / name
    serialize(net, spec, path)
    back, spec2 = parse_nodebreaker(path)
    assert back == net
    assert spec2.kinds == spec.kinds
    assert np.allclose(spec2.s_inj, spec.s_inj)


@pytest.mark.parametrize("special", [None, "ideal", "breaker", "three_winding", "open_breaker"])
def test_round_trip_random(special, tmp_path):
    rng = np.random.default_rng(21)
    net = random_network(rng, 9, special=special, tap_fraction=0.3, shift_fraction=0.3,
                         shunt_fraction=0.5, line_limits=True)
    spec = slack_spec(net, int(net.generators[0].bus))
    back, _ = document_to_network(json.loads(serialize(net, spec)))
    assert back == net


def test_round_trip_matpower_case(cases):
    net, spec = cases("case14")
    back, spec2 = document_to_network(network_to_document(net, spec))
    assert back == net
    assert spec2.kinds == spec.kinds


def test_document_is_schema_valid(nodebreaker):
    net, spec = nodebreaker("case9_nb.json")
    jsonschema.validate(network_to_document(net, spec), schema())


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("buses"),
    lambda d: d.__setitem__("version", 2),
    lambda d: d["elements"][0].__setitem__("r", "zero"),
    lambda d: d["elements"][0].__setitem__("bogus", 1),
])
def test_schema_errors(nodebreaker, mutate):
    net, spec = nodebreaker("three_bus.json")
    doc = network_to_document(net, spec)
    mutate(doc)
    with pytest.raises(SchemaError):
        document_to_network(doc)


def test_breaker_state_must_be_binary(nodebreaker):
    net, spec = nodebreaker("case9_nb.json")
    doc = network_to_document(net, spec)
    bk = next(e for e in doc["elements"] if e["kind"] == "breaker")
    bk["gamma"] = 0.5
    with pytest.raises(SchemaError):
        document_to_network(doc)


def test_unknown_element_kind(nodebreaker):
    doc = network_to_document(*nodebreaker("three_bus.json"))
    doc["elements"][0]["kind"] = "facts_device"
    with pytest.raises(UnknownElementKind):
        document_to_network(doc)


def test_invalid_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{ not json")
    with pytest.raises(SchemaError):
        parse_nodebreaker(p)


def test_unknown_bus_reference(nodebreaker):
    doc = network_to_document(*nodebreaker("three_bus.json"))
    doc["elements"][0]["buses"] = ["1", "99"]
    with pytest.raises(InputError):
        document_to_network(doc)


def test_powerflow_report_schema(cases, tmp_path):
    net, spec = cases("case9")
    sol = solve_powerflow_stf(net, spec)
    report = powerflow_report(net, sol, "case9")
    validate_report(report)
    assert len(report["buses"]) == 9 and len(report["elements"]) == 9
    assert set(report["residuals"]) >= {"kcl", "kvl", "element", "injection"}
    path = tmp_path / "r.json"
    write_report(report, path)
    assert json.loads(path.read_text()) == report
    re, im = report["buses"][3]["v"]
    assert complex(re, im) == pytest.approx(sol.V[3])


def test_opf_report_schema(cases):
    net, spec = cases("case9")
    sol = solve_opf(build_opf(net))
    report = opf_report(net, sol, "case9")
    validate_report(report)
    assert report["objective"] == pytest.approx(sol.objective)
    assert len(report["generators"]) == 3
    assert len(report["multipliers"]["lmp_p"]) == 9
    # energy prices sit near the marginal generator cost
    assert all(20 < p < 40 for p in report["multipliers"]["lmp_p"])


def test_report_schema_rejects_missing_field(cases):
    net, spec = cases("case9")
    report = powerflow_report(net, solve_powerflow_stf(net, spec), "case9")
    del report["residuals"]
    with pytest.raises(jsonschema.ValidationError):
        validate_report(report)
    assert report_schema()["$schema"].endswith("2020-12/schema")
