from __future__ import annotations

import time

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from stfgrid.errors import NotReducible, Unrepresentable
from stfgrid.fixtures import SPECIAL, random_network, three_bus
from stfgrid.io.matpower import bundled_cases
from stfgrid.netmodel import (Bus, ElementKind, Network, breaker_element, ideal_transformer_element,
                              line_element, shunt_element, tap_transformer_element,
                              three_winding_element, voltage_source_element)
from stfgrid.reduction import direct_ybus, is_reducible, reduce_to_ybus
from stfgrid.tableau import assemble_tableau, solve_linear_tableau


def _inf_norm(A, B) -> float:
    D = (A - B).toarray()
    return float(np.max(np.abs(D))) if D.size else 0.0


def test_single_line():
    net = Network((Bus(0), Bus(1)), (line_element("L", 0, 1, 0, 0.1),))
    assert np.allclose(reduce_to_ybus(net).toarray(), [[-10j, 10j], [10j, -10j]], atol=1e-12)


def test_three_bus():
    Y = reduce_to_ybus(three_bus()).toarray()
    expected = np.full((3, 3), 10j)
    np.fill_diagonal(expected, -20j)
    assert np.allclose(Y, expected, atol=1e-12)


def test_empty_network_gives_zero_matrix():
    net = Network(tuple(Bus(k) for k in range(4)))
    assert reduce_to_ybus(net).shape == (4, 4)
    assert reduce_to_ybus(net).nnz == 0
    assert direct_ybus(net).shape == (4, 4)
    assert direct_ybus(net).nnz == 0


def test_single_shunt():
    net = Network((Bus(0), Bus(1)), (shunt_element("sh", 0, 0.02 - 0.3j),))
    Y = reduce_to_ybus(net).toarray()
    assert Y[0, 0] == pytest.approx(0.02 - 0.3j)
    assert np.count_nonzero(Y) == 1
    assert direct_ybus(net).toarray()[0, 0] == pytest.approx(0.02 - 0.3j)


def _with(element):
    buses = tuple(Bus(k) for k in range(3))
    return Network(buses, (line_element("L", 0, 1, 0.01, 0.1), element))


@pytest.mark.parametrize("element", [
    ideal_transformer_element("X", 1, 2, 1.05),
    breaker_element("B", 1, 2, 1),
    three_winding_element("W", 0, 1, 2, 1.0, 1.05, 0.95),
])
def test_irreducible_elements(element):
    net = _with(element)
    with pytest.raises(NotReducible) as exc:
        reduce_to_ybus(net)
    assert exc.value.element_ids == [element.id]
    report = is_reducible(net)
    assert not report
    assert report.element_ids == [element.id]
    entry = report.singular[0]
    assert entry.arity == element.ports and entry.rank < element.ports
    with pytest.raises(Unrepresentable):
        direct_ybus(net)


def test_closed_breaker_rank_one():
    entry = is_reducible(_with(breaker_element("B", 1, 2, 1))).singular[0]
    assert (entry.kind, entry.rank, entry.arity) == (ElementKind.BREAKER, 1, 2)


def test_open_breaker_is_reducible_and_carries_nothing():
    net = _with(breaker_element("B", 1, 2, 0))
    assert is_reducible(net)
    Y = reduce_to_ybus(net).toarray()
    assert not np.any(Y[2])
    assert not np.any(Y[:, 2])


def test_internal_source_not_reducible():
    net = _with(voltage_source_element("E", 2, 1.0))
    report = is_reducible(net)
    assert report.element_ids == ["E"] and report.with_sources == ("E",)
    with pytest.raises(NotReducible):
        reduce_to_ybus(net)


def test_all_line_network_reducible(cases):
    net, _ = cases("case118")
    lines_only = net.with_elements(el for el in net.elements if el.kind is ElementKind.LINE)
    assert is_reducible(lines_only).singular == ()


def test_mixed_network_lists_exactly_the_singular_elements():
    rng = np.random.default_rng(11)
    net = random_network(rng, 10)
    buses = net.buses + (Bus(10), Bus(11))
    extra = (ideal_transformer_element("X", 0, 1, 0.98),
             breaker_element("B", 2, 10, 1),
             three_winding_element("W", 3, 11, 4, 1, 1, 1),
             breaker_element("Bopen", 5, 6, 0))
    net = Network(buses, net.elements[:4] + extra[:2] + net.elements[4:] + extra[2:])
    # brute force: rank of each current block on its own
    expected = [el.id for el in net.elements if np.linalg.matrix_rank(el.stamp.Fi) < el.ports]
    assert expected == ["X", "B", "W"]
    assert is_reducible(net).element_ids == expected


def test_case9_direct_matches_reduced(cases):
    net, _ = cases("case9")
    assert _inf_norm(reduce_to_ybus(net), direct_ybus(net)) < 1e-10


@pytest.mark.parametrize("name", bundled_cases())
def test_shipped_cases_reduce_to_direct(cases, name):
    net, _ = cases(name)
    assert _inf_norm(reduce_to_ybus(net), direct_ybus(net)) < 1e-9


def test_two_hundred_random_networks():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        net = random_network(rng, int(rng.integers(2, 30)), shunt_fraction=0.5)
        worst = max(worst, _inf_norm(reduce_to_ybus(net), direct_ybus(net)))
    assert worst < 1e-9
    assert time.perf_counter() - t0 < 5.0


@pytest.mark.parametrize("special", SPECIAL)
def test_random_networks_with_special_elements(special):
    rng = np.random.default_rng(5)
    for _ in range(10):
        net = random_network(rng, 8, special=special)
        if special == "open_breaker":
            assert is_reducible(net)
            reduce_to_ybus(net)
        else:
            with pytest.raises(NotReducible):
                reduce_to_ybus(net)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 15))
def test_reduced_matches_direct_property(seed, n):
    net = random_network(np.random.default_rng(seed), n, shunt_fraction=0.5)
    assert _inf_norm(reduce_to_ybus(net), direct_ybus(net)) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_ybus_and_tableau_give_same_voltages(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, 12, shunt_fraction=1.0)
    inj = rng.normal(size=net.n_buses) + 1j * rng.normal(size=net.n_buses)
    V_ybus = spla.spsolve(reduce_to_ybus(net).tocsc(), inj)
    V_stf = solve_linear_tableau(assemble_tableau(net, inj))[:net.n_buses]
    assert np.max(np.abs(V_ybus - V_stf)) < 1e-8


def test_reciprocal_network_symmetric(cases):
    net, _ = cases("case14")
    Y = reduce_to_ybus(net)
    assert abs(Y - Y.T).max() < 1e-10


def test_phase_shifter_transpose_is_conjugate_tap():
    buses = tuple(Bus(k) for k in range(3))

    def net(shift):
        return Network(buses, (line_element("L", 0, 1, 0.01, 0.1, 0.02),
                               tap_transformer_element("T", 1, 2, 0.005, 0.08, 0.01, 1.03, shift)))

    Y = reduce_to_ybus(net(7.5))
    assert abs(Y - Y.T).max() > 1e-3
    assert abs(Y.T - reduce_to_ybus(net(-7.5))).max() < 1e-10


def test_row_structure_matches_adjacency(cases):
    net, _ = cases("case14")
    Y = reduce_to_ybus(net).toarray()
    adj = np.eye(net.n_buses, dtype=bool)
    for el in net.elements:
        for a in el.buses:
            for b in el.buses:
                adj[a, b] = True
    assert np.array_equal(np.abs(Y) > 0, adj)
