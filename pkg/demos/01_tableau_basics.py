"""
Assembling and solving a sparse tableau
=======================================

A two-node circuit: a voltage source at node 0 feeds an ideal ``n1:n2``
transformer, whose secondary drives an impedance ``Z`` at node 1.  Nothing is
eliminated: bus voltages ``V``, port voltages ``v`` and port currents ``i`` are
all unknowns of one sparse linear system ``T x = u``.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from stfgrid.fixtures import source_transformer_circuit, three_bus
from stfgrid.io.matrix_market import write_matrix_market
from stfgrid.tableau import assemble_tableau, build_incidence, residuals, solve_linear_tableau

np.set_printoptions(precision=3, suppress=True, linewidth=120)

# %%
# Four ports in total: two on the transformer, one on the impedance and one on
# the source.  Every column of the incidence matrix holds a single 1.
net = source_transformer_circuit(n1=2.0, n2=1.0, Z=4.0, E=10.0)
inc = build_incidence(net)
print("incidence matrix\n", inc.A.toarray())

# %%
# The tableau stacks KCL, KVL and one row per element equation.
system = assemble_tableau(net)
print("T =\n", system.T.toarray().real)
print("u =", system.u.real)

# %%
# One sparse LU solve gives every quantity at once.  With a 2:1 step-down
# the secondary sits at 5 V and pushes 1.25 A through the 4 ohm load.
x = solve_linear_tableau(system)
for k, value in enumerate(x):
    print(f"{system.variable_label(k):>10} = {value.real:8.4f}")
print("max residual:", residuals(system, x).max)

# %%
# Bigger networks keep the same block layout.  The three-line example has
# 3 buses and 6 ports, so its tableau is 15 x 15 and mostly zeros.
T3 = assemble_tableau(three_bus(z=0.02 + 0.1j, y=0.04j)).T
print(f"three-bus tableau {T3.shape}, {T3.nnz} nonzeros")

# %%
# Matrices can be exported for inspection in other tools.
out = Path(tempfile.mkdtemp()) / "circuit.mtx"
write_matrix_market(out, system.T, comment="source/transformer circuit")
print(out.read_text().splitlines()[0])
