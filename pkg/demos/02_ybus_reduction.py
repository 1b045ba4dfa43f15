"""
When does a tableau reduce to a bus admittance matrix?
======================================================

Eliminating port variables from the tableau yields ``Ybus = -A Fi^-1 Fv A'``.
That needs every element's current block ``Fi`` to be invertible.  Lines,
tap transformers and shunts qualify.  Ideal transformers, closed breakers and
three-winding transformers do not, and the tableau handles them anyway.
"""

from __future__ import annotations

import numpy as np

from stfgrid.errors import NotReducible
from stfgrid.io.matpower import load_case
from stfgrid.io.nodebreaker import bundled_nodebreaker, parse_nodebreaker
from stfgrid.netmodel import Bus, Network, line_element, tap_transformer_element
from stfgrid.reduction import direct_ybus, is_reducible, reduce_to_ybus

# %%
# On a bus-branch case the elimination reproduces classic nodal assembly.
net, _ = load_case("case118")
Y = reduce_to_ybus(net)
diff = abs(Y - direct_ybus(net)).max()
print(f"case118: Ybus {Y.shape}, {Y.nnz} nonzeros, max |reduced - direct| = {diff:.2e}")

# %%
# The node-breaker variant of case9 splits two substations into sections
# joined by breakers.  A closed breaker has ``Fi = [[0, 0], [1, 1]]``.
nb, spec = parse_nodebreaker(bundled_nodebreaker("case9_nb.json"))
report = is_reducible(nb)
for entry in report.singular:
    print(f"{entry.element_id}: {entry.kind.value}, rank {entry.rank} of {entry.arity}")

try:
    reduce_to_ybus(nb)
except NotReducible as exc:
    print("reduce_to_ybus refused:", exc)

# %%
# An open breaker carries no current, so its block is the identity and it no
# longer blocks the elimination.  Only BK7 can open here: opening BK5 would
# island the load section.
opened = nb.with_breaker_state("BK7", 0)
print("BK7 open, still singular:", is_reducible(opened).element_ids)

# %%
# A phase shifter breaks symmetry; its transpose is the conjugate-tap network.
buses = tuple(Bus(k) for k in range(3))


def with_shift(deg):
    return Network(buses, (line_element("L", 0, 1, 0.01, 0.1, 0.02),
                           tap_transformer_element("PS", 1, 2, 0.005, 0.08, 0.0, 1.0, deg)))


Yp = reduce_to_ybus(with_shift(10.0))
print("shifted Ybus asymmetry:", np.round(abs(Yp - Yp.T).max(), 3))
print("transpose vs -10 deg network:", abs(Yp.T - reduce_to_ybus(with_shift(-10.0))).max())
