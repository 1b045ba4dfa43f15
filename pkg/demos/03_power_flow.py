"""
Power flow on the tableau, with breakers in the loop
====================================================

The nonlinear part of a power flow is only the bus power balance
``S = V conj(I)``.  Keeping the tableau rows linear and adding those balance
rows gives a Newton method that works on node-breaker models directly,
without merging bus sections first.
"""

from __future__ import annotations

import numpy as np

from stfgrid.io.matpower import load_case
from stfgrid.io.nodebreaker import bundled_nodebreaker, parse_nodebreaker
from stfgrid.powerflow import solve_powerflow_stf, solve_powerflow_ybus

# %%
# Both formulations agree on a standard case.
net, spec = load_case("case14")
stf = solve_powerflow_stf(net, spec)
ybus = solve_powerflow_ybus(net, spec)
print(f"case14: {stf.iterations} tableau iterations, {ybus.iterations} Ybus iterations")
print(f"max |V_stf - V_ybus| = {np.max(np.abs(stf.V - ybus.V)):.2e}")
print("residuals:", {k: f"{v:.1e}" for k, v in stf.residual_report.items()})

# %%
# The node-breaker case9 has 11 bus sections.  Only the tableau solver
# accepts it, since closed breakers have no admittance form.
nb, nb_spec = parse_nodebreaker(bundled_nodebreaker("case9_nb.json"))
closed = solve_powerflow_stf(nb, nb_spec)
names = [b.name for b in nb.buses]
print("\nbus      |V|     angle")
for name, v in zip(names, closed.V):
    print(f"{name:>4} {abs(v):8.4f} {np.degrees(np.angle(v)):8.3f}")

# %%
# The current through a closed breaker is whatever the network needs.
k = nb.element_index("BK7")
o = nb.port_offsets()[k]
print(f"\nBK7 current (closed): {abs(closed.i[o]):.4f} pu")

# %%
# Opening BK7 reroutes power.  No Ybus is rebuilt, only two equations change.
opened = solve_powerflow_stf(nb.with_breaker_state("BK7", 0), nb_spec)
shift = np.abs(opened.V) - np.abs(closed.V)
print(f"largest voltage change after opening BK7: {np.max(np.abs(shift)):.4f} pu "
      f"at bus {names[int(np.argmax(np.abs(shift)))]}")
