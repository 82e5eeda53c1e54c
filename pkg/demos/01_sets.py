"""Set representations behind the planner.

Builds the coupled speed/power set of the hybrid-electric vehicle as a
constrained zonotope, compares it with the generic H-rep conversion, then
shows how the convex relaxation of a hybrid zonotope fills in the convex hull
of a two-square union.
"""

import numpy as np

from uasmpc.uasmodel import VehicleParams, build_state_set, state_set_hrep, state_set_hrep_core
from uasmpc.zonoset import bounding_box, contains_cz, contains_hz, conzono_from_hrep, convex_relaxation, hybzono_from_vrep

params = VehicleParams(
    v_min=10.0, v_max=20.0, omega_lim=np.radians(2.0), P_min=1000.0, P_max=6000.0,
    Pb_min=-3000.0, Pb_max=3000.0, Pb_rate=1400.0, C_b=1.8e6, SOC_min=0.25, SOC_max=1.0,
    Pe_min=0.0, Pe_max=3000.0, Pe_rate=175.0, SFC=10 / 3.6e6, mf_max=50.0,
)  # fmt: skip

X = build_state_set(params)
base = conzono_from_hrep(*state_set_hrep_core(params))
print(f"direct construction: {X.ng} factors, {X.nc} equality constraints")
print(f"generic H-rep conversion: {base.ng} factors, {base.nc} equality constraints")
print("bounding box (xidot, etadot, P_b, P_e):")
for name, (lo, hi) in zip(("xidot", "etadot", "P_b", "P_e"), bounding_box(X)):
    print(f"  {name:7s} [{lo + 0.0:9.1f}, {hi + 0.0:9.1f}]")

H, f = state_set_hrep(params)
for x in ([20.0, 0, 3000, 3000], [20.1, 0, 3000, 3000], [0.0, 0, -3000, 3000], [12.0, 3.0, 500, 2000]):
    print(f"  {x}: zonotope {contains_cz(X, x)}, inequalities {bool(np.all(H @ np.array(x) <= f + 1e-9))}")

sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
Z = hybzono_from_vrep([sq, sq + [3, 0]])
R = convex_relaxation(Z)
print("\ntwo unit squares three apart:")
for p in ([0.5, 0.5], [2.0, 0.5], [2.0, 1.5]):
    print(f"  {p}: in union {contains_hz(Z, p)}, in relaxation {contains_cz(R, p)}")
