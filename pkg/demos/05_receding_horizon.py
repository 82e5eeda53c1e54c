"""Closed-loop operation: re-plan every step and apply only the first input.

The plant is the prediction model, so the closed loop should follow the first
plan closely; the per-step solver statistics show how warm the later solves are.
"""

import dataclasses

from uasmpc.cli import build_problem, load_scenario, shipped_scenario
from uasmpc.planner import receding_horizon

sc = load_scenario(shipped_scenario("case2a"))
sc = dataclasses.replace(sc, horizon=8, terminal="X", wayset=None)
problem = build_problem(sc)
traj = receding_horizon(problem, sc.start, steps=6, cfg=sc.solver)

print(f"status {traj.status}; closed-loop checks passed: {traj.diagnostics['ok']}")
print(" k   xi     eta    v     SOC     nodes  time[s]")
for k, st in enumerate(traj.solver_stats):
    x = traj.x[k]
    print(f"{k:2d} {x[0]:5.2f} {x[2]:6.2f} {traj.v[k]:5.2f} {x[4]:7.4f} {st['nodes']:6d} {st['wall_time']:7.2f}")
