"""Hybrid-electric vehicle crossing a noise-restricted band.

Inside the band the generator is capped, so the plan charges the battery on
the approach and drains it while crossing.  Prints the per-step state and
writes ``demo_out/case1.svg``.
"""

from pathlib import Path

from uasmpc.cli import build_problem, load_scenario, render_svg, shipped_scenario
from uasmpc.planner import plan_step

sc = load_scenario(shipped_scenario("case1"))
problem = build_problem(sc)
traj, res = plan_step(problem, sc.start, sc.solver)

print(f"status {res.status}, J = {res.objective:.2f}, gap {res.gap:.3g}, "
      f"{res.nodes_explored} nodes, {res.wall_time:.1f} s")  # fmt: skip
print(" k    xi[m]   eta[m]   SOC     P_b[W]   P_e[W]  noise")
for k, x in enumerate(traj.x):
    noisy = traj.region[k] >= 0 and problem.fmap.partition.is_noise(int(traj.region[k]))
    print(f"{k:2d} {x[0]:8.1f} {x[2]:8.1f} {x[4]:6.4f} {x[5]:9.1f} {x[7]:8.1f}  {'yes' if noisy else ''}")
print("post-hoc checks passed:", traj.diagnostics["ok"])

out = Path("demo_out")
out.mkdir(exist_ok=True)
(out / "case1.svg").write_text(render_svg(sc, problem, traj))
