"""Command line front end: scenario files, plan/partition/benchmark commands and exports.

Scenario files are TOML.  The grammar is documented in ``docs/scenario_format.md``;
angles are in degrees and specific fuel consumption in kg/kWh, everything
else is SI.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

from .geomap import (
    MapError,
    PolygonMap,
    build_feasible_set_2d,
    build_feasible_set_3d,
    convex_partition,
    export_partition,
    partition_report,
)
from .miqp import MIQPConfig
from .planner import MPCProblem, MPCWeights, PlanningError, Trajectory, plan_step, receding_horizon
from .uasmodel import HYBRID, INPUT_LABELS, STATE_LABELS, VehicleParams, Wayset, build_model
from .zonoset import SetError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

EXIT_OK, EXIT_BAD_INPUT, EXIT_INFEASIBLE, EXIT_NODE_LIMIT = 0, 1, 2, 3
THREADS_ENV = "UASMPC_THREADS"
J_PER_KWH = 3.6e6

CSV_COLUMNS = (
    "k", "t_s", "xi_m", "eta_m", "xidot_mps", "etadot_mps", "soc", "pb_w", "mf_kg", "pe_w",
    "xiddot", "etaddot", "pbdot", "pedot", "region_idx", "region_cost", "v_mps", "theta_rad", "omega_radps",
)  # fmt: skip
HYBRID_ONLY = ("mf_kg", "pe_w", "pedot")
_STATE_COLS = dict(zip(STATE_LABELS[HYBRID], ("xi_m", "xidot_mps", "eta_m", "etadot_mps", "soc", "pb_w", "mf_kg", "pe_w")))

# vehicle keys read verbatim (SI units) from the [vehicle] table
_VEHICLE_SI = ("v_min", "v_max", "P_min", "P_max", "Pb_min", "Pb_max", "Pb_rate", "C_b", "SOC_min", "SOC_max",
               "Pe_min", "Pe_max", "Pe_rate", "mf_max")  # fmt: skip
_VEHICLE_REQUIRED = ("v_min", "v_max", "P_min", "P_max", "Pb_min", "Pb_max", "Pb_rate", "C_b")


class ScenarioError(ValueError):
    """Malformed scenario; the message names the offending field or line."""


@dataclass
class Scenario:
    name: str
    vehicle: VehicleParams
    dt: float
    horizon: int
    map: PolygonMap
    start: np.ndarray
    goal: np.ndarray
    Q: np.ndarray
    QN: np.ndarray
    R: np.ndarray
    q_lin: np.ndarray
    P_noise: float | None = None
    wayset: Wayset | None = None
    terminal: str = "X"  # "X" or "wayset"
    solver: MIQPConfig = field(default_factory=MIQPConfig)
    mode: str = "open_loop"
    steps: int = 1
    description: str = ""

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("vehicle.dt: must be positive")
        if self.horizon < 1:
            raise ScenarioError("vehicle.horizon: must be >= 1")
        if self.terminal not in ("X", "wayset"):
            raise ScenarioError("terminal.kind: expected 'X' or 'wayset'")
        if self.mode not in ("open_loop", "receding_horizon"):
            raise ScenarioError("mode.kind: expected 'open_loop' or 'receding_horizon'")
        if self.steps < 1:
            raise ScenarioError("mode.steps: must be >= 1")


# -- parsing -----------------------------------------------------------------------------


def _get(tbl, key, path, kind=float, default=...):
    if key not in tbl:
        if default is ...:
            raise ScenarioError(f"{path}.{key}: missing")
        return default
    val = tbl[key]
    try:
        if kind is float:
            if isinstance(val, bool):
                raise TypeError
            out = float(val)
            if not math.isfinite(out):
                raise ValueError
            return out
        if kind is int:
            if isinstance(val, bool) or int(val) != val:
                raise TypeError
            return int(val)
        if kind is bool:
            if not isinstance(val, bool):
                raise TypeError
            return val
        if kind is str:
            if not isinstance(val, str):
                raise TypeError
            return val
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}.{key}: expected {kind.__name__}, got {val!r}") from None
    raise AssertionError(kind)


def _ring(val, path):
    try:
        V = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}: expected a list of [x, y] pairs") from None
    if V.ndim != 2 or V.shape[1] != 2 or len(V) < 3 or not np.all(np.isfinite(V)):
        raise ScenarioError(f"{path}: expected at least three [x, y] pairs")
    return V


def _matrix(val, n, path):
    try:
        M = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}: expected numbers") from None
    if M.ndim == 1 and M.size == n:
        return np.diag(M)
    if M.shape == (n, n):
        return M
    raise ScenarioError(f"{path}: expected {n} diagonal entries or an {n}x{n} matrix")


def _state(tbl, labels, path, required):
    x = np.zeros(len(labels))
    unknown = set(tbl) - set(labels)
    if unknown:
        raise ScenarioError(f"{path}: unknown state name(s) {sorted(unknown)}; expected {list(labels)}")
    for i, lab in enumerate(labels):
        x[i] = _get(tbl, lab, path, float, ... if required else 0.0)
    return x


def _interval(tbl, key, path):
    if key not in tbl:
        return None
    v = tbl[key]
    if not (isinstance(v, list) and len(v) == 2):
        raise ScenarioError(f"{path}.{key}: expected [lo, hi]")
    lo, hi = (_get({"v": e}, "v", f"{path}.{key}") for e in v)
    if hi < lo:
        raise ScenarioError(f"{path}.{key}: empty interval")
    return (lo, hi)


def parse_scenario(text: str) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ScenarioError(f"syntax error: {err}") from None
    for sec in ("vehicle", "map", "start", "goal", "weights"):
        if not isinstance(doc.get(sec), dict):
            raise ScenarioError(f"[{sec}]: missing section")
    vt = doc["vehicle"]
    variant = _get(vt, "variant", "vehicle", str, HYBRID)
    kw = {k: _get(vt, k, "vehicle") for k in _VEHICLE_SI if k in vt or k in _VEHICLE_REQUIRED}
    kw["omega_lim"] = math.radians(_get(vt, "omega_lim_deg", "vehicle"))
    kw["SFC"] = _get(vt, "SFC_kg_per_kWh", "vehicle", float, 0.0) / J_PER_KWH
    kw["forward_progress"] = _get(vt, "forward_progress", "vehicle", bool, False)
    try:
        vehicle = VehicleParams(variant=variant, **kw)
    except ValueError as err:
        raise ScenarioError(f"vehicle: {err}") from None
    hybrid = vehicle.hybrid
    P_noise = _get(vt, "P_noise", "vehicle", float, None)
    if not hybrid and P_noise is not None:
        raise ScenarioError("vehicle.P_noise: only valid for the hybrid_electric variant")

    mt = doc["map"]
    if "boundary" not in mt:
        raise ScenarioError("map.boundary: missing")
    obstacles = [_ring(v, f"map.obstacles[{i}]") for i, v in enumerate(mt.get("obstacles", []))]
    noise = [_ring(v, f"map.noise_regions[{i}]") for i, v in enumerate(mt.get("noise_regions", []))]
    costs = []
    for i, cr in enumerate(mt.get("cost_regions", [])):
        path = f"map.cost_regions[{i}]"
        if not isinstance(cr, dict):
            raise ScenarioError(f"{path}: expected a table with 'cost' and 'vertices'")
        costs.append((_ring(cr.get("vertices"), f"{path}.vertices"), _get(cr, "cost", path)))
    if noise and not hybrid:
        raise ScenarioError("map.noise_regions: only valid for the hybrid_electric variant")
    if noise and P_noise is None:
        raise ScenarioError("vehicle.P_noise: required when the map has noise regions")
    try:
        pmap = PolygonMap(_ring(mt["boundary"], "map.boundary"), tuple(obstacles), tuple(noise), tuple(costs))
    except MapError as err:
        raise ScenarioError(f"map: {err}") from None

    labels = STATE_LABELS[variant]
    n, m = len(labels), len(INPUT_LABELS[variant])
    start = _state(doc["start"], labels, "start", required=True)
    goal = _state(doc["goal"], labels, "goal", required=False)
    wt = doc["weights"]
    for key in ("Q", "QN", "R", "q_lin"):
        if key not in wt:
            raise ScenarioError(f"weights.{key}: missing")
    Q = _matrix(wt["Q"], n, "weights.Q")
    QN = _matrix(wt["QN"], n, "weights.QN")
    R = _matrix(wt["R"], m, "weights.R")
    q_lin = np.asarray(wt["q_lin"], dtype=float)
    if q_lin.shape != (n,):
        raise ScenarioError(f"weights.q_lin: expected {n} entries")

    tt = doc.get("terminal", {})
    terminal = _get(tt, "kind", "terminal", str, "X")
    wayset = None
    if terminal == "wayset":
        wayset = Wayset(*(_interval(tt, k, "terminal") for k in ("xi", "eta", "soc")))
    st = doc.get("solver", {})
    try:
        solver = MIQPConfig(
            eps_abs=_get(st, "eps_abs", "solver", float, 0.1),
            eps_rel=_get(st, "eps_rel", "solver", float, 0.01),
            max_nodes=_get(st, "max_nodes", "solver", int, 20000),
            threads=_get(st, "threads", "solver", int, 1),
        )
    except ValueError as err:
        raise ScenarioError(f"solver: {err}") from None
    mo = doc.get("mode", {})
    return Scenario(
        name=_get(doc, "name", "scenario", str, "scenario"),
        description=_get(doc, "description", "scenario", str, ""),
        vehicle=vehicle,
        dt=_get(vt, "dt", "vehicle"),
        horizon=_get(vt, "horizon", "vehicle", int),
        map=pmap,
        P_noise=P_noise,
        start=start,
        goal=goal,
        Q=Q,
        QN=QN,
        R=R,
        q_lin=q_lin,
        wayset=wayset,
        terminal=terminal,
        solver=solver,
        mode=_get(mo, "kind", "mode", str, "open_loop"),
        steps=_get(mo, "steps", "mode", int, 1),
    )


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ScenarioError(f"cannot read {path}: {err.strerror}") from None
    return parse_scenario(text)


# -- serialisation ----------------------------------------------------------------------------


def _mat_out(M):
    return np.diag(M).tolist() if np.count_nonzero(M - np.diag(np.diag(M))) == 0 else M.tolist()


def scenario_to_dict(sc: Scenario) -> dict:
    p = sc.vehicle
    labels = p.state_labels
    vt = {"variant": p.variant, "dt": sc.dt, "horizon": sc.horizon}
    for k in _VEHICLE_SI:
        vt[k] = float(getattr(p, k))
    vt["omega_lim_deg"] = math.degrees(p.omega_lim)
    vt["SFC_kg_per_kWh"] = p.SFC * J_PER_KWH
    vt["forward_progress"] = p.forward_progress
    if sc.P_noise is not None:
        vt["P_noise"] = sc.P_noise
    mt = {"boundary": sc.map.boundary.tolist()}
    if sc.map.obstacles:
        mt["obstacles"] = [o.tolist() for o in sc.map.obstacles]
    if sc.map.noise_regions:
        mt["noise_regions"] = [o.tolist() for o in sc.map.noise_regions]
    if sc.map.cost_regions:
        mt["cost_regions"] = [{"cost": q, "vertices": V.tolist()} for V, q in sc.map.cost_regions]
    tt = {"kind": sc.terminal}
    if sc.wayset is not None:
        for k in ("xi", "eta", "soc"):
            iv = getattr(sc.wayset, k)
            if iv is not None:
                tt[k] = [float(iv[0]), float(iv[1])]
    s = sc.solver
    return {
        "name": sc.name,
        "description": sc.description,
        "vehicle": vt,
        "map": mt,
        "start": {lab: float(v) for lab, v in zip(labels, sc.start)},
        "goal": {lab: float(v) for lab, v in zip(labels, sc.goal)},
        "terminal": tt,
        "weights": {"Q": _mat_out(sc.Q), "QN": _mat_out(sc.QN), "R": _mat_out(sc.R), "q_lin": sc.q_lin.tolist()},
        "solver": {"eps_abs": s.eps_abs, "eps_rel": s.eps_rel, "max_nodes": s.max_nodes, "threads": s.threads},
        "mode": {"kind": sc.mode, "steps": sc.steps},
    }


def dump_scenario(sc: Scenario) -> str:
    return tomli_w.dumps(scenario_to_dict(sc))


# -- problem construction -----------------------------------------------------------------------


def build_problem(sc: Scenario) -> MPCProblem:
    p = sc.vehicle
    part = convex_partition(sc.map)
    if p.hybrid:
        P_noise = sc.P_noise if sc.P_noise is not None else p.Pe_max
        fmap = build_feasible_set_3d(part, p.Pe_max, P_noise)
    else:
        fmap = build_feasible_set_2d(part)
    bbox = sc.map.bbox()
    mdl = build_model(p, sc.dt, [tuple(bbox[0]), tuple(bbox[1])], sc.wayset, terminal_is_X=sc.terminal == "X")
    w = MPCWeights(sc.Q, sc.QN, sc.R, sc.q_lin, part.cell_costs.copy())
    return MPCProblem(mdl, fmap, w, sc.horizon, sc.goal)


def goal_reachable(sc: Scenario, problem: MPCProblem) -> bool:
    """False when the terminal position target lies outside every map cell."""
    part = problem.fmap.partition
    if sc.terminal == "wayset" and sc.wayset is not None and sc.wayset.xi and sc.wayset.eta:
        from shapely.geometry import Polygon, box

        (x0, x1), (y0, y1) = sc.wayset.xi, sc.wayset.eta
        w = box(x0, y0, x1, y1) if x1 > x0 and y1 > y0 else None
        if w is None:
            return bool(part.locate(((x0 + x1) / 2, (y0 + y1) / 2), 1e-9))
        return any(Polygon(c.vertices).intersects(w) for c in part.cells)
    return bool(part.locate(sc.goal[[0, 2]], 1e-9))


# -- outputs -------------------------------------------------------------------------------------


def trajectory_rows(traj: Trajectory, variant: str):
    cols = [c for c in CSV_COLUMNS if variant == HYBRID or c not in HYBRID_ONLY]
    in_cols = dict(zip(INPUT_LABELS[HYBRID], ("xiddot", "etaddot", "pbdot", "pedot")))
    rows = []
    for k in range(len(traj.t)):
        r = {"k": k, "t_s": traj.t[k]}
        for lab, val in zip(traj.labels, traj.x[k]):
            r[_STATE_COLS[lab]] = val
        for lab in traj.input_labels:
            r[in_cols[lab]] = traj.u[k][traj.input_labels.index(lab)] if k < traj.steps else ""
        r.update(
            region_idx=int(traj.region[k]),
            region_cost=traj.region_cost[k],
            v_mps=traj.v[k],
            theta_rad=traj.theta[k],
            omega_radps=traj.omega[k],
        )
        rows.append(r)
    return cols, rows


def write_csv(path, traj: Trajectory, variant: str):
    cols, rows = trajectory_rows(traj, variant)
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=cols)
        wr.writeheader()
        for r in rows:
            wr.writerow({c: _fmt(r[c]) for c in cols})


def _fmt(v):
    if isinstance(v, str) or isinstance(v, (int, np.integer)):
        return v
    return f"{float(v):.10g}"


def write_stats(path, sc: Scenario, traj: Trajectory, extra: dict):
    lines = [f"scenario: {sc.name}", f"status: {traj.status}", f"mode: {sc.mode}"]
    for k, v in extra.items():
        lines.append(f"{k}: {v}")
    for i, st in enumerate(traj.solver_stats):
        lines.append(
            f"solve {i}: status={st.get('status')} objective={st.get('objective', float('nan')):.6g} "
            f"gap={st.get('gap', float('nan')):.3g} nodes={st.get('nodes')} qp_solves={st.get('qp_solves')} "
            f"wall_time_s={st.get('wall_time', float('nan')):.3f}"
        )
    diag = traj.diagnostics
    for key in ("dynamics", "X", "XN", "U", "F", "box", "ok"):
        if key in diag:
            lines.append(f"check {key}: {diag[key]}")
    Path(path).write_text("\n".join(lines) + "\n")


def render_svg(sc: Scenario, problem: MPCProblem, traj: Trajectory | None, width: int = 800) -> str:
    """Static map + trajectory drawing."""
    bb = sc.map.bbox()
    (x0, x1), (y0, y1) = bb
    s = width / max(x1 - x0, 1e-12)
    height = int(math.ceil((y1 - y0) * s))

    def pt(x, y):
        return f"{(x - x0) * s:.2f},{(y1 - y) * s:.2f}"

    def poly(V, fill, stroke="#555", opacity=1.0, sw=1.0):
        pts = " ".join(pt(*v) for v in V)
        return f'<polygon points="{pts}" fill="{fill}" fill-opacity="{opacity}" stroke="{stroke}" stroke-width="{sw}"/>'

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">']
    out.append(poly(sc.map.boundary, "white", "#000", sw=2))
    part = problem.fmap.partition
    for i, c in enumerate(part.cells):
        if part.is_noise(i):
            fill, op = "#d62728", 0.25
        elif part.cell_costs[i] > 0:
            fill, op = "#ff7f0e", 0.3
        else:
            fill, op = "#ffffff", 0.0
        out.append(poly(c.vertices, fill, "#999", op, 0.5))
    for o in sc.map.obstacles:
        out.append(poly(o, "#444", "#000"))
    if traj is not None:
        xs = traj.x[:, [0, 2]]
        path = " ".join(pt(*p) for p in xs)
        out.append(f'<polyline points="{path}" fill="none" stroke="#1f77b4" stroke-width="1"/>')
        for k, (x, y) in enumerate(xs):
            r = part.is_noise(traj.region[k]) if traj.region[k] >= 0 else False
            cx, cy = pt(x, y).split(",")
            out.append(f'<circle cx="{cx}" cy="{cy}" r="3" fill="{"#d62728" if r else "#1f77b4"}"/>')
        sx, sy = pt(*xs[0]).split(",")
        out.append(f'<rect x="{float(sx) - 5}" y="{float(sy) - 5}" width="10" height="10" fill="red"/>')
    gx, gy = pt(sc.goal[0], sc.goal[2]).split(",")
    out.append(f'<circle cx="{gx}" cy="{gy}" r="6" fill="green"/>')
    if sc.wayset is not None and sc.wayset.xi and sc.wayset.eta:
        (a, b), (c, d) = sc.wayset.xi, sc.wayset.eta
        out.append(poly([(a, c), (b, c), (b, d), (a, d)], "none", "green", sw=1.5))
    out.append("</svg>")
    return "\n".join(out) + "\n"


# -- commands --------------------------------------------------------------------------------------


def _apply_overrides(sc: Scenario, threads=None, eps_abs=None, eps_rel=None, max_nodes=None):
    cfg = sc.solver
    env = os.environ.get(THREADS_ENV)
    t = cfg.threads
    if env:
        try:
            t = int(env)
        except ValueError:
            raise ScenarioError(f"{THREADS_ENV}: expected an integer, got {env!r}") from None
    if threads is not None:
        t = threads
    return MIQPConfig(
        eps_abs=cfg.eps_abs if eps_abs is None else eps_abs,
        eps_rel=cfg.eps_rel if eps_rel is None else eps_rel,
        max_nodes=cfg.max_nodes if max_nodes is None else max_nodes,
        threads=t,
        branching=cfg.branching,
        qp_tol=cfg.qp_tol,
        dive_every=cfg.dive_every,
    )


def _status_code(status: str) -> int:
    return {"optimal": EXIT_OK, "infeasible": EXIT_INFEASIBLE, "node_limit": EXIT_NODE_LIMIT}.get(status, EXIT_INFEASIBLE)


def solve_scenario(sc: Scenario, cfg: MIQPConfig, problem: MPCProblem | None = None):
    """Run the scenario's mode; returns ``(problem, trajectory or None, status)``."""
    problem = problem or build_problem(sc)
    if not goal_reachable(sc, problem):
        return problem, None, "infeasible"
    if sc.mode == "open_loop":
        try:
            traj, res = plan_step(problem, sc.start, cfg)
        except PlanningError as err:
            return problem, None, err.result.status if err.result is not None else "infeasible"
        return problem, traj, res.status
    traj = receding_horizon(problem, sc.start, sc.steps, cfg)
    return problem, traj, traj.status


def run_plan(scenario_path, out_dir, **overrides) -> int:
    try:
        sc = load_scenario(scenario_path)
        cfg = _apply_overrides(sc, **overrides)
        problem, traj, status = solve_scenario(sc, cfg)
    except (ScenarioError, MapError, SetError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_INPUT
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "partition.txt").write_text(export_partition(problem.fmap.partition))
    (out / "plan.svg").write_text(render_svg(sc, problem, traj))
    if traj is None:
        (out / "solver_stats.txt").write_text(f"scenario: {sc.name}\nstatus: {status}\n")
        print(f"{sc.name}: {status}", file=sys.stderr)
        return _status_code(status)
    write_csv(out / "trajectory.csv", traj, sc.vehicle.variant)
    write_stats(out / "solver_stats.txt", sc, traj, {"cells": problem.fmap.partition.n_cells})
    print(f"{sc.name}: {status}; outputs in {out}")
    return _status_code(status)


def run_partition(scenario_path, out_dir) -> int:
    try:
        sc = load_scenario(scenario_path)
        part = convex_partition(sc.map)
    except (ScenarioError, MapError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_INPUT
    rep = partition_report(sc.map, part)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "partition.txt").write_text(export_partition(part))
    (out / "partition_report.txt").write_text("".join(f"{k}: {v}\n" for k, v in rep.items()))
    print(f"{rep['n_cells']} cells, convex={rep['all_convex']}, area error={rep['area_rel_error']:.2e}, ok={rep['ok']}")
    return EXIT_OK if rep["ok"] else EXIT_BAD_INPUT


def run_benchmark(scenario_path, repeats: int, **overrides) -> int:
    try:
        sc = load_scenario(scenario_path)
        cfg = _apply_overrides(sc, **overrides)
        problem = build_problem(sc)
    except (ScenarioError, MapError, SetError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_INPUT
    if repeats < 1:
        print("error: --repeats must be >= 1", file=sys.stderr)
        return EXIT_BAD_INPUT
    times, nodes, gaps = [], [], []
    status = "optimal"
    for _ in range(repeats):
        t0 = time.perf_counter()
        try:
            traj, res = plan_step(problem, sc.start, cfg, check=False)
        except PlanningError as err:
            status = err.result.status if err.result is not None else "infeasible"
            break
        times.append(time.perf_counter() - t0)
        nodes.append(res.nodes_explored)
        gaps.append(res.root_gap)
        status = res.status
    if not times:
        print(f"{sc.name}: {status}")
        return _status_code(status)
    print(f"scenario: {sc.name}")
    print(f"status: {status}")
    print(f"repeats: {len(times)}")
    print(f"wall_time_median_s: {statistics.median(times):.4f}")
    print(f"wall_time_min_s: {min(times):.4f}")
    print(f"nodes_median: {statistics.median(nodes)}")
    print(f"root_relaxation_gap: {statistics.median(gaps):.6g}")
    return _status_code(status)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="uasmpc", description="Energy-aware MPC motion planning for electric UAS.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    pp = sub.add_parser("plan", help="solve a scenario and export the plan")
    pp.add_argument("scenario")
    pp.add_argument("--out", required=True)
    pp.add_argument("--threads", type=int)
    pp.add_argument("--eps-abs", type=float)
    pp.add_argument("--eps-rel", type=float)
    pp.add_argument("--max-nodes", type=int)
    pa = sub.add_parser("partition", help="partition a scenario map and report validity")
    pa.add_argument("scenario")
    pa.add_argument("--out", required=True)
    pb = sub.add_parser("benchmark", help="time repeated solves of a scenario")
    pb.add_argument("scenario")
    pb.add_argument("--repeats", type=int, default=5)
    pb.add_argument("--threads", type=int)
    args = ap.parse_args(argv)
    if args.cmd == "plan":
        return run_plan(
            args.scenario,
            args.out,
            threads=args.threads,
            eps_abs=args.eps_abs,
            eps_rel=args.eps_rel,
            max_nodes=args.max_nodes,
        )
    if args.cmd == "partition":
        return run_partition(args.scenario, args.out)
    return run_benchmark(args.scenario, args.repeats, threads=args.threads)


def shipped_scenario(name: str) -> Path:
    """Path of a scenario bundled with the package (``case1``, ``case2a``, ``case2b``)."""
    return Path(__file__).parent / "scenarios" / f"{name}.scenario"


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
