"""Energy-aware MPC: problem assembly, single plans and the receding-horizon loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geomap import FeasibleMap
from .miqp import MIQPConfig, MIQPResult, MultistageMIQP, solve_miqp
from .msqp import MultistageQP, Stage
from .uasmodel import DiscreteModel, coupled_indices, flat_outputs, speed_limit, terminal_indices
from .zonoset import ConstrainedZonotope, HybridZonotope, contains_cz

log = logging.getLogger(__name__)

CHECK_TOL = 1e-6


class PlanningError(RuntimeError):
    """Raised when a plan cannot be produced; ``result`` carries solver stats."""

    def __init__(self, msg, result=None, trajectory=None):
        super().__init__(msg)
        self.result = result
        self.trajectory = trajectory


@dataclass
class MPCWeights:
    Q: np.ndarray
    QN: np.ndarray
    R: np.ndarray
    q_lin: np.ndarray
    region_costs: np.ndarray | None = None


@dataclass
class MPCProblem:
    model: DiscreteModel
    fmap: FeasibleMap
    weights: MPCWeights
    N: int
    x_ref: np.ndarray  # single goal replicated over the horizon

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        n, m = self.model.n, self.model.m
        w = self.weights
        for name, M, k in (("Q", w.Q, n), ("QN", w.QN, n), ("R", w.R, m)):
            if np.shape(M) != (k, k):
                raise ValueError(f"{name} must be {k}x{k}")
        if np.size(w.q_lin) != n:
            raise ValueError("q_lin has the wrong length")
        if w.region_costs is None:
            w.region_costs = np.asarray(self.fmap.partition.cell_costs, dtype=float)
        if len(w.region_costs) != self.fmap.partition.n_cells:
            raise ValueError("region_costs must have one entry per cell")
        self.x_ref = np.asarray(self.x_ref, dtype=float)


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray  # (K+1, n)
    u: np.ndarray  # (K, m)
    region: np.ndarray  # (K+1,) cell index, -1 when unknown
    region_cost: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    omega: np.ndarray
    omega_clamped: np.ndarray
    labels: tuple
    input_labels: tuple
    diagnostics: dict = field(default_factory=dict)
    solver_stats: list = field(default_factory=list)
    status: str = "optimal"

    @property
    def steps(self) -> int:
        return self.u.shape[0]


# -- assembly --------------------------------------------------------------------------


@dataclass
class _Layout:
    n: int
    m: int
    x: slice
    u: slice | None = None
    xs: slice | None = None  # state-set factors
    us: slice | None = None
    fc: slice | None = None
    fb: slice | None = None
    size: int = 0


def _stage_layout(n, m, k, N, X: ConstrainedZonotope, XN, U, F: HybridZonotope | None):
    pos = 0

    def take(k_):
        nonlocal pos
        s = slice(pos, pos + k_)
        pos += k_
        return s

    lay = _Layout(n=n, m=m, x=take(n))
    if k < N:
        lay.u = take(m)
    if k >= 1:
        lay.xs = take((XN if k == N else X).ng)
    if k < N:
        lay.us = take(U.ng)
    if k >= 1 and F is not None:
        lay.fc = take(F.ng)
        lay.fb = take(F.nb)
    lay.size = pos
    return lay


def assemble(problem: MPCProblem, x0) -> tuple:
    """Build the multistage MIQP for one MPC solve from state ``x0``.

    Returns ``(MultistageMIQP, layouts)``.  Stage ``k`` stacks the state,
    input, state-set factors, input-set factors and the map's continuous and
    binary factors.  The initial state is pinned through ``lb == ub``; state
    and map membership start at stage 1 because stage 0 is data.
    """
    mdl = problem.model
    w = problem.weights
    N = problem.N
    n, m = mdl.n, mdl.m
    x0 = np.asarray(x0, dtype=float)
    X, XN, U, F = mdl.X, mdl.XN, mdl.U, problem.fmap.F
    ci = coupled_indices(mdl.params)
    ti = terminal_indices(mdl.params) if XN.n > X.n else ci
    xr = problem.x_ref
    tracked = np.diag(w.QN) > 0
    if np.any(tracked & ((xr < mdl.box[:, 0] - 1e-9) | (xr > mdl.box[:, 1] + 1e-9))):
        raise ValueError("reference lies outside the terminal set")
    if XN.n > X.n:
        # wayset intervals must contain the tracked reference coordinates
        lo = XN.c[X.n :] - np.abs(XN.Gc[X.n :, X.ng :]).sum(axis=1)
        hi = XN.c[X.n :] + np.abs(XN.Gc[X.n :, X.ng :]).sum(axis=1)
        for j, idx in enumerate(ti[X.n :]):
            if w.QN[idx, idx] > 0 and not lo[j] - 1e-9 <= xr[idx] <= hi[j] + 1e-9:
                raise ValueError("reference lies outside the terminal set")
    region_costs = np.asarray(w.region_costs, dtype=float)

    stages, layouts = [], []
    const = 0.0
    for k in range(N + 1):
        lay = _stage_layout(n, m, k, N, X, XN, U, F)
        nz = lay.size
        P = np.zeros((nz, nz))
        q = np.zeros(nz)
        lb = np.full(nz, -1.0)
        ub = np.full(nz, 1.0)
        Qk = w.QN if k == N else w.Q
        P[lay.x, lay.x] = 2 * Qk
        q[lay.x] = -2 * Qk @ xr + w.q_lin
        const += float(xr @ Qk @ xr)
        if k == 0:
            lb[lay.x] = ub[lay.x] = x0
        else:
            lb[lay.x] = mdl.box[:, 0]
            ub[lay.x] = mdl.box[:, 1]
        A_rows, b_rows = [], []

        def eq(cols_vals, rhs):
            row = np.zeros((len(rhs), nz))
            for sl, M in cols_vals:
                row[:, sl] += M
            A_rows.append(row)
            b_rows.append(np.asarray(rhs, dtype=float))

        if k < N:
            P[lay.u, lay.u] = 2 * w.R
            lb[lay.u] = mdl.input_box[:, 0]
            ub[lay.u] = mdl.input_box[:, 1]
            # u = Gu xi_u + cu ; Au xi_u = bu
            eq([(lay.u, np.eye(m)), (lay.us, -U.Gc)], U.c)
            if U.nc:
                eq([(lay.us, U.Ac)], U.b)
        if k >= 1:
            S = XN if k == N else X
            idx = ti if k == N else ci
            sel = np.zeros((S.n, n))
            sel[np.arange(S.n), idx] = 1.0
            eq([(lay.x, sel), (lay.xs, -S.Gc)], S.c)
            if S.nc:
                eq([(lay.xs, S.Ac)], S.b)
            # y = H x in F
            eq([(lay.x, mdl.H), (lay.fc, -F.Gc), (lay.fb, -F.Gb)], F.c)
            eq([(lay.fc, F.Ac), (lay.fb, F.Ab)], F.b)
            fb = np.arange(lay.fb.start, lay.fb.stop)
            for bi in range(F.nb):
                cell = problem.fmap.region_of_binary[bi]
                q[fb[bi]] += region_costs[cell] / 2
                const += region_costs[cell] / 2
        elif problem.fmap is not None:
            const += _stage0_region_cost(problem, x0)
        A = np.vstack(A_rows) if A_rows else None
        b = np.concatenate(b_rows) if b_rows else None
        kw = {}
        if k < N:
            nxt = _stage_layout(n, m, k + 1, N, X, XN, U, F)
            C = np.zeros((n, nz))
            C[:, lay.x] = -mdl.Ad
            C[:, lay.u] = -mdl.Bd
            D = np.zeros((n, nxt.size))
            D[:, nxt.x] = np.eye(n)
            kw = dict(C=C, D=D, c=np.zeros(n))
        stages.append(Stage(P=P, q=q, lb=lb, ub=ub, A=A, b=b, **kw))
        layouts.append(lay)

    qp = MultistageQP(stages, const=const)
    off = qp.offsets
    binaries, groups, implies, points = [], [], {}, {}
    centroids = {bi: problem.fmap.partition.cells[cell].vertices.mean(axis=0) for bi, cell in problem.fmap.region_of_binary.items()}
    for k in range(1, N + 1):
        lay = layouts[k]
        fb0, fc0 = off[k] + lay.fb.start, off[k] + lay.fc.start
        for gi in F.binary_groups:
            groups.append((k, np.array([fb0 + i for i in gi])))
        binaries += list(range(fb0, fb0 + F.nb))
        for bi, cols in F.binary_implies.items():
            implies[fb0 + bi] = tuple(fc0 + j for j in cols)
        for bi, c in centroids.items():
            points[fb0 + bi] = c
    host = _host_oracle(problem, off, layouts, groups)
    return MultistageMIQP(qp, np.array(binaries, dtype=int), groups, implies, points, host), layouts


def _cell_halfspaces(fmap: FeasibleMap):
    """Stacked, scaled halfspace rows ``A y <= b`` of every map region (cell or prism)."""
    part = fmap.partition
    allv = np.vstack([c.vertices for c in part.cells])
    span = max(float(np.ptp(allv[:, 0])), float(np.ptp(allv[:, 1])), 1e-12)
    rows, rhs, owner = [], [], []
    dim = fmap.dim
    for bi, cell in sorted(fmap.region_of_binary.items()):
        V = part.cells[cell].vertices
        for a, b in zip(V, np.roll(V, -1, axis=0)):
            e = b - a
            nrm = np.array([e[1], -e[0]]) / np.hypot(*e)
            r = np.zeros(dim)
            r[:2] = nrm / span
            rows.append(r)
            rhs.append(nrm @ a / span)
            owner.append(bi)
        if dim == 3:
            top = float(fmap.tops[cell])
            scale = max(float(np.max(fmap.tops)), 1e-12)
            rows += [np.array([0, 0, 1.0 / scale]), np.array([0, 0, -1.0 / scale])]
            rhs += [top / scale, 0.0]
            owner += [bi, bi]
    return np.array(rows), np.array(rhs), np.array(owner)


def _host_oracle(problem: MPCProblem, off, layouts, groups):
    """Distance-like score of each stage output to each map region (0 inside)."""
    A, b, owner = _cell_halfspaces(problem.fmap)
    nb = problem.fmap.F.nb
    H = problem.model.H
    group_stage = [k for k, _ in groups]

    def scores(g, z):
        k = group_stage[g]
        lay = layouts[k]
        x = z[off[k] + lay.x.start : off[k] + lay.x.stop]
        viol = A @ (H @ x) - b
        out = np.zeros(nb)
        np.maximum.at(out, owner, viol)
        return out

    return scores


def _stage0_region_cost(problem: MPCProblem, x0) -> float:
    y0 = problem.model.H @ x0
    cells = problem.fmap.cells_containing(y0)
    if not cells:
        return 0.0
    return float(min(problem.weights.region_costs[i] for i in cells))


# -- extraction and checks -----------------------------------------------------------


def extract(problem: MPCProblem, prob: MultistageMIQP, layouts, result: MIQPResult, x0) -> Trajectory:
    """Turn a solver result into a trajectory (states re-simulated from the inputs)."""
    mdl = problem.model
    N = problem.N
    zs = result.stages
    u = np.array([zs[k][layouts[k].u] for k in range(N)])
    x_solver = np.array([zs[k][layouts[k].x] for k in range(N + 1)])
    x = np.empty_like(x_solver)
    x[0] = x0
    for k in range(N):
        x[k + 1] = mdl.step(x[k], u[k])
    region = np.full(N + 1, -1)
    for k in range(1, N + 1):
        fb = zs[k][layouts[k].fb]
        region[k] = problem.fmap.region_of_binary[int(np.argmax(fb))]
    c0 = problem.fmap.cells_containing(mdl.H @ x0)
    if c0:
        region[0] = min(c0, key=lambda i: problem.weights.region_costs[i])
    costs = np.array([problem.weights.region_costs[r] if r >= 0 else 0.0 for r in region])
    traj = _trajectory(problem, x, u, region, costs)
    traj.diagnostics["solver_state_drift"] = float(np.max(np.abs(x - x_solver)))
    return traj


def _trajectory(problem, x, u, region, costs):
    mdl = problem.model
    p = mdl.params
    K = u.shape[0]
    v = np.zeros(K + 1)
    th = np.zeros(K + 1)
    om = np.zeros(K + 1)
    cl = np.zeros(K + 1, dtype=bool)
    for k in range(K + 1):
        acc = u[min(k, K - 1)] if K else np.zeros(mdl.m)
        v[k], th[k], om[k], cl[k] = flat_outputs(x[k, 1], x[k, 3], acc[0], acc[1], 0.1 * p.v_min)
    return Trajectory(
        t=np.arange(K + 1) * mdl.dt,
        x=x,
        u=u,
        region=region,
        region_cost=costs,
        v=v,
        theta=th,
        omega=om,
        omega_clamped=cl,
        labels=p.state_labels,
        input_labels=p.input_labels,
    )


def verify(problem: MPCProblem, traj: Trajectory, tol: float = CHECK_TOL, terminal: bool = True) -> dict:
    """Independent post-hoc constraint checks using the set membership oracles."""
    mdl = problem.model
    p = mdl.params
    ci = coupled_indices(p)
    ti = terminal_indices(p) if mdl.XN.n > mdl.X.n else ci
    K = traj.steps
    out = {"dynamics": 0.0, "X": True, "XN": True, "U": True, "F": True, "box": True, "failures": []}
    for k in range(K):
        r = np.max(np.abs(traj.x[k + 1] - mdl.step(traj.x[k], traj.u[k])))
        out["dynamics"] = max(out["dynamics"], float(r))
        if not _scaled_contains(mdl.U, traj.u[k], tol):
            out["U"] = False
            out["failures"].append(("U", k))
    inv = {v: k for k, v in problem.fmap.region_of_binary.items()}
    for k in range(1, K + 1):
        xk = traj.x[k]
        last = terminal and k == K
        S, idx = (mdl.XN, ti) if last else (mdl.X, ci)
        if not _scaled_contains(S, xk[idx], tol):
            out["XN" if last else "X"] = False
            out["failures"].append(("XN" if last else "X", k))
        lo, hi = mdl.box[:, 0], mdl.box[:, 1]
        scale = np.maximum(1.0, np.abs(mdl.box).max(axis=1))
        if np.any(xk < lo - tol * scale) or np.any(xk > hi + tol * scale):
            out["box"] = False
            out["failures"].append(("box", k))
        y = mdl.H @ xk
        cell = traj.region[k]
        ok = cell >= 0 and _scaled_contains_hz_cell(problem.fmap.F, y, inv[cell], tol)
        if not ok:
            out["F"] = False
            out["failures"].append(("F", k))
    out["ok"] = not out["failures"] and out["dynamics"] <= tol
    return out


def _scaled_contains(Z: ConstrainedZonotope, x, tol):
    """Membership with a tolerance relative to each coordinate's generator scale."""
    s = np.maximum(1.0, np.abs(Z.Gc).sum(axis=1))
    Zs = ConstrainedZonotope(Z.Gc / s[:, None], Z.c / s, Z.Ac, Z.b)
    return contains_cz(Zs, np.asarray(x) / s, tol)


def _scaled_contains_hz_cell(F, y, cell, tol):
    s = np.maximum(1.0, np.abs(np.hstack([F.Gc, F.Gb])).sum(axis=1))
    xb = -np.ones(F.nb)
    xb[cell] = 1.0
    Z = ConstrainedZonotope(F.Gc / s[:, None], (F.c + F.Gb @ xb) / s, F.Ac, F.b - F.Ab @ xb)
    return contains_cz(Z, np.asarray(y) / s, tol)


def stage_cost(problem: MPCProblem, traj: Trajectory) -> float:
    """Recompute the MPC objective from a trajectory."""
    w = problem.weights
    xr = problem.x_ref
    N = traj.steps
    J = 0.0
    for k in range(N):
        d = traj.x[k] - xr
        J += d @ w.Q @ d + traj.u[k] @ w.R @ traj.u[k] + w.q_lin @ traj.x[k] + traj.region_cost[k]
    d = traj.x[N] - xr
    J += d @ w.QN @ d + w.q_lin @ traj.x[N] + traj.region_cost[N]
    return float(J)


# -- planning ---------------------------------------------------------------------------


def plan_step(problem: MPCProblem, x0, cfg: MIQPConfig | None = None, check: bool = True):
    """Open-loop optimal plan from ``x0``; returns ``(Trajectory, MIQPResult)``."""
    cfg = cfg or MIQPConfig()
    prob, layouts = assemble(problem, x0)
    result = solve_miqp(prob, cfg)
    if result.z_star is None:
        raise PlanningError(f"no feasible plan ({result.status})", result)
    traj = extract(problem, prob, layouts, result, np.asarray(x0, dtype=float))
    traj.status = result.status
    traj.solver_stats.append(_stats(result))
    if check:
        traj.diagnostics.update(verify(problem, traj))
        if not traj.diagnostics["ok"]:
            log.warning("post-hoc check failed: %s", traj.diagnostics["failures"])
    traj.diagnostics["objective"] = result.objective
    traj.diagnostics["objective_recomputed"] = stage_cost(problem, traj)
    return traj, result


def _stats(result: MIQPResult) -> dict:
    return dict(
        status=result.status,
        objective=result.objective,
        gap=result.gap,
        nodes=result.nodes_explored,
        qp_solves=result.qp_solves,
        wall_time=result.wall_time,
        root_bound=result.root_bound,
    )


def receding_horizon(problem: MPCProblem, x0, steps: int, cfg: MIQPConfig | None = None) -> Trajectory:
    """Apply the first input of each plan and re-solve from the propagated state."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    cfg = cfg or MIQPConfig()
    mdl = problem.model
    x = [np.asarray(x0, dtype=float)]
    u, stats = [], []
    status = "optimal"
    for _ in range(steps):
        try:
            plan, res = plan_step(problem, x[-1], cfg, check=False)
        except PlanningError as err:
            status = "infeasible"
            stats.append(_stats(err.result) if err.result is not None else {})
            break
        stats.append(plan.solver_stats[0])
        u.append(plan.u[0])
        x.append(mdl.step(x[-1], plan.u[0]))
        if res.status != "optimal":
            status = res.status
    X = np.array(x)
    U = np.array(u).reshape(len(u), mdl.m)
    region = np.array([_locate(problem, xk) for xk in X])
    costs = np.array([problem.weights.region_costs[r] if r >= 0 else 0.0 for r in region])
    traj = _trajectory(problem, X, U, region, costs)
    traj.solver_stats = stats
    traj.status = status
    if U.shape[0]:
        traj.diagnostics.update(verify(problem, traj, terminal=False))
    return traj


def _locate(problem, xk):
    y = problem.model.H @ xk
    cells = problem.fmap.cells_containing(y, tol=1e-6)
    if not cells:
        return -1
    return min(cells, key=lambda i: problem.weights.region_costs[i])


def speed_power_margin(problem: MPCProblem, traj: Trajectory) -> np.ndarray:
    """Linear-map speed implied by commanded power minus the realised speed (>= 0 expected)."""
    p = problem.model.params
    P = traj.x[:, 5] + (traj.x[:, 7] if p.hybrid else 0.0)
    return np.array([speed_limit(p, Pk) for Pk in P]) - traj.v
