"""Shared parameter sets and random instance generators for the test suite."""

import dataclasses

import numpy as np
from scipy.optimize import minimize

from uasmpc.cli import build_problem, load_scenario, shipped_scenario
from uasmpc.geomap import PolygonMap, build_feasible_set_2d, convex_partition
from uasmpc.msqp import MultistageQP, Stage
from uasmpc.planner import MPCProblem, MPCWeights, assemble
from uasmpc.uasmodel import ELECTRIC, VehicleParams, build_model, power_velocity


def hybrid_params(**kw) -> VehicleParams:
    base = dict(
        v_min=10.0, v_max=20.0, omega_lim=np.deg2rad(2.0), P_min=1000.0, P_max=6000.0,
        Pb_min=-3000.0, Pb_max=3000.0, Pb_rate=1400.0, C_b=1.8e6, SOC_min=0.25, SOC_max=1.0,
        Pe_min=0.0, Pe_max=3000.0, Pe_rate=175.0, SFC=10.0 / 3.6e6, mf_max=50.0,
    )  # fmt: skip
    base.update(kw)
    return VehicleParams(**base)


def electric_params(**kw) -> VehicleParams:
    base = dict(
        v_min=0.5, v_max=1.5, omega_lim=np.deg2rad(45.0), P_min=1.25, P_max=33.75,
        Pb_min=1.25, Pb_max=33.75, Pb_rate=20.0, C_b=5000.0, SOC_min=0.25, SOC_max=1.0, variant=ELECTRIC,
    )  # fmt: skip
    base.update(kw)
    return VehicleParams(**base)


def random_convex_polygon(rng, center, radius, k):
    ang = np.sort(rng.uniform(0, 2 * np.pi, k))
    r = radius * rng.uniform(0.5, 1.0, k)
    return np.column_stack([center[0] + r * np.cos(ang), center[1] + r * np.sin(ang)])


def _random_map(rng):
    """10 x 10 square with one rectangular obstacle and possibly a cost strip, at most 4 cells."""
    while True:
        x0, y0 = rng.uniform(2, 6, 2)
        w, h = rng.uniform(1, 3, 2)
        obstacle = np.array([[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]])
        if rng.random() < 0.5:
            obstacle[:2, 1] = 0.0  # attach to the bottom edge
        costs = ()
        if rng.random() < 0.5 and obstacle[0, 1] == 0.0:
            top = obstacle[2, 1]
            strip = np.array([[x0, top], [x0 + w, top], [x0 + w, min(10.0, top + 1.5)], [x0, min(10.0, top + 1.5)]])
            costs = ((strip, float(rng.choice([1.0, 5.0, 10.0]))),)
        m = PolygonMap(np.array([[0, 0], [10, 0], [10, 10], [0, 10.0]]), obstacles=(obstacle,), cost_regions=costs)
        part = convex_partition(m)
        if part.n_cells <= 4:
            return m, part


def random_planner_instance(seed: int):
    """Small electric planning MIQP (N <= 4, <= 4 regions) with a feasible start."""
    problem, x0 = random_planner_problem(seed)
    prob, _ = assemble(problem, x0)
    return prob


def random_planner_problem(seed: int):
    """The ``(MPCProblem, x0)`` behind :func:`random_planner_instance`."""
    rng = np.random.default_rng(seed)
    p = electric_params()
    m, part = _random_map(rng)
    fmap = build_feasible_set_2d(part)
    mdl = build_model(p, 1.0, m.bbox(), terminal_is_X=True)
    N = int(rng.integers(2, 5))
    while True:
        pos = rng.uniform(0.5, 9.5, 2)
        if fmap.cells_containing(pos):
            break
    speed = rng.uniform(0.6, 1.2)
    heading = rng.uniform(0, 2 * np.pi)
    vel = np.array([np.cos(heading), np.sin(heading)])
    vel *= speed / np.abs(vel).sum()
    pb = min(p.Pb_max, power_velocity(p, speed) + rng.uniform(0.5, 5.0))
    x0 = np.array([pos[0], vel[0], pos[1], vel[1], rng.uniform(0.5, 0.9), pb])
    goal = rng.uniform(0.5, 9.5, 2)
    n = mdl.n
    QN = np.diag([10.0, 0, 10.0, 0, 0, 0])
    Q = np.diag([rng.uniform(0, 1), 0, rng.uniform(0, 1), 0, 0, 0])
    weights = MPCWeights(Q, QN, np.diag([1.0, 1.0, 1e-4]), np.array([0, 0, 0, 0, 0, 1e-3]))
    weights.region_costs = part.cell_costs + rng.choice([0.0, 0.0, 2.0], part.n_cells)
    x_ref = np.array([goal[0], 0, goal[1], 0, 0, 0.0])
    return MPCProblem(mdl, fmap, weights, N, x_ref[:n]), x0


def truncated_case(name: str, horizon: int = 3):
    """Shipped scenario with a short horizon and terminal set ``X``; returns ``(problem, x0, scenario)``."""
    sc = load_scenario(shipped_scenario(name))
    sc = dataclasses.replace(sc, horizon=horizon, terminal="X")
    return build_problem(sc), sc.start, sc


def _rect(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def _star(cx, cy, r_out, r_in, k):
    ang = np.arange(2 * k) * np.pi / k
    r = np.where(np.arange(2 * k) % 2 == 0, r_out, r_in)
    return np.column_stack([cx + r * np.cos(ang), cy + r * np.sin(ang)])


def geometry_suite():
    """Ten named maps; every one has at least one hole (obstacle or noise region)."""
    L = np.array([[0, 0], [10, 0], [10, 4], [4, 4], [4, 10], [0, 10.0]])
    comb = np.array([[0, 0], [12, 0], [12, 8], [10, 8], [10, 3], [8, 3], [8, 8], [6, 8], [6, 3], [4, 3], [4, 8],
                     [2, 8], [2, 3], [0, 3.0]])  # fmt: skip
    circle = np.column_stack([6 + 5 * np.cos(np.linspace(0, 2 * np.pi, 24, endpoint=False)),
                              6 + 5 * np.sin(np.linspace(0, 2 * np.pi, 24, endpoint=False))])  # fmt: skip
    return [
        ("square_one_hole", PolygonMap(_rect(0, 0, 10, 10), obstacles=(_rect(4, 4, 6, 6),))),
        ("square_two_holes", PolygonMap(_rect(0, 0, 10, 10), obstacles=(_rect(1, 1, 3, 3), _rect(6, 5, 8, 9)))),
        ("grid_of_holes", PolygonMap(_rect(0, 0, 12, 12),
                                     obstacles=tuple(_rect(1 + 4 * i, 1 + 4 * j, 3 + 4 * i, 3 + 4 * j)
                                                     for i in range(3) for j in range(3)))),  # fmt: skip
        ("l_shape_hole", PolygonMap(L, obstacles=(_rect(1, 1, 3, 2.5),))),
        ("comb_hole", PolygonMap(comb, obstacles=(_rect(0.5, 0.5, 11.5, 1.5),))),
        ("star_hole", PolygonMap(_rect(0, 0, 10, 10), obstacles=(_star(5, 5, 3, 1.2, 5),))),
        ("disc_with_holes", PolygonMap(circle, obstacles=(_rect(4, 4, 5, 8), _star(8, 6, 1.5, 0.6, 4)))),
        ("touching_boundary", PolygonMap(_rect(0, 0, 10, 6), obstacles=(_rect(3, 0, 4, 4), _rect(6, 2, 7, 6)))),
        ("noise_and_cost", PolygonMap(_rect(0, 0, 20, 10), obstacles=(_rect(2, 2, 4, 8),),
                                      noise_regions=(_rect(8, 0, 12, 10),),
                                      cost_regions=((_rect(15, 3, 17, 7), 5.0),))),  # fmt: skip
        ("triangle_holes", PolygonMap(np.array([[0, 0], [16, 0], [8, 14.0]]),
                                      obstacles=(np.array([[6, 2], [10, 2], [8, 5.0]]),
                                                 np.array([[7, 7], [9, 7], [8, 9.0]])))),  # fmt: skip
    ]


def random_msqp(seed: int, N: int | None = None, nx: int | None = None, nu: int | None = None,
                ineq: bool = True, pd: bool = True):  # fmt: skip
    """Random feasible multistage QP with dynamics coupling, boxes and general inequalities.

    A random trajectory is built first and every bound/inequality is placed
    around it with positive slack, so the instance is always feasible.
    """
    rng = np.random.default_rng(seed)
    N = N if N is not None else int(rng.integers(1, 6))
    nx = nx if nx is not None else int(rng.integers(1, 5))
    nu = nu if nu is not None else int(rng.integers(1, 9 - nx))
    A = np.eye(nx) + 0.3 * rng.normal(size=(nx, nx)) / np.sqrt(nx)
    B = rng.normal(size=(nx, nu))
    xs = [rng.normal(size=nx)]
    us = []
    for _ in range(N):
        us.append(rng.normal(size=nu))
        xs.append(A @ xs[-1] + B @ us[-1])
    stages = []
    for k in range(N + 1):
        last = k == N
        z = xs[k] if last else np.r_[xs[k], us[k]]
        n = z.size
        M = rng.normal(size=(n, n))
        P = M @ M.T / n + (0.2 * np.eye(n) if pd else 0.0)
        q = rng.normal(size=n) * 3
        width = rng.uniform(0.05, 2.0, n)
        lb = z - width * rng.uniform(0, 1, n)
        ub = z + width * rng.uniform(0, 1, n)
        inf = rng.random(n) < 0.2
        lb[inf] = -np.inf
        ub[rng.random(n) < 0.2] = np.inf
        kw = {}
        if ineq and rng.random() < 0.7:
            G = rng.normal(size=(int(rng.integers(1, 4)), n))
            kw.update(G=G, w=G @ z + rng.uniform(0, 0.5, G.shape[0]))
        if k == 0:
            kw.update(A=np.eye(nx, n), b=xs[0])
        if not last:
            D = np.zeros((nx, nx if k + 1 == N else nx + nu))
            D[:, :nx] = np.eye(nx)
            kw.update(C=np.hstack([-A, -B]), D=D, c=np.zeros(nx))
        stages.append(Stage(P=P, q=q, lb=lb, ub=ub, **kw))
    return MultistageQP(stages, const=float(rng.normal()))


def dense_active_set_reference(qp):
    """Dense reference optimum: SLSQP picks the active set, a dense KKT solve polishes it.

    Returns ``(z, objective)``.  Independent of the interior-point code path.
    """
    data = qp.flatten()
    P, q = data["P"].toarray(), data["q"]
    E, e = data["E"].toarray(), data["e"]
    G, w = data["G"].toarray(), data["w"]
    lb, ub = data["lb"], data["ub"]
    n = q.size
    # stack all inequalities as Ci z <= di
    rows, rhs = [G], [w]
    I = np.eye(n)
    fin = np.isfinite(ub)
    rows.append(I[fin])
    rhs.append(ub[fin])
    fin = np.isfinite(lb)
    rows.append(-I[fin])
    rhs.append(-lb[fin])
    Ci, di = np.vstack(rows), np.concatenate(rhs)
    z0 = np.linalg.lstsq(E, e, rcond=None)[0] if E.shape[0] else np.zeros(n)
    res = minimize(
        lambda z: 0.5 * z @ P @ z + q @ z,
        z0,
        jac=lambda z: P @ z + q,
        constraints=[
            {"type": "eq", "fun": lambda z: E @ z - e, "jac": lambda z: E},
            {"type": "ineq", "fun": lambda z: di - Ci @ z, "jac": lambda z: -Ci},
        ],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 1000},
    )
    z = res.x
    active = np.abs(Ci @ z - di) <= 1e-6 * (1 + np.abs(di))
    Aeq = np.vstack([E, Ci[active]])
    beq = np.concatenate([e, di[active]])
    # keep a linearly independent subset of the active rows
    _, R = np.linalg.qr(Aeq.T)
    indep = np.abs(np.diag(R)) > 1e-9 if R.size else np.zeros(0, bool)
    Aeq, beq = Aeq[: indep.size][indep], beq[: indep.size][indep]
    m = Aeq.shape[0]
    K = np.block([[P, Aeq.T], [Aeq, np.zeros((m, m))]])
    sol = np.linalg.lstsq(K, np.concatenate([-q, beq]), rcond=None)[0]
    zp = sol[:n]
    # accept the polished point only if it stays feasible
    if np.all(Ci @ zp <= di + 1e-8) and np.allclose(E @ zp, e, atol=1e-8):
        z = zp
    return z, qp.objective(z)


def lqr(N, x0=(1.0, 0.0), box=None):
    """Double integrator; stage z = [x, u], terminal z = x; x0 pinned by an equality."""
    Ad = np.array([[1.0, 1.0], [0.0, 1.0]])
    Bd = np.array([[0.5], [1.0]])
    stages = []
    for k in range(N + 1):
        nz = 3 if k < N else 2
        lim = np.inf if box is None else box
        kw = {}
        if k == 0:
            kw.update(A=np.hstack([np.eye(2), np.zeros((2, 1))]), b=np.array(x0))
        if k < N:
            D = np.hstack([np.eye(2), np.zeros((2, 1 if k + 1 < N else 0))])
            kw.update(C=np.hstack([-Ad, -Bd]), D=D, c=np.zeros(2))
        stages.append(Stage(P=np.diag([1.0, 0.1, 0.5][:nz]), q=np.zeros(nz), lb=-lim, ub=lim, **kw))
    return MultistageQP(stages)
