"""Branch-and-bound over one-hot region groups, plus a brute-force oracle.

Binary factors live in ``{-1, 1}``.  A node is a pair of bound vectors; a
binary is fixed by setting ``lb == ub`` which the QP solver substitutes out.
When a region binary is fixed to ``-1`` the vertex weights of that region are
fixed to ``-1`` as well (they are forced there by the hull equalities), which
keeps the node QPs free of degenerate equality-pinned variables.
"""

from __future__ import annotations

import heapq
import itertools
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .msqp import INFEASIBLE, OPTIMAL, MultistageQP, QPSolution, objective_bound, solve_qp

NODE_LIMIT = "node_limit"
HOST_TOL = 1e-7
# region_group: split a group's live members in two; region_fix: argmax cell vs the rest
BRANCHING_RULES = ("region_group", "region_fix", "most_fractional")
INT_TOL = 1e-6


@dataclass
class MultistageMIQP:
    """A multistage QP whose ``binaries`` (flat indices) must be ``-1`` or ``+1``.

    ``groups`` holds ``(stage, flat_indices)`` one-hot sets; ``implies`` maps a
    binary's flat index to continuous flat indices that are ``-1`` whenever
    the binary is ``-1``.  ``points`` optionally maps a grouped binary to a
    representative location (e.g. its cell centroid); group splits use it to
    keep neighbouring regions in the same child.

    ``host_scores(g, z)`` is an optional oracle returning, for each member of
    group ``g``, how far the continuous part of ``z`` lies from that member's
    region (``0`` when inside).  With it, rounding snaps every group to a
    region that already hosts the relaxed solution and branching targets
    groups whose relaxed solution lies outside every live region.
    """

    qp: MultistageQP
    binaries: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    groups: list = field(default_factory=list)
    implies: dict = field(default_factory=dict)
    points: dict = field(default_factory=dict)
    host_scores: object = None

    def __post_init__(self):
        self.binaries = np.asarray(self.binaries, dtype=int)
        grouped = {int(i) for _, g in self.groups for i in g}
        self.free_binaries = np.array([i for i in self.binaries if int(i) not in grouped], dtype=int)

    @property
    def n_binaries(self) -> int:
        return self.binaries.size


@dataclass
class MIQPConfig:
    eps_abs: float = 0.1
    eps_rel: float = 0.01
    max_nodes: int = 20000
    threads: int = 1
    branching: str = "region_group"
    qp_tol: float = 1e-9
    dive_every: int = 25

    def __post_init__(self):
        if not (self.eps_abs > 0 and self.eps_rel > 0):
            raise ValueError("eps_abs and eps_rel must be positive")
        if self.branching not in BRANCHING_RULES:
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class MIQPResult:
    z_star: np.ndarray | None
    objective: float
    gap: float
    status: str
    nodes_explored: int
    wall_time: float
    qp_solves: int = 0
    root_bound: float = -np.inf
    stages: list = field(default_factory=list)
    lower_bound: float = -np.inf
    node_bounds: list = field(default_factory=list)  # (parent bound, node bound) per evaluated node

    @property
    def root_gap(self) -> float:
        return self.objective - self.root_bound


def _tolerance(cfg, J):
    return max(cfg.eps_abs, cfg.eps_rel * abs(J))


# -- bound manipulation ------------------------------------------------------------


def _fix(prob: MultistageMIQP, lb, ub, idx, value):
    lb[idx] = ub[idx] = value
    if value < 0:
        for j in prob.implies.get(int(idx), ()):
            lb[j] = ub[j] = -1.0


def _fix_group(prob, lb, ub, members, chosen):
    for i in members:
        _fix(prob, lb, ub, i, 1.0 if i == chosen else -1.0)


def _exclude(prob, lb, ub, members, i):
    _fix(prob, lb, ub, i, -1.0)
    alive = [j for j in members if ub[j] > 0]
    if len(alive) == 1 and lb[alive[0]] < 1:
        _fix_group(prob, lb, ub, members, alive[0])


def _group_alive(members, lb, ub):
    return [j for j in members if ub[j] > 0]


def _integral(z, idx):
    return np.all(np.abs(np.abs(z[idx]) - 1.0) <= INT_TOL) if len(idx) else True


def _hosting(prob, z, lb, ub):
    """Per group: (scores over members, dead members at +inf) or None without an oracle."""
    if prob.host_scores is None:
        return None
    out = []
    for g, (_, members) in enumerate(prob.groups):
        sc = np.asarray(prob.host_scores(g, z), dtype=float).copy()
        sc[ub[members] <= 0] = np.inf
        out.append(sc)
    return out


def _round_assignment(prob, sol_z, lb, ub, hosting=None):
    """Nearest group-consistent integral assignment, as fixed bounds.

    A group picks its heaviest live member, or with ``hosting`` the heaviest
    member whose region contains the relaxed solution.
    """
    lb = lb.copy()
    ub = ub.copy()
    for g, (_, members) in enumerate(prob.groups):
        alive = _group_alive(members, lb, ub)
        if not alive:
            return None
        cand = alive
        if hosting is not None:
            hosts = [j for j, sc in zip(members, hosting[g]) if sc <= HOST_TOL]
            if hosts:
                cand = hosts
            else:
                cand = [members[int(np.argmin(hosting[g]))]]
        best = max(cand, key=lambda j: sol_z[j])
        _fix_group(prob, lb, ub, members, best)
    for i in prob.free_binaries:
        if lb[i] == ub[i]:
            continue
        _fix(prob, lb, ub, i, 1.0 if sol_z[i] >= 0 else -1.0)
    return lb, ub


# -- branch-and-bound ----------------------------------------------------------------


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    depth: int = field(compare=False)
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    warm: QPSolution | None = field(compare=False, default=None)


class _Incumbent:
    def __init__(self):
        self.lock = threading.Lock()
        self.J = np.inf
        self.z = None
        self.pruned = np.inf  # smallest bound among nodes dropped within tolerance
        self.trace = []

    def prune(self, bound):
        with self.lock:
            self.pruned = min(self.pruned, bound)

    def offer(self, J, z):
        with self.lock:
            if J < self.J:
                self.J = J
                self.z = z
                return True
            return False


def _choose_branch(prob: MultistageMIQP, cfg: MIQPConfig, z, lb, ub, hosting=None):
    """Return ('group', members, alive, weights), ('binary', idx) or None when integral.

    With ``hosting`` only groups whose relaxed solution lies outside every
    live region are candidates; the weights are then replaced by closeness
    so that the nearest region seeds the split.
    """
    best = None
    if cfg.branching in ("region_group", "region_fix") and prob.groups:
        for g, (stage, members) in enumerate(prob.groups):
            alive = _group_alive(members, lb, ub)
            if len(alive) <= 1 and all(lb[j] == ub[j] for j in members):
                continue
            if hosting is not None:
                sc = hosting[g][[list(members).index(j) for j in alive]]
                if np.min(sc) <= HOST_TOL:
                    continue
                weights = 1.0 / (1.0 + sc / np.min(sc))
                key = (float(np.min(sc)), -stage, -g)
            else:
                weights = (z[alive] + 1.0) / 2.0
                frac = 1.0 - float(np.max(weights))
                if frac <= INT_TOL and _integral(z, members):
                    continue
                key = (frac, -stage, -g)
            if best is None or key > best[0]:
                best = (key, ("group", members, alive, weights))
        if best is not None:
            return best[1]
        cands = prob.free_binaries
    else:
        cands = prob.binaries
    free = [i for i in cands if lb[i] != ub[i]]
    if not free:
        return None
    dist = np.array([1.0 - abs(z[i]) for i in free])
    if np.max(dist) <= INT_TOL:
        return None
    return ("binary", free[int(np.argmax(dist))])


def _split(prob, alive, weights):
    """Two disjoint subsets of ``alive``, seeded by the two heaviest members."""
    order = np.argsort(-weights, kind="stable")
    a, b = alive[order[0]], alive[order[1]]
    left, right = [a], [b]
    pts = prob.points
    for j in (alive[i] for i in order[2:]):
        if a in pts and b in pts and j in pts:
            da = np.linalg.norm(pts[j] - pts[a])
            db = np.linalg.norm(pts[j] - pts[b])
            (left if da <= db else right).append(j)
        else:
            (left if len(left) <= len(right) else right).append(j)
    return left, right


def _restrict(prob, lb, ub, members, keep):
    lb, ub = lb.copy(), ub.copy()
    if len(keep) == 1:
        _fix_group(prob, lb, ub, members, keep[0])
        return lb, ub
    keep = set(keep)
    for j in members:
        if j not in keep and ub[j] > -1:
            _fix(prob, lb, ub, j, -1.0)
    return lb, ub


def _children(prob, branch, lb, ub, rule="region_group"):
    """Child bound pairs, most promising first."""
    if branch[0] == "group":
        _, members, alive, weights = branch
        if rule == "region_group" and len(alive) > 2:
            left, right = _split(prob, alive, weights)
            return [_restrict(prob, lb, ub, members, left), _restrict(prob, lb, ub, members, right)]
        pick = alive[int(np.argmax(weights))]
        a_lb, a_ub = lb.copy(), ub.copy()
        _fix_group(prob, a_lb, a_ub, members, pick)
        b_lb, b_ub = lb.copy(), ub.copy()
        _exclude(prob, b_lb, b_ub, members, pick)
        return [(a_lb, a_ub), (b_lb, b_ub)]
    _, i = branch
    out = []
    for v in (1.0, -1.0):
        c_lb, c_ub = lb.copy(), ub.copy()
        _fix(prob, c_lb, c_ub, i, v)
        out.append((c_lb, c_ub))
    return out


def solve_miqp(prob: MultistageMIQP, cfg: MIQPConfig | None = None) -> MIQPResult:
    """Best-first branch-and-bound with periodic depth-first dives."""
    cfg = cfg or MIQPConfig()
    t0 = time.perf_counter()
    qp = prob.qp
    data = qp.flatten()
    lb0, ub0 = data["lb"].copy(), data["ub"].copy()
    lb0[prob.binaries] = np.maximum(lb0[prob.binaries], -1.0)
    ub0[prob.binaries] = np.minimum(ub0[prob.binaries], 1.0)

    inc = _Incumbent()
    stats = {"qp": 0, "nodes": 0}
    seq = itertools.count()

    def evaluate(lb, ub, warm):
        sol = solve_qp(qp.with_bounds(lb, ub), warm=warm, tol=cfg.qp_tol)
        return sol, objective_bound(qp.with_bounds(lb, ub), sol) if sol.status != INFEASIBLE else np.inf

    def try_incumbent(lb, ub, z, warm, hosting=None):
        rounded = _round_assignment(prob, z, lb, ub, hosting)
        if rounded is None:
            return
        sol, _ = evaluate(*rounded, warm)
        stats["qp"] += 1
        if sol.status == OPTIMAL:
            inc.offer(sol.objective, sol.z)

    def process(node: _Node):
        """Solve a node; return child nodes (possibly empty)."""
        sol, bound = evaluate(node.lb, node.ub, node.warm)
        bound = max(bound, node.bound) if np.isfinite(node.bound) else bound
        if sol.status != OPTIMAL and sol.status != INFEASIBLE:
            bound = node.bound
        with inc.lock:
            inc.trace.append((node.bound, bound))
        out = {"sol": sol, "bound": bound, "children": [], "node": node}
        if sol.status == INFEASIBLE:
            return out
        if bound >= inc.J - _tolerance(cfg, inc.J):
            inc.prune(bound)
            return out
        if sol.status == OPTIMAL and np.all(node.lb[prob.binaries] == node.ub[prob.binaries]):
            inc.offer(sol.objective, sol.z)
            return out
        hosting = _hosting(prob, sol.z, node.lb, node.ub) if sol.status == OPTIMAL else None
        branch = _choose_branch(prob, cfg, sol.z, node.lb, node.ub, hosting)
        if hosting is not None and (branch is None or branch[0] == "binary"):
            # every group is hosted: snapping to the hosts keeps the relaxed point
            # feasible, though region costs carried by the binaries may change
            try_incumbent(node.lb, node.ub, sol.z, sol, hosting)
            if inc.J - bound <= _tolerance(cfg, inc.J):
                inc.prune(bound)
                return out
            branch = _choose_branch(prob, cfg, sol.z, node.lb, node.ub)
        if branch is None and sol.status == OPTIMAL:
            if _integral(sol.z, prob.binaries) and all(node.lb[i] == node.ub[i] for i in prob.binaries):
                inc.offer(sol.objective, sol.z)
            else:
                try_incumbent(node.lb, node.ub, sol.z, sol)
            inc.prune(bound)
            return out
        if branch is None:
            inc.prune(bound)
            return out
        for c_lb, c_ub in _children(prob, branch, node.lb, node.ub, cfg.branching):
            out["children"].append(_Node(bound, next(seq), node.depth + 1, c_lb, c_ub, sol if sol.ok else None))
        return out

    root = _Node(-np.inf, next(seq), 0, lb0, ub0)
    res = process(root)
    stats["qp"] += 1
    stats["nodes"] += 1
    root_bound = res["bound"]
    if res["sol"].status == INFEASIBLE:
        return MIQPResult(None, np.inf, np.inf, INFEASIBLE, 1, time.perf_counter() - t0, stats["qp"], np.inf)
    if res["sol"].ok and res["children"]:
        try_incumbent(lb0, ub0, res["sol"].z, res["sol"], _hosting(prob, res["sol"].z, lb0, ub0))
    heap = []
    for ch in res["children"]:
        heapq.heappush(heap, ch)

    pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    status = OPTIMAL
    dive = None
    try:
        while heap:
            lower = heap[0].bound
            if inc.z is not None and inc.J - lower <= _tolerance(cfg, inc.J):
                break
            if stats["nodes"] >= cfg.max_nodes:
                status = NODE_LIMIT
                break
            batch = []
            if dive is not None:
                batch.append(dive)
                dive = None
            while heap and len(batch) < cfg.threads:
                nd = heapq.heappop(heap)
                if nd.bound >= inc.J - _tolerance(cfg, inc.J):
                    inc.prune(nd.bound)
                    continue
                batch.append(nd)
            if not batch:
                continue
            results = list(pool.map(process, batch)) if pool else [process(nd) for nd in batch]
            stats["nodes"] += len(batch)
            stats["qp"] += len(batch)
            for r in results:
                kids = r["children"]
                if not kids:
                    continue
                want_dive = inc.z is None or stats["nodes"] % cfg.dive_every == 0
                if want_dive and dive is None:
                    dive = kids[0]
                    kids = kids[1:]
                for ch in kids:
                    heapq.heappush(heap, ch)
            if dive is not None and dive.bound >= inc.J - _tolerance(cfg, inc.J):
                inc.prune(dive.bound)
                dive = None
        if dive is not None:
            heapq.heappush(heap, dive)
    finally:
        if pool:
            pool.shutdown()

    lower = min([nd.bound for nd in heap], default=inc.J)
    lower = min(lower, inc.J, inc.pruned)
    wall = time.perf_counter() - t0
    if inc.z is None:
        st = NODE_LIMIT if status == NODE_LIMIT else INFEASIBLE
        return MIQPResult(
            None, np.inf, np.inf, st, stats["nodes"], wall, stats["qp"], root_bound, lower_bound=lower, node_bounds=inc.trace
        )
    gap = max(inc.J - lower, 0.0)
    if gap > _tolerance(cfg, inc.J):
        status = NODE_LIMIT
    return MIQPResult(
        z_star=inc.z,
        objective=inc.J,
        gap=gap,
        status=status,
        nodes_explored=stats["nodes"],
        wall_time=wall,
        qp_solves=stats["qp"],
        root_bound=root_bound,
        stages=qp.split(inc.z),
        lower_bound=lower,
        node_bounds=inc.trace,
    )


def assignment_count(prob: MultistageMIQP) -> int:
    count = 2 ** len(prob.free_binaries)
    for _, g in prob.groups:
        count *= len(g)
    return count


def brute_force(prob: MultistageMIQP, limit: int = 10**6, tol: float = 1e-9) -> MIQPResult:
    """Enumerate every group-consistent binary assignment and keep the best QP."""
    t0 = time.perf_counter()
    total = assignment_count(prob)
    if total > limit:
        raise ValueError(f"{total} assignments exceed the enumeration limit {limit}")
    qp = prob.qp
    data = qp.flatten()
    best_J, best_z = np.inf, None
    solves = 0
    group_choices = [list(g) for _, g in prob.groups]
    for pick in itertools.product(*group_choices):
        for bits in itertools.product((-1.0, 1.0), repeat=len(prob.free_binaries)):
            lb, ub = data["lb"].copy(), data["ub"].copy()
            for (_, members), chosen in zip(prob.groups, pick):
                _fix_group(prob, lb, ub, members, chosen)
            for i, v in zip(prob.free_binaries, bits):
                _fix(prob, lb, ub, i, v)
            sol = solve_qp(qp.with_bounds(lb, ub), tol=tol)
            solves += 1
            if sol.status == OPTIMAL and sol.objective < best_J:
                best_J, best_z = sol.objective, sol.z
    wall = time.perf_counter() - t0
    if best_z is None:
        return MIQPResult(None, np.inf, np.inf, INFEASIBLE, solves, wall, solves)
    return MIQPResult(best_z, best_J, 0.0, OPTIMAL, solves, wall, solves, stages=qp.split(best_z), lower_bound=best_J)


def is_integral(prob: MultistageMIQP, z) -> bool:
    return bool(np.all(np.isin(z[prob.binaries], (-1.0, 1.0))))


def relative_gap(result: MIQPResult) -> float:
    if not math.isfinite(result.objective):
        return math.inf
    return result.gap / max(abs(result.objective), 1e-12)
