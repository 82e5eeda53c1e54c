"""Zonotope, constrained zonotope and hybrid zonotope set representations.

All sets are immutable once built. Membership and support queries are decided
with small linear programs (HiGHS through :func:`scipy.optimize.linprog`);
hybrid zonotope membership enumerates binary assignments when that is cheap and
falls back to a MILP otherwise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

LP_TOL = 1e-7
DEDUP_TOL = 1e-9

__all__ = [
    "Zonotope",
    "ConstrainedZonotope",
    "HybridZonotope",
    "VPolytope",
    "SetError",
    "conzono_from_hrep",
    "hybzono_from_vrep",
    "intersect_halfspace",
    "contains_cz",
    "contains_hz",
    "convex_relaxation",
    "bounding_box",
    "support",
]


class SetError(ValueError):
    """Raised for empty/unbounded inputs and failed set queries."""


def _mat(a, rows=None, cols=None):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1 and a.size == 0:
        a = a.reshape(rows or 0, cols or 0)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {a.shape}")
    return a


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Zonotope:
    """``{Gc xi + c : ||xi||_inf <= 1}``."""

    Gc: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        c = _frozen(np.ravel(self.c))
        Gc = _frozen(_mat(self.Gc, c.size, 0))
        if Gc.shape[0] != c.size:
            raise ValueError("Gc row count must equal the dimension of c")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "Gc", Gc)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def ng(self) -> int:
        return self.Gc.shape[1]

    def to_conzono(self) -> ConstrainedZonotope:
        return ConstrainedZonotope(self.Gc, self.c, np.zeros((0, self.ng)), np.zeros(0))


@dataclass(frozen=True)
class ConstrainedZonotope:
    """``{Gc xi + c : ||xi||_inf <= 1, Ac xi = b}``."""

    Gc: np.ndarray
    c: np.ndarray
    Ac: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        c = _frozen(np.ravel(self.c))
        Gc = _frozen(_mat(self.Gc, c.size, 0))
        b = _frozen(np.ravel(self.b))
        Ac = _frozen(_mat(self.Ac, b.size, Gc.shape[1]))
        if Gc.shape[0] != c.size:
            raise ValueError("Gc row count must equal the dimension of c")
        if Ac.shape != (b.size, Gc.shape[1]):
            raise ValueError(f"Ac must be {b.size}x{Gc.shape[1]}, got {Ac.shape}")
        for name, val in (("c", c), ("Gc", Gc), ("b", b), ("Ac", Ac)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def ng(self) -> int:
        return self.Gc.shape[1]

    @property
    def nc(self) -> int:
        return self.b.size

    def __repr__(self):
        return f"ConstrainedZonotope(n={self.n}, ng={self.ng}, nc={self.nc})"


@dataclass(frozen=True)
class HybridZonotope:
    """Constrained zonotope with extra binary factors in ``{-1, 1}``.

    ``binary_groups`` lists index sets over the binary columns; within a group
    exactly one binary is ``+1`` (a one-hot region choice).  ``binary_implies``
    optionally maps a binary column to the continuous columns forced to ``-1``
    whenever that binary is ``-1``; solvers use it to eliminate variables.
    """

    Gc: np.ndarray
    Gb: np.ndarray
    c: np.ndarray
    Ac: np.ndarray
    Ab: np.ndarray
    b: np.ndarray
    binary_groups: tuple = ()
    binary_implies: dict = field(default_factory=dict)

    def __post_init__(self):
        c = _frozen(np.ravel(self.c))
        b = _frozen(np.ravel(self.b))
        Gc = _frozen(_mat(self.Gc, c.size, 0))
        Gb = _frozen(_mat(self.Gb, c.size, 0))
        Ac = _frozen(_mat(self.Ac, b.size, Gc.shape[1]))
        Ab = _frozen(_mat(self.Ab, b.size, Gb.shape[1]))
        if Gc.shape[0] != c.size or Gb.shape[0] != c.size:
            raise ValueError("generator row counts must equal the dimension of c")
        if Ac.shape != (b.size, Gc.shape[1]) or Ab.shape != (b.size, Gb.shape[1]):
            raise ValueError("constraint blocks are inconsistent with generators")
        groups = tuple(tuple(int(i) for i in g) for g in self.binary_groups)
        seen = set()
        for g in groups:
            for i in g:
                if not 0 <= i < Gb.shape[1]:
                    raise ValueError(f"binary index {i} out of range")
                if i in seen:
                    raise ValueError(f"binary index {i} appears in more than one group")
                seen.add(i)
        implies = {int(k): tuple(int(j) for j in v) for k, v in dict(self.binary_implies).items()}
        for name, val in (("c", c), ("b", b), ("Gc", Gc), ("Gb", Gb), ("Ac", Ac), ("Ab", Ab)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "binary_groups", groups)
        object.__setattr__(self, "binary_implies", implies)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def ng(self) -> int:
        return self.Gc.shape[1]

    @property
    def nb(self) -> int:
        return self.Gb.shape[1]

    @property
    def nc(self) -> int:
        return self.b.size

    def __repr__(self):
        return f"HybridZonotope(n={self.n}, ng={self.ng}, nb={self.nb}, nc={self.nc})"


@dataclass(frozen=True)
class VPolytope:
    """Convex hull of a finite vertex list."""

    vertices: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if V.shape[0] == 0:
            raise ValueError("VPolytope needs at least one vertex")
        if not np.all(np.isfinite(V)):
            raise ValueError("VPolytope vertices must be finite")
        object.__setattr__(self, "vertices", _frozen(_dedup_rows(V, DEDUP_TOL)))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]


def _dedup_rows(V, tol):
    keep = []
    for v in V:
        if not any(np.max(np.abs(v - k)) <= tol for k in keep):
            keep.append(v)
    return np.array(keep)


# -- LP helpers ----------------------------------------------------------------


def _linprog(cost, A_eq, b_eq, bounds):
    res = linprog(
        cost,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=b_eq if A_eq.shape[0] else None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": LP_TOL, "dual_feasibility_tolerance": LP_TOL},
    )
    return res


def support(Z: ConstrainedZonotope, d) -> float:
    """Support value ``max {d'x : x in Z}``."""
    d = np.asarray(d, dtype=float)
    res = _linprog(-(d @ Z.Gc), Z.Ac, Z.b, [(-1.0, 1.0)] * Z.ng)
    if res.status == 2:
        raise SetError("empty")
    if res.status != 0:
        raise SetError(f"support LP failed: {res.message}")
    return float(-res.fun + d @ Z.c)


def bounding_box(Z: ConstrainedZonotope) -> np.ndarray:
    """Tight interval hull as an ``(n, 2)`` array of ``[lo, hi]`` rows (2n LPs)."""
    box = np.empty((Z.n, 2))
    for i in range(Z.n):
        e = np.zeros(Z.n)
        e[i] = 1.0
        box[i, 1] = support(Z, e)
        box[i, 0] = -support(Z, -e)
    return box


def contains_cz(Z: ConstrainedZonotope, x, tol: float = 1e-7) -> bool:
    """Membership with an inf-norm slack ``tol`` on the point, decided by an LP."""
    x = np.ravel(np.asarray(x, dtype=float))
    if x.size != Z.n:
        raise ValueError(f"point has dimension {x.size}, set has {Z.n}")
    return _feasible(Z.Gc, Z.c, Z.Ac, Z.b, x, tol)


def _feasible(G, c, A, b, x, tol):
    n, ng = G.shape
    # variables: xi (ng) then one slack t; |G xi + c - x| <= t, minimise t
    cost = np.zeros(ng + 1)
    cost[-1] = 1.0
    A_ub = np.block([[G, -np.ones((n, 1))], [-G, -np.ones((n, 1))]])
    b_ub = np.concatenate([x - c, c - x])
    A_eq = np.hstack([A, np.zeros((A.shape[0], 1))])
    res = linprog(
        cost,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq if A.shape[0] else None,
        b_eq=b if A.shape[0] else None,
        bounds=[(-1.0, 1.0)] * ng + [(0.0, None)],
        method="highs",
        options={"primal_feasibility_tolerance": LP_TOL, "dual_feasibility_tolerance": LP_TOL},
    )
    if res.status == 2:
        return False
    if res.status != 0:
        raise SetError(f"membership LP failed: {res.message}")
    return bool(res.fun <= tol)


def _binary_assignments(Z: HybridZonotope):
    """Yield binary vectors consistent with the one-hot groups."""
    grouped = {i for g in Z.binary_groups for i in g}
    free = [i for i in range(Z.nb) if i not in grouped]
    choices = [list(g) for g in Z.binary_groups if g]
    for pick in itertools.product(*choices):
        for bits in itertools.product((-1.0, 1.0), repeat=len(free)):
            xb = -np.ones(Z.nb)
            xb[list(pick)] = 1.0
            xb[free] = bits
            yield xb


def _assignment_count(Z: HybridZonotope) -> int:
    grouped = sum(len(g) for g in Z.binary_groups)
    count = 2 ** (Z.nb - grouped)
    for g in Z.binary_groups:
        count *= max(len(g), 1)
    return count


def contains_hz(Z: HybridZonotope, x, tol: float = 1e-7, max_enum: int = 4096) -> bool:
    """Membership in a hybrid zonotope.

    Enumerates group-consistent binary assignments (one LP each) when there
    are at most ``max_enum`` of them; otherwise solves a single MILP.
    """
    x = np.ravel(np.asarray(x, dtype=float))
    if x.size != Z.n:
        raise ValueError(f"point has dimension {x.size}, set has {Z.n}")
    if _assignment_count(Z) <= max_enum:
        for xb in _binary_assignments(Z):
            if _feasible(Z.Gc, Z.c + Z.Gb @ xb, Z.Ac, Z.b - Z.Ab @ xb, x, tol):
                return True
        return False
    return _contains_hz_milp(Z, x, tol)


def _contains_hz_milp(Z, x, tol):
    n, ng, nb = Z.n, Z.ng, Z.nb
    # binaries as d in {0,1}: xi_b = 2 d - 1
    G = np.hstack([Z.Gc, 2 * Z.Gb, np.zeros((n, 1))])
    c = Z.c - Z.Gb.sum(axis=1)
    A = np.hstack([Z.Ac, 2 * Z.Ab, np.zeros((Z.nc, 1))])
    b = Z.b + Z.Ab.sum(axis=1)
    cost = np.zeros(ng + nb + 1)
    cost[-1] = 1.0
    t = np.zeros((n, 1))
    t[:] = -1.0
    rows = [
        LinearConstraint(np.hstack([G[:, :-1], t]), -np.inf, x - c),
        LinearConstraint(np.hstack([-G[:, :-1], t]), -np.inf, c - x),
    ]
    if Z.nc:
        rows.append(LinearConstraint(A, b, b))
    for g in Z.binary_groups:
        row = np.zeros(ng + nb + 1)
        row[[ng + i for i in g]] = 1.0
        rows.append(LinearConstraint(row, 1.0, 1.0))
    lb = np.concatenate([-np.ones(ng), np.zeros(nb), [0.0]])
    ub = np.concatenate([np.ones(ng), np.ones(nb), [np.inf]])
    integrality = np.concatenate([np.zeros(ng), np.ones(nb), [0]])
    res = milp(cost, constraints=rows, integrality=integrality, bounds=Bounds(lb, ub))
    if res.status == 2:
        return False
    if res.status != 0:
        raise SetError(f"membership MILP failed: {res.message}")
    return bool(res.fun <= tol)


# -- constructions -------------------------------------------------------------


def conzono_from_hrep(H, f) -> ConstrainedZonotope:
    """Constrained zonotope equal to ``{x : H x <= f}``.

    The polytope's interval hull (2n support LPs) supplies the generator box;
    each inequality row then gets one slack factor and one equality constraint.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    f = np.ravel(np.asarray(f, dtype=float))
    m, n = H.shape
    box = np.empty((n, 2))
    for i in range(n):
        for j, sgn in enumerate((1.0, -1.0)):
            res = linprog(
                sgn * np.eye(n)[i],
                A_ub=H,
                b_ub=f,
                bounds=[(None, None)] * n,
                method="highs",
            )
            if res.status == 2:
                raise SetError("empty")
            if res.status == 3:
                raise SetError("unbounded")
            if res.status != 0:
                raise SetError(f"bounding LP failed: {res.message}")
            box[i, j] = sgn * res.fun
    lo, hi = box[:, 0], box[:, 1]
    cen = (lo + hi) / 2
    half = (hi - lo) / 2
    # slack s_j = f_j - H_j x ranges over [0, sigma_j] on the box
    Hx_min = H @ cen - np.abs(H) @ half
    sigma = f - Hx_min
    Gc = np.hstack([np.diag(half), np.zeros((n, m))])
    Ac = np.hstack([H @ np.diag(half), np.diag(sigma / 2)])
    b = f - H @ cen - sigma / 2
    return ConstrainedZonotope(Gc, cen, Ac, b)


def intersect_halfspace(Z: ConstrainedZonotope, a, beta: float) -> ConstrainedZonotope:
    """``Z`` intersected with ``{x : a'x <= beta}``; adds one factor and one constraint."""
    a = np.ravel(np.asarray(a, dtype=float))
    if not np.any(a):
        raise ValueError("halfspace normal must be non-zero")
    lo = -support(Z, -a)
    dm = beta - lo
    Gc = np.hstack([Z.Gc, np.zeros((Z.n, 1))])
    Ac = np.block([[Z.Ac, np.zeros((Z.nc, 1))], [(a @ Z.Gc)[None, :], np.array([[dm / 2]])]])
    b = np.concatenate([Z.b, [beta - a @ Z.c - dm / 2]])
    return ConstrainedZonotope(Gc, Z.c, Ac, b)


def cartesian(*sets: ConstrainedZonotope) -> ConstrainedZonotope:
    """Cartesian product of constrained zonotopes (block-diagonal stacking)."""
    from scipy.linalg import block_diag

    Gc = block_diag(*[Z.Gc for Z in sets])
    c = np.concatenate([Z.c for Z in sets])
    Ac = block_diag(*[Z.Ac if Z.nc else np.zeros((0, Z.ng)) for Z in sets])
    Ac = np.asarray(Ac).reshape(sum(Z.nc for Z in sets), sum(Z.ng for Z in sets))
    b = np.concatenate([Z.b for Z in sets])
    return ConstrainedZonotope(Gc, c, Ac, b)


def interval_set(lo, hi) -> ConstrainedZonotope:
    """Axis-aligned box as a constrained zonotope with no equality constraints."""
    lo = np.ravel(np.asarray(lo, dtype=float))
    hi = np.ravel(np.asarray(hi, dtype=float))
    if np.any(hi < lo):
        raise SetError("empty interval")
    return ConstrainedZonotope(np.diag((hi - lo) / 2), (hi + lo) / 2, np.zeros((0, lo.size)), np.zeros(0))


def hybzono_from_vrep(polys) -> HybridZonotope:
    """Hybrid zonotope of the union of convex hulls ``conv(polys[i])``.

    Each (polytope, vertex) pair gets a continuous weight ``lam`` and each
    polytope a selector ``d``, both mapped from ``[0, 1]`` to ``[-1, 1]``:

        x = sum_ij lam_ij v_ij,   sum_j lam_ij = d_i,   sum_i d_i = 1.

    Relaxing ``d`` to ``[0, 1]`` turns the weights into an arbitrary convex
    combination of all vertices, so the convex relaxation is the convex hull
    of the union.
    """
    polys = [p if isinstance(p, VPolytope) else VPolytope(p) for p in polys]
    if not polys:
        raise ValueError("need at least one polytope")
    n = polys[0].dim
    if any(p.dim != n for p in polys):
        raise ValueError("dimension mismatch between polytopes")
    V = np.vstack([p.vertices for p in polys]).T  # n x nv
    nv = V.shape[1]
    npoly = len(polys)
    Gc = V / 2
    c = V.sum(axis=1) / 2
    Gb = np.zeros((n, npoly))
    Ac = np.zeros((npoly + 1, nv))
    Ab = np.zeros((npoly + 1, npoly))
    b = np.zeros(npoly + 1)
    implies = {}
    col = 0
    for i, p in enumerate(polys):
        k = p.vertices.shape[0]
        Ac[i, col : col + k] = 0.5
        Ab[i, i] = -0.5
        b[i] = -k / 2 + 0.5
        implies[i] = tuple(range(col, col + k))
        col += k
    Ab[npoly, :] = 0.5
    b[npoly] = 1 - npoly / 2
    return HybridZonotope(Gc, Gb, c, Ac, Ab, b, binary_groups=(tuple(range(npoly)),), binary_implies=implies)


def convex_relaxation(Z: HybridZonotope) -> ConstrainedZonotope:
    """Treat the binary factors as continuous factors in ``[-1, 1]``."""
    return ConstrainedZonotope(np.hstack([Z.Gc, Z.Gb]), Z.c, np.hstack([Z.Ac, Z.Ab]), Z.b)
