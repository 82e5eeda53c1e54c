"""Planar maps, Hertel-Mehlhorn convex partitioning and hybrid-zonotope feasible sets.

Free space (boundary minus obstacles, noise-restricted regions and elevated
cost regions) is cut into convex cells by bridging holes into the outer ring,
ear-clipping the resulting weakly simple polygon, and then deleting every
inessential diagonal.  Noise and cost regions are partitioned the same way but
kept as separate cells so that they can carry their own engine-power ceiling
or region cost.

Polygon booleans (subtracting the holes from the boundary) are delegated to
shapely; everything after that is implemented here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Polygon
from shapely.geometry.polygon import orient

from .zonoset import HybridZonotope, VPolytope, hybzono_from_vrep

SNAP = 1e-9


class MapError(ValueError):
    """Invalid map geometry."""


# -- small planar helpers --------------------------------------------------------


def signed_area(V) -> float:
    V = np.asarray(V, dtype=float)
    x, y = V[:, 0], V[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def is_convex(V, strict: bool = True) -> bool:
    """Signed cross products of consecutive edges all positive (CCW order)."""
    V = np.asarray(V, dtype=float)
    n = len(V)
    if n < 3:
        return False
    for i in range(n):
        c = _cross(V[i - 1], V[i], V[(i + 1) % n])
        if c < 0 or (strict and c == 0):
            return False
    return True


def _segments_cross(p1, p2, q1, q2) -> bool:
    """Proper or touching intersection of two closed segments."""
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True

    def on_seg(a, b, p, d):
        return d == 0 and min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])

    return on_seg(q1, q2, p1, d1) or on_seg(q1, q2, p2, d2) or on_seg(p1, p2, q1, d3) or on_seg(p1, p2, q2, d4)


def is_simple(V) -> bool:
    """No two non-adjacent edges touch and the ring has non-zero area."""
    V = np.asarray(V, dtype=float)
    n = len(V)
    if n < 3 or abs(signed_area(V)) == 0:
        return False
    for i in range(n):
        a, b = V[i], V[(i + 1) % n]
        if np.array_equal(a, b):
            return False
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if _segments_cross(a, b, V[j], V[(j + 1) % n]):
                return False
    return True


def point_in_polygon(p, V) -> bool:
    """Even-odd ray casting; boundary points may go either way."""
    x, y = p
    V = np.asarray(V, dtype=float)
    inside = False
    n = len(V)
    for i in range(n):
        x1, y1 = V[i]
        x2, y2 = V[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xi > x:
                inside = not inside
    return inside


def point_in_convex(p, V, tol: float = 0.0) -> bool:
    V = np.asarray(V, dtype=float)
    n = len(V)
    for i in range(n):
        a, b = V[i], V[(i + 1) % n]
        edge = b - a
        if _cross(a, b, p) < -tol * np.hypot(*edge):
            return False
    return True


def _ccw(V):
    V = np.asarray(V, dtype=float)
    return V if signed_area(V) > 0 else V[::-1].copy()


# -- map definition --------------------------------------------------------------


@dataclass(frozen=True)
class PolygonMap:
    """Outer boundary plus obstacles, noise-restricted and elevated-cost regions.

    All rings are stored counter-clockwise.  ``cost_regions`` holds
    ``(polygon, cost)`` pairs.
    """

    boundary: np.ndarray
    obstacles: tuple = ()
    noise_regions: tuple = ()
    cost_regions: tuple = ()

    def __post_init__(self):
        boundary = _ccw(self.boundary)
        obstacles = tuple(_ccw(o) for o in self.obstacles)
        noise = tuple(_ccw(o) for o in self.noise_regions)
        costs = tuple((_ccw(p), float(q)) for p, q in self.cost_regions)
        for name, ring in [("boundary", boundary)] + [("obstacle", o) for o in obstacles] + [
            ("noise region", o) for o in noise
        ] + [("cost region", p) for p, _ in costs]:
            if ring.ndim != 2 or ring.shape[1] != 2 or not np.all(np.isfinite(ring)):
                raise MapError(f"invalid polygon: {name} must be a finite list of 2-D vertices")
            if not is_simple(ring):
                raise MapError(f"invalid polygon: {name} is not simple")
        outer = Polygon(boundary)
        shells = [Polygon(o) for o in obstacles + noise] + [Polygon(p) for p, _ in costs]
        for s in shells:
            if not outer.buffer(1e-9).contains(s):
                raise MapError("invalid polygon: region extends outside the boundary")
        for _, q in costs:
            if q < 0:
                raise MapError("region cost must be non-negative")
        obs_u = shapely.unary_union([Polygon(o) for o in obstacles]) if obstacles else Polygon()
        for r in list(noise) + [p for p, _ in costs]:
            if Polygon(r).intersection(obs_u).area > 1e-9:
                raise MapError("noise and cost regions must not overlap obstacles")
        for r in noise:
            for p, _ in costs:
                if Polygon(r).intersection(Polygon(p)).area > 1e-9:
                    raise MapError("noise and cost regions must not overlap")
        object.__setattr__(self, "boundary", boundary)
        object.__setattr__(self, "obstacles", obstacles)
        object.__setattr__(self, "noise_regions", noise)
        object.__setattr__(self, "cost_regions", costs)

    def bbox(self) -> np.ndarray:
        return np.array([self.boundary.min(axis=0), self.boundary.max(axis=0)]).T

    def free_geometry(self):
        holes = [Polygon(o) for o in self.obstacles + self.noise_regions] + [Polygon(p) for p, _ in self.cost_regions]
        geom = Polygon(self.boundary)
        if holes:
            geom = geom.difference(shapely.unary_union(holes))
        return geom

    def free_area(self) -> float:
        return float(self.free_geometry().area)


@dataclass(frozen=True)
class ConvexPartition:
    """Convex cells of the map.

    ``free_cells`` covers the boundary minus obstacles and noise regions (cost
    region cells included); ``noise_cells`` covers the noise regions.
    ``cell_costs`` runs over ``free_cells + noise_cells``.
    """

    free_cells: tuple
    noise_cells: tuple
    cell_costs: np.ndarray

    @property
    def cells(self) -> list:
        return list(self.free_cells) + list(self.noise_cells)

    @property
    def n_cells(self) -> int:
        return len(self.free_cells) + len(self.noise_cells)

    def is_noise(self, i: int) -> bool:
        return i >= len(self.free_cells)

    def locate(self, p, tol: float = 1e-9) -> list:
        """Indices of all cells containing ``p`` (boundaries count)."""
        return [i for i, c in enumerate(self.cells) if point_in_convex(p, c.vertices, tol)]

    def total_area(self) -> float:
        return float(sum(signed_area(c.vertices) for c in self.cells))


# -- triangulation ---------------------------------------------------------------


def bridge_holes(outer, holes) -> np.ndarray:
    """Splice holes into a CCW outer ring through bridge edges.

    Holes are processed by decreasing maximum x; each hole's max-x vertex is
    joined to the nearest ring vertex whose connecting segment crosses no
    edge.  The result is a weakly simple ring with duplicated bridge vertices.
    """
    ring = [tuple(p) for p in _ccw(outer)]
    pending = [[tuple(p) for p in _ccw(h)[::-1]] for h in holes]  # holes clockwise
    pending.sort(key=lambda h: -max(p[0] for p in h))
    for k, hole in enumerate(pending):
        m = max(range(len(hole)), key=lambda i: (hole[i][0], -hole[i][1]))
        M = hole[m]
        edges = [(ring[i], ring[(i + 1) % len(ring)]) for i in range(len(ring))]
        for h in pending[k:]:
            edges += [(h[i], h[(i + 1) % len(h)]) for i in range(len(h))]
        order = sorted(range(len(ring)), key=lambda i: (np.hypot(ring[i][0] - M[0], ring[i][1] - M[1]), i))
        best = None
        for i in order:
            P = ring[i]
            if P == M:
                continue
            if not _bridge_visible(M, P, edges):
                continue
            if not _inside_angle(ring, i, M):
                continue
            best = i
            break
        if best is None:
            raise MapError("could not bridge hole to outer ring")
        rotated = hole[m:] + hole[:m]
        P = ring[best]
        ring = ring[: best + 1] + rotated + [M, P] + ring[best + 1 :]
    return np.array(ring, dtype=float)


def _bridge_visible(M, P, edges) -> bool:
    for a, b in edges:
        if a in (M, P) or b in (M, P):
            # edges incident to an endpoint may only meet at that endpoint
            other = b if a in (M, P) else a
            if a in (M, P) and b in (M, P):
                continue
            if _cross(M, P, other) == 0 and _between(M, P, other):
                return False
            continue
        if _segments_cross(M, P, a, b):
            return False
    return True


def _between(a, b, p) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def _inside_angle(ring, i, M) -> bool:
    """Direction P->M lies inside the interior wedge at ring vertex i."""
    P = ring[i]
    A = ring[i - 1]
    B = ring[(i + 1) % len(ring)]
    if _cross(A, P, B) >= 0:  # convex corner
        return _cross(A, P, M) > 0 and _cross(P, B, M) > 0
    return not (_cross(A, P, M) <= 0 and _cross(P, B, M) <= 0)


def ear_clip(V) -> list:
    """Triangulate a CCW (weakly) simple ring; returns index triples into ``V``."""
    V = np.asarray(V, dtype=float)
    scale = max(float(np.ptp(V[:, 0])), float(np.ptp(V[:, 1])), 1.0)
    eps = 1e-12 * scale * scale
    idx = list(range(len(V)))
    tris = []
    while len(idx) > 3:
        n = len(idx)
        clipped = False
        for j in range(n):
            ia, ib, ic = idx[j - 1], idx[j], idx[(j + 1) % n]
            a, b, c = V[ia], V[ib], V[ic]
            if _cross(a, b, c) <= eps:
                continue
            if _ear_blocked(V, idx, ia, ib, ic):
                continue
            tris.append((ia, ib, ic))
            idx.pop(j)
            clipped = True
            break
        if clipped:
            continue
        # only degenerate (zero-area) corners remain somewhere: drop one
        for j in range(n):
            ia, ib, ic = idx[j - 1], idx[j], idx[(j + 1) % n]
            if abs(_cross(V[ia], V[ib], V[ic])) <= eps:
                idx.pop(j)
                clipped = True
                break
        if not clipped:
            raise MapError("ear clipping failed: polygon is not simple")
    if len(idx) == 3 and _cross(V[idx[0]], V[idx[1]], V[idx[2]]) > eps:
        tris.append(tuple(idx))
    return tris


def _ear_blocked(V, idx, ia, ib, ic) -> bool:
    a, b, c = V[ia], V[ib], V[ic]
    tri = (a, b, c)
    for k in idx:
        if k in (ia, ib, ic):
            continue
        p = V[k]
        if any(p[0] == t[0] and p[1] == t[1] for t in tri):
            continue
        if _cross(a, b, p) >= 0 and _cross(b, c, p) >= 0 and _cross(c, a, p) >= 0:
            return True
    # the new diagonal a-c must not cross the remaining ring
    n = len(idx)
    for j in range(n):
        p, q = V[idx[j]], V[idx[(j + 1) % n]]
        if any(np.array_equal(p, t) or np.array_equal(q, t) for t in (a, c)):
            continue
        if _segments_cross(a, c, p, q):
            return True
    return False


# -- Hertel-Mehlhorn -------------------------------------------------------------


def _snap_key(p):
    return (round(p[0] / SNAP), round(p[1] / SNAP))


def hertel_mehlhorn(V, triangles) -> list:
    """Merge triangles across inessential diagonals; returns CCW vertex arrays."""
    V = np.asarray(V, dtype=float)
    ids, coords = {}, []
    remap = []
    for p in V:
        key = _snap_key(p)
        if key not in ids:
            ids[key] = len(coords)
            coords.append(p)
        remap.append(ids[key])
    coords = np.array(coords)
    scale = max(float(np.ptp(coords[:, 0])), float(np.ptp(coords[:, 1])), 1.0)
    eps = 1e-12 * scale * scale

    polys = {}
    owner = {}
    diagonals = []
    for t, tri in enumerate(triangles):
        cyc = [remap[i] for i in tri]
        polys[t] = cyc
        for k in range(3):
            e = (cyc[k], cyc[(k + 1) % 3])
            if (e[1], e[0]) in owner:
                diagonals.append(e)
            owner[e] = t

    for u, v in diagonals:
        pa = owner.get((u, v))
        pb = owner.get((v, u))
        if pa is None or pb is None or pa == pb:
            continue
        A, B = polys[pa], polys[pb]
        merged = _merge(A, B, u, v)
        if merged is None or not _convex_ids(coords, merged, eps):
            continue
        del polys[pb]
        owner.pop((u, v), None)
        owner.pop((v, u), None)
        polys[pa] = merged
        for k in range(len(merged)):
            owner[(merged[k], merged[(k + 1) % len(merged)])] = pa

    cells = []
    for cyc in polys.values():
        cells.append(_drop_collinear(coords[cyc], eps))
    return cells


def _merge(A, B, u, v):
    """Join A (holding edge u->v) with B (holding v->u) along that edge."""
    ia = next((k for k in range(len(A)) if A[k] == u and A[(k + 1) % len(A)] == v), None)
    ib = next((k for k in range(len(B)) if B[k] == v and B[(k + 1) % len(B)] == u), None)
    if ia is None or ib is None:
        return None
    a_path = [A[(ia + 1 + k) % len(A)] for k in range(len(A))]  # starts at v, ends at u
    b_path = [B[(ib + 1 + k) % len(B)] for k in range(len(B))]  # starts at u, ends at v
    merged = a_path + b_path[1:-1]
    if len(set(merged)) != len(merged):
        return None
    return merged


def _convex_ids(coords, cyc, eps) -> bool:
    n = len(cyc)
    for k in range(n):
        if _cross(coords[cyc[k - 1]], coords[cyc[k]], coords[cyc[(k + 1) % n]]) < -eps:
            return False
    return True


def _drop_collinear(P, eps):
    P = list(P)
    changed = True
    while changed and len(P) > 3:
        changed = False
        for k in range(len(P)):
            if abs(_cross(P[k - 1], P[k], P[(k + 1) % len(P)])) <= eps:
                P.pop(k)
                changed = True
                break
    return np.array(P)


def partition_polygon(outer, holes=()) -> list:
    """Convex cells of one polygon with holes (Hertel-Mehlhorn)."""
    ring = bridge_holes(outer, holes) if len(holes) else _ccw(outer)
    tris = ear_clip(ring)
    area = sum(abs(signed_area(ring[list(t)])) for t in tris)
    expected = abs(signed_area(outer)) - sum(abs(signed_area(h)) for h in holes)
    if abs(area - expected) > 1e-9 * max(1.0, abs(expected)):
        raise MapError("triangulation lost area; polygon is probably not simple")
    return hertel_mehlhorn(ring, tris)


def _pieces(geom):
    if geom.is_empty:
        return []
    if isinstance(geom, Polygon):
        geoms = [geom]
    elif isinstance(geom, MultiPolygon):
        geoms = list(geom.geoms)
    else:
        geoms = [g for g in getattr(geom, "geoms", []) if isinstance(g, Polygon)]
    out = []
    for g in geoms:
        if g.area <= 0:
            continue
        g = orient(g, 1.0)
        outer = np.array(g.exterior.coords)[:-1]
        holes = [np.array(h.coords)[:-1] for h in g.interiors]
        out.append((outer, holes))
    return out


def _partition_geom(geom) -> list:
    cells = []
    for outer, holes in _pieces(geom):
        cells += partition_polygon(outer, holes)
    return cells


def convex_partition(m: PolygonMap) -> ConvexPartition:
    """Convex cells for the free space, cost regions and noise regions of ``m``."""
    free = _partition_geom(m.free_geometry())
    costs = [0.0] * len(free)
    for poly, q in m.cost_regions:
        cells = _partition_geom(Polygon(poly))
        free += cells
        costs += [q] * len(cells)
    noise = []
    if m.noise_regions:
        noise = _partition_geom(shapely.unary_union([Polygon(r) for r in m.noise_regions]))
    costs += [0.0] * len(noise)
    return ConvexPartition(
        tuple(VPolytope(c) for c in free), tuple(VPolytope(c) for c in noise), np.array(costs, dtype=float)
    )


def partition_report(m: PolygonMap, part: ConvexPartition, samples: int = 2000, seed: int = 0) -> dict:
    """Convexity, area conservation and sampled coverage/exclusivity of ``part``.

    Sample points are drawn uniformly in the map's bounding box.  A point in
    the traversable region (boundary minus obstacles) must lie in exactly one
    cell; a point outside it must lie in none.  Points within ``1e-7`` of a
    cell edge are skipped since they legitimately belong to two cells.
    """
    cells = part.cells
    convex = [is_convex(c.vertices, strict=False) for c in cells]
    region = Polygon(m.boundary)
    if m.obstacles:
        region = region.difference(shapely.unary_union([Polygon(o) for o in m.obstacles]))
    expected = float(region.area)
    area = part.total_area()
    rng = np.random.default_rng(seed)
    lo, hi = m.bbox()[:, 0], m.bbox()[:, 1]
    pts = rng.uniform(lo, hi, size=(samples, 2))
    edge_tol = 1e-7 * max(1.0, float(np.max(hi - lo)))
    uncovered = overlapped = stray = checked = 0
    for p in pts:
        inside_strict = [i for i, c in enumerate(cells) if point_in_convex(p, c.vertices, -edge_tol)]
        inside_loose = [i for i, c in enumerate(cells) if point_in_convex(p, c.vertices, edge_tol)]
        if len(inside_strict) != len(inside_loose):
            continue  # on an edge
        checked += 1
        want = region.contains(shapely.Point(p))
        if want and not inside_strict:
            uncovered += 1
        elif len(inside_strict) > 1:
            overlapped += 1
        elif not want and inside_strict:
            stray += 1
    rel = abs(area - expected) / max(expected, 1e-300)
    return dict(
        n_cells=len(cells),
        all_convex=all(convex),
        area=area,
        expected_area=expected,
        area_rel_error=rel,
        samples=checked,
        uncovered=uncovered,
        overlapped=overlapped,
        outside=stray,
        ok=all(convex) and rel <= 1e-6 and uncovered == overlapped == stray == 0,
    )


# -- feasible sets ---------------------------------------------------------------


@dataclass(frozen=True)
class FeasibleMap:
    """Hybrid-zonotope output constraint built from a convex partition."""

    partition: ConvexPartition
    F: HybridZonotope
    region_of_binary: dict = field(default_factory=dict)
    tops: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.F.n

    def region_cost(self, i: int) -> float:
        return float(self.partition.cell_costs[self.region_of_binary[i]])

    def cells_containing(self, y, tol: float = 1e-7) -> list:
        """Cells (by index) whose prism/polygon contains output ``y``."""
        y = np.asarray(y, dtype=float)
        hits = []
        for i in self.partition.locate(y[:2], tol):
            if self.tops is not None and not (-tol <= y[2] <= self.tops[i] + tol):
                continue
            hits.append(i)
        return hits


def build_feasible_set_3d(partition: ConvexPartition, Pe_max: float, P_noise: float) -> FeasibleMap:
    """Extrude free cells to ``Pe in [0, Pe_max]`` and noise cells to ``[0, P_noise]``."""
    if not Pe_max >= P_noise >= 0:
        raise ValueError("need Pe_max >= P_noise >= 0")
    prisms = []
    tops = []
    for i, cell in enumerate(partition.cells):
        top = P_noise if partition.is_noise(i) else Pe_max
        V = cell.vertices
        prisms.append(np.vstack([np.column_stack([V, np.zeros(len(V))]), np.column_stack([V, np.full(len(V), top)])]))
        tops.append(top)
    F = hybzono_from_vrep(prisms)
    return FeasibleMap(partition, F, {i: i for i in range(partition.n_cells)}, np.array(tops))


def build_feasible_set_2d(partition: ConvexPartition) -> FeasibleMap:
    """Union of the cells over position outputs only."""
    if partition.n_cells == 0:
        raise ValueError("partition has no cells")
    F = hybzono_from_vrep([c.vertices for c in partition.cells])
    return FeasibleMap(partition, F, {i: i for i in range(partition.n_cells)})


def export_partition(partition: ConvexPartition) -> str:
    """Plain-text vertex lists, one cell per block."""
    lines = ["# kind index cost", "# x y (one vertex per line), blank line between cells"]
    for i, cell in enumerate(partition.cells):
        kind = "noise" if partition.is_noise(i) else "free"
        lines.append(f"cell {kind} {i} {partition.cell_costs[i]:g}")
        lines += [f"{x:.9g} {y:.9g}" for x, y in cell.vertices]
        lines.append("")
    return "\n".join(lines)
