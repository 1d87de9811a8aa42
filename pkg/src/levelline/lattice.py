"""Triangular-lattice domains with two marked boundary arcs.

Vertices live on the unit triangular grid, i.e. the integer span of 1 and
omega = exp(i*pi/3).  A domain is a simply connected union of unit triangles
whose boundary is a simple closed lattice polygon.  The boundary is split
into a "plus" arc and a "minus" arc meeting at two edge midpoints; the
chordal interface of a field with positive values on the plus arc and
negative values on the minus arc runs between those midpoints on the
hexagonal dual lattice.

Positions may carry an overall scale and a real offset (positions =
scale*((a+oa) + (b+ob)*omega)); the graph structure is independent of both.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidSizeError

OMEGA = complex(0.5, np.sqrt(3.0) / 2.0)  # exp(i*pi/3)

# Axial offsets of the six lattice neighbours of (a, b).
NEIGHBOR_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))

# Dirichlet conductance per edge incident to an interior vertex: the energy of
# a piecewise-affine function on unit equilateral triangles is
# sum_T (1/(2*sqrt(3))) * sum_{edges of T} (df)^2, and every edge with an
# interior endpoint bounds two triangles.
DEFAULT_EDGE_WEIGHT = 1.0 / np.sqrt(3.0)


def axial_position(a, b, scale=1.0, offset=(0.0, 0.0)):
    """Planar position of axial coordinates (a, b)."""
    return scale * ((np.asarray(a) + offset[0]) + (np.asarray(b) + offset[1]) * OMEGA)


@dataclass(eq=False)
class TgDomain:
    """A triangular-grid domain with marked boundary arcs.

    Attributes
    ----------
    coords : (n, 2) int array
        Axial coordinates of the vertices (closure of the domain).
    positions : (n,) complex array
        Planar positions, scale*((a+oa) + (b+ob)*omega).
    interior : (n,) bool array
        True for vertices strictly inside the domain.
    neighbors : list of int arrays
        Lattice neighbours (indices) present in the vertex set, per vertex.
    edges : (m, 2) int array
        Every lattice edge with both endpoints in the vertex set.
    triangles : (k, 3) int array
        Unit triangles contained in the closed domain.
    boundary_cycle : (L,) int array
        Boundary vertices in counterclockwise order.
    arc_plus, arc_minus : int arrays
        Indices of the two complementary boundary arcs, each in cycle order.
    start_point, end_point : complex
        Midpoints of the two boundary edges where the arcs meet; the chordal
        interface runs from start_point (plus arc on its right) to end_point.
    edge_weight : float
        Dirichlet conductance per interior-touching edge.
    """

    coords: np.ndarray
    positions: np.ndarray
    interior: np.ndarray
    neighbors: list
    edges: np.ndarray
    triangles: np.ndarray
    boundary_cycle: np.ndarray
    arc_plus: np.ndarray
    arc_minus: np.ndarray
    start_point: complex
    end_point: complex
    edge_weight: float = DEFAULT_EDGE_WEIGHT
    scale: float = 1.0
    offset: tuple = (0.0, 0.0)
    _index: dict = field(default_factory=dict, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self):
        return len(self.coords)

    @property
    def interior_indices(self):
        return np.flatnonzero(self.interior)

    @property
    def boundary_indices(self):
        return np.flatnonzero(~self.interior)

    def vertex_index(self, a, b):
        """Index of the vertex with axial coordinates (a, b)."""
        try:
            return self._index[(int(a), int(b))]
        except KeyError:
            raise DomainError(f"no vertex at axial coordinates ({a}, {b})") from None

    def boundary_polygon(self):
        """Closed boundary polyline (positions, first point repeated last)."""
        cyc = self.positions[self.boundary_cycle]
        return np.append(cyc, cyc[0])

    def contains(self, z, include_boundary=True):
        """Point-in-domain test against the boundary polygon."""
        inside = points_in_polygon(np.atleast_1d(np.asarray(z, dtype=complex)),
                                   self.positions[self.boundary_cycle])
        if include_boundary:
            d = distance_to_polyline(np.atleast_1d(np.asarray(z, dtype=complex)),
                                     self.boundary_polygon())
            inside = inside | (d <= 1e-12 * max(self.scale, 1.0))
        return inside if np.ndim(z) else bool(inside[0])

    def to_json(self):
        """Serializable description (vertex list, arcs, endpoints)."""
        return {
            "coords": self.coords.tolist(),
            "scale": self.scale,
            "offset": list(self.offset),
            "edge_weight": self.edge_weight,
            "boundary_cycle": self.boundary_cycle.tolist(),
            "arc_plus": self.arc_plus.tolist(),
            "arc_minus": self.arc_minus.tolist(),
            "start_point": [self.start_point.real, self.start_point.imag],
            "end_point": [self.end_point.real, self.end_point.imag],
        }

    def dumps(self):
        return json.dumps(self.to_json())


@dataclass(eq=False)
class DualPathGraph:
    """Hexagonal dual edges of a TgDomain.

    Each dual edge crosses exactly one primal lattice edge and joins the two
    adjacent triangle centers.  ``crossed`` holds the primal endpoints of the
    crossed edge as vertex indices, -1 marking a lattice point outside the
    closed domain.
    """

    domain: TgDomain
    dual_points: np.ndarray   # (m, 2) complex, centers of the two triangles
    crossed: np.ndarray       # (m, 2) int, primal endpoints (-1 = outside)
    midpoints: np.ndarray     # (m,) complex, midpoint of the crossed edge

    @property
    def n_edges(self):
        return len(self.crossed)


def _triangle_families(coord_set):
    """Yield triangles (as axial coordinate triples) with all corners in coord_set."""
    tris = []
    for (a, b) in coord_set:
        up = ((a, b), (a + 1, b), (a, b + 1))
        dn = ((a + 1, b), (a, b + 1), (a + 1, b + 1))
        for tri in (up, dn):
            if all(c in coord_set for c in tri):
                tris.append(tri)
    return tris


def _build_domain(coord_list, boundary_cycle_coords, split_corner_positions,
                  scale=1.0, offset=(0.0, 0.0), edge_weight=DEFAULT_EDGE_WEIGHT):
    """Assemble a TgDomain from axial coordinates and a boundary walk.

    split_corner_positions is a pair (i, j) of indices into the boundary cycle:
    the plus arc is cycle[i:j], the minus arc cycle[j:] + cycle[:i], and the
    arc endpoints are the midpoints of edges (cycle[i-1], cycle[i]) and
    (cycle[j-1], cycle[j]).
    """
    coords = np.array(sorted(coord_list), dtype=int)
    index = {tuple(c): k for k, c in enumerate(coords)}
    n = len(coords)

    neighbors = []
    for a, b in coords:
        nbr = [index[(a + da, b + db)] for da, db in NEIGHBOR_OFFSETS
               if (a + da, b + db) in index]
        neighbors.append(np.array(sorted(nbr), dtype=int))

    boundary_set = {tuple(c) for c in boundary_cycle_coords}
    interior = np.array([tuple(c) not in boundary_set for c in coords], dtype=bool)

    edges = set()
    for k, (a, b) in enumerate(coords):
        for da, db in NEIGHBOR_OFFSETS:
            j = index.get((a + da, b + db))
            if j is not None:
                edges.add((min(k, j), max(k, j)))
    edges = np.array(sorted(edges), dtype=int)

    tris = _triangle_families(set(index))
    triangles = np.array([[index[c] for c in tri] for tri in tris], dtype=int)

    positions = axial_position(coords[:, 0], coords[:, 1], scale, offset)
    cycle = np.array([index[tuple(c)] for c in boundary_cycle_coords], dtype=int)

    i, j = split_corner_positions
    plus = cycle[i:j]
    minus = np.concatenate([cycle[j:], cycle[:i]])
    start_point = 0.5 * (positions[cycle[i - 1]] + positions[cycle[i]])
    end_point = 0.5 * (positions[cycle[j - 1]] + positions[cycle[j % len(cycle)]])

    return TgDomain(
        coords=coords, positions=positions, interior=interior,
        neighbors=neighbors, edges=edges, triangles=triangles,
        boundary_cycle=cycle, arc_plus=plus, arc_minus=minus,
        start_point=complex(start_point), end_point=complex(end_point),
        edge_weight=edge_weight, scale=scale, offset=tuple(offset),
        _index=index,
    )


def build_rhombus_domain(side_n, split_fraction=0.5, scale=1.0):
    """Rhombus of side_n lattice units spanned by 1 and omega.

    The boundary is split into two arcs at the corner at axial (0, 0) and at
    the boundary corner nearest ``split_fraction`` of the way around the
    cycle; split_fraction=1/2 gives opposite corners.  The plus arc starts at
    (0, 0) and runs counterclockwise (through the side along the real axis).
    """
    if side_n < 2:
        raise InvalidSizeError(f"side_n must be >= 2, got {side_n}")
    if not 0.0 < split_fraction < 1.0:
        raise InvalidSizeError(f"split_fraction must lie in (0, 1), got {split_fraction}")

    n = int(side_n)
    coord_list = [(a, b) for a in range(n + 1) for b in range(n + 1)]

    cycle = []
    cycle += [(a, 0) for a in range(n)]          # bottom side
    cycle += [(n, b) for b in range(n)]          # right side
    cycle += [(a, n) for a in range(n, 0, -1)]   # top side
    cycle += [(0, b) for b in range(n, 0, -1)]   # left side

    # Second split corner: nearest corner to split_fraction along the cycle.
    corner = int(np.clip(round(split_fraction * 4), 1, 3))
    return _build_domain(coord_list, cycle, (0, corner * n), scale=scale)


def build_parallelogram_domain(na, nb, scale=1.0, center_start=True):
    """Parallelogram spanned by na*1 and nb*omega, for half-plane boxes.

    With center_start=True the positions are offset so that the midpoint of a
    bottom boundary edge sits exactly at the origin: the chordal start point
    is 0, the bottom-right boundary belongs to the plus arc and the
    bottom-left to the minus arc (matching a field with positive heights on
    the right of a curve started at 0).
    """
    if na < 2 or nb < 2:
        raise InvalidSizeError("parallelogram sides must be >= 2")
    na, nb = int(na), int(nb)
    coord_list = [(a, b) for a in range(na + 1) for b in range(nb + 1)]

    cycle = []
    cycle += [(a, 0) for a in range(na)]
    cycle += [(na, b) for b in range(nb)]
    cycle += [(a, nb) for a in range(na, 0, -1)]
    cycle += [(0, b) for b in range(nb, 0, -1)]

    half = na // 2
    offset = (-(half - 0.5), 0.0) if center_start else (0.0, 0.0)
    # Plus arc from the bottom vertex at +0.5 around through the right side to
    # the top; minus arc covers the rest.  Split the far end at the middle of
    # the top side.
    i = half
    j = na + nb + (na - na // 2)
    dom = _build_domain(coord_list, cycle, (i, j), scale=scale, offset=offset)
    return dom


def inradius(domain, center):
    """Distance from ``center`` to the complement of the domain.

    Equals the minimum distance to the boundary polygon for interior points;
    raises DomainError for points outside the closed domain.
    """
    z = complex(center)
    poly = domain.boundary_polygon()
    d = float(distance_to_polyline(np.array([z]), poly)[0])
    inside = points_in_polygon(np.array([z]), domain.positions[domain.boundary_cycle])[0]
    if not inside and d > 1e-12 * max(domain.scale, 1.0):
        raise DomainError(f"center {z} lies outside the domain")
    return 0.0 if not inside else d


def dual_graph(domain):
    """Hexagonal dual edges: one per primal edge with an endpoint in the closure.

    Dual endpoints are the centers of the two triangles adjacent to the
    crossed primal edge (centers outside the domain are still well defined as
    lattice points).
    """
    index = domain._index
    seen = set()
    crossed, centers, mids = [], [], []
    for k, (a, b) in enumerate(domain.coords):
        for da, db in NEIGHBOR_OFFSETS:
            other = (a + da, b + db)
            j = index.get(other, -1)
            key = (min((a, b), other), max((a, b), other))
            if key in seen:
                continue
            seen.add(key)
            # The two triangles adjacent to edge {(a,b), other} have third
            # corners at the two common neighbours of the endpoints.
            thirds = _common_neighbors((a, b), other)
            pa = axial_position(a, b, domain.scale, domain.offset)
            pb = axial_position(other[0], other[1], domain.scale, domain.offset)
            cpos = [(pa + pb + axial_position(t[0], t[1], domain.scale, domain.offset)) / 3.0
                    for t in thirds]
            crossed.append((k, j))
            centers.append(cpos)
            mids.append((pa + pb) / 2.0)
    return DualPathGraph(
        domain=domain,
        dual_points=np.array(centers, dtype=complex),
        crossed=np.array(crossed, dtype=int),
        midpoints=np.array(mids, dtype=complex),
    )


def _common_neighbors(u, v):
    """The two lattice points completing triangles on edge (u, v)."""
    nu = {(u[0] + da, u[1] + db) for da, db in NEIGHBOR_OFFSETS}
    nv = {(v[0] + da, v[1] + db) for da, db in NEIGHBOR_OFFSETS}
    both = sorted(nu & nv)
    assert len(both) == 2, "triangular lattice edge must bound exactly two triangles"
    return both


def points_in_polygon(points, polygon_vertices):
    """Even-odd ray-casting test, vectorized over ``points``.

    polygon_vertices: complex array of the closed polygon's corners (no
    repeated endpoint needed).
    """
    z = np.asarray(points, dtype=complex)
    px, py = z.real, z.imag
    vx = np.asarray(polygon_vertices).real
    vy = np.asarray(polygon_vertices).imag
    n = len(vx)
    inside = np.zeros(z.shape, dtype=bool)
    j = n - 1
    for i in range(n):
        cond = (vy[i] > py) != (vy[j] > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (vx[j] - vx[i]) * (py - vy[i]) / (vy[j] - vy[i]) + vx[i]
        inside ^= cond & (px < xint)
        j = i
    return inside


def distance_to_polyline(points, polyline):
    """Euclidean distance from each point to an open polyline, vectorized."""
    z = np.asarray(points, dtype=complex)[:, None]
    a = np.asarray(polyline, dtype=complex)[None, :-1]
    b = np.asarray(polyline, dtype=complex)[None, 1:]
    ab = b - a
    denom = np.abs(ab) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip(((z - a) * np.conj(ab)).real / np.where(denom == 0, 1.0, denom), 0.0, 1.0)
    proj = a + t * ab
    return np.abs(z - proj).min(axis=1)


def validate_domain(domain):
    """Check the structural invariants; raises AssertionError on violation."""
    cyc = domain.boundary_cycle
    assert len(set(cyc.tolist())) == len(cyc), "boundary walk revisits a vertex"
    # consecutive boundary vertices are lattice neighbours
    for k in range(len(cyc)):
        u, v = cyc[k], cyc[(k + 1) % len(cyc)]
        assert v in domain.neighbors[u], "boundary cycle is not an edge walk"
    plus = set(domain.arc_plus.tolist())
    minus = set(domain.arc_minus.tolist())
    assert plus and minus, "arcs must be nonempty"
    assert not (plus & minus), "arcs overlap"
    assert plus | minus == set(cyc.tolist()), "arcs do not cover the boundary"
    assert domain.start_point != domain.end_point
    for k in domain.interior_indices:
        assert len(domain.neighbors[k]) == 6, "interior vertex missing lattice neighbours"
    assert domain.edge_weight > 0
    return True
