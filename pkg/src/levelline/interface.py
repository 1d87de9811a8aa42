"""Chordal zero-height interface on the hexagonal dual lattice.

The interface of a field with positive boundary values on the plus arc and
negative values on the minus arc is the unique dual-lattice path from the
domain's start point to its end point that keeps positive-height vertices on
its right and negative-height vertices on its left.  The tracer walks
triangle centers, reading one new vertex per step; dead ends are impossible
by parity and are asserted at runtime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError, TieError
from .field import FieldSample, harmonic_extension_given


@dataclass(eq=False)
class InterfacePath:
    """Chordal dual-lattice path with its left/right vertex sets.

    dual_points runs from the domain start point through triangle centers to
    the end point; crossings[k] = (right_vertex, left_vertex) is the primal
    edge crossed between dual_points[k] and dual_points[k+1].
    """

    domain: object
    dual_points: np.ndarray
    crossings: np.ndarray
    right_vertices: np.ndarray
    left_vertices: np.ndarray

    @property
    def n_steps(self):
        return len(self.crossings)

    def to_csv_rows(self):
        for k, z in enumerate(self.dual_points):
            yield k, z.real, z.imag


def _triangle_tables(domain):
    """Edge -> adjacent triangle rows, and triangle centers."""
    cached = domain._cache.get("triangle_tables")
    if cached is not None:
        return cached
    edge_to_tris = {}
    for t, tri in enumerate(domain.triangles):
        for u, v in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            edge_to_tris.setdefault((min(u, v), max(u, v)), []).append(t)
    centers = domain.positions[domain.triangles].mean(axis=1)
    domain._cache["triangle_tables"] = (edge_to_tris, centers)
    return edge_to_tris, centers


def trace_interface(domain, field, max_steps=None):
    """Trace the chordal interface of ``field`` on ``domain``.

    Requires sign-definite boundary arcs (positive on the plus arc, negative
    on the minus arc) and no interior value exactly zero.
    """
    vals = field.values
    cyc_pos = {v: k for k, v in enumerate(domain.boundary_cycle)}
    if not all(vals[v] > 0 for v in domain.arc_plus):
        raise PreconditionError("boundary values on the plus arc must be positive")
    if not all(vals[v] < 0 for v in domain.arc_minus):
        raise PreconditionError("boundary values on the minus arc must be negative")
    interior_vals = vals[domain.interior_indices]
    if np.any(interior_vals == 0.0):
        k = domain.interior_indices[int(np.argmax(interior_vals == 0.0))]
        raise TieError(f"interior vertex {k} has value exactly 0; resample")

    edge_to_tris, centers = _triangle_tables(domain)

    # Entry edge: the boundary edge whose midpoint is the start point, with
    # the first plus-arc vertex on the right of the inward direction.
    p = int(domain.arc_plus[0])
    m = int(domain.arc_minus[-1])
    assert cyc_pos[p] == (cyc_pos[m] + 1) % len(domain.boundary_cycle)
    tri_list = edge_to_tris[(min(p, m), max(p, m))]
    assert len(tri_list) == 1, "start edge must bound exactly one interior triangle"
    tri = tri_list[0]

    limit = max_steps if max_steps is not None else len(domain.triangles) + 2
    dual_points = [domain.start_point]
    crossings = [(p, m)]
    rights, lefts = {p}, {m}
    visited = set()

    for _ in range(limit):
        if tri in visited:
            raise AssertionError("interface revisited a triangle; parity violated")
        visited.add(tri)
        dual_points.append(centers[tri])
        corners = domain.triangles[tri]
        third = int(corners[(corners != p) & (corners != m)][0])
        if vals[third] > 0:
            p, m = third, m
            rights.add(third)
        else:
            p, m = p, third
            lefts.add(third)
        crossings.append((p, m))
        nxt = [t for t in edge_to_tris[(min(p, m), max(p, m))] if t != tri]
        if not nxt:
            # boundary edge: the walk exits the domain here
            exit_mid = 0.5 * (domain.positions[p] + domain.positions[m])
            assert abs(exit_mid - domain.end_point) < 1e-9 * max(domain.scale, 1.0), \
                "interface exited at an unexpected boundary edge"
            dual_points.append(domain.end_point)
            break
        tri = nxt[0]
    else:
        raise AssertionError("interface did not terminate; domain inconsistent")

    right_set = rights | set(int(v) for v in domain.arc_plus)
    left_set = lefts | set(int(v) for v in domain.arc_minus)
    return InterfacePath(
        domain=domain,
        dual_points=np.array(dual_points, dtype=complex),
        crossings=np.array(crossings, dtype=int),
        right_vertices=np.array(sorted(right_set), dtype=int),
        left_vertices=np.array(sorted(left_set), dtype=int),
    )


def exploration_set(domain, field, max_steps):
    """Vertices read by the tracer within ``max_steps`` dual steps.

    This is the two-sided hexagon set of the stopped exploration; it contains
    every vertex whose height the truncated walk has inspected.
    """
    path = trace_interface(domain, field, max_steps=max_steps)
    return np.unique(path.crossings)


def interface_vertex_set(path):
    """All vertices adjacent to the path (both sides, arcs included)."""
    return np.union1d(path.right_vertices, path.left_vertices)


def height_gap_statistic(domain, field, path, probe):
    """Difference at ``probe`` between the harmonic interpolation of the
    actual field values on the two-sided interface set and the harmonic
    extension of the snapped +/-lambda values on the same set."""
    sides = interface_vertex_set(path)
    if probe in sides:
        raise DomainError("probe vertex lies on the interface set")
    lam = float(np.max(np.abs(field.boundary_data)))
    h_t = harmonic_extension_given(domain, sides, field.values[sides])
    snapped = np.where(np.isin(sides, path.right_vertices), lam, -lam)
    f_t = harmonic_extension_given(domain, sides, snapped)
    return float(h_t[probe] - f_t[probe])


def height_gap_fields(domain, field, path):
    """Full-vertex arrays (h_T, F_T) used by the gap statistic."""
    sides = interface_vertex_set(path)
    lam = float(np.max(np.abs(field.boundary_data)))
    h_t = harmonic_extension_given(domain, sides, field.values[sides])
    snapped = np.where(np.isin(sides, path.right_vertices), lam, -lam)
    f_t = harmonic_extension_given(domain, sides, snapped)
    return h_t, f_t, sides
