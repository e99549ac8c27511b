"""Triangle control meshes, adjacency, and barycentric walking.

A surface coordinate ``(patch, v, w)`` addresses the point
``(1-v-w)*V1 + v*V2 + w*V3`` of triangle ``patch``, where ``V1, V2, V3``
are the triangle's vertices in storage order.  Correspondence updates are
2-vectors in the ``(v, w)`` domain of the current patch; applying one may
cross into adjacent patches, which is handled by :func:`walk`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Slack tolerated on barycentric-domain bounds before a coordinate is rejected.
COORD_SLACK = 1e-12

# Domain positions of the three triangle corners (storage order).
CORNER_UV = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

# Unit normals of the three domain edges, pointing into the triangle interior.
# Edge e runs from corner e to corner (e+1) % 3.
_EDGE_INWARD = np.array([
    [0.0, 1.0],
    [-np.sqrt(0.5), -np.sqrt(0.5)],
    [1.0, 0.0],
])

BOUNDARY = -1


class MeshError(Exception):
    """Invalid mesh topology or geometry."""


class NonManifoldEdgeError(MeshError):
    """An edge is shared by more than two triangles."""

    def __init__(self, v0: int, v1: int, triangles: list[int]):
        self.edge = (v0, v1)
        self.triangles = triangles
        super().__init__(
            f"edge ({v0}, {v1}) is shared by {len(triangles)} triangles "
            f"{triangles}; at most two are allowed"
        )


@dataclass(frozen=True)
class SurfaceCoordinate:
    """A point on a triangulated surface: patch index plus barycentric pair.

    ``v`` and ``w`` are clamped into ``v >= 0, w >= 0, v + w <= 1``;
    violations beyond ``COORD_SLACK`` raise ``ValueError``.
    """

    patch: int
    v: float
    w: float

    def __post_init__(self):
        v, w = float(self.v), float(self.w)
        if v < -COORD_SLACK or w < -COORD_SLACK or v + w > 1.0 + COORD_SLACK:
            raise ValueError(f"barycentric pair ({v}, {w}) outside the unit triangle")
        v = min(max(v, 0.0), 1.0)
        w = min(max(w, 0.0), 1.0)
        if v + w > 1.0:
            s = v + w
            v, w = v / s, w / s
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)

    @property
    def vw(self) -> np.ndarray:
        return np.array([self.v, self.w])


def build_adjacency(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Build the symmetric edge adjacency of a manifold-with-boundary triangle list.

    Returns ``(adj_tri, adj_edge)``, both of shape ``(T, 3)``: entry ``[t, e]``
    names the triangle/local-edge across edge ``e`` of triangle ``t``, or
    ``BOUNDARY`` for boundary edges.  Raises :class:`NonManifoldEdgeError` if
    any edge is shared by more than two triangles.
    """
    triangles = np.asarray(triangles, dtype=np.int64)
    ntri = len(triangles)
    incident: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for t in range(ntri):
        tri = triangles[t]
        for e in range(3):
            a, b = int(tri[e]), int(tri[(e + 1) % 3])
            key = (a, b) if a < b else (b, a)
            incident.setdefault(key, []).append((t, e))

    adj_tri = np.full((ntri, 3), BOUNDARY, dtype=np.int64)
    adj_edge = np.full((ntri, 3), BOUNDARY, dtype=np.int64)
    for (a, b), users in incident.items():
        if len(users) > 2:
            raise NonManifoldEdgeError(a, b, [t for t, _ in users])
        if len(users) == 2:
            (t0, e0), (t1, e1) = users
            adj_tri[t0, e0], adj_edge[t0, e0] = t1, e1
            adj_tri[t1, e1], adj_edge[t1, e1] = t0, e0
    return adj_tri, adj_edge


@dataclass
class ControlMesh:
    """Vertex positions and unit normals with a fixed triangulation.

    Immutable after construction (arrays are set read-only), so instances can
    be shared freely across threads and processes.
    """

    vertex_positions: np.ndarray
    vertex_normals: np.ndarray
    triangles: np.ndarray
    adj_tri: np.ndarray = field(init=False)
    adj_edge: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertex_positions = np.ascontiguousarray(self.vertex_positions, dtype=np.float64)
        self.vertex_normals = np.ascontiguousarray(self.vertex_normals, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if self.vertex_positions.shape != (len(self.vertex_positions), 3):
            raise MeshError("vertex_positions must be (N, 3)")
        if self.vertex_normals.shape != self.vertex_positions.shape:
            raise MeshError("vertex_normals must match vertex_positions")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be (T, 3)")
        nvert = len(self.vertex_positions)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= nvert):
            raise MeshError("triangle index out of range")
        norms = np.linalg.norm(self.vertex_normals, axis=1)
        bad = np.abs(norms - 1.0) > 1e-9
        if bad.any():
            raise MeshError(f"vertex normal {int(np.argmax(bad))} is not unit length")
        areas = self.triangle_areas()
        if (areas <= 0.0).any():
            raise MeshError(f"degenerate triangle {int(np.argmin(areas))} (zero area)")
        self.adj_tri, self.adj_edge = build_adjacency(self.triangles)
        for a in (self.vertex_positions, self.vertex_normals, self.triangles,
                  self.adj_tri, self.adj_edge):
            a.setflags(write=False)

    @property
    def edge_adjacency(self) -> dict:
        """Mapping ``(triangle, local_edge) -> (neighbor, neighbor_edge) | None``."""
        out = {}
        for t in range(len(self.triangles)):
            for e in range(3):
                q, f = int(self.adj_tri[t, e]), int(self.adj_edge[t, e])
                out[(t, e)] = None if q == BOUNDARY else (q, f)
        return out

    @property
    def walk_table(self) -> list:
        """Per-(triangle, edge) crossing data for the scalar walking fast path.

        Entry ``[t][e]`` is ``None`` on boundary edges, else a flat tuple
        ``(q, m00, m01, m10, m11, apx, apy, epx, epy, inv_len2, aqx, aqy,
        eqx, eqy)``: the neighbor index, the orthogonal direction remap, and
        the shared-edge point correspondence in both domains.
        """
        if not hasattr(self, "_walk_table"):
            table = []
            for t in range(len(self.triangles)):
                row = []
                for e in range(3):
                    q = int(self.adj_tri[t, e])
                    if q == BOUNDARY:
                        row.append(None)
                        continue
                    m1 = int(self.triangles[t, e])
                    m2 = int(self.triangles[t, (e + 1) % 3])
                    tri_q = self.triangles[q]
                    s1 = int(np.nonzero(tri_q == m1)[0][0])
                    s2 = int(np.nonzero(tri_q == m2)[0][0])
                    a_p, b_p = CORNER_UV[e], CORNER_UV[(e + 1) % 3]
                    ep = b_p - a_p
                    t_p = ep / np.linalg.norm(ep)
                    n_p = _EDGE_INWARD[e]
                    a_q, b_q = CORNER_UV[s1], CORNER_UV[s2]
                    eq = b_q - a_q
                    t_q = eq / np.linalg.norm(eq)
                    f = int(self.adj_edge[t, e])
                    n_q = _EDGE_INWARD[f]
                    m = np.outer(t_q, t_p) - np.outer(n_q, n_p)
                    row.append((
                        q,
                        float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]),
                        float(a_p[0]), float(a_p[1]), float(ep[0]), float(ep[1]),
                        float(1.0 / (ep @ ep)),
                        float(a_q[0]), float(a_q[1]), float(eq[0]), float(eq[1]),
                    ))
                table.append(row)
            self._walk_table = table
        return self._walk_table

    def is_closed(self) -> bool:
        return not (self.adj_tri == BOUNDARY).any()

    def triangle_areas(self, positions: np.ndarray | None = None) -> np.ndarray:
        p = self.vertex_positions if positions is None else positions
        a = p[self.triangles[:, 0]]
        cross = np.cross(p[self.triangles[:, 1]] - a, p[self.triangles[:, 2]] - a)
        return 0.5 * np.linalg.norm(cross, axis=1)

    def embed(self, u: SurfaceCoordinate, positions: np.ndarray | None = None) -> np.ndarray:
        """3D position of a surface coordinate (rest pose unless posed positions given)."""
        p = self.vertex_positions if positions is None else positions
        i, j, k = self.triangles[u.patch]
        return (1.0 - u.v - u.w) * p[i] + u.v * p[j] + u.w * p[k]

    def vertex_ring(self, vertex: int) -> list[int]:
        """1-ring neighbors of ``vertex`` in triangle-winding order.

        Requires the vertex to be interior (all incident edges interior);
        raises ``MeshError`` for boundary vertices.
        """
        succ = {}
        for tri in self.triangles:
            if vertex in tri:
                c = list(tri).index(vertex)
                succ[int(tri[(c + 1) % 3])] = int(tri[(c + 2) % 3])
        if not succ:
            raise MeshError(f"vertex {vertex} has no incident triangles")
        start = next(iter(succ))
        ring = [start]
        while True:
            nxt = succ.get(ring[-1])
            if nxt is None:
                raise MeshError(f"vertex {vertex} is on a boundary; 1-ring is open")
            if nxt == start:
                break
            ring.append(nxt)
            if len(ring) > len(succ):
                raise MeshError(f"1-ring of vertex {vertex} does not close")
        if len(ring) != len(succ):
            raise MeshError(f"1-ring of vertex {vertex} does not close")
        return ring


@dataclass(frozen=True)
class WalkResult:
    """Outcome of applying a domain step, possibly across several patches.

    ``delta_out`` is the input step expressed in the final patch's domain
    frame (the composition of the per-crossing remaps applied to ``delta``);
    walking from ``coord`` by ``-delta_out`` retraces the path.
    """

    coord: SurfaceCoordinate
    crossings: int
    hit_boundary: bool
    truncated: bool
    delta_out: np.ndarray


def remap_across_edge(
    mesh: ControlMesh, patch: int, local_edge: int, delta: np.ndarray
) -> tuple[int, np.ndarray]:
    """Express a domain direction crossing ``(patch, local_edge)`` in the neighbor's domain.

    The component along the shared edge (oriented by the shared mesh vertices)
    is preserved and the transverse component flips from outward-of-``patch``
    to inward-of-the-neighbor; Euclidean magnitude in the domain is preserved.
    """
    q = int(mesh.adj_tri[patch, local_edge])
    f = int(mesh.adj_edge[patch, local_edge])
    if q == BOUNDARY:
        raise MeshError(f"edge {local_edge} of triangle {patch} is a boundary edge")
    m1 = int(mesh.triangles[patch, local_edge])
    m2 = int(mesh.triangles[patch, (local_edge + 1) % 3])
    tri_q = mesh.triangles[q]
    s1 = int(np.nonzero(tri_q == m1)[0][0])
    s2 = int(np.nonzero(tri_q == m2)[0][0])

    a_p, b_p = CORNER_UV[local_edge], CORNER_UV[(local_edge + 1) % 3]
    t_p = b_p - a_p
    t_p = t_p / np.linalg.norm(t_p)
    n_p = _EDGE_INWARD[local_edge]

    a_q, b_q = CORNER_UV[s1], CORNER_UV[s2]
    t_q = b_q - a_q
    t_q = t_q / np.linalg.norm(t_q)
    n_q = _EDGE_INWARD[f]

    alpha = float(delta @ t_p)
    beta = float(delta @ n_p)
    return q, alpha * t_q - beta * n_q


def _remap_point(mesh: ControlMesh, patch: int, local_edge: int, point: np.ndarray
                 ) -> tuple[int, np.ndarray]:
    """Map a point on the shared edge into the neighbor's domain coordinates."""
    q = int(mesh.adj_tri[patch, local_edge])
    f = int(mesh.adj_edge[patch, local_edge])
    m1 = int(mesh.triangles[patch, local_edge])
    m2 = int(mesh.triangles[patch, (local_edge + 1) % 3])
    tri_q = mesh.triangles[q]
    s1 = int(np.nonzero(tri_q == m1)[0][0])
    s2 = int(np.nonzero(tri_q == m2)[0][0])
    a_p, b_p = CORNER_UV[local_edge], CORNER_UV[(local_edge + 1) % 3]
    e = b_p - a_p
    s = float((point - a_p) @ e) / float(e @ e)
    s = min(max(s, 0.0), 1.0)
    a_q, b_q = CORNER_UV[s1], CORNER_UV[s2]
    return q, a_q + s * (b_q - a_q)


def _walk_scalar(table: list, patch: int, v: float, w: float, dv: float, dw: float,
                 max_crossings: int):
    """Pure-scalar walking core; returns (patch, v, w, crossings, boundary,
    truncated, total_dv, total_dw).

    ``total_*`` is the whole input step carried through the per-crossing
    orthogonal remaps, i.e. the step expressed in the final patch's frame.
    Crossing ties (exits exactly through a corner) resolve to the lowest
    local edge index, which keeps trials reproducible.
    """
    tdv, tdw = dv, dw
    crossings = 0
    hit_boundary = False
    truncated = False
    while True:
        # first crossed domain edge: w=0 (0), v+w=1 (1), v=0 (2)
        edge, best_r = -1, 1.0
        if dw < 0.0:
            r = -w / dw
            if r < best_r:
                edge, best_r = 0, r
        dsum = dv + dw
        if dsum > 0.0:
            r = (1.0 - v - w) / dsum
            if r < best_r:
                edge, best_r = 1, r
        if dv < 0.0:
            r = -v / dv
            if r < best_r:
                edge, best_r = 2, r
        if edge < 0:
            v += dv
            w += dw
            break
        best_r = max(best_r, 0.0)
        hv = v + best_r * dv
        hw = w + best_r * dw
        entry = table[patch][edge]
        if entry is None:
            v, w = hv, hw
            hit_boundary = True
            break
        if crossings >= max_crossings:
            v, w = hv, hw
            truncated = True
            break
        (q, m00, m01, m10, m11, apx, apy, epx, epy, inv2,
         aqx, aqy, eqx, eqy) = entry
        scale = 1.0 - best_r
        dv, dw = scale * dv, scale * dw
        dv, dw = m00 * dv + m01 * dw, m10 * dv + m11 * dw
        tdv, tdw = m00 * tdv + m01 * tdw, m10 * tdv + m11 * tdw
        s = ((hv - apx) * epx + (hw - apy) * epy) * inv2
        s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
        v, w = aqx + s * eqx, aqy + s * eqy
        patch = q
        crossings += 1
        if dv == 0.0 and dw == 0.0:
            break
    if v < 0.0:
        v = 0.0
    if w < 0.0:
        w = 0.0
    if v + w > 1.0:
        t = v + w
        v, w = v / t, w / t
    return patch, v, w, crossings, hit_boundary, truncated, tdv, tdw


def walk(mesh: ControlMesh, u: SurfaceCoordinate, delta: np.ndarray,
         max_crossings: int = 64) -> WalkResult:
    """Apply a ``(v, w)`` domain step to ``u``, crossing patch boundaries as needed.

    At each crossing the partial step up to the boundary is consumed and the
    remainder is remapped into the adjacent patch.  Boundary edges truncate
    the step; exceeding ``max_crossings`` stops at the last valid coordinate
    with ``truncated`` set.
    """
    dv, dw = float(delta[0]), float(delta[1])
    if not (np.isfinite(dv) and np.isfinite(dw)):
        raise ValueError("walk step must be finite")
    patch, v, w, crossings, boundary, truncated, tdv, tdw = _walk_scalar(
        mesh.walk_table, u.patch, u.v, u.w, dv, dw, max_crossings)
    return WalkResult(SurfaceCoordinate(patch, v, w), crossings, boundary,
                      truncated, np.array([tdv, tdw]))


def walk_batch(mesh: ControlMesh, patches: np.ndarray, vw: np.ndarray,
               deltas: np.ndarray, max_crossings: int = 64
               ) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Vectorized :func:`walk` over D coordinates.

    Steps that stay inside their patch are applied in one array pass; only
    crossing steps take the scalar path.  Returns updated ``(patches, vw)``
    plus counts of boundary hits and cap truncations.
    """
    patches = np.asarray(patches, dtype=np.int64).copy()
    vw = np.asarray(vw, dtype=np.float64).copy()
    deltas = np.asarray(deltas, dtype=np.float64)
    new_vw = vw + deltas
    inside = (
        (new_vw[:, 0] >= 0.0) & (new_vw[:, 1] >= 0.0)
        & (new_vw.sum(axis=1) <= 1.0)
    )
    vw[inside] = new_vw[inside]
    n_boundary = 0
    n_truncated = 0
    outside = np.nonzero(~inside)[0]
    if len(outside):
        table = mesh.walk_table
        for i in outside:
            patch, v, w, _, boundary, truncated, _, _ = _walk_scalar(
                table, int(patches[i]), float(vw[i, 0]), float(vw[i, 1]),
                float(deltas[i, 0]), float(deltas[i, 1]), max_crossings)
            patches[i] = patch
            vw[i, 0], vw[i, 1] = v, w
            n_boundary += boundary
            n_truncated += truncated
    return patches, vw, n_boundary, n_truncated


def save_mesh_text(mesh: ControlMesh, path) -> None:
    """Write ``v``/``vn``/``f`` lines; floats use shortest exact decimal form."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for p in mesh.vertex_positions:
            fh.write(f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
        for n in mesh.vertex_normals:
            fh.write(f"vn {float(n[0])!r} {float(n[1])!r} {float(n[2])!r}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def load_mesh_text(path) -> ControlMesh:
    """Read the plain-text mesh format written by :func:`save_mesh_text`."""
    positions, normals, faces = [], [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag, rest = parts[0], parts[1:]
            if tag == "v":
                if len(rest) != 3:
                    raise MeshError(f"line {lineno}: 'v' needs three coordinates")
                positions.append([float(x) for x in rest])
            elif tag == "vn":
                if len(rest) != 3:
                    raise MeshError(f"line {lineno}: 'vn' needs three coordinates")
                normals.append([float(x) for x in rest])
            elif tag == "f":
                if len(rest) != 3:
                    raise MeshError(f"line {lineno}: 'f' needs three indices")
                faces.append([int(x) - 1 for x in rest])
            else:
                raise MeshError(f"line {lineno}: unknown record '{tag}'")
    if len(normals) != len(positions):
        raise MeshError("mesh file must pair every 'v' with one 'vn'")
    return ControlMesh(np.array(positions), np.array(normals), np.array(faces))
