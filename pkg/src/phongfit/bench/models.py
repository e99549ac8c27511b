"""Built-in benchmark models: ellipsoid icospheres and a skinned cylinder chain.

Control vertex data (positions and normals) of every built model comes from
the Loop limit stencils of the constructed cage, so the interpolated-normal
and facet-normal surfaces share identical geometry and differ only in their
normal fields.
"""

from __future__ import annotations

import numpy as np

from ..kinematics import Joint, SkinnedModel
from ..mesh import ControlMesh
from ..surfaces import loop_limit_mesh, loop_limit_stencil

ELLIPSOID_RADII = (1.0, 2.0, 3.0)

_PHI = (1.0 + np.sqrt(5.0)) / 2.0

_ICO_VERTS = np.array([
    (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
    (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
    (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
], dtype=np.float64)

_ICO_FACES = np.array([
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
], dtype=np.int64)


def _subdivide(verts: np.ndarray, faces: np.ndarray):
    """One midpoint split with unit-sphere projection of the new vertices."""
    verts = list(verts)
    cache: dict[tuple[int, int], int] = {}

    def midpoint(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            m = verts[a] + verts[b]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    new_faces = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_faces.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
    return np.array(verts), np.array(new_faces, dtype=np.int64)


def unit_icosphere(subdivisions: int) -> tuple[np.ndarray, np.ndarray]:
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS, axis=1, keepdims=True)
    faces = _ICO_FACES
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
    return verts, faces


def signed_volume(verts: np.ndarray, faces: np.ndarray) -> float:
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def make_ellipsoid(facets: int) -> ControlMesh:
    """Axis-aligned, origin-centered ellipsoid control mesh (320 or 1280 facets).

    The cage is an icosphere scaled to radii (1, 2, 3); vertex data comes
    from the Loop limit stencils of that cage.
    """
    levels = {320: 2, 1280: 3}
    if facets not in levels:
        raise ValueError(f"facet count must be one of {sorted(levels)}, got {facets}")
    verts, faces = unit_icosphere(levels[facets])
    if signed_volume(verts, faces) < 0:
        faces = faces[:, ::-1]
    cage = verts * np.array(ELLIPSOID_RADII)
    normals = _sphere_cage_normals(verts)
    return loop_limit_mesh(ControlMesh(cage, normals, faces))


def _sphere_cage_normals(unit_verts: np.ndarray) -> np.ndarray:
    # Placeholder normals for the cage mesh; the limit pass replaces them.
    return unit_verts / np.linalg.norm(unit_verts, axis=1, keepdims=True)


def ellipsoid_cage(facets: int) -> ControlMesh:
    """The pre-limit cage (vertices exactly on the ellipsoid), for diagnostics."""
    levels = {320: 2, 1280: 3}
    verts, faces = unit_icosphere(levels[facets])
    if signed_volume(verts, faces) < 0:
        faces = faces[:, ::-1]
    return ControlMesh(verts * np.array(ELLIPSOID_RADII),
                       _sphere_cage_normals(verts), faces)


# ---------------------------------------------------------------------------
# Skinned 3-segment cylinder chain

CHAIN_LENGTH = 3.0
CHAIN_RADIUS = 0.35
CHAIN_PIVOTS = (0.75, 1.5, 2.25)
CHAIN_AXES = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 0.0, 0.0))
_BLEND_WIDTH = 0.5


def _cylinder_cage(segments: int = 16, rings: int = 13) -> ControlMesh:
    zs = np.linspace(0.0, CHAIN_LENGTH, rings)
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring_xy = CHAIN_RADIUS * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    verts = []
    for z in zs:
        for xy in ring_xy:
            verts.append([xy[0], xy[1], z])
    bottom = len(verts)
    verts.append([0.0, 0.0, 0.0])
    top = len(verts)
    verts.append([0.0, 0.0, CHAIN_LENGTH])
    verts = np.array(verts)

    faces = []
    for i in range(rings - 1):
        for j in range(segments):
            jn = (j + 1) % segments
            p00 = i * segments + j
            p01 = i * segments + jn
            p10 = (i + 1) * segments + j
            p11 = (i + 1) * segments + jn
            faces.append((p00, p01, p11))
            faces.append((p00, p11, p10))
    for j in range(segments):
        jn = (j + 1) % segments
        faces.append((bottom, jn, j))
        faces.append((top, (rings - 1) * segments + j, (rings - 1) * segments + jn))
    faces = np.array(faces, dtype=np.int64)
    normals = np.zeros_like(verts)
    normals[:, 2] = 1.0  # placeholder; replaced by the limit-normal pass
    return ControlMesh(verts, normals, faces)


def _chain_weights(zs: np.ndarray) -> np.ndarray:
    ramps = [
        np.clip((zs - (p - _BLEND_WIDTH / 2)) / _BLEND_WIDTH, 0.0, 1.0)
        for p in CHAIN_PIVOTS
    ]
    a0, a1, a2 = ramps
    w = np.stack([
        1.0 - a0,
        a0 * (1.0 - a1),
        a0 * a1 * (1.0 - a2),
        a0 * a1 * a2,
    ], axis=1)
    return w


def make_chain3(segments: int = 16, rings: int = 13) -> SkinnedModel:
    """Skinned cylinder chain: rigid root plus three hinge joints along z.

    Control positions are the cylinder cage itself and control normals its
    Loop limit normals, so the normals are exactly what the limit tangent
    masks rederive from the control geometry (the articulated normal paths
    coincide at rest).
    """
    cage = _cylinder_cage(segments, rings)
    normals = np.array([loop_limit_stencil(cage, i)[1]
                        for i in range(len(cage.vertex_positions))])
    mesh = ControlMesh(cage.vertex_positions, normals, cage.triangles)
    joints = [Joint("root", -1, np.eye(3), np.zeros(3))]
    prev = 0.0
    for k, (pivot, axis) in enumerate(zip(CHAIN_PIVOTS, CHAIN_AXES)):
        joints.append(Joint(
            name=f"bend{k}",
            parent=k,
            rest_rotation=np.eye(3),
            rest_translation=np.array([0.0, 0.0, pivot - prev]),
            axis=np.array(axis),
        ))
        prev = pivot
    weights = _chain_weights(mesh.vertex_positions[:, 2])
    return SkinnedModel(mesh, joints, weights)


def builtin_mesh(name: str) -> ControlMesh:
    if name == "ellipsoid-320":
        return make_ellipsoid(320)
    if name == "ellipsoid-1280":
        return make_ellipsoid(1280)
    if name == "chain3":
        return make_chain3().mesh
    raise ValueError(f"unknown builtin model {name!r}")
