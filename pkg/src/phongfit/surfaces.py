"""Surface evaluation: position, unit normal, and derivatives.

Two surface types share the same piecewise-planar geometry and differ only
in their normal field:

* ``phong``: the normal is the normalized barycentric interpolation of the
  vertex normals, so it varies continuously over each patch and across
  interior edges.
* ``trimesh``: the normal is the facet normal, constant per patch, with
  identically zero derivatives in the surface coordinate.

Batched evaluators operate on arrays of coordinates; the single-coordinate
wrappers return a :class:`SurfaceEvaluation`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import ControlMesh, SurfaceCoordinate

EPS_NORMAL = 1e-8

PHONG = "phong"
TRIMESH = "trimesh"
SURFACE_TYPES = (PHONG, TRIMESH)


class DegenerateNormalError(Exception):
    """Interpolated normal direction collapsed to (near) zero length."""

    def __init__(self, patch: int, norm: float):
        self.patch = patch
        super().__init__(
            f"interpolated normal on patch {patch} has norm {norm:.3e} <= {EPS_NORMAL:.0e}"
        )


class DegenerateFaceError(Exception):
    """Posed triangle has (near) zero area."""

    def __init__(self, patch: int):
        self.patch = patch
        super().__init__(f"posed triangle {patch} has zero area")


@dataclass
class SurfaceEvaluation:
    """Position, unit normal and their partials at one surface coordinate."""

    position: np.ndarray        # (3,)
    normal: np.ndarray          # (3,) unit
    dS_dv: np.ndarray           # (3,)
    dS_dw: np.ndarray           # (3,)
    dN_dv: np.ndarray           # (3,)
    dN_dw: np.ndarray           # (3,)
    dS_dtheta: np.ndarray       # (3, P)
    dN_dtheta: np.ndarray       # (3, P)


@dataclass
class SurfaceBatch:
    """Batched evaluation over D coordinates; fields mirror SurfaceEvaluation."""

    position: np.ndarray        # (D, 3)
    normal: np.ndarray          # (D, 3)
    dS_du: np.ndarray | None    # (D, 3, 2)
    dN_du: np.ndarray | None    # (D, 3, 2)
    dS_dtheta: np.ndarray | None  # (D, 3, P)
    dN_dtheta: np.ndarray | None  # (D, 3, P)

    def single(self, i: int = 0) -> SurfaceEvaluation:
        zero = np.zeros((3, 0))
        return SurfaceEvaluation(
            position=self.position[i],
            normal=self.normal[i],
            dS_dv=self.dS_du[i, :, 0],
            dS_dw=self.dS_du[i, :, 1],
            dN_dv=self.dN_du[i, :, 0],
            dN_dw=self.dN_du[i, :, 1],
            dS_dtheta=zero if self.dS_dtheta is None else self.dS_dtheta[i],
            dN_dtheta=zero if self.dN_dtheta is None else self.dN_dtheta[i],
        )


def _gather(arr: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return arr[idx]


def _bary(vw: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    v = vw[:, 0][:, None]
    w = vw[:, 1][:, None]
    return 1.0 - v - w, v, w


def eval_phong_batch(posed, patches: np.ndarray, vw: np.ndarray,
                     with_theta: bool = True, with_du: bool = True) -> SurfaceBatch:
    """Interpolated-normal surface evaluation at ``(patches, vw)``.

    ``posed`` is a :class:`phongfit.kinematics.PosedControlData`; its
    parameter Jacobians are consumed only when ``with_theta`` is set, and the
    surface-coordinate derivative blocks only when ``with_du`` is.
    """
    tris = posed.mesh.triangles[patches]            # (D, 3)
    packed = posed.packed                           # (N, 6): position | normal
    G1 = packed[tris[:, 0]]
    G2 = packed[tris[:, 1]]
    G3 = packed[tris[:, 2]]
    b0, v, w = _bary(vw)

    Sc = b0 * G1 + v * G2 + w * G3                  # both lerps in one pass
    S = Sc[:, :3]
    c = Sc[:, 3:]
    cn = np.sqrt(np.einsum("ij,ij->i", c, c))
    if (cn <= EPS_NORMAL).any():
        i = int(np.argmax(cn <= EPS_NORMAL))
        raise DegenerateNormalError(int(patches[i]), float(cn[i]))
    nhat = c / cn[:, None]

    # d(c/|c|) = (I - nhat nhat^T) dc / |c|
    proj = lambda dc: (dc - nhat[..., None] * np.einsum("di,di...->d...", nhat, dc)[:, None]) \
        / cn[:, None, None]

    dS_du = dN_du = None
    if with_du:
        E1 = G2 - G1
        E2 = G3 - G1
        dS_du = np.stack([E1[:, :3], E2[:, :3]], axis=2)
        inv = 1.0 / cn
        scaled = nhat * inv[:, None]
        dN_du = np.empty_like(dS_du)
        for col, dc in enumerate((E1[:, 3:], E2[:, 3:])):
            coef = np.einsum("di,di->d", nhat, dc)
            np.multiply(scaled, coef[:, None], out=dN_du[:, :, col])
            np.subtract(dc * inv[:, None], dN_du[:, :, col], out=dN_du[:, :, col])

    dS_dth = dN_dth = None
    if with_theta:
        J1 = posed.position_jac[tris[:, 0]]         # (D, 3, P)
        J2 = posed.position_jac[tris[:, 1]]
        J3 = posed.position_jac[tris[:, 2]]
        K1 = posed.normal_jac[tris[:, 0]]
        K2 = posed.normal_jac[tris[:, 1]]
        K3 = posed.normal_jac[tris[:, 2]]
        b0e, ve, we = b0[..., None], v[..., None], w[..., None]
        dS_dth = b0e * J1 + ve * J2 + we * J3
        dc_dth = b0e * K1 + ve * K2 + we * K3
        dN_dth = proj(dc_dth)
    return SurfaceBatch(S, nhat, dS_du, dN_du, dS_dth, dN_dth)


def eval_trimesh_batch(posed, patches: np.ndarray, vw: np.ndarray,
                       with_theta: bool = True, with_du: bool = True) -> SurfaceBatch:
    """Facet-normal surface evaluation; normal derivatives in (v, w) are zero."""
    tris = posed.mesh.triangles[patches]
    P1 = posed.positions[tris[:, 0]]
    P2 = posed.positions[tris[:, 1]]
    P3 = posed.positions[tris[:, 2]]
    b0, v, w = _bary(vw)

    S = b0 * P1 + v * P2 + w * P3
    e1 = P2 - P1
    e2 = P3 - P1
    c = np.cross(e1, e2)
    cn = np.linalg.norm(c, axis=1)
    if (cn <= 1e-14).any():
        raise DegenerateFaceError(int(patches[int(np.argmax(cn <= 1e-14))]))
    nhat = c / cn[:, None]

    dS_du = dN_du = None
    if with_du:
        dS_du = np.stack([e1, e2], axis=2)
        dN_du = np.zeros_like(dS_du)

    dS_dth = dN_dth = None
    if with_theta:
        J1 = posed.position_jac[tris[:, 0]]
        J2 = posed.position_jac[tris[:, 1]]
        J3 = posed.position_jac[tris[:, 2]]
        b0e, ve, we = b0[..., None], v[..., None], w[..., None]
        dS_dth = b0e * J1 + ve * J2 + we * J3
        de1 = J2 - J1                               # (D, 3, P)
        de2 = J3 - J1
        dc = (np.cross(de1, e2[:, :, None], axisa=1, axisb=1, axisc=1)
              + np.cross(e1[:, :, None], de2, axisa=1, axisb=1, axisc=1))
        dN_dth = (dc - nhat[..., None] * np.einsum("di,dip->dp", nhat, dc)[:, None]) \
            / cn[:, None, None]
    return SurfaceBatch(S, nhat, dS_du, dN_du, dS_dth, dN_dth)


_BATCH_EVALS = {PHONG: eval_phong_batch, TRIMESH: eval_trimesh_batch}


def batch_evaluator(surface_type: str):
    try:
        return _BATCH_EVALS[surface_type]
    except KeyError:
        raise ValueError(f"unknown surface type {surface_type!r}; expected one of {SURFACE_TYPES}")


def eval_phong(posed, u: SurfaceCoordinate) -> SurfaceEvaluation:
    return eval_phong_batch(posed, np.array([u.patch]), np.array([[u.v, u.w]])).single()


def eval_trimesh(posed, u: SurfaceCoordinate) -> SurfaceEvaluation:
    return eval_trimesh_batch(posed, np.array([u.patch]), np.array([[u.v, u.w]])).single()


# ---------------------------------------------------------------------------
# Loop subdivision limit stencils (closed meshes only)

def _loop_beta(n: int) -> float:
    # Warren's simplified subdivision weights.
    return 3.0 / 16.0 if n == 3 else 3.0 / (8.0 * n)


def loop_limit_stencil(mesh: ControlMesh, vertex: int) -> tuple[np.ndarray, np.ndarray]:
    """Limit position and unit limit normal of a control vertex.

    The position uses the limit mask with center weight ``3/(8*beta(n))``
    (normalized over the 1-ring); the normal is the normalized cross product
    of the two cosine/sine-weighted tangent masks.  Boundary vertices are
    not supported.
    """
    ring = mesh.vertex_ring(vertex)
    n = len(ring)
    if n < 3:
        raise ValueError(f"vertex {vertex} has valence {n} < 3")
    pts = mesh.vertex_positions[ring]               # (n, 3)
    center = mesh.vertex_positions[vertex]

    omega = 3.0 / (8.0 * _loop_beta(n))
    limit_pos = (omega * center + pts.sum(axis=0)) / (omega + n)

    ang = 2.0 * np.pi * np.arange(n) / n
    t1 = np.cos(ang) @ pts
    t2 = np.sin(ang) @ pts
    nrm = np.cross(t1, t2)
    ln = np.linalg.norm(nrm)
    if ln <= 1e-14:
        raise DegenerateNormalError(vertex, ln)
    return limit_pos, nrm / ln


def loop_limit_mesh(mesh: ControlMesh) -> ControlMesh:
    """Replace vertex data with Loop limit positions and normals (same topology)."""
    if not mesh.is_closed():
        raise ValueError("limit stencils require a closed mesh")
    pos = np.empty_like(mesh.vertex_positions)
    nrm = np.empty_like(mesh.vertex_normals)
    for i in range(len(pos)):
        pos[i], nrm[i] = loop_limit_stencil(mesh, i)
    return ControlMesh(pos, nrm, mesh.triangles)
