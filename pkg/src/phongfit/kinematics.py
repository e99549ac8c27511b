"""Pose parameterizations producing posed control data with Jacobians.

Rigid poses are 6-vectors ``[tx, ty, tz, rx, ry, rz]`` (translation plus
axis-angle rotation).  Articulated models use linear blend skinning over a
joint hierarchy: a root rigid 6-vector followed by one hinge angle per
non-root joint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .mesh import ControlMesh

# Below this rotation magnitude the Rodrigues coefficients switch to series
# expansions, removing the 0/0 at the identity for both value and Jacobian.
SMALL_ANGLE = 1e-4


def _rot_coeffs(theta: float) -> tuple[float, float, float, float]:
    """Coefficients a, b of R = I + a*K + b*K^2 and the factors a'/theta, b'/theta."""
    t2 = theta * theta
    if theta < SMALL_ANGLE:
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        fa = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0
        fb = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0
    else:
        s, c = np.sin(theta), np.cos(theta)
        a = s / theta
        b = (1.0 - c) / t2
        fa = (theta * c - s) / (t2 * theta)
        fb = (theta * s - 2.0 * (1.0 - c)) / (t2 * t2)
    return a, b, fa, fb


def _hat(r: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -r[2], r[1]],
        [r[2], 0.0, -r[0]],
        [-r[1], r[0], 0.0],
    ])


def rotation_matrix(r: np.ndarray) -> np.ndarray:
    """Rodrigues rotation for an axis-angle 3-vector."""
    r = np.asarray(r, dtype=np.float64)
    theta = float(np.linalg.norm(r))
    a, b, _, _ = _rot_coeffs(theta)
    K = _hat(r)
    return np.eye(3) + a * K + b * (K @ K)


def rotation_and_jacobian(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotation matrix and dR/dr_j stacked as (3, 3, 3)."""
    r = np.asarray(r, dtype=np.float64)
    theta = float(np.linalg.norm(r))
    a, b, fa, fb = _rot_coeffs(theta)
    K = _hat(r)
    K2 = K @ K
    R = np.eye(3) + a * K + b * K2
    dR = np.empty((3, 3, 3))
    for j in range(3):
        Ej = _hat(np.eye(3)[j])
        dK2 = Ej @ K + K @ Ej
        dR[..., j] = fa * r[j] * K + a * Ej + fb * r[j] * K2 + b * dK2
    return R, dR


@dataclass(frozen=True)
class RigidPose:
    """Translation plus axis-angle rotation, packed [tx, ty, tz, rx, ry, rz]."""

    theta: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=np.float64).reshape(6)
        if not np.isfinite(th).all():
            raise ValueError("rigid pose entries must be finite")
        object.__setattr__(self, "theta", th)

    @property
    def translation(self) -> np.ndarray:
        return self.theta[:3]

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.theta[3:])


@dataclass
class PosedControlData:
    """Posed vertex positions/normals and their parameter Jacobians."""

    mesh: ControlMesh
    positions: np.ndarray           # (N, 3)
    normals: np.ndarray             # (N, 3)
    position_jac: np.ndarray | None  # (N, 3, P); None on value-only posings
    normal_jac: np.ndarray | None    # (N, 3, P)

    @property
    def param_count(self) -> int:
        return self.position_jac.shape[2]

    @property
    def packed(self) -> np.ndarray:
        """Positions and normals side by side, (N, 6); one gather serves both."""
        cached = getattr(self, "_packed", None)
        if cached is None:
            cached = np.concatenate([self.positions, self.normals], axis=1)
            self._packed = cached
        return cached


def pose_rigid(mesh: ControlMesh, theta: np.ndarray,
               with_jac: bool = True) -> PosedControlData:
    """Pose every control vertex and normal by a rigid 6-vector.

    Positions map to ``R(r) v + t`` and normals to ``R(r) n``; Jacobians for
    all six parameters are analytic (skipped when ``with_jac`` is unset).
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(6)
    t, r = theta[:3], theta[3:]
    V = mesh.vertex_positions
    N = mesh.vertex_normals
    n = len(V)
    if not with_jac:
        R = rotation_matrix(r)
        return PosedControlData(mesh, V @ R.T + t, N @ R.T, None, None)
    R, dR = rotation_and_jacobian(r)

    positions = V @ R.T + t
    normals = N @ R.T

    pos_jac = np.zeros((n, 3, 6))
    nrm_jac = np.zeros((n, 3, 6))
    pos_jac[:, 0, 0] = pos_jac[:, 1, 1] = pos_jac[:, 2, 2] = 1.0
    for j in range(3):
        pos_jac[:, :, 3 + j] = V @ dR[..., j].T
        nrm_jac[:, :, 3 + j] = N @ dR[..., j].T
    return PosedControlData(mesh, positions, normals, pos_jac, nrm_jac)


# ---------------------------------------------------------------------------
# Linear blend skinning

@dataclass
class Joint:
    name: str
    parent: int
    rest_rotation: np.ndarray       # (3, 3), local, relative to parent
    rest_translation: np.ndarray    # (3,)
    axis: np.ndarray | None = None  # hinge axis (unit, local); None for the root


@dataclass
class SkinnedModel:
    """Rest mesh plus joint hierarchy and per-vertex skinning weights.

    Parameter layout: root rigid 6-vector, then one angle per non-root joint
    in joint order.  ``weights`` is dense (N, J) with nonnegative rows
    summing to one.
    """

    mesh: ControlMesh
    joints: list[Joint]
    weights: np.ndarray
    bind_rotations: np.ndarray = field(init=False)      # (J, 3, 3) global rest
    bind_translations: np.ndarray = field(init=False)   # (J, 3)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        nv, nj = len(self.mesh.vertex_positions), len(self.joints)
        if self.weights.shape != (nv, nj):
            raise ValueError(f"weights must be ({nv}, {nj})")
        if (self.weights < -1e-12).any():
            raise ValueError("skinning weights must be nonnegative")
        rowsum = self.weights.sum(axis=1)
        if np.abs(rowsum - 1.0).max() > 1e-9:
            raise ValueError("each vertex's skinning weights must sum to 1")
        if self.joints[0].parent != -1:
            raise ValueError("joint 0 must be the root (parent -1)")
        for j, joint in enumerate(self.joints[1:], start=1):
            if not 0 <= joint.parent < j:
                raise ValueError(
                    f"joint {j} ({joint.name}): parent must precede it (acyclic hierarchy)")
            if joint.axis is None:
                raise ValueError(f"joint {j} ({joint.name}): non-root joints need a hinge axis")
        # Global rest (bind) transforms, at zero pose.
        R = np.empty((nj, 3, 3))
        t = np.empty((nj, 3))
        for j, joint in enumerate(self.joints):
            if joint.parent < 0:
                R[j], t[j] = joint.rest_rotation, joint.rest_translation
            else:
                Rp, tp = R[joint.parent], t[joint.parent]
                R[j] = Rp @ joint.rest_rotation
                t[j] = Rp @ joint.rest_translation + tp
        self.bind_rotations, self.bind_translations = R, t

    @property
    def param_count(self) -> int:
        return 6 + len(self.joints) - 1

    @property
    def param_names(self) -> list[str]:
        return ["tx", "ty", "tz", "rx", "ry", "rz"] + [j.name for j in self.joints[1:]]


def _global_transforms(model: SkinnedModel, theta: np.ndarray):
    """Forward pass: global joint transforms and their parameter Jacobians."""
    nj = len(model.joints)
    P = model.param_count
    R = np.empty((nj, 3, 3))
    t = np.empty((nj, 3))
    dR = np.zeros((nj, P, 3, 3))
    dt = np.zeros((nj, P, 3))

    root = model.joints[0]
    Rr, dRr = rotation_and_jacobian(theta[3:6])
    # Root local transform: rigid(theta[:6]) composed with the root rest transform.
    R[0] = Rr @ root.rest_rotation
    t[0] = Rr @ root.rest_translation + theta[:3]
    for j in range(3):
        dt[0, j, j] = 1.0
        dR[0, 3 + j] = dRr[..., j] @ root.rest_rotation
        dt[0, 3 + j] = dRr[..., j] @ root.rest_translation

    for j, joint in enumerate(model.joints[1:], start=1):
        angle = float(theta[6 + j - 1])
        Rh = rotation_matrix(joint.axis * angle)
        dRh = _hat(joint.axis) @ Rh        # d/d(angle) of exp(angle*hat(axis))
        RL = joint.rest_rotation @ Rh      # local: rest then hinge rotation
        tL = joint.rest_translation
        p = joint.parent
        R[j] = R[p] @ RL
        t[j] = R[p] @ tL + t[p]
        dR[j] = dR[p] @ RL
        dt[j] = (dR[p] @ tL) + dt[p]
        k = 6 + j - 1
        dR[j, k] += R[p] @ (joint.rest_rotation @ dRh)
    return R, t, dR, dt


def pose_lbs(model: SkinnedModel, theta: np.ndarray,
             normal_mode: str = "blended", with_jac: bool = True) -> PosedControlData:
    """Pose a skinned model; positions by blended joint transforms.

    ``normal_mode`` selects how posed vertex normals are produced:

    * ``"blended"``: rest normals mapped by the blended rotational part and
      renormalized per vertex (the cheap path).
    * ``"recomputed"``: normals rebuilt from the posed vertex positions via
      the Loop limit tangent masks (closed meshes only).

    Jacobians cover both paths, including the renormalization projection.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (model.param_count,):
        raise ValueError(f"expected {model.param_count} parameters, got {theta.shape}")
    if not with_jac:
        return _pose_lbs_value(model, theta, normal_mode)
    Rg, tg, dRg, dtg = _global_transforms(model, theta)
    nj = len(model.joints)
    P = model.param_count
    W = model.weights

    # Per-joint skinning transform G_j B_j^{-1} (rigid): rotation and translation.
    RB = model.bind_rotations
    tB = model.bind_translations
    Rskin = np.einsum("jab,jcb->jac", Rg, RB)                 # R_g R_B^T
    tskin = tg - np.einsum("jab,jb->ja", Rskin, tB)
    dRskin = np.einsum("jpab,jcb->jpac", dRg, RB)
    dtskin = dtg - np.einsum("jpab,jb->jpa", dRskin, tB)

    # Blend per vertex: A_i = sum_j w_ij Rskin_j, b_i = sum_j w_ij tskin_j.
    A = np.einsum("ij,jab->iab", W, Rskin)                    # (N, 3, 3)
    b = W @ tskin                                             # (N, 3)
    dA = np.einsum("ij,jpab->ipab", W, dRskin)                # (N, P, 3, 3)
    db = np.einsum("ij,jpa->ipa", W, dtskin)                  # (N, P, 3)

    V = model.mesh.vertex_positions
    positions = np.einsum("iab,ib->ia", A, V) + b
    pos_jac = (np.einsum("ipab,ib->iap", dA, V)
               + np.transpose(db, (0, 2, 1)))                 # (N, 3, P)

    if normal_mode == "blended":
        Nr = model.mesh.vertex_normals
        raw = np.einsum("iab,ib->ia", A, Nr)
        draw = np.einsum("ipab,ib->iap", dA, Nr)              # (N, 3, P)
        normals, nrm_jac = _normalize_with_jacobian(raw, draw)
    elif normal_mode == "recomputed":
        normals, nrm_jac = _limit_normals_from_positions(model.mesh, positions, pos_jac)
    else:
        raise ValueError(f"unknown normal_mode {normal_mode!r}")
    return PosedControlData(model.mesh, positions, normals, pos_jac, nrm_jac)


def _pose_lbs_value(model: SkinnedModel, theta: np.ndarray,
                    normal_mode: str) -> PosedControlData:
    nj = len(model.joints)
    R = np.empty((nj, 3, 3))
    t = np.empty((nj, 3))
    root = model.joints[0]
    Rr = rotation_matrix(theta[3:6])
    R[0] = Rr @ root.rest_rotation
    t[0] = Rr @ root.rest_translation + theta[:3]
    for j, joint in enumerate(model.joints[1:], start=1):
        Rh = rotation_matrix(joint.axis * float(theta[6 + j - 1]))
        p = joint.parent
        R[j] = R[p] @ (joint.rest_rotation @ Rh)
        t[j] = R[p] @ joint.rest_translation + t[p]
    Rskin = np.einsum("jab,jcb->jac", R, model.bind_rotations)
    tskin = t - np.einsum("jab,jb->ja", Rskin, model.bind_translations)
    W = model.weights
    A = np.einsum("ij,jab->iab", W, Rskin)
    b = W @ tskin
    V = model.mesh.vertex_positions
    positions = np.einsum("iab,ib->ia", A, V) + b
    if normal_mode == "blended":
        raw = np.einsum("iab,ib->ia", A, model.mesh.vertex_normals)
        ln = np.linalg.norm(raw, axis=1)
        if (ln <= 1e-12).any():
            raise ValueError("blended normal collapsed to zero length")
        normals = raw / ln[:, None]
    elif normal_mode == "recomputed":
        zero = np.zeros((len(positions), 3, 0))
        normals, _ = _limit_normals_from_positions(model.mesh, positions, zero)
    else:
        raise ValueError(f"unknown normal_mode {normal_mode!r}")
    return PosedControlData(model.mesh, positions, normals, None, None)


def _normalize_with_jacobian(raw: np.ndarray, draw: np.ndarray):
    ln = np.linalg.norm(raw, axis=1)
    if (ln <= 1e-12).any():
        raise ValueError("blended normal collapsed to zero length")
    unit = raw / ln[:, None]
    jac = (draw - unit[:, :, None] * np.einsum("ia,iap->ip", unit, draw)[:, None, :]) \
        / ln[:, None, None]
    return unit, jac


def _limit_normals_from_positions(mesh: ControlMesh, positions: np.ndarray,
                                  pos_jac: np.ndarray):
    """Loop limit tangent-mask normals of the posed control cage, with Jacobians.

    The tangent masks are linear in the ring positions, so their Jacobians
    are the same masks applied to the position Jacobians.
    """
    n = len(positions)
    P = pos_jac.shape[2]
    normals = np.empty((n, 3))
    jac = np.empty((n, 3, P))
    for i in range(n):
        ring = mesh.vertex_ring(i)
        ang = 2.0 * np.pi * np.arange(len(ring)) / len(ring)
        pts = positions[ring]
        jr = pos_jac[ring]
        t1 = np.cos(ang) @ pts
        t2 = np.sin(ang) @ pts
        dt1 = np.einsum("k,kap->ap", np.cos(ang), jr)
        dt2 = np.einsum("k,kap->ap", np.sin(ang), jr)
        raw = np.cross(t1, t2)
        draw = (np.cross(dt1.T, t2[None, :]) + np.cross(t1[None, :], dt2.T)).T
        unit, dunit = _normalize_with_jacobian(raw[None], draw[None])
        normals[i], jac[i] = unit[0], dunit[0]
    return normals, jac


def normal_path_divergence(model: SkinnedModel, theta: np.ndarray) -> float:
    """Largest angle (radians) between blended and recomputed posed normals."""
    a = pose_lbs(model, theta, normal_mode="blended").normals
    b = pose_lbs(model, theta, normal_mode="recomputed").normals
    dots = np.clip(np.einsum("ij,ij->i", a, b), -1.0, 1.0)
    return float(np.arccos(dots).max())


# ---------------------------------------------------------------------------
# Pose models: the uniform interface consumed by the solvers

class RigidModel:
    """6-DoF rigid posing of a control mesh."""

    def __init__(self, mesh: ControlMesh):
        self.mesh = mesh
        self.param_count = 6

    def pose(self, theta: np.ndarray, with_jac: bool = True) -> PosedControlData:
        return pose_rigid(self.mesh, theta, with_jac=with_jac)


class TranslationModel:
    """Pure-translation posing (3 parameters); normals are fixed."""

    def __init__(self, mesh: ControlMesh):
        self.mesh = mesh
        self.param_count = 3

    def pose(self, theta: np.ndarray, with_jac: bool = True) -> PosedControlData:
        theta = np.asarray(theta, dtype=np.float64).reshape(3)
        n = len(self.mesh.vertex_positions)
        positions = self.mesh.vertex_positions + theta
        normals = self.mesh.vertex_normals
        if not with_jac:
            return PosedControlData(self.mesh, positions, normals, None, None)
        pos_jac = np.zeros((n, 3, 3))
        pos_jac[:, 0, 0] = pos_jac[:, 1, 1] = pos_jac[:, 2, 2] = 1.0
        return PosedControlData(self.mesh, positions, normals, pos_jac,
                                np.zeros((n, 3, 3)))


class FrozenModel:
    """Zero-parameter model pinned at a fixed rigid pose (correspondence-only fits)."""

    def __init__(self, mesh: ControlMesh, theta: np.ndarray | None = None):
        self.mesh = mesh
        self.param_count = 0
        self._theta = np.zeros(6) if theta is None else np.asarray(theta, dtype=np.float64)

    def pose(self, theta: np.ndarray, with_jac: bool = True) -> PosedControlData:
        posed = pose_rigid(self.mesh, self._theta, with_jac=False)
        n = len(self.mesh.vertex_positions)
        return PosedControlData(self.mesh, posed.positions, posed.normals,
                                np.zeros((n, 3, 0)), np.zeros((n, 3, 0)))


class SkinnedFitModel:
    """LBS posing of a skinned model."""

    def __init__(self, model: SkinnedModel, normal_mode: str = "blended"):
        self.skinned = model
        self.mesh = model.mesh
        self.param_count = model.param_count
        self.normal_mode = normal_mode

    def pose(self, theta: np.ndarray, with_jac: bool = True) -> PosedControlData:
        return pose_lbs(self.skinned, theta, normal_mode=self.normal_mode,
                        with_jac=with_jac)


# ---------------------------------------------------------------------------
# JSON interchange for skinned models

def save_skinned_json(model: SkinnedModel, path) -> None:
    doc = {
        "joints": [
            {
                "name": j.name,
                "parent": j.parent,
                "rest": np.column_stack([j.rest_rotation, j.rest_translation])
                          .reshape(-1).tolist(),
                **({} if j.axis is None else {"axis": j.axis.tolist()}),
            }
            for j in model.joints
        ],
        "weights": [
            [int(i), int(j), float(model.weights[i, j])]
            for i, j in zip(*np.nonzero(model.weights))
        ],
        "layout": model.param_names,
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=1)


def load_skinned_json(mesh: ControlMesh, path) -> SkinnedModel:
    """Build a SkinnedModel from a mesh plus the JSON joint/weight document."""
    with open(path, "r", encoding="ascii") as fh:
        doc = json.load(fh)
    joints = []
    for jd in doc["joints"]:
        rest = np.asarray(jd["rest"], dtype=np.float64).reshape(3, 4)
        axis = jd.get("axis")
        joints.append(Joint(
            name=jd["name"],
            parent=int(jd["parent"]),
            rest_rotation=rest[:, :3],
            rest_translation=rest[:, 3],
            axis=None if axis is None else np.asarray(axis, dtype=np.float64),
        ))
    weights = np.zeros((len(mesh.vertex_positions), len(joints)))
    for vi, ji, w in doc["weights"]:
        weights[int(vi), int(ji)] = float(w)
    model = SkinnedModel(mesh, joints, weights)
    expected = model.param_names
    if doc.get("layout") != expected:
        raise ValueError(f"parameter layout mismatch: file has {doc.get('layout')}, "
                         f"model defines {expected}")
    return model
