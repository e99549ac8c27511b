"""Rigid alignment of a closed 2D curve: three update rules side by side.

The steppers share one objective family over correspondences ``T`` and a
rigid pose ``[tx, ty, phi]``:

* unconstrained point-to-tangent-line (footpoints slide freely),
* the same with a quadratic penalty ``lam * gamma^2`` on the slide, and
* a lifted Levenberg step that moves ``T`` jointly with the pose.

Correspondence parameters live on the curve's period [0, 1); updates wrap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


class RankDeficientStep(Exception):
    """Normal matrix of a pose update is rank deficient."""


@dataclass(frozen=True)
class RigidPose2D:
    params: np.ndarray   # [tx, ty, phi]

    def __post_init__(self):
        p = np.asarray(self.params, dtype=np.float64).reshape(3)
        if not np.isfinite(p).all():
            raise ValueError("pose entries must be finite")
        object.__setattr__(self, "params", p)

    @property
    def translation(self) -> np.ndarray:
        return self.params[:2]

    @property
    def angle(self) -> float:
        return float(self.params[2])

    @property
    def rotation(self) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        return np.array([[c, -s], [s, c]])


class Curve2D:
    """Closed parametric curve with positions, velocities and unit tangents.

    Backed either by an analytic ellipse (angle parameterization) or by an
    arc-length polyline.
    """

    def point(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def velocity(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tangent(self, t: np.ndarray) -> np.ndarray:
        vel = self.velocity(t)
        return vel / np.linalg.norm(vel, axis=-1, keepdims=True)


class Ellipse(Curve2D):
    def __init__(self, a: float, b: float):
        if a <= 0 or b <= 0:
            raise ValueError("ellipse radii must be positive")
        self.a, self.b = float(a), float(b)

    def point(self, t):
        ang = 2.0 * np.pi * np.asarray(t, dtype=np.float64)
        return np.stack([self.a * np.cos(ang), self.b * np.sin(ang)], axis=-1)

    def velocity(self, t):
        ang = 2.0 * np.pi * np.asarray(t, dtype=np.float64)
        return 2.0 * np.pi * np.stack(
            [-self.a * np.sin(ang), self.b * np.cos(ang)], axis=-1)


class Polyline(Curve2D):
    """Closed polyline reparameterized by arc length (t in [0, 1))."""

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise ValueError("polyline needs at least three 2D points")
        self.points = pts
        seg = np.roll(pts, -1, axis=0) - pts
        lengths = np.linalg.norm(seg, axis=1)
        if (lengths <= 0.0).any():
            raise ValueError("polyline has a zero-length segment")
        self.total = lengths.sum()
        self.cum = np.concatenate([[0.0], np.cumsum(lengths)]) / self.total
        self.seg_dir = seg / lengths[:, None]
        self.seg_speed = np.full(len(pts), self.total)  # |dC/dt| under t in [0,1)

    @classmethod
    def from_curve(cls, curve: Curve2D, segments: int = 512) -> "Polyline":
        t = np.arange(segments) / segments
        return cls(curve.point(t))

    def _locate(self, t):
        t = np.mod(np.asarray(t, dtype=np.float64), 1.0)
        seg = np.clip(np.searchsorted(self.cum, t, side="right") - 1, 0,
                      len(self.points) - 1)
        local = (t - self.cum[seg]) / (self.cum[seg + 1] - self.cum[seg])
        return seg, local

    def point(self, t):
        seg, local = self._locate(t)
        nxt = (seg + 1) % len(self.points)
        return self.points[seg] + local[..., None] * (self.points[nxt] - self.points[seg])

    def velocity(self, t):
        seg, _ = self._locate(t)
        return self.seg_dir[seg] * self.total


def pose_points(curve: Curve2D, pose: RigidPose2D, t: np.ndarray) -> np.ndarray:
    return curve.point(t) @ pose.rotation.T + pose.translation


def closest_params(curve: Curve2D, pose: RigidPose2D, X: np.ndarray,
                   samples: int = 2048) -> np.ndarray:
    """Closest curve parameters by dense sampling plus one local refinement."""
    t_grid = np.arange(samples) / samples
    P = pose_points(curve, pose, t_grid)                    # (S, 2)
    d2 = ((np.asarray(X)[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
    best = np.argmin(d2, axis=1)
    t = t_grid[best]
    # one Newton polish along the curve
    for _ in range(2):
        p = pose_points(curve, pose, t)
        vel = curve.velocity(t) @ pose.rotation.T
        sp2 = np.einsum("ij,ij->i", vel, vel)
        t = np.mod(t + np.einsum("ij,ij->i", np.asarray(X) - p, vel) / sp2, 1.0)
    return t


def curve_energy(curve: Curve2D, pose: RigidPose2D, X: np.ndarray,
                 T: np.ndarray) -> float:
    """Sum of squared point-to-curve-point distances at fixed correspondences."""
    diff = np.asarray(X) - pose_points(curve, pose, T)
    return float(np.einsum("ij,ij->", diff, diff))


def _pose_jacobian(curve: Curve2D, pose: RigidPose2D, T: np.ndarray):
    """Posed points and d(point)/d[tx, ty, phi] as (N, 2, 3)."""
    p = pose_points(curve, pose, T)
    N = len(p)
    J = np.zeros((N, 2, 3))
    J[:, 0, 0] = 1.0
    J[:, 1, 1] = 1.0
    J[:, :, 2] = (p - pose.translation) @ _ROT90.T
    return p, J


def solve_gammas(curve: Curve2D, pose: RigidPose2D, X: np.ndarray,
                 T: np.ndarray, lam: float) -> np.ndarray:
    """Closed-form inner slide: gamma_i = tangent . (x_i - p_i) / (1 + lam)."""
    p = pose_points(curve, pose, T)
    d = curve.tangent(T) @ pose.rotation.T
    return np.einsum("ij,ij->i", np.asarray(X) - p, d) / (1.0 + lam)


def p2pl_step_regularized(curve: Curve2D, pose: RigidPose2D, X: np.ndarray,
                          T: np.ndarray, lam: float) -> RigidPose2D:
    """Gauss-Newton pose update of the slide-penalized point-to-tangent objective.

    After eliminating the slides, each datum reduces to a normal-gap row and
    a ``sqrt(lam/(1+lam))``-weighted tangential row (both with the local
    frame held fixed during the linearization).  ``lam = 0`` is exactly the
    unconstrained point-to-tangent-line update; ``lam -> inf`` approaches the
    point-to-point step.
    """
    if lam < 0.0:
        raise ValueError("regularizer weight must be nonnegative")
    X = np.asarray(X, dtype=np.float64)
    p, J = _pose_jacobian(curve, pose, T)
    d = curve.tangent(T) @ pose.rotation.T
    n = d @ _ROT90.T
    gap = X - p
    wt = np.sqrt(lam / (1.0 + lam))

    res = np.concatenate([
        np.einsum("ij,ij->i", n, gap),
        wt * np.einsum("ij,ij->i", d, gap),
    ])
    rows = np.concatenate([
        -np.einsum("ij,ijk->ik", n, J),
        -wt * np.einsum("ij,ijk->ik", d, J),
    ])
    A = rows.T @ rows
    if np.linalg.matrix_rank(A, tol=1e-10 * max(np.abs(A).max(), 1.0)) < 3:
        raise RankDeficientStep("all tangent lines are parallel; pose update is underdetermined")
    delta = np.linalg.solve(A, -(rows.T @ res))
    return RigidPose2D(pose.params + delta)


def p2pl_step_unconstrained(curve: Curve2D, pose: RigidPose2D, X: np.ndarray,
                            T: np.ndarray) -> RigidPose2D:
    """Point-to-tangent-line update: the zero-penalty case of the regularized step."""
    return p2pl_step_regularized(curve, pose, X, T, lam=0.0)


def point_to_point_step(curve: Curve2D, pose: RigidPose2D, X: np.ndarray,
                        T: np.ndarray) -> RigidPose2D:
    """Independent Gauss-Newton step of the plain point-to-point objective."""
    X = np.asarray(X, dtype=np.float64)
    p, J = _pose_jacobian(curve, pose, T)
    res = (X - p).reshape(-1)
    rows = -J.reshape(-1, 3)
    delta, *_ = np.linalg.lstsq(rows, -res, rcond=None)
    return RigidPose2D(pose.params + delta)


def lifted2d_step(curve: Curve2D, pose: RigidPose2D, X: np.ndarray, T: np.ndarray,
                  damping: float = 1e-3, damping_up: float = 10.0,
                  damping_down: float = 10.0, max_rejects: int = 10,
                  ) -> tuple[RigidPose2D, np.ndarray, float]:
    """One damped Levenberg step jointly in (pose, T); T wraps modulo 1.

    Returns ``(new_pose, new_T, new_damping)``; on rejection the pose and
    correspondences are unchanged and only the damping grows.
    """
    X = np.asarray(X, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    p, J = _pose_jacobian(curve, pose, T)
    vel = curve.velocity(T) @ pose.rotation.T           # (N, 2) = d p / d t
    res = (X - p).reshape(-1)
    energy = float(res @ res)

    # Residual rows are x - p, so both Jacobian blocks carry a minus sign;
    # it cancels in A, c and M but not in the gradients.
    A = np.einsum("ijk,ijl->kl", J, J)
    g = -np.einsum("ijk,ij->k", J, X - p)
    c = np.einsum("ij,ij->i", vel, vel)
    gu = -np.einsum("ij,ij->i", vel, X - p)
    M = np.einsum("ijk,ij->ik", J, vel)

    for _ in range(max_rejects):
        clam = c + damping
        S = A + damping * np.eye(3) - (M.T * (1.0 / clam)) @ M
        rhs = -g + M.T @ (gu / clam)
        try:
            dpose = np.linalg.solve(S, rhs)
        except np.linalg.LinAlgError:
            damping = min(damping * damping_up, 1e12)
            continue
        dT = -(gu + M @ dpose) / clam
        pose_new = RigidPose2D(pose.params + dpose)
        T_new = np.mod(T + dT, 1.0)
        e_new = curve_energy(curve, pose_new, X, T_new)
        if e_new <= energy:
            return pose_new, T_new, max(damping / damping_down, 1e-12)
        damping = min(damping * damping_up, 1e12)
    return pose, T, damping


def save_trace_csv(path, energies, poses) -> None:
    """Write an alignment trace in the benchmark's fit-trace CSV layout."""
    import csv

    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "energy", "tx", "ty", "phi"])
        for k, (e, pose) in enumerate(zip(energies, poses)):
            w.writerow([k, repr(float(e))] + [repr(float(x)) for x in pose.params])


def lifted_gradient(curve: Curve2D, pose: RigidPose2D, X: np.ndarray,
                    T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of the joint squared-distance objective in (pose, T)."""
    X = np.asarray(X, dtype=np.float64)
    p, J = _pose_jacobian(curve, pose, T)
    vel = curve.velocity(T) @ pose.rotation.T
    gap = X - p
    g_pose = -2.0 * np.einsum("ijk,ij->k", J, gap)
    g_t = -2.0 * np.einsum("ij,ij->i", vel, gap)
    return g_pose, g_t


def dense_lifted2d_solve(curve: Curve2D, pose: RigidPose2D, X: np.ndarray,
                         T: np.ndarray, damping: float):
    """Reference dense (3 + N) damped solve for the lifted 2D step (oracle)."""
    X = np.asarray(X, dtype=np.float64)
    N = len(T)
    p, J = _pose_jacobian(curve, pose, T)
    vel = curve.velocity(T) @ pose.rotation.T
    Jfull = np.zeros((2 * N, 3 + N))
    Jfull[:, :3] = -J.reshape(-1, 3)
    for i in range(N):
        Jfull[2 * i:2 * i + 2, 3 + i] = -vel[i]
    res = (X - p).reshape(-1)
    H = Jfull.T @ Jfull + damping * np.eye(3 + N)
    step = np.linalg.solve(H, -Jfull.T @ res)
    return step[:3], step[3:]
