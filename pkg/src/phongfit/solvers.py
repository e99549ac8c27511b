"""The two optimizers under comparison, plus the closest-point query.

* ``lifted``: one damped Levenberg step jointly in (theta, U).  The
  correspondence blocks are eliminated by a Schur complement (D independent
  2x2 blocks), the reduced PxP system is solved densely, and the 2D updates
  are applied by triangle walking.
* ``icp``: alternate. Reset every correspondence to the closest surface
  point (position metric), then take one damped Levenberg step in theta
  alone.

Both use the same accept/reject damping rule: accept when the energy does
not increase, dividing damping by 10; otherwise multiply by 10 and retry.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import FitConfig, Observations, assemble, energy_only
from .mesh import ControlMesh, SurfaceCoordinate, walk_batch

DAMPING_MIN = 1e-12
DAMPING_MAX = 1e12


class SolveAbort(Exception):
    """Reduced system stayed singular at maximum damping."""


@dataclass
class CorrespondenceSet:
    """Per-datum surface coordinates stored as arrays, indexable as coordinates."""

    patches: np.ndarray     # (D,) int
    vw: np.ndarray          # (D, 2)

    def __len__(self) -> int:
        return len(self.patches)

    def __getitem__(self, i: int) -> SurfaceCoordinate:
        return SurfaceCoordinate(int(self.patches[i]), float(self.vw[i, 0]),
                                 float(self.vw[i, 1]))

    def copy(self) -> "CorrespondenceSet":
        return CorrespondenceSet(self.patches.copy(), self.vw.copy())


@dataclass
class FitState:
    """Mutable optimizer state: pose hypothesis, correspondences, damping."""

    theta: np.ndarray
    U: CorrespondenceSet
    damping: float
    energy: float
    boundary_hits: int = 0
    walk_truncations: int = 0
    extra_solve_mults: int = 0   # per-iteration lifted overhead (diagnostic)


@dataclass
class FitReport:
    theta: np.ndarray
    U: CorrespondenceSet
    iterations: int
    converged: bool
    energy_trace: list[float]
    theta_trace: list[np.ndarray]
    wall_time: float
    iteration_times: list[float]
    boundary_hits: int = 0
    walk_truncations: int = 0
    aborted: bool = False    # solve stayed singular at maximum damping
    flop_estimate: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Closest point on a posed triangle mesh

def _point_triangle(A, B, C, X):
    """Barycentric (v, w) of the closest point of triangles (A,B,C) to points X.

    Row-paired arrays; the classic region classification, fully vectorized.
    Returns (v, w, squared distance).
    """
    ab = B - A
    ac = C - A
    ap = X - A
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = X - B
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = X - C
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom

    n = len(A)
    v = np.empty(n)
    w = np.empty(n)
    decided = np.zeros(n, dtype=bool)

    def claim(mask, vv, ww):
        m = mask & ~decided
        v[m] = vv[m] if isinstance(vv, np.ndarray) else vv
        w[m] = ww[m] if isinstance(ww, np.ndarray) else ww
        decided[m] = True

    claim((d1 <= 0) & (d2 <= 0), 0.0, 0.0)                      # vertex A
    claim((d3 >= 0) & (d4 <= d3), 1.0, 0.0)                     # vertex B
    claim((vc <= 0) & (d1 >= 0) & (d3 <= 0), t_ab, 0.0)         # edge AB
    claim((d6 >= 0) & (d5 <= d6), 0.0, 1.0)                     # vertex C
    claim((vb <= 0) & (d2 >= 0) & (d6 <= 0), 0.0, t_ac)         # edge AC
    claim((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0),
          1.0 - t_bc, t_bc)                                     # edge BC
    claim(np.ones(n, dtype=bool), v_in, w_in)                   # interior

    closest = A + v[:, None] * ab + w[:, None] * ac
    diff = X - closest
    return v, w, np.einsum("ij,ij->i", diff, diff)


def closest_point_batch(positions: np.ndarray, mesh: ControlMesh, X: np.ndarray,
                        prune: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Global closest surface coordinate per query point (ties: lowest triangle).

    With ``prune`` set, triangles are screened with the exact lower bound
    ``dist(x, tri) >= dist(x, centroid) - circumradius`` against the nearest-
    vertex upper bound, which never discards a global minimizer (or any tie),
    so results are identical to the exhaustive scan.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    tris = mesh.triangles
    A, B, C = positions[tris[:, 0]], positions[tris[:, 1]], positions[tris[:, 2]]
    nq, nt = len(X), len(tris)

    if prune and nt > 8:
        centroids = (A + B + C) / 3.0
        radius = np.sqrt(np.maximum.reduce([
            np.einsum("ij,ij->i", A - centroids, A - centroids),
            np.einsum("ij,ij->i", B - centroids, B - centroids),
            np.einsum("ij,ij->i", C - centroids, C - centroids),
        ]))
        x2 = np.einsum("ij,ij->i", X, X)
        p2 = np.einsum("ij,ij->i", positions, positions)
        d_vert = np.sqrt(np.maximum(
            x2[:, None] + p2[None, :] - 2.0 * (X @ positions.T), 0.0,
        ).min(axis=1))                                          # (nq,) upper bound
        c2 = np.einsum("ij,ij->i", centroids, centroids)
        d_cent = np.sqrt(np.maximum(
            x2[:, None] + c2[None, :] - 2.0 * (X @ centroids.T), 0.0))
        cand = d_cent - radius[None, :] <= d_vert[:, None] + 1e-12
        qi, ti = np.nonzero(cand)
    else:
        qi = np.repeat(np.arange(nq), nt)
        ti = np.tile(np.arange(nt), nq)

    v, w, dist2 = _point_triangle(A[ti], B[ti], C[ti], X[qi])
    # Segmented argmin per query with lowest-triangle tie break: lexsort by
    # (query, distance, triangle) and take the first row of each query group.
    order = np.lexsort((ti, dist2, qi))
    qi_sorted = qi[order]
    first = np.searchsorted(qi_sorted, np.arange(nq))
    pick = order[first]
    patches = ti[pick]
    vw = np.column_stack([v[pick], w[pick]])
    np.clip(vw, 0.0, 1.0, out=vw)
    over = vw.sum(axis=1)
    bad = over > 1.0
    if bad.any():
        vw[bad] /= over[bad][:, None]
    return patches.astype(np.int64), vw


def closest_point(posed, x: np.ndarray) -> SurfaceCoordinate:
    """Closest surface coordinate of one point on a posed mesh."""
    patches, vw = closest_point_batch(posed.positions, posed.mesh,
                                      np.asarray(x, dtype=np.float64)[None])
    return SurfaceCoordinate(int(patches[0]), float(vw[0, 0]), float(vw[0, 1]))


# ---------------------------------------------------------------------------
# Damped least-squares steps

def _schur_solve(system, damping: float):
    """Solve the damped joint normal equations by eliminating the 2x2 U blocks.

    Returns (delta_theta, delta_u).  Raises ``np.linalg.LinAlgError`` when the
    reduced system is singular.
    """
    D = system.datum_count
    P = system.param_count
    r = system.residual
    Jt = system.jac_theta
    Bu = system.jac_u                                   # (D, 6, 2)
    rr = r.reshape(D, 6)

    A = Jt.T @ Jt + damping * np.eye(P)
    g = Jt.T @ r
    C = np.einsum("dia,dib->dab", Bu, Bu)               # (D, 2, 2)
    C[:, 0, 0] += damping
    C[:, 1, 1] += damping
    gu = np.einsum("dia,di->da", Bu, rr)                # (D, 2)
    M = np.einsum("dip,dia->dpa", Jt.reshape(D, 6, P), Bu)  # (D, P, 2)

    det = C[:, 0, 0] * C[:, 1, 1] - C[:, 0, 1] * C[:, 1, 0]
    if (np.abs(det) <= 1e-300).any():
        raise np.linalg.LinAlgError("singular correspondence block")
    Cinv = np.empty_like(C)
    Cinv[:, 0, 0] = C[:, 1, 1]
    Cinv[:, 1, 1] = C[:, 0, 0]
    Cinv[:, 0, 1] = -C[:, 0, 1]
    Cinv[:, 1, 0] = -C[:, 1, 0]
    Cinv /= det[:, None, None]

    MCinv = np.einsum("dpa,dab->dpb", M, Cinv)          # (D, P, 2)
    S = A - np.einsum("dpa,dqa->pq", MCinv, M)
    rhs = -g + np.einsum("dpa,da->p", MCinv, gu)
    if P:
        dtheta = np.linalg.solve(S, rhs)
    else:
        dtheta = np.zeros(0)
    du = -np.einsum("dab,db->da", Cinv, gu + np.einsum("dpa,p->da", M, dtheta))
    return dtheta, du


def dense_joint_solve(system, damping: float):
    """Reference dense solve of the full (P + 2D) damped system (oracle)."""
    D = system.datum_count
    P = system.param_count
    J = np.zeros((6 * D, P + 2 * D))
    J[:, :P] = system.jac_theta
    for i in range(D):
        J[6 * i:6 * i + 6, P + 2 * i:P + 2 * i + 2] = system.jac_u[i]
    H = J.T @ J + damping * np.eye(P + 2 * D)
    step = np.linalg.solve(H, -J.T @ system.residual)
    return step[:P], step[P:].reshape(D, 2)


def _theta_solve(system, damping: float):
    P = system.param_count
    A = system.jac_theta.T @ system.jac_theta + damping * np.eye(P)
    return np.linalg.solve(A, -(system.jac_theta.T @ system.residual))


def lifted_extra_mults(D: int, P: int) -> int:
    """Per-iteration multiplications the U elimination adds over a theta-only solve.

    Counts the per-datum solve core: forming the 2x2 blocks (18), the U-side
    gradient (12), applying the 2x2 inverse (8), and the back-substitution
    and reduced-system right-hand-side corrections (2P each).  The nominal
    closed-form estimate for this overhead is (18 + 4P) per datum.
    """
    return D * (38 + 4 * P)


def lifted_step(model, data: Observations, state: FitState, config: FitConfig,
                system=None) -> FitState:
    """One damped Levenberg step jointly in (theta, U) with walking updates."""
    posed = model.pose(state.theta)
    if system is None:
        system = assemble(posed, config.surface, state.U.patches, state.U.vw,
                          data, config.lambda_n)
    energy = system.energy
    damping = state.damping
    mesh = model.mesh
    for _ in range(config.max_rejects):
        try:
            dtheta, du = _schur_solve(system, damping)
        except np.linalg.LinAlgError:
            if damping >= DAMPING_MAX:
                raise SolveAbort("singular reduced system at maximum damping")
            damping = min(damping * config.damping_up, DAMPING_MAX)
            continue
        theta_new = state.theta + dtheta
        patches, vw, n_bnd, n_trunc = walk_batch(mesh, state.U.patches, state.U.vw, du)
        posed_new = model.pose(theta_new, with_jac=False)
        e_new = energy_only(posed_new, config.surface, patches, vw, data,
                            config.lambda_n)
        if e_new <= energy:
            return FitState(
                theta=theta_new,
                U=CorrespondenceSet(patches, vw),
                damping=max(damping / config.damping_down, DAMPING_MIN),
                energy=e_new,
                boundary_hits=state.boundary_hits + n_bnd,
                walk_truncations=state.walk_truncations + n_trunc,
                extra_solve_mults=lifted_extra_mults(len(data), model.param_count),
            )
        damping = min(damping * config.damping_up, DAMPING_MAX)
    return replace(state, damping=damping, energy=energy, extra_solve_mults=0)


def icp_step(model, data: Observations, state: FitState, config: FitConfig) -> FitState:
    """Closest-point correspondence reset, then one damped theta-only step."""
    posed = model.pose(state.theta)
    patches, vw = closest_point_batch(posed.positions, model.mesh, data.points)
    system = assemble(posed, config.surface, patches, vw, data, config.lambda_n)
    energy = system.energy
    damping = state.damping
    theta = state.theta
    for _ in range(config.max_rejects):
        try:
            dtheta = _theta_solve(system, damping)
        except np.linalg.LinAlgError:
            if damping >= DAMPING_MAX:
                raise SolveAbort("singular system at maximum damping")
            damping = min(damping * config.damping_up, DAMPING_MAX)
            continue
        theta_new = state.theta + dtheta
        e_new = energy_only(model.pose(theta_new, with_jac=False), config.surface,
                            patches, vw, data, config.lambda_n)
        if e_new <= energy:
            theta, energy = theta_new, e_new
            damping = max(damping / config.damping_down, DAMPING_MIN)
            break
        damping = min(damping * config.damping_up, DAMPING_MAX)
    return FitState(
        theta=theta,
        U=CorrespondenceSet(patches, vw),
        damping=damping,
        energy=energy,
        boundary_hits=state.boundary_hits,
        walk_truncations=state.walk_truncations,
        extra_solve_mults=0,
    )


_STEPPERS = {"lifted": lifted_step, "icp": icp_step}


def run_fit(model, data: Observations, theta0: np.ndarray, config: FitConfig) -> FitReport:
    """Drive the selected stepper from an initial pose to the cap or convergence.

    Correspondences are initialized by closest point at the starting pose.
    Convergence is declared once the energy sits below ``energy_floor`` or its
    relative decrease over ``convergence_window`` iterations drops under
    ``convergence_rel`` (set ``convergence_rel=None`` for a fixed budget).
    """
    try:
        stepper = _STEPPERS[config.optimizer]
    except KeyError:
        raise ValueError(f"unknown optimizer {config.optimizer!r}")
    t_start = time.perf_counter()
    theta = np.asarray(theta0, dtype=np.float64).copy()
    posed = model.pose(theta, with_jac=False)
    patches, vw = closest_point_batch(posed.positions, model.mesh, data.points)
    U = CorrespondenceSet(patches, vw)
    energy = energy_only(posed, config.surface, patches, vw, data, config.lambda_n)
    state = FitState(theta, U, config.damping_init, energy)

    energy_trace = [energy]
    theta_trace = [theta.copy()]
    iter_times: list[float] = []
    converged = config.max_iterations > 0 and energy <= config.energy_floor
    aborted = False
    iterations = 0
    for k in range(config.max_iterations):
        if converged:
            break
        t0 = time.perf_counter()
        try:
            state = stepper(model, data, state, config)
        except SolveAbort:
            aborted = True
            break
        iter_times.append(time.perf_counter() - t0)
        energy_trace.append(state.energy)
        theta_trace.append(state.theta.copy())
        iterations = k + 1
        if state.energy <= config.energy_floor:
            converged = True
        elif config.convergence_rel is not None and len(energy_trace) > config.convergence_window:
            prev = energy_trace[-1 - config.convergence_window]
            if prev - state.energy < config.convergence_rel * max(prev, 1e-300):
                converged = True
    return FitReport(
        theta=state.theta,
        U=state.U,
        iterations=iterations,
        converged=converged,
        energy_trace=energy_trace,
        theta_trace=theta_trace,
        wall_time=time.perf_counter() - t_start,
        iteration_times=iter_times,
        boundary_hits=state.boundary_hits,
        walk_truncations=state.walk_truncations,
        aborted=aborted,
        flop_estimate={
            "lifted_extra_mults_per_iter": lifted_extra_mults(len(data), model.param_count),
            "nominal_extra_mults_per_iter": len(data) * (18 + 4 * model.param_count),
        },
    )
