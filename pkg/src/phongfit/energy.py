"""The lifted data objective: residual vector and sparse Jacobian in (theta, U).

Each datum contributes six residual rows: the position gap scaled by
``1/sqrt(D)`` and the normal gap scaled by ``sqrt(lambda_n / D)``, so the
squared norm of the stacked residual equals the averaged objective

    E = (1/D) * sum_i ( ||S(u_i) - x_i||^2 + lambda_n * ||N(u_i) - x_i_n||^2 )

and downstream least-squares machinery needs no extra weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .surfaces import batch_evaluator

ROWS_PER_DATUM = 6


@dataclass(frozen=True)
class Observation:
    """A data point with an estimated unit normal."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.point, dtype=np.float64).reshape(3)
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-6:
            raise ValueError("observation normal must be unit length")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "normal", n)


@dataclass
class Observations:
    """Column view over D observations (points and unit normals)."""

    points: np.ndarray      # (D, 3)
    normals: np.ndarray     # (D, 3)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.normals = np.asarray(self.normals, dtype=np.float64)
        if self.points.shape != self.normals.shape or self.points.shape[1:] != (3,):
            raise ValueError("points and normals must both be (D, 3)")
        norms = np.linalg.norm(self.normals, axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ValueError(f"observation normal {int(np.abs(norms - 1.0).argmax())} not unit")

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i: int) -> Observation:
        return Observation(self.points[i], self.normals[i])


@dataclass
class FitConfig:
    """Knobs shared by the optimizers and the benchmark harness."""

    lambda_n: float = 1.0
    surface: str = "phong"
    optimizer: str = "lifted"
    max_iterations: int = 50
    damping_init: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 10.0
    max_rejects: int = 10
    convergence_rel: float | None = 1e-9
    convergence_window: int = 3
    energy_floor: float = 1e-13
    seed: int = 0

    def __post_init__(self):
        if self.lambda_n < 0.0:
            raise ValueError("lambda_n must be nonnegative")
        if self.max_iterations < 0:
            raise ValueError("iteration cap must be >= 0")
        if self.max_rejects < 1:
            raise ValueError("max_rejects must be >= 1")


@dataclass
class ResidualSystem:
    """Stacked residual with the Jacobian split into pose and correspondence parts.

    ``jac_u`` keeps the exact block-diagonal structure: block i couples only
    datum i's six rows to its own (v, w).
    """

    residual: np.ndarray    # (6D,)
    jac_theta: np.ndarray   # (6D, P)
    jac_u: np.ndarray       # (D, 6, 2)
    energy: float = field(init=False)

    def __post_init__(self):
        self.energy = float(self.residual @ self.residual)

    @property
    def datum_count(self) -> int:
        return len(self.jac_u)

    @property
    def param_count(self) -> int:
        return self.jac_theta.shape[1]


def _eval_surface(posed, surface: str, patches, vw, with_theta: bool):
    return batch_evaluator(surface)(posed, patches, vw, with_theta=with_theta)


def assemble(posed, surface: str, patches: np.ndarray, vw: np.ndarray,
             data: Observations, lambda_n: float) -> ResidualSystem:
    """Build the residual system for the current pose and correspondences."""
    D = len(data)
    if len(patches) != D:
        raise ValueError(f"{len(patches)} correspondences for {D} observations")
    ev = _eval_surface(posed, surface, patches, vw, with_theta=True)
    ws = 1.0 / np.sqrt(D)
    wn = np.sqrt(lambda_n / D)

    res = np.empty((D, ROWS_PER_DATUM))
    res[:, :3] = ws * (ev.position - data.points)
    res[:, 3:] = wn * (ev.normal - data.normals)

    P = ev.dS_dtheta.shape[2]
    jac_theta = np.empty((D, ROWS_PER_DATUM, P))
    jac_theta[:, :3, :] = ws * ev.dS_dtheta
    jac_theta[:, 3:, :] = wn * ev.dN_dtheta

    jac_u = np.empty((D, ROWS_PER_DATUM, 2))
    jac_u[:, :3, :] = ws * ev.dS_du
    jac_u[:, 3:, :] = wn * ev.dN_du
    return ResidualSystem(res.reshape(-1), jac_theta.reshape(D * ROWS_PER_DATUM, P), jac_u)


def energy_only(posed, surface: str, patches: np.ndarray, vw: np.ndarray,
                data: Observations, lambda_n: float) -> float:
    """The averaged objective without any derivative work."""
    D = len(data)
    ev = batch_evaluator(surface)(posed, patches, vw, with_theta=False, with_du=False)
    pos_sq = np.einsum("ij,ij->", ev.position - data.points, ev.position - data.points)
    nrm_sq = np.einsum("ij,ij->", ev.normal - data.normals, ev.normal - data.normals)
    return float((pos_sq + lambda_n * nrm_sq) / D)
