"""Synthetic observation generation for benchmark trials."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..energy import Observations
from ..kinematics import PosedControlData
from ..surfaces import eval_phong_batch


class NoVisibleTrianglesError(Exception):
    """Visibility filter removed every triangle."""


@dataclass
class SampledData:
    observations: Observations
    patches: np.ndarray     # ground-truth surface coordinates
    vw: np.ndarray


def sample_observations(posed: PosedControlData, count: int, noise: float,
                        rng: np.random.Generator, visible_only: bool = False,
                        symmetric_noise: bool = False) -> SampledData:
    """Draw points and normals from the posed interpolated-normal surface.

    Triangles are chosen with probability proportional to posed area
    (restricted to posed facet normals with positive z when ``visible_only``);
    barycentric coordinates are uniform per triangle.  Per-component noise is
    uniform on ``[0, noise]`` (or ``[-noise, noise]`` with
    ``symmetric_noise``), added to points and normals; noisy normals are
    renormalized.
    """
    if count < 1:
        raise ValueError("need at least one observation")
    mesh = posed.mesh
    tris = mesh.triangles
    a = posed.positions[tris[:, 0]]
    cross = np.cross(posed.positions[tris[:, 1]] - a, posed.positions[tris[:, 2]] - a)
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    if visible_only:
        facing = cross[:, 2] > 0.0
        if not facing.any():
            raise NoVisibleTrianglesError("no triangle faces the positive z-axis")
        areas = np.where(facing, areas, 0.0)
    probs = areas / areas.sum()
    patches = rng.choice(len(tris), size=count, p=probs)

    # Square-root warp gives the uniform density on each triangle.
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    vw = np.column_stack([r1 * (1.0 - r2), r1 * r2])

    ev = eval_phong_batch(posed, patches, vw, with_theta=False)
    points = ev.position
    normals = ev.normal
    if noise > 0.0:
        lo = -noise if symmetric_noise else 0.0
        points = points + rng.uniform(lo, noise, size=points.shape)
        normals = normals + rng.uniform(lo, noise, size=normals.shape)
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return SampledData(Observations(points, normals), patches, vw)
