"""Relative evaluation-cost probe: interpolated vs facet normals.

Times batched surface evaluations at random coordinates, with and without
the surface-coordinate derivative blocks, and reports counter-based
per-evaluation multiplication estimates alongside the wall times.  Absolute
seconds are machine-specific; only the phong/trimesh ratios are meaningful.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..kinematics import pose_rigid
from ..surfaces import batch_evaluator
from .models import make_ellipsoid

_CHUNK = 200_000

# Per-evaluation multiplication estimates.  Value path: position lerp (9),
# normal lerp (9) or edge cross product (6), squared norm (3), normalize (4).
# The interpolated-normal d/du path adds the tangent-projection applied to
# the two normal-derivative columns (9 each).
EVAL_MULTS = {
    "phong": {"eval": 25, "with_du": 43},
    "trimesh": {"eval": 22, "with_du": 22},
}


@dataclass
class ProbeResult:
    count: int
    seconds: dict        # {surface: {"eval": s, "with_du": s}}
    mults: dict          # per-eval multiplication estimates

    def ratio(self, mode: str) -> float:
        return self.seconds["phong"][mode] / self.seconds["trimesh"][mode]

    def table(self) -> str:
        lines = [f"{'surface':<10} {'eval (s)':>10} {'with du (s)':>12}"]
        for surface in ("phong", "trimesh"):
            s = self.seconds[surface]
            lines.append(f"{surface:<10} {s['eval']:>10.4f} {s['with_du']:>12.4f}")
        lines.append(f"{'ratio':<10} {self.ratio('eval'):>10.3f} {self.ratio('with_du'):>12.3f}")
        return "\n".join(lines)


def run_probe(count: int, seed: int = 0, facets: int = 320,
              repeats: int = 3) -> ProbeResult:
    """Time ``count`` surface evaluations per surface type and derivative mode.

    Each measurement is the best of ``repeats`` passes, which suppresses
    scheduler noise without biasing the inter-surface comparison.
    """
    if count < 1:
        raise ValueError("evaluation count must be >= 1")
    mesh = make_ellipsoid(facets)
    posed = pose_rigid(mesh, np.array([0.05, -0.02, 0.03, 0.2, -0.1, 0.3]))
    rng = np.random.default_rng(seed)
    patches = rng.integers(0, len(mesh.triangles), size=count)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    vw = np.column_stack([r1 * (1.0 - r2), r1 * r2])

    seconds: dict = {}
    for surface in ("phong", "trimesh"):
        ev = batch_evaluator(surface)
        seconds[surface] = {}
        for mode, with_du in (("eval", False), ("with_du", True)):
            ev(posed, patches[:1000], vw[:1000], with_theta=False, with_du=with_du)
            best = np.inf
            for _ in range(max(repeats, 1)):
                t0 = time.perf_counter()
                for lo in range(0, count, _CHUNK):
                    hi = min(lo + _CHUNK, count)
                    ev(posed, patches[lo:hi], vw[lo:hi], with_theta=False,
                       with_du=with_du)
                best = min(best, time.perf_counter() - t0)
            seconds[surface][mode] = best
    return ProbeResult(count, seconds, EVAL_MULTS)
