"""Config-driven benchmark studies with CSV emission.

A study fixes the model, datum count, noise and iteration budget, and runs a
grid of (optimizer, surface, lambda_n) configurations over seeded trials.
Every configuration sees the same per-trial target pose and data: the trial
stream seed is ``study_seed XOR trial_index``, so reruns and parallel runs
are reproducible down to the byte in every statistics CSV.  Wall-clock
columns live only in ``timings.csv`` and ``err_time.csv``, which are the two
artifacts that cannot be byte-stable across runs.
"""

from __future__ import annotations

import csv
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..energy import FitConfig
from ..kinematics import RigidModel, SkinnedFitModel, pose_rigid, pose_lbs
from ..solvers import run_fit
from .metrics import rotation_error_trace
from .models import make_chain3, make_ellipsoid
from .sampling import sample_observations

ANGLE_BINS = 24
ERR_TIME_CHECKPOINTS = (10, 20, 30)

STATS_FILES = ("trials.csv", "iterations.csv", "convergence.csv",
               "by_angle.csv", "ablation.csv")
TIMING_FILES = ("timings.csv", "err_time.csv")


class ConfigError(Exception):
    """Study configuration rejected; the message names the offending field."""


@dataclass
class OptimizerArm:
    optimizer: str
    surface: str
    lambda_n: float

    @property
    def config_id(self) -> str:
        return f"{self.optimizer}-{self.surface}-lam{self.lambda_n:g}"


@dataclass
class StudySpec:
    model: str = "ellipsoid-320"
    trials: int = 400
    data_count: int = 200
    noise: float = 0.1
    symmetric_noise: bool = False
    visible_only: bool = True
    iterations: int = 50
    seed: int = 0
    arms: list[OptimizerArm] = field(default_factory=list)
    name: str = "study"

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials: must be >= 1")
        if self.data_count < 1:
            raise ConfigError("data_count: must be >= 1")
        if self.noise < 0.0:
            raise ConfigError("noise: must be nonnegative")
        if self.iterations < 0:
            raise ConfigError("iterations: must be >= 0")
        if not self.arms:
            raise ConfigError("configs: at least one optimizer arm is required")


_ARM_FIELDS = {"optimizer": str, "surface": str, "lambda_n": float}
_SPEC_FIELDS = {
    "model": str, "trials": int, "data_count": int, "noise": float,
    "symmetric_noise": bool, "visible_only": bool, "iterations": int,
    "seed": int, "name": str,
}


def parse_study_config(doc: dict) -> StudySpec:
    """Validate a JSON study document, naming bad fields in diagnostics."""
    if not isinstance(doc, dict):
        raise ConfigError("study config must be a JSON object")
    kwargs = {}
    for key, value in doc.items():
        if key == "configs":
            continue
        if key not in _SPEC_FIELDS:
            raise ConfigError(f"{key}: unknown study field")
        want = _SPEC_FIELDS[key]
        if want in (int, float) and isinstance(value, bool):
            raise ConfigError(f"{key}: expected {want.__name__}, got bool")
        if not isinstance(value, (want, int) if want is float else want):
            raise ConfigError(f"{key}: expected {want.__name__}, got {type(value).__name__}")
        kwargs[key] = want(value)
    arms = []
    for i, arm_doc in enumerate(doc.get("configs", [])):
        if not isinstance(arm_doc, dict):
            raise ConfigError(f"configs[{i}]: must be an object")
        for fname, want in _ARM_FIELDS.items():
            if fname not in arm_doc:
                raise ConfigError(f"configs[{i}].{fname}: missing")
        extra = set(arm_doc) - set(_ARM_FIELDS)
        if extra:
            raise ConfigError(f"configs[{i}].{sorted(extra)[0]}: unknown field")
        opt, surf = arm_doc["optimizer"], arm_doc["surface"]
        if opt not in ("lifted", "icp"):
            raise ConfigError(f"configs[{i}].optimizer: must be 'lifted' or 'icp'")
        if surf not in ("phong", "trimesh"):
            raise ConfigError(f"configs[{i}].surface: must be 'phong' or 'trimesh'")
        lam = arm_doc["lambda_n"]
        if isinstance(lam, bool) or not isinstance(lam, (int, float)) or lam < 0:
            raise ConfigError(f"configs[{i}].lambda_n: must be a nonnegative number")
        arms.append(OptimizerArm(opt, surf, float(lam)))
    kwargs["arms"] = arms
    return StudySpec(**kwargs)


def load_study_config(path) -> StudySpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_study_config(doc)


def trial_seed(study_seed: int, trial_index: int) -> int:
    return study_seed ^ trial_index


@dataclass
class TrialOutcome:
    config_id: str
    trial: int
    seed: int
    gt_y_deg: float
    err_trace: np.ndarray       # (iterations + 1,)
    energy_trace: np.ndarray
    cum_ms: np.ndarray          # (iterations + 1,), wall clock
    iterations_used: int
    converged: bool
    boundary_hits: int
    walk_truncations: int


def _build_model(name: str):
    if name == "ellipsoid-320":
        return RigidModel(make_ellipsoid(320))
    if name == "ellipsoid-1280":
        return RigidModel(make_ellipsoid(1280))
    if name == "chain3":
        return SkinnedFitModel(make_chain3())
    raise ConfigError(f"model: unknown model {name!r}")


def _trial_poses(model_name: str, rng: np.random.Generator
                 ) -> tuple[np.ndarray, np.ndarray, float]:
    """Ground-truth pose, fit starting pose, and a scalar descriptor (degrees).

    Ellipsoid trials target [0,0,0,y,y,y] with y uniform on (-pi, pi) and
    always start from the neutral pose.  Chain trials target a random
    articulated configuration and start from a tracking-style perturbation
    of it.
    """
    if model_name.startswith("ellipsoid"):
        y = rng.uniform(-np.pi, np.pi)
        theta = np.array([0.0, 0.0, 0.0, y, y, y])
        return theta, np.zeros(6), float(np.degrees(y))
    theta = np.concatenate([
        rng.uniform(-0.2, 0.2, size=3),
        rng.uniform(-0.3, 0.3, size=3),
        rng.uniform(-0.6, 0.6, size=3),
    ])
    delta = np.concatenate([
        rng.uniform(-0.05, 0.05, size=3),
        rng.uniform(-0.05, 0.05, size=3),
        rng.uniform(-0.12, 0.12, size=3),
    ])
    return theta, theta + delta, float(np.degrees(np.linalg.norm(theta[3:6])))


def _pose_for(model, theta):
    if isinstance(model, SkinnedFitModel):
        return pose_lbs(model.skinned, theta, normal_mode=model.normal_mode)
    return pose_rigid(model.mesh, theta)


def run_trial(model, spec: StudySpec, arm: OptimizerArm, trial: int) -> TrialOutcome:
    seed = trial_seed(spec.seed, trial)
    rng = np.random.default_rng(seed)
    theta_gt, theta0, gt_deg = _trial_poses(spec.model, rng)
    posed_gt = _pose_for(model, theta_gt)
    data = sample_observations(posed_gt, spec.data_count, spec.noise, rng,
                               visible_only=spec.visible_only,
                               symmetric_noise=spec.symmetric_noise)
    config = FitConfig(
        lambda_n=arm.lambda_n,
        surface=arm.surface,
        optimizer=arm.optimizer,
        max_iterations=spec.iterations,
        convergence_rel=None,   # fixed budget, as in the published protocol
        seed=seed,
    )
    report = run_fit(model, data.observations, theta0, config)

    n = spec.iterations + 1
    err = rotation_error_trace(report.theta_trace, theta_gt)
    err = _pad(err, n)
    energy = _pad(np.array(report.energy_trace), n)
    cum = np.concatenate([[0.0], np.cumsum(report.iteration_times) * 1e3])
    cum = _pad(cum, n)
    return TrialOutcome(
        config_id=arm.config_id,
        trial=trial,
        seed=seed,
        gt_y_deg=gt_deg,
        err_trace=err,
        energy_trace=energy,
        cum_ms=cum,
        iterations_used=report.iterations,
        converged=report.converged,
        boundary_hits=report.boundary_hits,
        walk_truncations=report.walk_truncations,
    )


def _pad(a: np.ndarray, n: int) -> np.ndarray:
    if len(a) >= n:
        return a[:n]
    return np.concatenate([a, np.full(n - len(a), a[-1] if len(a) else 0.0)])


def _run_arm_chunk(args):
    model_name, spec, arm, trials = args
    model = _build_model(model_name)
    return [run_trial(model, spec, arm, t) for t in trials]


def run_study(spec: StudySpec, out_dir, jobs: int = 1) -> dict[str, list[TrialOutcome]]:
    """Execute the trial grid and write the CSV artifacts into ``out_dir``."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    results: dict[str, list[TrialOutcome]] = {}
    if jobs <= 1:
        model = _build_model(spec.model)
        for arm in spec.arms:
            results[arm.config_id] = [run_trial(model, spec, arm, t)
                                      for t in range(spec.trials)]
    else:
        tasks = []
        for arm in spec.arms:
            chunks = np.array_split(np.arange(spec.trials), jobs)
            tasks.extend((spec.model, spec, arm, list(map(int, c)))
                         for c in chunks if len(c))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk_results = list(pool.map(_run_arm_chunk, tasks))
        for (_, _, arm, _), outcomes in zip(tasks, chunk_results):
            results.setdefault(arm.config_id, []).extend(outcomes)
        for cid in results:
            results[cid].sort(key=lambda o: o.trial)
    write_study_csvs(spec, results, out_dir)
    manifest = {
        "name": spec.name,
        "version": __version__,
        "config": {
            "model": spec.model, "trials": spec.trials, "data_count": spec.data_count,
            "noise": spec.noise, "symmetric_noise": spec.symmetric_noise,
            "visible_only": spec.visible_only, "iterations": spec.iterations,
            "seed": spec.seed,
            "configs": [vars(a) for a in spec.arms],
        },
        "host": {"platform": platform.platform(), "python": platform.python_version(),
                 "machine": platform.machine()},
        "wall_seconds": time.perf_counter() - t0,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return results


def _arm_of(spec: StudySpec, config_id: str) -> OptimizerArm:
    for arm in spec.arms:
        if arm.config_id == config_id:
            return arm
    raise KeyError(config_id)


def _mean_stats(values: np.ndarray) -> tuple[float, float, float]:
    mean = float(values.mean())
    if len(values) > 1:
        sd = float(values.std(ddof=1))
        se = sd / np.sqrt(len(values))
    else:
        sd = se = 0.0
    return mean, se, sd


def write_study_csvs(spec: StudySpec, results: dict[str, list[TrialOutcome]],
                     out_dir) -> None:
    import os

    def writer(name):
        fh = open(os.path.join(out_dir, name), "w", encoding="ascii", newline="")
        return fh, csv.writer(fh)

    fh, w = writer("trials.csv")
    w.writerow(["config_id", "optimizer", "surface", "lambda_n", "model", "trial",
                "seed", "gt_y_deg", "err_init_deg", "err_final_deg", "err_at10_deg",
                "energy_final", "iterations_used", "converged", "boundary_hits",
                "walk_truncations"])
    for cid, outs in results.items():
        arm = _arm_of(spec, cid)
        for o in outs:
            at10 = o.err_trace[min(10, len(o.err_trace) - 1)]
            w.writerow([cid, arm.optimizer, arm.surface, repr(arm.lambda_n),
                        spec.model, o.trial, o.seed, repr(o.gt_y_deg),
                        repr(float(o.err_trace[0])), repr(float(o.err_trace[-1])),
                        repr(float(at10)), repr(float(o.energy_trace[-1])),
                        o.iterations_used, int(o.converged), o.boundary_hits,
                        o.walk_truncations])
    fh.close()

    fh, w = writer("iterations.csv")
    w.writerow(["config_id", "trial", "iteration", "err_deg", "energy"])
    for cid, outs in results.items():
        for o in outs:
            for k in range(len(o.err_trace)):
                w.writerow([cid, o.trial, k, repr(float(o.err_trace[k])),
                            repr(float(o.energy_trace[k]))])
    fh.close()

    fh, w = writer("convergence.csv")
    w.writerow(["config_id", "optimizer", "surface", "lambda_n", "iteration",
                "mean_err_deg", "stderr_deg", "stdev_deg"])
    for cid, outs in results.items():
        arm = _arm_of(spec, cid)
        traces = np.stack([o.err_trace for o in outs])
        for k in range(traces.shape[1]):
            mean, se, sd = _mean_stats(traces[:, k])
            w.writerow([cid, arm.optimizer, arm.surface, repr(arm.lambda_n), k,
                        repr(mean), repr(se), repr(sd)])
    fh.close()

    fh, w = writer("by_angle.csv")
    w.writerow(["config_id", "optimizer", "surface", "lambda_n", "bin_lo_deg",
                "bin_hi_deg", "bin_center_deg", "count", "mean_err_deg",
                "stderr_deg", "stdev_deg"])
    edges = np.linspace(-180.0, 180.0, ANGLE_BINS + 1)
    for cid, outs in results.items():
        arm = _arm_of(spec, cid)
        angles = np.array([o.gt_y_deg for o in outs])
        finals = np.array([o.err_trace[-1] for o in outs])
        which = np.clip(np.digitize(angles, edges) - 1, 0, ANGLE_BINS - 1)
        for b in range(ANGLE_BINS):
            sel = which == b
            if not sel.any():
                continue
            mean, se, sd = _mean_stats(finals[sel])
            w.writerow([cid, arm.optimizer, arm.surface, repr(arm.lambda_n),
                        repr(float(edges[b])), repr(float(edges[b + 1])),
                        repr(float(0.5 * (edges[b] + edges[b + 1]))),
                        int(sel.sum()), repr(mean), repr(se), repr(sd)])
    fh.close()

    fh, w = writer("ablation.csv")
    w.writerow(["config_id", "optimizer", "surface", "lambda_n", "trials",
                "mean_err_at10_deg", "mean_err_final_deg"])
    for cid, outs in results.items():
        arm = _arm_of(spec, cid)
        traces = np.stack([o.err_trace for o in outs])
        at10 = traces[:, min(10, traces.shape[1] - 1)]
        w.writerow([cid, arm.optimizer, arm.surface, repr(arm.lambda_n), len(outs),
                    repr(float(at10.mean())), repr(float(traces[:, -1].mean()))])
    fh.close()

    fh, w = writer("timings.csv")
    w.writerow(["config_id", "trial", "iteration", "cum_ms"])
    for cid, outs in results.items():
        for o in outs:
            for k in range(len(o.cum_ms)):
                w.writerow([cid, o.trial, k, repr(float(o.cum_ms[k]))])
    fh.close()

    fh, w = writer("err_time.csv")
    w.writerow(["config_id", "optimizer", "surface", "lambda_n", "iters",
                "mean_err_deg", "mean_time_ms"])
    for cid, outs in results.items():
        arm = _arm_of(spec, cid)
        traces = np.stack([o.err_trace for o in outs])
        times = np.stack([o.cum_ms for o in outs])
        for k in ERR_TIME_CHECKPOINTS:
            if k >= traces.shape[1]:
                continue
            w.writerow([cid, arm.optimizer, arm.surface, repr(arm.lambda_n), k,
                        repr(float(traces[:, k].mean())),
                        repr(float(times[:, k].mean()))])
    fh.close()


def lambda_sweep_spec(base: StudySpec, optimizer: str, surface: str,
                      grid: list[float]) -> StudySpec:
    """Study spec sweeping lambda_n over a grid for one optimizer/surface pair."""
    arms = [OptimizerArm(optimizer, surface, lam) for lam in grid]
    return StudySpec(
        model=base.model, trials=base.trials, data_count=base.data_count,
        noise=base.noise, symmetric_noise=base.symmetric_noise,
        visible_only=base.visible_only, iterations=base.iterations,
        seed=base.seed, arms=arms, name=f"{base.name}-sweep",
    )


DEFAULT_LAMBDA_GRID = [round(0.05 * i, 2) for i in range(21)]
