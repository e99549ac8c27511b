"""Command-line entry points: fit, study, sweep, probe."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from ..energy import FitConfig, Observations
from ..kinematics import RigidModel, SkinnedFitModel
from ..mesh import load_mesh_text
from ..solvers import run_fit
from .models import make_chain3, make_ellipsoid
from .probe import run_probe
from .study import (
    DEFAULT_LAMBDA_GRID,
    ConfigError,
    OptimizerArm,
    StudySpec,
    lambda_sweep_spec,
    load_study_config,
    run_study,
)


def _fit_model(args):
    if args.mesh:
        return RigidModel(load_mesh_text(args.mesh))
    if args.model == "chain3":
        return SkinnedFitModel(make_chain3())
    if args.model == "ellipsoid-320":
        return RigidModel(make_ellipsoid(320))
    if args.model == "ellipsoid-1280":
        return RigidModel(make_ellipsoid(1280))
    raise SystemExit(f"unknown model {args.model!r}")


def read_observations_csv(path) -> Observations:
    points, normals = [], []
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"x", "y", "z", "nx", "ny", "nz"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise SystemExit(f"observations file needs columns {sorted(needed)}")
        for row in reader:
            points.append([float(row["x"]), float(row["y"]), float(row["z"])])
            normals.append([float(row["nx"]), float(row["ny"]), float(row["nz"])])
    return Observations(np.array(points), np.array(normals))


def cmd_fit(args) -> int:
    model = _fit_model(args)
    data = read_observations_csv(args.data)
    config = FitConfig(
        lambda_n=args.lambda_n,
        surface=args.surface,
        optimizer=args.optimizer,
        max_iterations=args.iters,
        seed=args.seed,
    )
    theta0 = np.zeros(model.param_count)
    report = run_fit(model, data, theta0, config)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "fit.json"), "w", encoding="utf-8") as fh:
        json.dump({
            "theta": report.theta.tolist(),
            "energy": report.energy_trace[-1],
            "iterations": report.iterations,
            "converged": report.converged,
            "wall_time_s": report.wall_time,
            "boundary_hits": report.boundary_hits,
            "walk_truncations": report.walk_truncations,
            "flop_estimate": report.flop_estimate,
        }, fh, indent=1)
    with open(os.path.join(args.out_dir, "fit_trace.csv"), "w", encoding="ascii",
              newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "energy"] + [f"theta{i}" for i in range(model.param_count)])
        for k, (e, th) in enumerate(zip(report.energy_trace, report.theta_trace)):
            w.writerow([k, repr(float(e))] + [repr(float(x)) for x in th])
    print(f"fit: E={report.energy_trace[-1]:.3e} after {report.iterations} iterations "
          f"-> {args.out_dir}")
    return 0


def _study_spec_from_args(args) -> StudySpec:
    if args.config:
        spec = load_study_config(args.config)
        overrides = {}
        for name in ("model", "trials", "iters", "seed", "noise"):
            val = getattr(args, name, None)
            if val is not None:
                overrides["iterations" if name == "iters" else name] = val
        if args.visible_only is not None:
            overrides["visible_only"] = args.visible_only
        if overrides:
            spec = StudySpec(**{**_spec_kwargs(spec), **overrides})
        return spec
    arms = [OptimizerArm(args.optimizer, args.surface, args.lambda_n)]
    return StudySpec(
        model=args.model or "ellipsoid-320",
        trials=args.trials if args.trials is not None else 400,
        iterations=args.iters if args.iters is not None else 50,
        noise=args.noise if args.noise is not None else 0.1,
        visible_only=True if args.visible_only is None else args.visible_only,
        seed=args.seed if args.seed is not None else 0,
        arms=arms,
    )


def _spec_kwargs(spec: StudySpec) -> dict:
    return {
        "model": spec.model, "trials": spec.trials, "data_count": spec.data_count,
        "noise": spec.noise, "symmetric_noise": spec.symmetric_noise,
        "visible_only": spec.visible_only, "iterations": spec.iterations,
        "seed": spec.seed, "arms": spec.arms, "name": spec.name,
    }


def cmd_study(args) -> int:
    try:
        spec = _study_spec_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    run_study(spec, args.out_dir, jobs=args.jobs)
    print(f"study '{spec.name}': {len(spec.arms)} arm(s) x {spec.trials} trial(s) "
          f"-> {args.out_dir}")
    return 0


def cmd_sweep(args) -> int:
    grid = DEFAULT_LAMBDA_GRID if args.grid is None else \
        [float(x) for x in args.grid.split(",")]
    base = StudySpec(
        model=args.model or "ellipsoid-320",
        trials=args.trials if args.trials is not None else 400,
        iterations=args.iters if args.iters is not None else 50,
        noise=args.noise if args.noise is not None else 0.1,
        visible_only=True if args.visible_only is None else args.visible_only,
        seed=args.seed if args.seed is not None else 0,
        arms=[OptimizerArm(args.optimizer, args.surface, 0.0)],
    )
    spec = lambda_sweep_spec(base, args.optimizer, args.surface, grid)
    results = run_study(spec, args.out_dir, jobs=args.jobs)
    rows = []
    for arm in spec.arms:
        outs = results[arm.config_id]
        finals = np.array([o.err_trace[-1] for o in outs])
        rows.append((arm.lambda_n, float(finals.mean())))
    with open(os.path.join(args.out_dir, "sweep_summary.csv"), "w",
              encoding="ascii", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda_n", "mean_err_final_deg"])
        for lam, err in rows:
            w.writerow([repr(lam), repr(err)])
    best = min(rows, key=lambda r: r[1])
    print(f"sweep: best lambda_n = {best[0]:g} (mean error {best[1]:.3f} deg)")
    return 0


def cmd_probe(args) -> int:
    if args.count < 1:
        print("probe: --count must be >= 1", file=sys.stderr)
        return 2
    result = run_probe(args.count, seed=args.seed or 0)
    print(result.table())
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        with open(os.path.join(args.out_dir, "probe.json"), "w", encoding="utf-8") as fh:
            json.dump({"count": result.count, "seconds": result.seconds,
                       "mults_per_eval": result.mults}, fh, indent=1)
    return 0


def _add_common(p: argparse.ArgumentParser, with_arm: bool = True):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--model", default=None,
                   choices=["ellipsoid-320", "ellipsoid-1280", "chain3"])
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--visible-only", action=argparse.BooleanOptionalAction, default=None)
    if with_arm:
        p.add_argument("--surface", choices=["phong", "trimesh"], default="phong")
        p.add_argument("--optimizer", choices=["lifted", "icp"], default="lifted")
        p.add_argument("--lambda-n", type=float, default=1.0)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="phongfit",
                                     description="Surface model fitting benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="single fit from files")
    _add_common(p_fit)
    p_fit.add_argument("--mesh", default=None, help="mesh text file (overrides --model)")
    p_fit.add_argument("--data", required=True, help="observations CSV (x,y,z,nx,ny,nz)")
    p_fit.set_defaults(func=cmd_fit)

    p_study = sub.add_parser("study", help="config-driven trial grid")
    _add_common(p_study)
    p_study.add_argument("--config", default=None, help="study JSON file")
    p_study.set_defaults(func=cmd_study)

    p_sweep = sub.add_parser("sweep", help="normal-weight sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--grid", default=None, help="comma-separated lambda values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_probe = sub.add_parser("probe", help="evaluation timing probe")
    p_probe.add_argument("--count", type=int, default=1_000_000)
    p_probe.add_argument("--seed", type=int, default=0)
    p_probe.add_argument("--out-dir", default=None)
    p_probe.set_defaults(func=cmd_probe)

    args = parser.parse_args(argv)
    if getattr(args, "iters", None) is not None and args.iters < 0:
        parser.error("--iters must be >= 0")
    if getattr(args, "func", None) is cmd_fit and args.iters is None:
        args.iters = 50
    if getattr(args, "func", None) is cmd_fit and args.seed is None:
        args.seed = 0
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
