"""Command-line driver: ``mvns {calibrate,run,converge,abstract,check}``.

Exit codes: 0 success, 2 calibration failure (also argparse usage errors),
3 solver failure, 4 invariant violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import attractor as at
from . import io as mio
from .config import ConfigError, RunConfig
from .dissipativity import (CalibratedConstants, CalibrationError, UncalibratedError,
                            calibrate_dissipativity, uniqueness_threshold)
from .euler import NoSolutionError, iterate, energy_identity_relative, step_solve, TRAJECTORY_COLUMNS
from .mvds import DEMOS, PointCloud, hausdorff_semidist, run_demo
from .spectral import random_velocity, space

log = logging.getLogger("mvns")

EXIT_OK, EXIT_CALIBRATION, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4
STUDY_COLUMNS = ("k", "dist", "dist_spread", "sup_error", "psi_residual", "h2_sup", "fitted_order",
                 "status")


class InvariantViolation(RuntimeError):
    pass


def _constants(cfg: RunConfig, out: Path, required=True) -> tuple[CalibratedConstants | None, Path | None]:
    for p in (cfg.constants_path(), out / "constants.json"):
        if p is not None and p.exists():
            return CalibratedConstants.load(p), p
    if required:
        raise UncalibratedError("no constants file: run `mvns calibrate` first or set \"constants\" in the config")
    return None, None


def _hashes(cfg, constants_path):
    return cfg.sha256(), mio.sha256_file(constants_path)


# -- verbs ----------------------------------------------------------------------

def cmd_calibrate(cfg: RunConfig, out: Path, jobs: int = 1) -> Path:
    f = cfg.forcing()
    consts = calibrate_dissipativity(cfg.N, cfg.nu, f, cfg.calibration_plan(jobs))
    if cfg.fit_trajectory_constant and not consts.R0_arbitrary:
        consts = at.fit_trajectory_constant(consts, f, cfg.study_value("T_star", 10.0), cfg.ladder)
    path = out / "constants.json"
    mio.atomic_write(path, consts.to_json())
    return path


def cmd_run(cfg: RunConfig, out: Path, steps: int, u0_source: str | None = None) -> Path:
    sp = space(cfg.N)
    f = cfg.forcing()
    if u0_source is None:
        u0 = cfg.initial()
        u0 = sp.zeros() if u0 is None else u0
    elif u0_source == "zero":
        u0 = sp.zeros()
    elif u0_source == "random":
        u0 = random_velocity(sp, np.random.default_rng([cfg.seed, 0]), cfg.study_value("u0_h_norm", 1.0))
    else:
        _, u0 = mio.load_snapshot(u0_source)
        if u0.N != cfg.N:
            raise ConfigError(f"snapshot has N={u0.N}, config has N={cfg.N}")
    consts, cpath = _constants(cfg, out, required=False)
    traj = iterate(u0, steps, cfg.step_config(), f, policy=cfg.policy, seed=cfg.seed)
    if consts is not None and consts.Q_radii:
        thr = uniqueness_threshold(consts.R1, consts)
        if cfg.k <= thr and any(b != 1 for b in traj.branch_counts):
            raise InvariantViolation(f"multiple branches found with k={cfg.k} <= uniqueness threshold {thr:.6g}")
    path = out / "trajectory.csv"
    mio.atomic_write(path, mio.csv_text(TRAJECTORY_COLUMNS, traj.log_rows(), *_hashes(cfg, cpath)))
    mio.write_snapshot(out / "final.snap", traj.states[-1], cfg.nu, float(traj.times[-1]), step=steps)
    return path


def converge_study(cfg: RunConfig, consts: CalibratedConstants, jobs: int = 1, sample_dir: Path | None = None):
    """One row per ladder step plus a trailing row of fitted log-log slopes."""
    f = cfg.forcing()
    sp = f.space
    ladder, k_ref, plan = cfg.ladder, cfg.k_ref, cfg.sampling_plan()
    T_star = cfg.study_value("T_star", 10.0)
    h2_T = cfg.study_value("h2_T_star", 2.0)
    h2_n = cfg.study_value("h2_points", 10)
    starts = cfg.study_starts

    samples = {0.0: at.sample_attractor(k_ref, f, consts, plan, reference=True, jobs=jobs)}
    if sample_dir is not None:
        samples[0.0].save(sample_dir / "reference")
    ref = samples[0.0]
    rng = np.random.default_rng([plan.seed, 104729])
    u0 = at.smooth_initial(sp, cfg.study_value("u0_v_fraction", 1.0) * consts.R1, rng)
    path = at.ReferencePath.compute(u0, T_star, _grid(ladder), at.study_config(k_ref, cfg.nu, starts), f)

    rows, fits = [], {"dist": [], "sup_error": [], "psi_residual": [], "h2_sup": []}
    prev = None
    for k in ladder:
        if k > consts.kappa1 * (1 + 1e-12):
            rows.append([k, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan,
                         f"skipped: k > kappa1 = {consts.kappa1:.6g}"])
            continue
        samples[k] = at.sample_attractor(k, f, consts, plan, jobs=jobs)
        if sample_dir is not None:
            samples[k].save(sample_dir / f"k={k!r}")
        d = at.attractor_distance(samples, k)
        per = [hausdorff_semidist(PointCloud(samples[k].cloud.points[samples[k].members == m], "H"), ref.cloud)
               for m in np.unique(samples[k].members)]
        spread = float(np.std(per)) if len(per) > 1 else 0.0
        c = consts if k <= consts.kappa2 * (1 + 1e-12) else None
        sup, _, _ = at.trajectory_error(u0, k, T_star, f, cfg.nu, k_ref, reference=path, constants=c,
                                        starts=starts)
        if consts.Q_traj is not None and consts.Q_traj_T == T_star and sup * sup > 2 * k * consts.Q_traj:
            raise InvariantViolation(f"trajectory error {sup:.6g} exceeds sqrt(2 k Q_traj) at k={k}")
        states = at._march(u0, at._steps(T_star, k), at.study_config(k, cfg.nu, starts), f)
        psi = at.interpolant_residual(at.InterpolantPair(states, k), T_star, cfg.nu)
        h2 = at.h2_hypothesis_check(samples[k], k, h2_T, h2_n, f, k_ref, seed=plan.seed, starts=starts).sup
        local = math.nan
        if prev is not None and sup > 0 and prev[1] > 0:
            local = math.log(prev[1] / sup) / math.log(prev[0] / k)
        prev = (k, sup)
        rows.append([k, d, spread, sup, psi, h2, local, "ok" if c is not None else "ok (k > kappa2)"])
        for key, v in zip(("dist", "sup_error", "psi_residual", "h2_sup"), (d, sup, psi, h2)):
            if v > 0:
                fits[key].append((k, v))

    def order(key):
        try:
            return at.convergence_order(fits[key])
        except ValueError:
            return math.nan

    o = {key: order(key) for key in fits}
    rows.append(["fit", o["dist"], math.nan, o["sup_error"], o["psi_residual"], o["h2_sup"], o["sup_error"],
                 "slopes of log(value) vs log(k)"])
    return rows, samples


def _grid(ladder):
    """Largest step dividing every ladder entry (reference output spacing)."""
    k = min(ladder)
    for j in range(1, 10_000):
        g = k / j
        if all(abs(round(x / g) * g - x) <= 1e-9 * x for x in ladder):
            return g
    raise ConfigError("ladder steps have no common grid")


def cmd_converge(cfg: RunConfig, out: Path, jobs: int = 1) -> Path:
    consts, cpath = _constants(cfg, out)
    rows, _ = converge_study(cfg, consts, jobs, sample_dir=out / "samples")
    path = out / "study.csv"
    mio.atomic_write(path, mio.csv_text(STUDY_COLUMNS, rows, *_hashes(cfg, cpath)))
    return path


def cmd_abstract(demo: str, out: Path) -> Path:
    A, report = run_demo(demo)
    mio.atomic_write(out / f"{demo}_cells.json", A.to_json())
    mio.atomic_write(out / f"{demo}_report.json", json.dumps(report, sort_keys=True, indent=1))
    if not report["invariant"]:
        raise InvariantViolation(f"cell attractor of {demo} is not invariant")
    return out / f"{demo}_cells.json"


def cmd_check(cfg: RunConfig | None, out: Path) -> dict:
    """Run the invariant suite; returns the report (``ok`` flag inside)."""
    checks = {}
    rng = np.random.default_rng(0)
    N = cfg.N if cfg else 16
    sp = space(N)
    worst = 0.0
    for _ in range(20):
        u, v = (random_velocity(sp, rng) for _ in range(2))
        worst = max(worst, abs(float(v.dofs @ sp.advect(u.dofs, v.dofs))))
        worst = max(worst, float(np.abs(sp.pack(u.coeffs) - u.dofs).max()))
    checks["spectral_identities"] = {"max_defect": worst, "ok": bool(worst <= 1e-12)}

    f = cfg.forcing() if cfg else sp.zeros()
    step = cfg.step_config() if cfg else None
    if step is not None:
        u = random_velocity(sp, rng, 1.0)
        e = 0.0
        for _ in range(5):
            sols = step_solve(u, step, f)
            e = max(e, max(energy_identity_relative(s, u, step.k, step.nu, f) for s in sols))
            u = sols.solutions[0]
        checks["energy_identity"] = {"max_relative": float(e), "ok": bool(e <= step.energy_tol)}

    for name in sorted(DEMOS):
        _, rep = run_demo(name)
        checks[f"demo_{name}"] = {"cells": rep["cells"], "ok": bool(rep["invariant"])}

    if cfg is not None:
        consts, _ = _constants(cfg, out, required=False)
        if consts is not None:
            ok = consts.kappa2 <= consts.kappa1 <= consts.kappa0 and consts.R1 >= consts.R_star
            checks["constants"] = {"ok": bool(ok)}
    report = {"ok": all(c["ok"] for c in checks.values()), "checks": checks}
    mio.atomic_write(out / "check.json", json.dumps(report, sort_keys=True, indent=1))
    return report


# -- entry point ------------------------------------------------------------------

def _ladder(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ladder {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("ladder entries must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvns", description="Implicit-Euler Navier-Stokes attractor experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON run configuration")
        sp.add_argument("--seed", type=int, default=None, help="override study/calibration seeds")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("--ladder", type=_ladder, default=None, help="comma-separated time-steps")

    common(sub.add_parser("calibrate", help="measure absorbing radii and thresholds"))
    r = sub.add_parser("run", help="iterate the implicit scheme and log the trajectory")
    common(r)
    r.add_argument("--steps", type=int, default=100)
    r.add_argument("--u0", default=None, help="snapshot file, 'zero' or 'random'")
    common(sub.add_parser("converge", help="attractor convergence study over the k-ladder"))
    a = sub.add_parser("abstract", help="cell attractor of a one-dimensional demo map")
    a.add_argument("demo", choices=sorted(DEMOS))
    a.add_argument("--out", default="out")
    common(sub.add_parser("check", help="run the invariant suite"), config_required=False)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        if args.verb == "abstract":
            print(cmd_abstract(args.demo, out))
            return EXIT_OK
        cfg = None
        if args.config:
            cfg = RunConfig.load(args.config).with_overrides(seed=args.seed, ladder=args.ladder)
        if args.verb == "calibrate":
            print(cmd_calibrate(cfg, out, args.jobs))
        elif args.verb == "run":
            if args.steps < 0:
                raise ConfigError("--steps must be nonnegative")
            print(cmd_run(cfg, out, args.steps, args.u0))
        elif args.verb == "converge":
            print(cmd_converge(cfg, out, args.jobs))
        elif args.verb == "check":
            rep = cmd_check(cfg, out)
            for name, c in rep["checks"].items():
                print(f"{'PASS' if c['ok'] else 'FAIL'} {name}")
            return EXIT_OK if rep["ok"] else EXIT_INVARIANT
    except (CalibrationError, UncalibratedError) as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except NoSolutionError as exc:
        print(f"solver failure at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (at.BoundViolation, InvariantViolation) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
