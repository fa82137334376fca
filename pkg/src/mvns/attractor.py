"""Discrete attractors A_k, their distance to a fine-step reference, and the
error measures behind the convergence k -> 0.

The continuous semigroup S(t) is replaced by the same implicit scheme run at
a much smaller step ``k_ref``.  Attractor samples for different time-steps
share ensemble seeds and are sampled on a common time grid, so the clouds of
two steps differ only through the discretization.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io as mio
from .dissipativity import CalibratedConstants, _map
from .euler import (NewtonOptions, NoSolutionError, StepConfig, Trajectory, select_branch,
                    step_solve)
from .mvds import PointCloud, hausdorff_semidist
from .spectral import SpectralVelocity, random_velocity, space

log = logging.getLogger(__name__)


class BoundViolation(RuntimeError):
    """A post-transient state left the calibrated V-ball B1."""


class MissingSampleError(LookupError):
    pass


def default_k_ref(ladder) -> float:
    return min(min(ladder) / 16.0, 1e-3)


def _steps(t: float, k: float) -> int:
    n = int(round(t / k))
    if n < 0 or abs(n * k - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"time {t!r} is not a nonnegative multiple of the step {k!r}")
    return n


def _march(u0: SpectralVelocity, n: int, cfg: StepConfig, f: SpectralVelocity, keep_every: int = 1,
           start: int = 0):
    """States ``u^j`` for ``j = start, start + keep_every, ...`` up to ``n``
    (branch policy "nearest")."""
    out = [u0] if start == 0 else []
    u = u0
    rng = np.random.default_rng(0)
    for step in range(1, n + 1):
        try:
            sols = step_solve(u, cfg, f)
        except NoSolutionError as exc:
            raise NoSolutionError(f"step {step}: {exc}", exc.attempts, step) from exc
        u = select_branch(sols, u, "nearest", rng)
        if step >= start and (step - start) % keep_every == 0:
            out.append(u)
    return out


def reference_semigroup(u0: SpectralVelocity, t: float, cfg: StepConfig,
                        f: SpectralVelocity) -> SpectralVelocity:
    """Stand-in for ``S(t) u0``: the implicit scheme at step ``cfg.k = k_ref``."""
    return _march(u0, _steps(t, cfg.k), cfg, f, keep_every=max(1, _steps(t, cfg.k)))[-1]


@dataclass
class ReferencePath:
    """Reference states at every multiple of ``dt`` up to ``T``."""

    dt: float
    states: list

    @classmethod
    def compute(cls, u0, T, dt, cfg: StepConfig, f) -> "ReferencePath":
        every = _steps(dt, cfg.k)
        n = _steps(T, dt) * every
        return cls(dt, _march(u0, n, cfg, f, keep_every=every))

    @property
    def horizon(self) -> float:
        return (len(self.states) - 1) * self.dt

    def at(self, t: float) -> SpectralVelocity:
        j = _steps(t, self.dt)
        if j >= len(self.states):
            raise ValueError(f"time {t} beyond reference horizon {self.horizon}")
        return self.states[j]


# -- interpolants --------------------------------------------------------------

class InterpolantPair:
    """Piecewise-constant ``u_k`` and piecewise-linear ``ũ_k`` built on a trajectory."""

    def __init__(self, traj: Trajectory | list, k: float | None = None):
        if isinstance(traj, Trajectory):
            states, k = traj.states, traj.k
        else:
            states = list(traj)
        if k is None or not k > 0:
            raise ValueError("a positive step is required")
        if len(states) < 1:
            raise ValueError("empty trajectory")
        self.states = states
        self.k = float(k)

    @property
    def horizon(self) -> float:
        return (len(self.states) - 1) * self.k

    def _interval(self, t):
        if t < 0 or t > self.horizon * (1 + 1e-12):
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        return int(math.floor(t / self.k)) + 1   # t in [(n-1)k, nk)

    def piecewise_constant(self, t: float) -> SpectralVelocity:
        n = self._interval(t)
        return self.states[min(n, len(self.states) - 1)]

    def piecewise_linear(self, t: float) -> SpectralVelocity:
        j = round(t / self.k)
        if abs(t - j * self.k) <= 1e-12 * self.k and 0 <= j < len(self.states):
            return self.states[j]
        n = min(self._interval(t), len(self.states) - 1)
        s = (t - n * self.k) / self.k
        a, b = self.states[n], self.states[n - 1]
        return SpectralVelocity(a.space, a.dofs + s * (a.dofs - b.dofs))


def interpolant_residual(traj: InterpolantPair, T_star: float, nu: float, nodes: int = 4) -> float:
    """``∫_0^T ||Ψ_k(t)||_*^2 dt`` with ``Ψ_k = ν A(ũ_k - u_k) + B(ũ_k, ũ_k) - B(u_k, u_k)``,
    by Gauss-Legendre quadrature on every step interval."""
    if T_star > traj.horizon * (1 + 1e-12):
        raise ValueError(f"T_star={T_star} beyond trajectory horizon {traj.horizon}")
    k = traj.k
    x, w = np.polynomial.legendre.leggauss(nodes)
    sp = traj.states[0].space
    total = 0.0
    n_int = int(math.ceil(T_star / k - 1e-9))
    for n in range(1, n_int + 1):
        a, b = (n - 1) * k, min(n * k, T_star)
        un = traj.states[n].dofs
        d = un - traj.states[n - 1].dofs
        if not d.any():
            continue
        bnn = sp.advect(un, un)
        for xi, wi in zip(x, w):
            t = a + 0.5 * (b - a) * (xi + 1.0)
            s = (t - n * k) / k
            ut = un + s * d
            psi = nu * sp.eig * (s * d) + sp.advect(ut, ut) - bnn
            total += 0.5 * (b - a) * wi * sp.dual_norm(psi) ** 2
    return total


def interpolant_residual_closed_form(states, k: float, nu: float) -> float:
    """Same integral over whole intervals via ``Ψ = sP + s²Q`` on ``s ∈ [-1, 0]``."""
    sp = states[0].space
    total = 0.0
    for n in range(1, len(states)):
        un = states[n].dofs
        d = un - states[n - 1].dofs
        P = nu * sp.eig * d + sp.advect(un, d) + sp.advect(d, un)
        Q = sp.advect(d, d)
        dual = lambda a, b: float((a * b / sp.eig).sum())
        total += k * (dual(P, P) / 3.0 - dual(P, Q) / 2.0 + dual(Q, Q) / 5.0)
    return total


# -- trajectory errors -----------------------------------------------------------

def study_config(k: float, nu: float, starts=("semi_implicit",),
                 newton: NewtonOptions = NewtonOptions()) -> StepConfig:
    return StepConfig(k, nu, newton=newton, starts=tuple(starts))


def trajectory_error(u0: SpectralVelocity, k: float, T_star: float, f: SpectralVelocity, nu: float,
                     k_ref: float, reference: ReferencePath | None = None,
                     constants: CalibratedConstants | None = None, starts=("semi_implicit",)):
    """``(sup_n |S_k^n u0 - S(nk) u0|, times, errors)`` over ``nk <= T_star``."""
    if constants is not None:
        if u0.space.v_norm(u0.dofs) > constants.R1 * (1 + 1e-12):
            raise ValueError(f"u0 outside B1: ||u0|| = {u0.space.v_norm(u0.dofs):.6g} > R1 = {constants.R1:.6g}")
        if k > constants.kappa2 * (1 + 1e-12):
            raise ValueError(f"k = {k} exceeds kappa2 = {constants.kappa2}")
    n = _steps(T_star, k)
    if reference is None:
        reference = ReferencePath.compute(u0, T_star, k, study_config(k_ref, nu, starts), f)
    states = _march(u0, n, study_config(k, nu, starts), f)
    times = k * np.arange(n + 1)
    errs = np.array([u0.space.h_norm(s.dofs - reference.at(t).dofs) for s, t in zip(states, times)])
    return float(errs.max()), times, errs


def convergence_order(errors) -> float:
    """Least-squares slope of ``log error`` against ``log k``."""
    ks = np.array([float(k) for k, _ in errors])
    es = np.array([float(e) for _, e in errors])
    if len(ks) < 3:
        raise ValueError("need at least three (k, error) pairs")
    if len(np.unique(ks)) != len(ks):
        raise ValueError("time-steps must be distinct")
    if np.any(ks <= 0) or np.any(~(es > 0)):
        raise ValueError("time-steps and errors must be positive")
    return float(np.polyfit(np.log(ks), np.log(es), 1)[0])


# -- attractor samples ------------------------------------------------------------

@dataclass(frozen=True)
class SamplingPlan:
    ensemble_size: int = 4
    window: float = 10.0          # sampled duration after the transient cut
    sample_dt: float = 0.2        # common sampling stride in time
    transient_factor: float = 1.5
    cloud_cap: int = 2000
    seed: int = 0
    starts: tuple = ("semi_implicit",)

    def __post_init__(self):
        if self.ensemble_size < 1 or self.cloud_cap < 1:
            raise ValueError("ensemble size and cloud cap must be positive")
        if not (self.window >= 0 and self.sample_dt > 0 and self.transient_factor >= 1):
            raise ValueError("invalid sampling window")


@dataclass(frozen=True, eq=False)
class AttractorSample:
    k: float                     # 0 marks the reference sample
    cloud: PointCloud
    times: np.ndarray
    members: np.ndarray
    N: int
    nu: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not len(self.cloud):
            raise ValueError("attractor sample is empty")
        if self.cloud.metric != "H":
            raise ValueError("attractor clouds use the H metric")

    def states(self) -> list:
        sp = space(self.N)
        return [SpectralVelocity(sp, p) for p in self.cloud.points]

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        blob = b"".join(mio.snapshot_bytes(u, self.nu, float(t), member=int(m))
                        for u, t, m in zip(self.states(), self.times, self.members))
        mio.atomic_write(d / "cloud.snap", blob)
        meta = {"k": self.k, "N": self.N, "nu": self.nu, "points": len(self.cloud), **self.provenance}
        mio.atomic_write(d / "meta.json", json.dumps(meta, sort_keys=True, indent=1))

    @classmethod
    def load(cls, directory) -> "AttractorSample":
        d = Path(directory)
        for name in ("meta.json", "cloud.snap"):
            if not (d / name).exists():
                raise MissingSampleError(f"attractor sample artifact {d / name} is missing")
        meta = json.loads((d / "meta.json").read_text())
        snaps = mio.read_snapshots((d / "cloud.snap").read_bytes())
        pts = np.array([u.dofs for _, u in snaps])
        prov = {k: v for k, v in meta.items() if k not in ("k", "N", "nu", "points")}
        return cls(meta["k"], PointCloud(pts, "H"), np.array([h["time"] for h, _ in snaps]),
                   np.array([h["member"] for h, _ in snaps]), meta["N"], meta["nu"], prov)


def transient_cut(constants: CalibratedConstants, plan: SamplingPlan) -> float:
    """``transient_factor * t1(R0)`` rounded up to the sampling grid."""
    t = plan.transient_factor * constants.t1(constants.R0)
    return math.ceil(t / plan.sample_dt - 1e-9) * plan.sample_dt


def ensemble_initial(sp, constants: CalibratedConstants, plan: SamplingPlan, member: int):
    """Member ``member`` of the seeded ensemble on the boundary of B0."""
    rng = np.random.default_rng([plan.seed, member])
    return random_velocity(sp, rng, h_norm=constants.R0)


def _sample_member(args):
    u0, k, nu, f, t_cut, plan, R1 = args
    cfg = study_config(k, nu, plan.starts)
    stride = _steps(plan.sample_dt, k)
    start = _steps(t_cut, k)
    n = start + _steps(plan.window, plan.sample_dt) * stride
    states = _march(u0, n, cfg, f, keep_every=stride, start=start)
    sp = u0.space
    v = np.array([sp.v_norm(s.dofs) for s in states])
    return np.array([s.dofs for s in states]), v


def sample_attractor(k: float, f: SpectralVelocity, constants: CalibratedConstants,
                     plan: SamplingPlan = SamplingPlan(), reference: bool = False,
                     jobs: int = 1) -> AttractorSample:
    """Post-transient ensemble states at times ``t_cut + j * sample_dt``."""
    if not reference and k > constants.kappa1 * (1 + 1e-12):
        raise ValueError(f"k = {k} exceeds kappa1 = {constants.kappa1}")
    sp = f.space
    nu = constants.nu
    t_cut = transient_cut(constants, plan)
    _steps(plan.sample_dt, k)
    inits = [ensemble_initial(sp, constants, plan, m) for m in range(plan.ensemble_size)]
    results = _map(_sample_member, jobs, [(u, k, nu, f, t_cut, plan, constants.R1) for u in inits])
    pts = np.concatenate([r[0] for r in results])
    vn = np.concatenate([r[1] for r in results])
    per = len(results[0][0])
    times = np.tile(t_cut + plan.sample_dt * np.arange(per), plan.ensemble_size)
    members = np.repeat(np.arange(plan.ensemble_size), per)
    bad = np.flatnonzero(vn > constants.R1)
    if bad.size:
        i = int(bad[0])
        raise BoundViolation(f"k={k}: state of member {members[i]} at t={times[i]:.6g} has "
                             f"||u|| = {vn[i]:.6g} > R1 = {constants.R1:.6g} ({bad.size} violations)")
    if len(pts) > plan.cloud_cap:
        keep = np.sort(np.random.default_rng(plan.seed).choice(len(pts), plan.cloud_cap, replace=False))
        pts, times, members = pts[keep], times[keep], members[keep]
    prov = {"ensemble_size": plan.ensemble_size, "seeds": [[plan.seed, m] for m in range(plan.ensemble_size)],
            "t1": constants.t1(constants.R0), "transient_cut": t_cut, "sample_dt": plan.sample_dt,
            "stride": _steps(plan.sample_dt, k), "R1": constants.R1, "max_v_norm": float(vn.max()),
            "R1_check": "pass", "step": k}
    return AttractorSample(0.0 if reference else k, PointCloud(pts, "H"), times, members,
                           sp.N, nu, prov)


def attractor_distance(samples, k: float) -> float:
    """``dist(A_k, A_ref)`` where ``samples`` maps time-steps to samples and
    holds the reference under key 0."""
    for key, name in ((k, f"A_k for k={k}"), (0.0, "reference sample A_ref")):
        if key not in samples:
            raise MissingSampleError(f"missing attractor sample: {name}")
    return hausdorff_semidist(samples[k].cloud, samples[0.0].cloud)


@dataclass
class H2Report:
    k: float
    T_star: float
    indices: list
    errors: list

    @property
    def sup(self) -> float:
        return max(self.errors)


def h2_hypothesis_check(sample: AttractorSample, k: float, T_star: float, samples_per_k: int,
                        f: SpectralVelocity, k_ref: float, seed: int = 0,
                        starts=("semi_implicit",)) -> H2Report:
    """Worst trajectory error over ``samples_per_k`` points drawn from the cloud."""
    if sample is None:
        raise MissingSampleError(f"missing attractor sample for k={k}")
    rng = np.random.default_rng(seed)
    n = len(sample.cloud)
    idx = sorted(rng.choice(n, min(samples_per_k, n), replace=False).tolist())
    states = sample.states()
    errs = []
    for i in idx:
        sup, _, _ = trajectory_error(states[i], k, T_star, f, sample.nu, k_ref, starts=starts)
        errs.append(sup)
    return H2Report(k, T_star, idx, errs)


def fit_trajectory_constant(constants: CalibratedConstants, f: SpectralVelocity, T_star: float,
                            ladder, runs: int = 2, seed: int = 7, slope: float = 4.0):
    """Record ``max err^2 / k`` over seeded smooth data in B1 as ``Q_traj``."""
    sp = f.space
    k_ref = default_k_ref(ladder)
    worst = 0.0
    for r in range(runs):
        u0 = smooth_initial(sp, constants.R1, np.random.default_rng([seed, r]), slope)
        ref = ReferencePath.compute(u0, T_star, min(ladder), study_config(k_ref, constants.nu), f)
        for k in ladder:
            sup, _, _ = trajectory_error(u0, k, T_star, f, constants.nu, k_ref, reference=ref)
            worst = max(worst, sup * sup / k)
    return replace(constants, Q_traj=worst, Q_traj_T=T_star)


def smooth_initial(sp, v_radius: float, rng, slope: float = 4.0) -> SpectralVelocity:
    """Random field with steep spectrum and V-norm ``v_radius``."""
    u = random_velocity(sp, rng, 1.0, slope)
    return SpectralVelocity(sp, u.dofs * (v_radius / sp.v_norm(u.dofs)))
