"""Empirical absorbing radii, time-step thresholds and generic constants.

The analysis of the implicit scheme only asserts that constants such as the
absorbing radii, the thresholds kappa_0..kappa_2 and the increasing function
Q(.) exist.  :func:`calibrate_dissipativity` measures them on a seeded
ensemble and applies a safety factor, producing a :class:`CalibratedConstants`
record that the rest of the package treats as configuration.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .euler import NoSolutionError, StepConfig, fast_config, iterate
from .spectral import SpectralVelocity, random_velocity, space

log = logging.getLogger(__name__)


class CalibrationError(RuntimeError):
    """A calibration run escaped every candidate bound or the solver failed."""

    def __init__(self, message, seed=None):
        super().__init__(message)
        self.seed = seed


class UncalibratedError(RuntimeError):
    pass


@dataclass
class CalibratedConstants:
    nu: float
    forcing_h_norm: float
    R0: float
    R_star: float
    R1: float
    kappa0: float
    kappa1: float
    kappa2: float
    C_energy: float
    Q_radii: list
    Q_values: list
    t0_radii: list
    t0_values: list
    R0_arbitrary: bool = False
    safety: float = 2.0
    Q_traj: float | None = None     # max err^2 / k of trajectory errors over [0, Q_traj_T]
    Q_traj_T: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.kappa2 <= self.kappa1 <= self.kappa0):
            raise ValueError("thresholds must satisfy kappa2 <= kappa1 <= kappa0")
        if self.R1 < self.R_star:
            raise ValueError("R1 must dominate R_star")
        if np.any(np.diff(self.Q_values) < 0):
            raise ValueError("Q table must be nondecreasing")

    # -- monotone interpolants --------------------------------------------------
    def Q(self, R: float) -> float:
        """Empirical increasing function R -> Q(R) (linear growth past the table)."""
        if not self.Q_radii:
            raise UncalibratedError("Q table is empty: run calibrate_dissipativity (or `mvns calibrate`) first")
        r, q = self.Q_radii, self.Q_values
        if R <= r[-1]:
            return float(np.interp(R, [0.0] + list(r), [q[0]] + list(q)))
        return float(q[-1] * R / r[-1])

    def kappa_star(self, R: float) -> float:
        return min(self.kappa0, 1.0 / self.Q(R))

    def t0(self, R: float) -> float:
        """Entry time into the H-absorbing ball for data with ``|u0| <= R``."""
        r, t = self.t0_radii, self.t0_values
        if R <= r[-1]:
            return float(np.interp(R, r, t))
        # H-norm decays at least like exp(-nu t / 2) outside the ball
        return float(t[-1] + 2.0 * math.log(R / r[-1]) / self.nu)

    def t1(self, R: float) -> float:
        """Entry time into the V-absorbing ball B1."""
        return self.t0(R) + 1.0 + 2.0 * self.kappa1

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CalibratedConstants":
        return cls(**json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "CalibratedConstants":
        with open(path) as fh:
            return cls.from_json(fh.read())


def uniqueness_threshold(R: float, constants: CalibratedConstants | None) -> float:
    """Largest time-step for which the step map is single-valued on data with
    ``||w|| <= R``: ``min(kappa_star(R), nu / (2 Q(R)^2))``."""
    if constants is None or not constants.Q_radii:
        raise UncalibratedError("uniqueness_threshold needs a calibrated Q table: run calibration first")
    if R < 0:
        raise ValueError("R must be nonnegative")
    q = constants.Q(R)
    return min(constants.kappa_star(R), constants.nu / (2.0 * q * q))


@dataclass(frozen=True)
class CalibrationPlan:
    radii: tuple = (0.5, 1.0, 2.0)        # H-radii of initial data
    ladder: tuple = (0.2, 0.1, 0.05, 0.025)
    runs_per_radius: int = 2
    horizon: float = 20.0
    q_factors: tuple = (0.5, 1.0, 2.0, 4.0)  # V-radii for the Q table, in units of R_star
    q_runs: int = 2
    q_horizon: float = 10.0
    safety: float = 2.0
    r0_margin: float = 0.05
    seed: int = 0
    jobs: int = 1


def _nsteps(T, k):
    return int(round(T / k))


def _run_norms(args):
    """Worker: run one trajectory and return (|u^n|, ||u^n||) arrays."""
    N, dofs, k, nu, fdofs, steps, seed = args
    sp = space(N)
    u0 = SpectralVelocity(sp, dofs)
    f = SpectralVelocity(sp, fdofs)
    try:
        tr = iterate(u0, steps, fast_config(k, nu), f)
    except NoSolutionError as exc:
        return None, f"seed {seed}, k={k}: {exc}"
    return (tr.h_norms(), tr.v_norms(), tr.max_energy_residual()), None


def _map(fn, jobs, items):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _entry_index(h, R0):
    """First index after which ``h <= R0`` for the rest of the run (None if never)."""
    bad = np.nonzero(h > R0)[0]
    if not len(bad):
        return 0
    i = int(bad[-1]) + 1
    return i if i < len(h) else None


def calibrate_dissipativity(N: int, nu: float, f: SpectralVelocity,
                            plan: CalibrationPlan = CalibrationPlan()) -> CalibratedConstants:
    """Measure R0, t0(.), C, R_star, R1, Q(.) and the kappa thresholds.

    Every run is also checked against the energy decay bound
    ``|u^n|^2 <= (1 + k nu)^-n |u0|^2 + ||f||_*^2 / nu^2`` (first Poincare
    eigenvalue 1), and each run entering the H-ball is required to reach
    ``||u|| <= R_star`` within ``floor(1/k) + 1`` further steps.
    """
    sp = space(N)
    fh = sp.h_norm(f.dofs)
    fdual = sp.dual_norm(f.dofs)
    ladder = tuple(sorted(plan.ladder, reverse=True))
    if not ladder:
        raise ValueError("empty time-step ladder")

    # -- H-ball ensemble ----------------------------------------------------------
    jobs, meta = [], []
    for ir, R in enumerate(plan.radii):
        for j in range(plan.runs_per_radius):
            seed = (plan.seed, 0, ir, j)
            u0 = random_velocity(sp, np.random.default_rng(seed), R)
            for k in ladder:
                jobs.append((N, u0.dofs, k, nu, f.dofs, _nsteps(plan.horizon, k), seed))
                meta.append((R, k, seed))
    results = _map(_run_norms, plan.jobs, jobs)
    for (R, k, seed), (res, err) in zip(meta, results):
        if err:
            raise CalibrationError(f"calibration run failed: {err}", seed)

    def d1_check(h, k, seed):
        n = np.arange(len(h))
        decay = (1.0 + k * nu) ** (-n.astype(float))
        bound = decay * h[0] ** 2 + (fdual / nu) ** 2 * (1.0 - decay)
        if np.any(h**2 > bound * (1 + 1e-9) + 1e-300):
            raise CalibrationError(f"energy decay bound violated (k={k})", seed)
        return float(np.max(h**2 - decay * h[0] ** 2))

    excess = 0.0
    tail_max = 0.0
    max_e = 0.0
    for (R, k, seed), (res, _) in zip(meta, results):
        h, v, e = res
        max_e = max(max_e, e)
        excess = max(excess, d1_check(h, k, seed))
        tail_max = max(tail_max, float(h[len(h) // 2:].max()))

    R0 = (1.0 + plan.r0_margin) * tail_max
    R0_arbitrary = fh == 0.0
    if R0_arbitrary:
        R0 = max(R0, np.finfo(float).tiny)
    C_energy = plan.safety * excess / fh**2 if fh > 0 else 0.0
    R_star = math.sqrt(R0**2 / nu + C_energy * fh**2)

    # runs started on the boundary of the absorbing ball itself, for t0(R0)
    jobs0, meta0 = [], []
    for j in range(plan.runs_per_radius):
        seed = (plan.seed, 1, j)
        u0 = random_velocity(sp, np.random.default_rng(seed), R0)
        for k in ladder:
            jobs0.append((N, u0.dofs, k, nu, f.dofs, _nsteps(plan.horizon, k), seed))
            meta0.append((R0, k, seed))
    results0 = _map(_run_norms, plan.jobs, jobs0)
    for (R, k, seed), (res, err) in zip(meta0, results0):
        if err:
            raise CalibrationError(f"calibration run failed: {err}", seed)
        d1_check(res[0], k, seed)
        max_e = max(max_e, res[2])

    # entry times, the first index l_k inside the R_star ball, and the trapping V-radius
    t0_by_R: dict = {}
    trap = 0.0
    ell_ratio = 0.0
    for (R, k, seed), (res, _) in zip(meta + meta0, results + results0):
        h, v, _ = res
        n0 = _entry_index(h, R0)
        if n0 is None:
            raise CalibrationError(f"run never settles in the H-ball of radius {R0:.6g} (R={R}, k={k})", seed)
        t0_by_R[R] = max(t0_by_R.get(R, 0.0), n0 * k)
        nk = math.floor(1.0 / k) + 1
        window = v[n0 + 1:n0 + nk + 1]
        hits = np.nonzero(window <= R_star)[0]
        if not len(hits):
            raise CalibrationError(
                f"no index l <= floor(1/k)+1 with ||u|| <= R_star={R_star:.6g} (R={R}, k={k})", seed)
        ell = int(hits[0]) + 1
        ell_ratio = max(ell_ratio, ell / nk)
        trap = max(trap, float(v[n0 + ell:].max()))

    t0_radii = sorted(t0_by_R)
    t0_values = list(np.maximum.accumulate([t0_by_R[r] for r in t0_radii]))

    # -- Q table from V-spheres ---------------------------------------------------
    def q_table(radii):
        qjobs, qmeta = [], []
        for iq, Rv in enumerate(radii):
            for j in range(plan.q_runs):
                seed = (plan.seed, 2, iq, j)
                u0 = random_velocity(sp, np.random.default_rng(seed), 1.0)
                u0 = u0 * (Rv / sp.v_norm(u0.dofs))
                for k in ladder:
                    qjobs.append((N, u0.dofs, k, nu, f.dofs, _nsteps(plan.q_horizon, k), seed))
                    qmeta.append((Rv, k, seed))
        out = {}
        for (Rv, k, seed), (res, err) in zip(qmeta, _map(_run_norms, plan.jobs, qjobs)):
            if err:
                raise CalibrationError(f"Q-table run failed: {err}", seed)
            out[Rv] = max(out.get(Rv, 0.0), float(res[1].max()))
        return out

    q_radii = sorted({R_star * c for c in plan.q_factors})
    q_obs = q_table(q_radii)
    Q_values = list(plan.safety * np.maximum.accumulate([q_obs[r] for r in q_radii]))

    def Qf(R):
        if R <= q_radii[-1]:
            return float(np.interp(R, [0.0] + q_radii, [Q_values[0]] + Q_values))
        return Q_values[-1] * R / q_radii[-1]

    R1 = max(plan.safety * trap, Qf(R_star))
    if R1 > q_radii[-1]:
        extra = [R1, 2.0 * R1]
        more = q_table(extra)
        q_obs.update(more)
        q_radii = q_radii + extra
        Q_values = list(plan.safety * np.maximum.accumulate([q_obs[r] for r in q_radii]))

    kappa0 = ladder[0]
    consts = CalibratedConstants(
        nu=nu, forcing_h_norm=fh, R0=R0, R_star=R_star, R1=R1,
        kappa0=kappa0, kappa1=kappa0, kappa2=kappa0, C_energy=C_energy,
        Q_radii=[float(r) for r in q_radii], Q_values=[float(q) for q in Q_values],
        t0_radii=[float(r) for r in t0_radii], t0_values=[float(t) for t in t0_values],
        R0_arbitrary=bool(R0_arbitrary), safety=plan.safety,
    )
    consts.kappa1 = consts.kappa_star(R_star)
    consts.kappa2 = min(consts.kappa1, consts.kappa_star(R1))
    consts.diagnostics = {
        "tail_max_h": tail_max,
        "trap_v": trap,
        "max_ell_fraction": ell_ratio,
        "max_energy_residual": max_e,
        "ladder": list(ladder),
        "N": N,
    }
    return consts


@dataclass
class AbsorbingReport:
    trajectories: int
    steps: int
    checked_states: int
    violations: int
    max_ratio: float
    max_energy_residual: float
    seeds: list


def check_v_absorbing(constants: CalibratedConstants, N: int, f: SpectralVelocity, k: float,
                      n_traj: int = 20, n_steps: int = 4000, radius: float | None = None,
                      seed: int = 1, jobs: int = 1) -> AbsorbingReport:
    """Count states with ``nk >= t1(R)`` and ``||u^n|| > R1`` on fresh runs from
    the H-sphere of radius ``R`` (default: largest calibrated radius)."""
    sp = space(N)
    R = constants.t0_radii[-1] if radius is None else radius
    t1 = constants.t1(R)
    args, seeds = [], []
    for j in range(n_traj):
        s = (seed, 3, j)
        u0 = random_velocity(sp, np.random.default_rng(s), R)
        args.append((N, u0.dofs, k, constants.nu, f.dofs, n_steps, s))
        seeds.append(list(s))
    checked = viol = 0
    ratio = 0.0
    max_e = 0.0
    for (res, err), s in zip(_map(_run_norms, jobs, args), seeds):
        if err:
            raise CalibrationError(err, s)
        h, v, e = res
        max_e = max(max_e, e)
        post = v[int(math.ceil(t1 / k - 1e-9)):]
        checked += len(post)
        viol += int(np.sum(post > constants.R1))
        if len(post):
            ratio = max(ratio, float(post.max() / constants.R1))
    return AbsorbingReport(n_traj, n_steps, checked, viol, ratio, max_e, seeds)
