"""Fully implicit Euler step for the 2D Navier-Stokes equations, viewed as a
set-valued map.

One step solves ``u + k nu A u + k B(u, u) = w + k f`` for ``u``.  The
solution need not be unique, so :func:`step_solve` runs damped inexact
Newton from several initial guesses and returns every distinct converged
solution.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .spectral import SpectralSpace, SpectralVelocity

log = logging.getLogger(__name__)

DEFAULT_STARTS = ("w", "semi_implicit", "zero",
                  "perturb", "perturb", "perturb", "perturb", "perturb")
START_RECIPES = ("w", "semi_implicit", "zero", "perturb")
POLICIES = ("nearest", "random", "max_energy")
TRAJECTORY_COLUMNS = ("step", "time", "h_norm", "v_norm", "branch_count", "energy_residual")


class NoSolutionError(RuntimeError):
    """Every Newton start failed; ``attempts`` carries the per-start diagnostics."""

    def __init__(self, message, attempts=(), step=None):
        super().__init__(message)
        self.attempts = list(attempts)
        self.step = step


@dataclass(frozen=True)
class NewtonOptions:
    max_iters: int = 50
    residual_tol: float = 1e-12   # relative to the dual norm of w + k f
    residual_atol: float = 1e-18
    shrink: float = 0.5
    linear_rtol: float = 1e-3
    min_step: float = 1e-6


@dataclass(frozen=True)
class StepConfig:
    k: float
    nu: float
    newton: NewtonOptions = NewtonOptions()
    starts: tuple = DEFAULT_STARTS
    dedup_tol: float = 1e-8
    perturbation: float = 0.05
    seed: int = 0
    energy_tol: float = 1e-9

    def __post_init__(self):
        if not (self.k > 0 and self.nu > 0):
            raise ValueError("time-step and viscosity must be positive")
        if not self.newton.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if not self.starts:
            raise ValueError("at least one start recipe is required")
        bad = [s for s in self.starts if s not in START_RECIPES]
        if bad:
            raise ValueError(f"unknown start recipes {bad}; known: {START_RECIPES}")

    def with_k(self, k: float) -> "StepConfig":
        return StepConfig(k, self.nu, self.newton, self.starts, self.dedup_tol,
                          self.perturbation, self.seed, self.energy_tol)


@dataclass
class StartReport:
    recipe: str
    converged: bool
    iterations: int
    residual: float
    energy_residual: float = float("nan")
    message: str = ""


@dataclass
class SolutionSet:
    """Distinct solutions of one implicit step, in start order."""

    solutions: list
    residuals: list
    energy_residuals: list
    origins: list
    attempts: list

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    def max_pairwise_distance(self) -> float:
        s = self.solutions
        return max((s[i].space.h_norm(s[i].dofs - s[j].dofs)
                    for i in range(len(s)) for j in range(i)), default=0.0)


class StepStats:
    """Process-wide tally of accepted step solutions and their worst energy defect."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.accepted = 0
        self.max_energy_residual = 0.0

    def record(self, e: float):
        self.accepted += 1
        self.max_energy_residual = max(self.max_energy_residual, e)


step_stats = StepStats()


# -- residuals ------------------------------------------------------------------

def _residual_vec(sp, x, rhs, k, nu):
    return x + k * nu * sp.eig * x + k * sp.advect(x, x) - rhs


def step_residual(u: SpectralVelocity, w: SpectralVelocity, k: float, f: SpectralVelocity,
                  nu: float) -> float:
    """``|| u + k nu A u + k B(u, u) - w - k f ||_*``."""
    sp = u.space
    return sp.dual_norm(_residual_vec(sp, u.dofs, w.dofs + k * f.dofs, k, nu))


def _energy_terms(sp, x, xp, k, nu, fx):
    return (x @ x, -(xp @ xp), (x - xp) @ (x - xp), 2 * k * nu * (x @ (sp.eig * x)), -2 * k * (fx @ x))


def energy_identity_residual(u_next: SpectralVelocity, u_prev: SpectralVelocity, k: float,
                             nu: float, f: SpectralVelocity) -> float:
    """``| |u|^2 - |w|^2 + |u - w|^2 + 2 k nu ||u||^2 - 2 k (f, u) |`` (zero for exact steps)."""
    return abs(sum(_energy_terms(u_next.space, u_next.dofs, u_prev.dofs, k, nu, f.dofs)))


def energy_identity_relative(u_next, u_prev, k, nu, f) -> float:
    """Energy-identity defect divided by the largest term of the identity."""
    terms = _energy_terms(u_next.space, u_next.dofs, u_prev.dofs, k, nu, f.dofs)
    scale = max(abs(t) for t in terms)
    return abs(sum(terms)) / scale if scale > 0 else 0.0


# -- Newton -----------------------------------------------------------------------

def _newton(sp: SpectralSpace, x, rhs, k, nu, opts: NewtonOptions):
    """Damped inexact Newton; returns ``(x, dual residual, iterations, converged, msg)``."""
    diag = 1.0 + k * nu * sp.eig
    n = sp.dim
    tol = max(opts.residual_tol * sp.dual_norm(rhs), opts.residual_atol)
    r = _residual_vec(sp, x, rhs, k, nu)
    nr = sp.dual_norm(r)
    for it in range(opts.max_iters + 1):
        if not np.isfinite(nr):
            return x, nr, it, False, "non-finite residual"
        if nr <= tol:
            return x, nr, it, True, ""
        if it == opts.max_iters:
            break
        lin = sp.linearization(x)
        # left preconditioning by the (diagonal) linear part
        op = LinearOperator((n, n), matvec=lambda d: d + k * lin(d) / diag, dtype=float)
        delta, info = gmres(op, -r / diag, rtol=opts.linear_rtol, atol=0.0, restart=40, maxiter=10)
        alpha = 1.0
        while True:
            xt = x + alpha * delta
            rt = _residual_vec(sp, xt, rhs, k, nu)
            nt = sp.dual_norm(rt)
            if nt <= (1.0 - 1e-4 * alpha) * nr:
                break
            alpha *= opts.shrink
            if alpha < opts.min_step:
                return x, nr, it, False, f"line search stalled at residual {nr:.3e}"
        x, r, nr = xt, rt, nt
    return x, nr, opts.max_iters, False, f"no convergence in {opts.max_iters} iterations"


def _start_guess(recipe, index, sp, w, rhs, cfg: StepConfig):
    if recipe == "w":
        return w.copy()
    if recipe == "zero":
        return np.zeros(sp.dim)
    if recipe == "semi_implicit":
        return (rhs - cfg.k * sp.advect(w, w)) / (1.0 + cfg.k * cfg.nu * sp.eig)
    rng = np.random.default_rng([cfg.seed, index])
    return w * (1.0 + cfg.perturbation * rng.uniform(-1.0, 1.0, sp.dim))


def step_solve(w: SpectralVelocity, cfg: StepConfig, f: SpectralVelocity) -> SolutionSet:
    """All distinct solutions reached from the configured Newton starts."""
    w._check(f)
    sp = w.space
    rhs = w.dofs + cfg.k * f.dofs
    sols, res, ens, origins, attempts = [], [], [], [], []
    for i, recipe in enumerate(cfg.starts):
        x0 = _start_guess(recipe, i, sp, w.dofs, rhs, cfg)
        x, nr, its, ok, msg = _newton(sp, x0, rhs, cfg.k, cfg.nu, cfg.newton)
        rep = StartReport(recipe, ok, its, nr, message=msg)
        attempts.append(rep)
        if not ok:
            continue
        u = SpectralVelocity(sp, x)
        e = energy_identity_relative(u, w, cfg.k, cfg.nu, f)
        rep.energy_residual = e
        if not e <= cfg.energy_tol:
            rep.converged = False
            rep.message = f"energy identity defect {e:.3e} exceeds {cfg.energy_tol:.1e}"
            continue
        step_stats.record(e)
        if all(sp.h_norm(x - s.dofs) > cfg.dedup_tol for s in sols):
            sols.append(u)
            res.append(nr)
            ens.append(e)
            origins.append(i)
    if not sols:
        detail = "; ".join(f"{a.recipe}: {a.message}" for a in attempts)
        raise NoSolutionError(f"no solution found ({detail})", attempts)
    return SolutionSet(sols, res, ens, origins, attempts)


# -- trajectories -------------------------------------------------------------------

@dataclass
class Trajectory:
    """States ``u^0 .. u^n`` of one selected branch with per-step bookkeeping."""

    k: float
    states: list
    branch_counts: list = field(default_factory=list)
    energy_residuals: list = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return self.k * np.arange(len(self.states))

    def dofs(self) -> np.ndarray:
        return np.array([s.dofs for s in self.states])

    def h_norms(self) -> np.ndarray:
        d = self.dofs()
        return np.sqrt((d * d).sum(axis=1))

    def v_norms(self) -> np.ndarray:
        d = self.dofs()
        return np.sqrt((d * d * self.states[0].space.eig).sum(axis=1))

    def max_energy_residual(self) -> float:
        return max(self.energy_residuals, default=0.0)

    def log_rows(self):
        """Trajectory-log records; step 0 has branch count 1 and no defect."""
        h, v = self.h_norms(), self.v_norms()
        for n in range(len(self.states)):
            yield (n, n * self.k, h[n], v[n],
                   1 if n == 0 else self.branch_counts[n - 1],
                   0.0 if n == 0 else self.energy_residuals[n - 1])

    def write_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            wr = csv.writer(fh, lineterminator="\r\n")
            wr.writerow(TRAJECTORY_COLUMNS)
            for row in self.log_rows():
                wr.writerow([row[0], fmt(row[1]), fmt(row[2]), fmt(row[3]), row[4], fmt(row[5])])


def fmt(x: float) -> str:
    """Round-trip decimal with 17 significant digits."""
    return format(float(x), ".17g")


def select_branch(sols: SolutionSet, prev: SpectralVelocity, policy: str, rng) -> SpectralVelocity:
    if len(sols) == 1:
        return sols.solutions[0]
    sp = prev.space
    if policy == "nearest":
        return min(sols.solutions, key=lambda s: sp.h_norm(s.dofs - prev.dofs))
    if policy == "max_energy":
        return max(sols.solutions, key=lambda s: sp.h_norm(s.dofs))
    if policy == "random":
        return sols.solutions[int(rng.integers(len(sols)))]
    raise ValueError(f"unknown branch policy {policy!r}")


def iterate(u0: SpectralVelocity, n: int, cfg: StepConfig, f: SpectralVelocity,
            policy: str = "nearest", seed: int = 0, callback=None) -> Trajectory:
    """Apply :func:`step_solve` ``n`` times, choosing one branch per step."""
    if n < 0:
        raise ValueError("number of steps must be nonnegative")
    if policy not in POLICIES:
        raise ValueError(f"unknown branch policy {policy!r}")
    rng = np.random.default_rng(seed)
    traj = Trajectory(cfg.k, [u0])
    u = u0
    for step in range(1, n + 1):
        try:
            sols = step_solve(u, cfg, f)
        except NoSolutionError as exc:
            raise NoSolutionError(f"step {step}: {exc}", exc.attempts, step) from exc
        nxt = select_branch(sols, u, policy, rng)
        traj.branch_counts.append(len(sols))
        traj.energy_residuals.append(sols.energy_residuals[sols.solutions.index(nxt)])
        traj.states.append(nxt)
        u = nxt
        if callback is not None:
            callback(step, u)
    return traj


def fast_config(k: float, nu: float, **kw) -> StepConfig:
    """Single-start configuration used for long ensemble runs."""
    return StepConfig(k, nu, starts=("semi_implicit",), **kw)
