import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvns.euler import (NewtonOptions, NoSolutionError, StepConfig, TRAJECTORY_COLUMNS,
                        energy_identity_relative, energy_identity_residual, fast_config, iterate,
                        step_residual, step_solve)
from mvns.spectral import random_velocity, shear_mode, space


def test_shear_recurrence_closed_form():
    # a shear mode has B(u, u) = 0, so each step divides by 1 + k nu |xi|^2
    sp = space(16)
    u0 = shear_mode(sp, 1.0, 2)
    tr = iterate(u0, 20, StepConfig(0.1, 0.5), sp.zeros())
    expect = (1 + 0.1 * 0.5 * 4) ** -np.arange(21.0)
    assert np.allclose(tr.h_norms(), expect, rtol=1e-12, atol=0)
    assert set(tr.branch_counts) == {1}


def test_forced_shear_fixed_point():
    sp = space(16)
    f = shear_mode(sp, 0.3)
    u = iterate(sp.zeros(), 200, fast_config(0.2, 1.0), f).states[-1]
    assert abs(sp.h_norm(u.dofs) - 0.3) < 1e-12
    assert np.allclose(u.dofs, f.dofs, atol=1e-12)


def test_zero_is_fixed_without_forcing():
    sp = space(16)
    sols = step_solve(sp.zeros(), StepConfig(0.1, 1.0), sp.zeros())
    assert len(sols) == 1 and not sols.solutions[0].dofs.any()


@given(st.integers(0, 2**31), st.sampled_from([0.01, 0.1, 0.3]))
def test_step_properties(seed, k):
    sp = space(8)
    rng = np.random.default_rng(seed)
    w = random_velocity(sp, rng, rng.uniform(0.1, 3.0))
    f = random_velocity(sp, rng, rng.uniform(0.0, 1.0))
    nu = 0.5
    sols = step_solve(w, StepConfig(k, nu, starts=("semi_implicit", "w")), f)
    for u in sols:
        assert step_residual(u, w, k, f, nu) <= 1e-12 * sp.dual_norm(w.dofs + k * f.dofs) + 1e-18
        assert energy_identity_relative(u, w, k, nu, f) <= 1e-9
        # per-step energy bound |u|^2 + k nu ||u||^2 <= |w|^2 + (k / nu) ||f||_*^2
        lhs = sp.h_norm(u.dofs) ** 2 + k * nu * sp.v_norm(u.dofs) ** 2
        assert lhs <= sp.h_norm(w.dofs) ** 2 + k / nu * sp.dual_norm(f.dofs) ** 2 + 1e-12


def test_energy_residual_detects_wrong_state(rng):
    sp = space(16)
    w = random_velocity(sp, rng)
    assert energy_identity_residual(w, w, 0.1, 1.0, sp.zeros()) > 1e-3


def test_multistart_dedup_and_origins(rng):
    sp = space(16)
    w = random_velocity(sp, rng, 0.5)
    sols = step_solve(w, StepConfig(0.05, 1.0), sp.zeros())
    assert len(sols) == 1
    assert sols.origins == [0]
    assert len(sols.attempts) == 8
    assert sols.max_pairwise_distance() == 0.0


def test_no_solution_reports_attempts(rng):
    sp = space(16)
    w = random_velocity(sp, rng, 5.0)
    cfg = StepConfig(0.2, 0.01, newton=NewtonOptions(max_iters=1), starts=("zero", "w"))
    with pytest.raises(NoSolutionError) as info:
        step_solve(w, cfg, sp.zeros())
    assert len(info.value.attempts) == 2
    assert all(not a.converged for a in info.value.attempts)
    with pytest.raises(NoSolutionError) as info:
        iterate(w, 3, cfg, sp.zeros())
    assert info.value.step == 1


def test_config_validation():
    with pytest.raises(ValueError):
        StepConfig(0.0, 1.0)
    with pytest.raises(ValueError):
        StepConfig(0.1, 1.0, starts=())
    with pytest.raises(ValueError, match="unknown start"):
        StepConfig(0.1, 1.0, starts=("bogus",))
    with pytest.raises(ValueError):
        StepConfig(0.1, 1.0, newton=NewtonOptions(residual_tol=0.0))
    sp = space(8)
    with pytest.raises(ValueError):
        iterate(sp.zeros(), -1, StepConfig(0.1, 1.0), sp.zeros())
    with pytest.raises(ValueError):
        iterate(sp.zeros(), 1, StepConfig(0.1, 1.0), sp.zeros(), policy="bogus")


def test_trajectory_log(tmp_path):
    sp = space(8)
    tr = iterate(shear_mode(sp, 1.0), 3, StepConfig(0.1, 1.0), sp.zeros())
    rows = list(tr.log_rows())
    assert len(rows) == 4 and rows[0][4] == 1 and rows[0][5] == 0.0
    p = tmp_path / "t.csv"
    tr.write_csv(p, "provenance")
    text = p.read_text()
    assert text.startswith("# provenance\n")
    parsed = list(csv.reader(io.StringIO(text.split("\n", 1)[1])))
    assert tuple(parsed[0]) == TRAJECTORY_COLUMNS
    assert float(parsed[-1][2]) == tr.h_norms()[-1]


def test_zero_steps_gives_single_state():
    sp = space(8)
    tr = iterate(sp.zeros(), 0, StepConfig(0.1, 1.0), sp.zeros())
    assert len(tr) == 1 and len(list(tr.log_rows())) == 1
