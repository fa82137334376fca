import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvns.spectral import (SpectralSpace, SpectralVelocity, inner, leray_coeffs, leray_project,
                           nonlinear_term, norms, random_velocity, shear_mode, single_mode, space,
                           stokes_apply, trilinear)
from oracles import convolution_advect, leray_truncate

seeds = st.integers(0, 2**32 - 1)


def field(sp, seed, h=1.0):
    return random_velocity(sp, np.random.default_rng(seed), h)


def test_grid_validation():
    for bad in (4, 12, 128):
        with pytest.raises(ValueError):
            SpectralSpace(bad)
    assert [space(n).cutoff for n in (8, 16, 32)] == [2, 5, 10]


def test_unit_shear_norms():
    u = shear_mode(space(16), 1.0)
    assert np.allclose(norms(u), (1.0, 1.0, 1.0), atol=1e-14)
    phys = u.physical()
    y = np.arange(16) * 2 * np.pi / 16
    assert np.allclose(phys[0], np.sin(y)[None, :], atol=1e-14)
    assert np.allclose(phys[1], 0.0, atol=1e-14)


def test_single_mode_rejections():
    sp = space(16)
    with pytest.raises(ValueError, match="perpendicular"):
        single_mode(sp, (1, 0), (1.0, 0.0))
    with pytest.raises(ValueError, match="mean-free"):
        single_mode(sp, (0, 0), (1.0, 0.0))
    with pytest.raises(ValueError, match="truncated"):
        single_mode(sp, (0, 7), (1.0, 0.0))


def test_leray_matches_explicit_formula(rng):
    sp = space(16)
    phys = rng.standard_normal((2, 16, 16))
    c = sp.from_physical(phys)
    assert np.abs(leray_project(sp, c).coeffs - leray_truncate(c, 16)).max() < 1e-15
    assert np.abs(leray_coeffs(sp, c) - leray_truncate(c, 16)).max() < 1e-15


@given(seeds)
def test_parseval_and_divergence(seed):
    sp = space(16)
    u = field(sp, seed)
    phys = u.physical()
    h2 = (phys**2).sum() * (2 * np.pi / 16) ** 2 / (2 * np.pi**2)
    assert abs(h2 - 1.0) < 1e-12
    c = u.coeffs
    div = sp.k1 * c[0] + sp.k2 * c[1]
    assert np.abs(div).max() < 1e-14
    assert np.abs(sp.pack(c) - u.dofs).max() < 1e-14       # P u = u


@given(seeds, seeds, seeds)
def test_trilinear_skew(a, b, c):
    sp = space(16)
    u, v, w = field(sp, a), field(sp, b), field(sp, c)
    assert abs(trilinear(u, v, v)) < 1e-12
    assert abs(trilinear(u, v, w) + trilinear(u, w, v)) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_nonlinear_term_matches_convolution(seed):
    sp = space(8)
    rng = np.random.default_rng(seed)
    u, v = random_velocity(sp, rng), random_velocity(sp, rng)
    got = nonlinear_term(u, v).coeffs
    ref = convolution_advect(u.coeffs, v.coeffs, 8)
    assert np.abs(got - ref).max() < 1e-12


def test_linearization_matches_difference(rng):
    sp = space(16)
    x, d = (random_velocity(sp, rng).dofs for _ in range(2))
    lin = sp.linearization(x)(d)
    ref = sp.advect(d, x) + sp.advect(x, d)
    assert np.abs(lin - ref).max() < 1e-13


def test_stokes_and_inner(rng):
    sp = space(16)
    u = shear_mode(sp, 2.0, 3)
    assert np.allclose(stokes_apply(u).dofs, 9 * u.dofs)
    v = random_velocity(sp, rng)
    assert abs(inner(u, v) - inner(v, u)) < 1e-15
    assert abs(norms(u).v_norm - 6.0) < 1e-13


def test_shear_is_stationary_for_nonlinearity():
    sp = space(16)
    u = shear_mode(sp, 1.7, 2)
    assert np.abs(nonlinear_term(u, u).dofs).max() < 1e-14


def test_velocity_arithmetic_and_mismatch(rng):
    a, b = space(8), space(16)
    u = random_velocity(b, rng)
    assert np.allclose((u + u - u * 2.0).dofs, 0.0)
    assert np.allclose((-u).dofs, -u.dofs)
    with pytest.raises(ValueError):
        _ = u + a.zeros()
    with pytest.raises(ValueError):
        u.dofs[0] = 1.0
    with pytest.raises(ValueError):
        SpectralVelocity(b, np.zeros(3))
