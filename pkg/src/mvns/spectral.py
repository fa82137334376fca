"""Divergence-free Fourier fields on the periodic torus [0, 2*pi)^2.

A velocity field is stored by its coordinates in an orthonormal real basis
of the retained, divergence-free, mean-free Fourier modes ("dofs").  Every
mode xi carries one complex amplitude a(xi) along the unit vector
tau(xi) = i (xi_2, -xi_1) / |xi|, with a(-xi) = conj(a(xi)).  The real dof
vector holds sqrt(2) * (Re a, Im a) over one half-plane of modes, so the
Euclidean inner product of dof vectors *is* the H inner product.

Normalization: coefficients are ``u_hat = sqrt(2) * fft2(u) / N**2``, which
makes Parseval read ``|u|^2 = sum |u_hat(xi)|^2`` and gives a unit-amplitude
single mode such as ``(sin y, 0)`` unit H-norm.  In integral form
``|u|^2 = (2 pi^2)^-1 * integral |u|^2 dx``.

Truncation follows the 2/3 rule: modes with ``max(|xi_1|, |xi_2|) <= (N-1)//3``
are retained, everything else is identically zero.  With that cutoff the
pseudo-spectral product of two retained fields equals the exact truncated
convolution.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft

SQRT2 = np.sqrt(2.0)
NORMALIZATION_TAG = "sqrt2_over_N2"


class SpectralSpace:
    """Wavenumber tables and transforms for an ``N x N`` grid."""

    def __init__(self, N: int):
        N = int(N)
        if N < 8 or N > 64 or N & (N - 1):
            raise ValueError(f"grid size must be a power of two in [8, 64], got {N}")
        self.N = N
        m = np.fft.fftfreq(N, 1.0 / N).round().astype(int)
        k1, k2 = np.meshgrid(m, m, indexing="ij")
        self.k1 = k1
        self.k2 = k2
        self.ksq = k1**2 + k2**2
        self.cutoff = (N - 1) // 3
        self.mask = (np.abs(k1) <= self.cutoff) & (np.abs(k2) <= self.cutoff) & (self.ksq > 0)

        kabs = np.sqrt(np.where(self.ksq > 0, self.ksq, 1))
        tau = np.zeros((2, N, N), dtype=complex)
        tau[0] = 1j * k2 / kabs
        tau[1] = -1j * k1 / kabs
        tau[:, ~self.mask] = 0.0
        self.tau = tau
        self._tau_conj = np.conj(tau)

        half = self.mask & ((k2 > 0) | ((k2 == 0) & (k1 > 0)))
        hi, hj = np.nonzero(half)
        self._hi, self._hj = hi, hj
        self._ni, self._nj = (-k1[hi, hj]) % N, (-k2[hi, hj]) % N
        self.n_modes = len(hi)
        self.dim = 2 * self.n_modes
        # Stokes eigenvalue |xi|^2 attached to every dof
        self.eig = np.tile(self.ksq[hi, hj].astype(float), 2)
        self.half_modes = np.stack([k1[hi, hj], k2[hi, hj]], axis=1)

        # half-spectrum (rfft) layout used by the hot path
        M = N // 2 + 1
        self._tau_r = tau[:, :, :M].copy()
        self._tauc_h = np.conj(tau[:, hi, hj])
        zc = k2[hi, hj] == 0
        self._zi, self._zsel = self._ni[zc], np.nonzero(zc)[0]
        self._ik_r = np.stack([1j * k1, 1j * k2])[:, :, :M].copy()
        self._to_phys = N**2 / SQRT2
        self._to_spec = SQRT2 / N**2

    def __repr__(self):
        return f"SpectralSpace(N={self.N})"

    # -- dof <-> coefficient maps -----------------------------------------
    def pack(self, coeffs: np.ndarray) -> np.ndarray:
        """Dof vector of the retained divergence-free part of ``coeffs``."""
        a = (self._tau_conj[0, self._hi, self._hj] * coeffs[0, self._hi, self._hj]
             + self._tau_conj[1, self._hi, self._hj] * coeffs[1, self._hi, self._hj])
        return SQRT2 * np.concatenate([a.real, a.imag])

    def unpack(self, x: np.ndarray) -> np.ndarray:
        n = self.n_modes
        a_half = (x[:n] + 1j * x[n:]) / SQRT2
        a = np.zeros((self.N, self.N), dtype=complex)
        a[self._hi, self._hj] = a_half
        a[self._ni, self._nj] = np.conj(a_half)
        return self.tau * a

    def to_physical(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(coeffs, axes=(-2, -1)).real * self._to_phys

    def from_physical(self, u: np.ndarray) -> np.ndarray:
        return np.fft.fft2(u, axes=(-2, -1)) * self._to_spec

    # -- dof-level operators (hot path for the Newton solver) ---------------
    def _unpack_half(self, x):
        n = self.n_modes
        a_half = (x[:n] + 1j * x[n:]) / SQRT2
        a = np.zeros((self.N, self.N // 2 + 1), dtype=complex)
        a[self._hi, self._hj] = a_half
        a[self._zi, 0] = np.conj(a_half[self._zsel])
        return self._tau_r * a

    def _pack_half(self, c):
        a = (self._tauc_h[0] * c[0, self._hi, self._hj]
             + self._tauc_h[1] * c[1, self._hi, self._hj])
        return SQRT2 * np.concatenate([a.real, a.imag])

    def _fields(self, x):
        """Scaled physical (u1, u2, d1 u1, d2 u1, d1 u2, d2 u2) of dofs ``x``."""
        c = self._unpack_half(x)
        N = self.N
        stack = np.empty((6, N, N // 2 + 1), dtype=complex)
        stack[0:2] = c
        stack[2:4] = self._ik_r * c[0]
        stack[4:6] = self._ik_r * c[1]
        return sfft.irfft2(stack, s=(N, N), axes=(-2, -1))

    def _project_product(self, prod):
        # inverse transforms return physical/(N^2/sqrt2); the product picks up that factor squared
        return self._pack_half(sfft.rfft2(prod, axes=(-2, -1))) * (self._to_spec * self._to_phys**2)

    def advect(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Dofs of B(x, y) = P[(x . grad) y], dealiased."""
        p = self._fields(x)
        q = p if y is x else self._fields(y)
        prod = np.empty((2, self.N, self.N))
        prod[0] = p[0] * q[2] + p[1] * q[3]
        prod[1] = p[0] * q[4] + p[1] * q[5]
        return self._project_product(prod)

    def linearization(self, x: np.ndarray):
        """Return ``d -> B(d, x) + B(x, d)`` with the fields of ``x`` cached."""
        p = self._fields(x)

        def apply(d):
            q = self._fields(d)
            prod = np.empty((2, self.N, self.N))
            prod[0] = q[0] * p[2] + q[1] * p[3] + p[0] * q[2] + p[1] * q[3]
            prod[1] = q[0] * p[4] + q[1] * p[5] + p[0] * q[4] + p[1] * q[5]
            return self._project_product(prod)

        return apply

    def h_norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(x @ x))

    def v_norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(x @ (self.eig * x)))

    def dual_norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(x @ (x / self.eig)))

    def zeros(self) -> "SpectralVelocity":
        return SpectralVelocity(self, np.zeros(self.dim))


@lru_cache(maxsize=None)
def space(N: int) -> SpectralSpace:
    """Shared, cached :class:`SpectralSpace` for grid size ``N``."""
    return SpectralSpace(N)


@dataclass(frozen=True, eq=False)
class SpectralVelocity:
    """Immutable divergence-free, mean-free, dealiased velocity field."""

    space: SpectralSpace
    dofs: np.ndarray

    def __post_init__(self):
        d = np.array(self.dofs, dtype=float)
        if d.shape != (self.space.dim,):
            raise ValueError(f"expected {self.space.dim} dofs, got shape {d.shape}")
        d.setflags(write=False)
        object.__setattr__(self, "dofs", d)

    @property
    def N(self) -> int:
        return self.space.N

    @property
    def coeffs(self) -> np.ndarray:
        """Complex Fourier coefficients, shape ``(2, N, N)`` in FFT order."""
        return self.space.unpack(self.dofs)

    def physical(self) -> np.ndarray:
        """Real velocity on the grid, shape ``(2, N, N)``; axis 1 is x, axis 2 is y."""
        return self.space.to_physical(self.coeffs)

    def _check(self, other):
        if other.space.N != self.space.N:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return SpectralVelocity(self.space, self.dofs + other.dofs)

    def __sub__(self, other):
        self._check(other)
        return SpectralVelocity(self.space, self.dofs - other.dofs)

    def __mul__(self, c):
        return SpectralVelocity(self.space, float(c) * self.dofs)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralVelocity(self.space, -self.dofs)


# forcing is a time-independent field with exactly the same layout
ForcingField = SpectralVelocity


class NormTriple(NamedTuple):
    h_norm: float
    v_norm: float
    dual_norm: float


def leray_project(sp: SpectralSpace, coeffs: np.ndarray) -> SpectralVelocity:
    """Project an arbitrary Hermitian coefficient field onto the retained
    divergence-free modes (Leray projection composed with the 2/3 truncation)."""
    return SpectralVelocity(sp, sp.pack(np.asarray(coeffs)))


def leray_coeffs(sp: SpectralSpace, coeffs: np.ndarray) -> np.ndarray:
    """Per-mode ``v - xi (xi . v) / |xi|^2`` with masked modes zeroed."""
    k1, k2 = sp.k1, sp.k2
    inv = np.where(sp.ksq > 0, 1.0 / np.where(sp.ksq > 0, sp.ksq, 1), 0.0)
    div = (k1 * coeffs[0] + k2 * coeffs[1]) * inv
    out = np.stack([coeffs[0] - k1 * div, coeffs[1] - k2 * div])
    out[:, ~sp.mask] = 0.0
    return out


def stokes_apply(u: SpectralVelocity) -> SpectralVelocity:
    return SpectralVelocity(u.space, u.space.eig * u.dofs)


def nonlinear_term(u: SpectralVelocity, v: SpectralVelocity) -> SpectralVelocity:
    u._check(v)
    return SpectralVelocity(u.space, u.space.advect(u.dofs, v.dofs))


def inner(u: SpectralVelocity, v: SpectralVelocity) -> float:
    """L^2 (H) pairing."""
    return float(u.dofs @ v.dofs)


def trilinear(u: SpectralVelocity, v: SpectralVelocity, w: SpectralVelocity) -> float:
    """b(u, v, w) = (B(u, v), w)."""
    return inner(nonlinear_term(u, v), w)


def norms(u: SpectralVelocity) -> NormTriple:
    sp = u.space
    return NormTriple(sp.h_norm(u.dofs), sp.v_norm(u.dofs), sp.dual_norm(u.dofs))


def h_distance(u: SpectralVelocity, v: SpectralVelocity) -> float:
    return u.space.h_norm(u.dofs - v.dofs)


# -- constructors -------------------------------------------------------------

def single_mode(sp: SpectralSpace, mode, amplitude, phase: str = "sin") -> SpectralVelocity:
    """Field ``amplitude * sin(mode . x)`` (or cos) with a vector amplitude
    perpendicular to ``mode``.  Raises if the result would not be solenoidal."""
    mode = np.asarray(mode, dtype=int)
    amp = np.asarray(amplitude, dtype=float)
    if not mode.any():
        raise ValueError("the zero mode is excluded (fields are mean-free)")
    if abs(mode @ amp) > 1e-14 * max(1.0, np.abs(amp).max()):
        raise ValueError(f"amplitude {amp.tolist()} is not perpendicular to mode {mode.tolist()}")
    if np.abs(mode).max() > sp.cutoff:
        raise ValueError(f"mode {mode.tolist()} is truncated on N={sp.N} (cutoff {sp.cutoff})")
    x = np.arange(sp.N) * 2 * np.pi / sp.N
    X, Y = np.meshgrid(x, x, indexing="ij")
    arg = mode[0] * X + mode[1] * Y
    s = np.sin(arg) if phase == "sin" else np.cos(arg)
    phys = amp[:, None, None] * s
    return leray_project(sp, sp.from_physical(phys))


def shear_mode(sp: SpectralSpace, amplitude: float, wavenumber: int = 1) -> SpectralVelocity:
    """``(amplitude * sin(wavenumber * y), 0)``."""
    return single_mode(sp, (0, wavenumber), (amplitude, 0.0))


def random_velocity(sp: SpectralSpace, rng: np.random.Generator, h_norm: float = 1.0,
                    slope: float | None = None) -> SpectralVelocity:
    """Random field with spectrum ``|xi|^-slope`` rescaled to the given H-norm.

    ``slope`` defaults to a random draw in [0, 2] so that ensembles mix rough
    and smooth data.
    """
    if slope is None:
        slope = rng.uniform(0.0, 2.0)
    x = rng.standard_normal(sp.dim) * sp.eig ** (-0.5 * slope)
    nrm = np.sqrt(x @ x)
    return SpectralVelocity(sp, x * (h_norm / nrm) if nrm > 0 else x)
