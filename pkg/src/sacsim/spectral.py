"""Mode-indexed real periodic fields on the 2D torus.

A field u(x) = sum_m c_m e^{2 pi i m.x} is stored through its Fourier
coefficients c_m on the integer square [-N, N]^2, with the convention that
only modes inside the Euclidean ball |m| <= N carry data (spectral Galerkin
truncation on the ball, not the square).  Real-valuedness is encoded as the
Hermitian symmetry c_{-m} = conj(c_m), which every operation preserves.

The linear operator throughout is A = Laplacian - Id, acting diagonally with
symbol -I_m, I_m = 1 + 4 pi^2 |m|^2.
"""

from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

TWO_PI_SQ = 4.0 * math.pi * math.pi

# Largest FFT grid edge dealiasing is allowed to request; configurable.
_GRID_CAP = 8192

# SACSIM_DEBUG_CHECKS=1 re-asserts the Hermitian/ball invariants after every
# producing operation (slow; for debugging only).
DEBUG_CHECKS = os.environ.get("SACSIM_DEBUG_CHECKS", "") not in ("", "0")


class GridCapacityError(RuntimeError):
    """Raised when an exact-product grid would exceed the configured cap."""


def set_grid_cap(cap: int) -> None:
    global _GRID_CAP
    _GRID_CAP = int(cap)


def grid_cap() -> int:
    return _GRID_CAP


@dataclass(frozen=True)
class ModeIndex:
    """A single Fourier wavenumber m = (m1, m2)."""

    m1: int
    m2: int

    @property
    def modulus_sq(self) -> int:
        return self.m1 * self.m1 + self.m2 * self.m2

    @property
    def modulus(self) -> float:
        return math.sqrt(self.modulus_sq)

    @property
    def i_m(self) -> float:
        """Symbol I_m = 1 + 4 pi^2 |m|^2 of Id - Laplacian."""
        return 1.0 + TWO_PI_SQ * self.modulus_sq


@lru_cache(maxsize=None)
def mode_values(cutoff: int) -> np.ndarray:
    """Integer wavenumbers -N..N along one axis."""
    return np.arange(-cutoff, cutoff + 1)


@lru_cache(maxsize=None)
def modulus_sq_grid(cutoff: int) -> np.ndarray:
    """|m|^2 as an integer (2N+1, 2N+1) array indexed like coefficients."""
    m = mode_values(cutoff)
    return (m * m)[:, None] + (m * m)[None, :]


@lru_cache(maxsize=None)
def ball_mask(cutoff: int) -> np.ndarray:
    """Boolean mask of modes with |m| <= N (exact integer comparison)."""
    return modulus_sq_grid(cutoff) <= cutoff * cutoff


@lru_cache(maxsize=None)
def symbol_grid(cutoff: int) -> np.ndarray:
    """I_m on the coefficient square."""
    return 1.0 + TWO_PI_SQ * modulus_sq_grid(cutoff)


class SpectralField:
    """Fourier coefficients of a real field, cutoff N on the Euclidean ball.

    coeffs[i, j] = c_{(i-N, j-N)}; invariants: c_{-m} = conj(c_m) and
    c_m = 0 for |m| > N.
    """

    __slots__ = ("cutoff", "coeffs")

    def __init__(self, cutoff: int, coeffs: np.ndarray):
        side = 2 * cutoff + 1
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (side, side):
            raise ValueError(
                f"coefficient array must be {side}x{side} for cutoff {cutoff}, "
                f"got {coeffs.shape}"
            )
        self.cutoff = int(cutoff)
        self.coeffs = coeffs

    @classmethod
    def zeros(cls, cutoff: int) -> "SpectralField":
        side = 2 * cutoff + 1
        return cls(cutoff, np.zeros((side, side), dtype=np.complex128))

    @classmethod
    def from_modes(cls, cutoff: int, modes: dict) -> "SpectralField":
        """Build from {(m1, m2): coefficient}; conjugate pairs are not implied."""
        f = cls.zeros(cutoff)
        for (m1, m2), c in modes.items():
            if abs(m1) > cutoff or abs(m2) > cutoff:
                raise ValueError(f"mode {(m1, m2)} outside square of cutoff {cutoff}")
            if m1 * m1 + m2 * m2 > cutoff * cutoff:
                raise ValueError(f"mode {(m1, m2)} outside ball of cutoff {cutoff}")
            f.coeffs[m1 + cutoff, m2 + cutoff] = c
        return f

    def coeff(self, m1: int, m2: int) -> complex:
        N = self.cutoff
        if abs(m1) > N or abs(m2) > N:
            return 0.0 + 0.0j
        return complex(self.coeffs[m1 + N, m2 + N])

    def copy(self) -> "SpectralField":
        return SpectralField(self.cutoff, self.coeffs.copy())

    def hermitian_defect(self) -> float:
        """Max |c_{-m} - conj(c_m)|; zero for a real-valued field."""
        return float(np.max(np.abs(self.coeffs[::-1, ::-1].conj() - self.coeffs)))

    def ball_defect(self) -> float:
        """Max |c_m| outside the Euclidean ball (should be zero)."""
        outside = ~ball_mask(self.cutoff)
        if not outside.any():
            return 0.0
        return float(np.max(np.abs(self.coeffs[outside])))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        if other.cutoff != self.cutoff:
            raise ValueError("cutoff mismatch; project first")
        return SpectralField(self.cutoff, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        if other.cutoff != self.cutoff:
            raise ValueError("cutoff mismatch; project first")
        return SpectralField(self.cutoff, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.cutoff, self.coeffs * scalar)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"SpectralField(cutoff={self.cutoff})"


@dataclass
class PhysicalField:
    """Collocation values on the uniform grid x = (i/G, j/G), row-major."""

    grid_size: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid_size, self.grid_size):
            raise ValueError("values must be a GxG real array")


def _checked(f: SpectralField) -> SpectralField:
    if DEBUG_CHECKS:
        assert f.hermitian_defect() == 0.0, "Hermitian symmetry violated"
        assert f.ball_defect() == 0.0, "support outside the Euclidean ball"
    return f


def project(f: SpectralField, new_cutoff: int) -> SpectralField:
    """Galerkin projection P_{N'}: keep modes with |m| <= N', zero the rest.

    Enlarging the cutoff zero-pads, so `project` doubles as an embedding.
    Idempotent and exact (pure indexing).
    """
    if new_cutoff < 0:
        raise ValueError("cutoff must be nonnegative")
    N, Np = f.cutoff, new_cutoff
    out = SpectralField.zeros(Np)
    k = min(N, Np)
    src = f.coeffs[N - k : N + k + 1, N - k : N + k + 1]
    out.coeffs[Np - k : Np + k + 1, Np - k : Np + k + 1] = src
    out.coeffs[~ball_mask(Np)] = 0.0
    return _checked(out)


def semigroup(f: SpectralField, t: float) -> SpectralField:
    """Heat semigroup S_t = e^{tA}, A = Laplacian - Id: multiply by e^{-t I_m}."""
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    if t == 0:
        return f.copy()
    return _checked(SpectralField(f.cutoff, f.coeffs * np.exp(-t * symbol_grid(f.cutoff))))


def semigroup_multipliers(cutoff: int, t: float) -> np.ndarray:
    """e^{-t I_m} on the coefficient square (for precomputed stepping)."""
    return np.exp(-t * symbol_grid(cutoff))


def integrated_semigroup_factor(m, tau: float):
    """int_0^tau e^{-s I_m} ds = (1 - e^{-tau I_m}) / I_m.

    Uses expm1 so the small-tau*I_m regime does not cancel; accepts a
    ModeIndex, a scalar I_m, or an array of I_m values.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    i_m = m.i_m if isinstance(m, ModeIndex) else m
    if isinstance(i_m, np.ndarray):
        return -np.expm1(-tau * i_m) / i_m
    return -math.expm1(-tau * i_m) / i_m


def _half_spectrum(coeffs: np.ndarray, cutoff: int, grid: int, scale: float = 1.0,
                   out: np.ndarray | None = None) -> np.ndarray:
    """Embed square coefficients into the rfft2 half-plane layout (G, G//2+1).

    The nonnegative-m2 half of the square maps to two contiguous row blocks
    (wrap-around for negative m1), so this is two slice copies.
    """
    N, G = cutoff, grid
    half = np.zeros((G, G // 2 + 1), dtype=np.complex128) if out is None else out
    src = coeffs[:, N:] if scale == 1.0 else coeffs[:, N:] * scale
    half[: N + 1, : N + 1] = src[N:]
    half[G - N :, : N + 1] = src[:N]
    return half


_scratch = threading.local()


def _half_scratch(cutoff: int, grid: int) -> np.ndarray:
    """Reusable zeroed half-spectrum buffer (zeroes only the band it wrote)."""
    store = getattr(_scratch, "half", None)
    if store is None:
        store = _scratch.half = {}
    buf_band = store.get(grid)
    if buf_band is None:
        buf = np.zeros((grid, grid // 2 + 1), dtype=np.complex128)
    else:
        buf, band = buf_band
        buf[: band + 1, : band + 1] = 0.0
        buf[grid - band :, : band + 1] = 0.0
    store[grid] = (buf, cutoff)
    return buf


@lru_cache(maxsize=None)
def _outside_ball_flat(cutoff: int) -> np.ndarray:
    return np.nonzero(~ball_mask(cutoff).ravel())[0]


def grid_values(f: SpectralField, grid: int) -> np.ndarray:
    """Evaluate the field on the GxG collocation grid (exact for G >= 2N+1).

    Requires Hermitian input; realness is then automatic through irfft2.
    """
    return _grid_values_raw(f.coeffs, f.cutoff, grid)


def _grid_values_raw(coeffs: np.ndarray, cutoff: int, grid: int) -> np.ndarray:
    N = cutoff
    if grid < 2 * N + 1:
        raise ValueError(f"grid {grid} too small for cutoff {N} (need >= {2*N+1})")
    half = _half_spectrum(coeffs, N, grid, scale=float(grid * grid),
                          out=_half_scratch(N, grid))
    return sfft.irfft2(half, s=(grid, grid))


def grid_to_coeffs(values: np.ndarray, cutoff: int, enforce_ball: bool = True) -> SpectralField:
    """Extract modes |m| <= N from GxG samples; exact when no aliasing occurs."""
    G = values.shape[0]
    N = cutoff
    if N > (G - 1) // 2:
        raise ValueError(f"cutoff {N} not representable on grid {G} (need N <= (G-1)/2)")
    half = sfft.rfft2(values)
    side = 2 * N + 1
    coeffs = np.empty((side, side), dtype=np.complex128)
    inv = 1.0 / (G * G)
    coeffs[N:, N:] = half[: N + 1, : N + 1]
    coeffs[:N, N:] = half[G - N :, : N + 1]
    coeffs[:, N:] *= inv
    # the m2 = 0 column pairs with itself; symmetrize away FFT rounding so the
    # Hermitian invariant holds exactly
    col = coeffs[:, N]
    coeffs[:, N] = 0.5 * (col + np.conj(col[::-1]))
    coeffs[:, :N] = np.conj(coeffs[::-1, 2 * N : N : -1])
    out = SpectralField(N, coeffs)
    if enforce_ball:
        out.coeffs.ravel()[_outside_ball_flat(N)] = 0.0
        return _checked(out)
    return out


def to_physical(f: SpectralField, grid: int) -> PhysicalField:
    """Inverse transform onto a GxG grid; G >= 2N+1 is lossless."""
    return PhysicalField(grid, grid_values(f, grid))


def to_spectral(p: PhysicalField, cutoff: int) -> SpectralField:
    """Forward transform reading off modes |m| <= N; N <= (G-1)/2 required."""
    return grid_to_coeffs(p.values, cutoff, enforce_ball=False)


def power_grid_size(cutoff: int, k: int, out_cutoff: int) -> int:
    """Smallest fast grid that evaluates a k-th power alias-free to out_cutoff."""
    need = k * cutoff + out_cutoff + 1
    G = sfft.next_fast_len(need, real=True)
    if G > _GRID_CAP:
        raise GridCapacityError(
            f"dealiasing grid {G} exceeds cap {_GRID_CAP} "
            f"(cutoff={cutoff}, power={k}, out={out_cutoff})"
        )
    return G


def dealiased_power(f: SpectralField, k: int, out_cutoff: int) -> SpectralField:
    """Exact pointwise k-th power (k in {2, 3}), projected to out_cutoff.

    Evaluated on a grid with G >= k*N + N_out + 1 per axis, so every aliased
    image of the true 2N/3N-band product lands outside the retained ball and
    the result equals the exact spectral convolution power, projected.
    """
    if k not in (2, 3):
        raise ValueError("only squares and cubes are supported")
    if out_cutoff > f.cutoff:
        raise ValueError("out_cutoff must not exceed the input cutoff")
    G = power_grid_size(f.cutoff, k, out_cutoff)
    vals = grid_values(f, G)
    return grid_to_coeffs(vals**k, out_cutoff)
