"""Renormalization constants and Wick powers of the linear part.

The lattice renormalization constant is the pointwise variance of the
truncated stationary field,

    R_N = sum_{|m| <= N} 1 / (2 I_m),

which diverges like log N.  Wick powers subtract it: for a Gaussian field z
with that variance, z^{:2:} = z^2 - R_N and z^{:3:} = z^3 - 3 R_N z.

Production code uses these closed pointwise formulas (one dealiased power per
degree).  The layered binomial constructions -- combining powers of the
decaying initial parts with lower Wick powers -- are retained as independent
oracles; both routes form every polynomial exactly on an alias-free grid and
project once at the end, so they agree to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import noise
from .spectral import (
    TWO_PI_SQ,
    SpectralField,
    grid_to_coeffs,
    grid_values,
    power_grid_size,
    project,
    semigroup,
)


@dataclass(frozen=True)
class RenormConstant:
    cutoff: int
    value: float


def decayed_mode_sum(cutoff: int, t: float, row_chunk: int = 256) -> float:
    """sum_{|m| <= N} e^{-2 t I_m} / (2 I_m); equals R_N at t = 0."""
    N = cutoff
    total = 0.0
    m2sq = np.arange(-N, N + 1, dtype=np.float64) ** 2
    for lo in range(-N, N + 1, row_chunk):
        m1 = np.arange(lo, min(lo + row_chunk, N + 1), dtype=np.float64)
        sq = m1[:, None] ** 2 + m2sq[None, :]
        i_m = 1.0 + TWO_PI_SQ * sq
        terms = np.exp(-2.0 * t * i_m) / (2.0 * i_m) if t > 0 else 1.0 / (2.0 * i_m)
        terms[sq > N * N] = 0.0
        total += float(np.sum(terms))
    return total


def renorm_constant(cutoff: int) -> RenormConstant:
    """Exact finite sum over the Euclidean ball; R_0 = 1/2."""
    if cutoff < 0:
        raise ValueError("cutoff must be nonnegative")
    return RenormConstant(cutoff, decayed_mode_sum(cutoff, 0.0))


def _rvalue(R) -> float:
    return R.value if isinstance(R, RenormConstant) else float(R)


@dataclass
class WickTriple:
    """The three renormalized powers of the linear part at one time."""

    time: float
    z1: SpectralField
    z2: SpectralField
    z3: SpectralField

    @property
    def cutoff(self) -> int:
        return self.z1.cutoff

    def __post_init__(self):
        if not (self.z1.cutoff == self.z2.cutoff == self.z3.cutoff):
            raise ValueError("Wick triple fields must share a cutoff")


class InitialCondition:
    """Initial datum: zero, a finite Hermitian mode list, or a rough Gaussian.

    The rough variant draws independent mode coefficients with standard
    deviation (1 + |m|^2)^{-(1-decay_alpha)/2}, truncated at ref_cutoff and
    sampled once (from its own seed stream) per experiment; realizations at
    smaller cutoffs are projections of that single draw.
    """

    def __init__(self, kind: str, modes: dict | None = None,
                 decay_alpha: float | None = None, ref_cutoff: int | None = None,
                 master_seed: int | None = None):
        if kind not in ("zero", "modes", "rough"):
            raise ValueError(f"unknown initial condition kind {kind!r}")
        self.kind = kind
        self.modes = dict(modes) if modes else {}
        self.decay_alpha = decay_alpha
        self.ref_cutoff = ref_cutoff
        self.master_seed = master_seed
        self._sample: SpectralField | None = None
        if kind == "modes":
            self._check_hermitian()
        if kind == "rough" and (decay_alpha is None or ref_cutoff is None or master_seed is None):
            raise ValueError("rough initial data needs decay_alpha, ref_cutoff and master_seed")

    @classmethod
    def zero(cls) -> "InitialCondition":
        return cls("zero")

    @classmethod
    def from_modes(cls, modes: dict) -> "InitialCondition":
        return cls("modes", modes=modes)

    @classmethod
    def rough(cls, decay_alpha: float, ref_cutoff: int, master_seed: int) -> "InitialCondition":
        return cls("rough", decay_alpha=decay_alpha, ref_cutoff=ref_cutoff,
                   master_seed=master_seed)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "modes" and not self.modes)

    def _check_hermitian(self):
        for (m1, m2), c in self.modes.items():
            partner = self.modes.get((-m1, -m2))
            if partner is None or abs(partner - np.conj(c)) > 1e-12 * max(1.0, abs(c)):
                raise ValueError(
                    f"initial mode list is not Hermitian-complete at {(m1, m2)}")

    def _rough_sample(self) -> SpectralField:
        if self._sample is None:
            N = self.ref_cutoff
            modes = noise.half_modes(N)
            key = noise.stream_key(self.master_seed, noise.PURPOSE_INITIAL, 0)
            keys = noise.mode_keys(key, modes[:, 0], modes[:, 1])
            g = noise.normal_pairs(keys, np.array(0))
            msq = (modes[:, 0] ** 2 + modes[:, 1] ** 2).astype(np.float64)
            sd = (1.0 + msq) ** (-(1.0 - self.decay_alpha) / 2.0)
            vals = g * (sd / math.sqrt(2.0))
            z = np.nonzero((modes[:, 0] == 0) & (modes[:, 1] == 0))[0][0]
            vals[z] = g[z].real * sd[z]
            self._sample = SpectralField(N, noise.square_from_half(vals, N))
        return self._sample

    def spectral(self, cutoff: int) -> SpectralField:
        """P_N applied to the datum."""
        if self.is_zero:
            return SpectralField.zeros(cutoff)
        if self.kind == "modes":
            top = max(max(abs(m1), abs(m2)) for (m1, m2) in self.modes)
            f = SpectralField.from_modes(max(cutoff, top), self.modes)
            return project(f, cutoff)
        return project(self._rough_sample(), cutoff)


def wick_powers_pointwise(f: SpectralField, R,
                          _grid: np.ndarray | None = None) -> tuple[SpectralField, SpectralField]:
    """(f^2 - R, f^3 - 3 R f), products dealiased and projected to f's cutoff.

    Both powers are evaluated on the one grid that is alias-free for the
    cube, so a precomputed field grid can be shared with the nonlinearity.
    """
    r = _rvalue(R)
    if isinstance(R, RenormConstant) and R.cutoff != f.cutoff:
        raise ValueError("renormalization constant cutoff must match the field")
    N = f.cutoff
    G = power_grid_size(N, 3, N)
    fg = grid_values(f, G) if _grid is None else _grid
    f2 = fg * fg
    z2 = grid_to_coeffs(f2, N)
    z2.coeffs[N, N] -= r
    z3 = grid_to_coeffs(f2 * fg, N)
    z3.coeffs -= (3.0 * r) * f.coeffs
    return z2, z3


def triple_from_field(t: float, z1: SpectralField, R,
                      _grid: np.ndarray | None = None) -> WickTriple:
    """Wick triple (z, z^{:2:}, z^{:3:}) of a given linear-part field."""
    z2, z3 = wick_powers_pointwise(z1, R, _grid=_grid)
    return WickTriple(t, z1, z2, z3)


def zero_initial_wick(path: noise.NoisePath, t: float, R) -> WickTriple:
    """Wick powers of Z_t = Z_{-inf,t} - S_t Z_{-inf,0}, closed form."""
    return triple_from_field(t, noise.zero_initial_value(path, t), R)


def wick_with_initial(path: noise.NoisePath, t: float, R,
                      x0: InitialCondition) -> WickTriple:
    """Wick powers of Zbar_t = P_N S_t X_0 + Z_t, closed form.

    For rough X_0 the higher powers are only defined for t > 0 (the scheme's
    reason to start integrating at tau).
    """
    if t == 0.0 and x0.kind == "rough":
        raise ValueError("rough initial data admits no Wick powers at t = 0")
    z1 = noise.zero_initial_value(path, t)
    if not x0.is_zero:
        z1 = z1 + semigroup(x0.spectral(path.cutoff), t)
    return triple_from_field(t, z1, R)


def _wick_grids(base: np.ndarray, r: float) -> list:
    """[1, g, g^2 - R, g^3 - 3 R g] evaluated pointwise on a grid."""
    g2 = base * base
    return [1.0, base, g2 - r, g2 * base - 3.0 * r * base]


def zero_initial_wick_binomial(path: noise.NoisePath, t: float, R) -> WickTriple:
    """Binomial oracle: sum_k C(n,k) (-1)^k (S_t Z_{-inf,0})^k Z_{-inf,t}^{:n-k:}.

    Every term is formed exactly on an alias-free grid and the sum is
    projected once, which matches the closed form to rounding.
    """
    r = _rvalue(R)
    N = path.cutoff
    G = power_grid_size(N, 3, N)
    k_t = path.index_of(t)
    a = grid_values(semigroup(path.slice_field(0), t), G)
    w = grid_values(path.slice_field(k_t), G)
    wick_w = _wick_grids(w, r)
    fields = []
    for n in (1, 2, 3):
        total = np.zeros_like(w)
        for k in range(n + 1):
            total += math.comb(n, k) * (-1.0) ** k * a**k * wick_w[n - k]
        fields.append(grid_to_coeffs(total, N))
    return WickTriple(t, *fields)


def wick_with_initial_binomial(path: noise.NoisePath, t: float, R,
                               x0: InitialCondition) -> WickTriple:
    """Binomial oracle for data: sum_k C(n,k) (P_N S_t X_0)^k (Z_t)^{:n-k:}."""
    if t == 0.0 and x0.kind == "rough":
        raise ValueError("rough initial data admits no Wick powers at t = 0")
    r = _rvalue(R)
    N = path.cutoff
    G = power_grid_size(N, 3, N)
    k_t = path.index_of(t)
    a = grid_values(semigroup(path.slice_field(0), t), G)
    w = grid_values(path.slice_field(k_t), G)
    zg = w - a
    wick_z = _wick_grids(zg, r)
    b = grid_values(semigroup(x0.spectral(N), t), G)
    fields = []
    for n in (1, 2, 3):
        total = np.zeros_like(w)
        for k in range(n + 1):
            total += math.comb(n, k) * b**k * wick_z[n - k]
        fields.append(grid_to_coeffs(total, N))
    return WickTriple(t, *fields)
