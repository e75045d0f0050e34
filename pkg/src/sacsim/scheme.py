"""Tamed exponential Euler time stepping over the Da Prato-Debussche split.

The full approximation is X = Y + Zbar, where Zbar (the linear part with
initial datum) is sampled exactly in law by the noise module and Y obeys the
grid recursion

    Y_{t_{k+1}} = S_tau Y_{t_k}
                  + [int_0^tau e^{-s I_m} ds] P_N Psi(Y_{t_k}, Zbar-triple_k)
                    / (1 + tau ||Psi_k||_{-alpha}),

with Y == 0 on the dead interval [0, tau] and the drift active from k = 1.
The taming divisor keeps the cubic drift from blowing up an explicit step;
its norm is the sharp-partition Besov surrogate (a documented knob).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import besov, noise, wick
from .spectral import (
    SpectralField,
    ball_mask,
    grid_to_coeffs,
    grid_values,
    integrated_semigroup_factor,
    power_grid_size,
    semigroup_multipliers,
    symbol_grid,
)


class SchemeAbort(RuntimeError):
    """Non-finite values appeared in the drift; taming should prevent this."""

    def __init__(self, step: int, detail: str = ""):
        super().__init__(f"non-finite drift at step {step} {detail}".rstrip())
        self.step = step


@dataclass
class SchemeParams:
    """Everything one trajectory needs; see validate() for the regime checks."""

    cutoff: int
    steps: int
    horizon: float
    alpha: float = 0.3
    beta: float = 0.31
    gamma: float = 0.65
    a: tuple = (0.0, 0.0, 0.0, -1.0)
    initial: wick.InitialCondition = field(default_factory=wick.InitialCondition.zero)
    seed: noise.SeedSpec | None = None
    divisor_oversample: int = 2
    partition: besov.DyadicPartition = field(default_factory=besov.DyadicPartition)

    @property
    def tau(self) -> float:
        return self.horizon / self.steps

    def with_resolution(self, cutoff: int, steps: int) -> "SchemeParams":
        return SchemeParams(cutoff, steps, self.horizon, self.alpha, self.beta,
                           self.gamma, self.a, self.initial, self.seed,
                           self.divisor_oversample, self.partition)

    def validate(self) -> tuple[list, list]:
        """Returns (fatal errors, regime warnings)."""
        errors, warnings = [], []
        a0, a1, a2, a3 = self.a
        drift_free = a1 == a2 == a3 == 0.0
        if not drift_free and not a3 < 0:
            errors.append("a3 < 0 is required (the cubic coefficient must be "
                          "strictly negative unless the drift is linear-free)")
        if not 0 < self.alpha < 1.0 / 3.0:
            errors.append("alpha must lie in (0, 1/3)")
        if not self.beta > self.alpha:
            errors.append("beta must exceed alpha")
        if self.cutoff < 0:
            errors.append("cutoff N must be nonnegative")
        if self.steps < 1:
            errors.append("step count M must be positive")
        if self.horizon <= 0:
            errors.append("horizon T must be positive")
        if (5 * self.alpha + self.beta) / 2 >= 1:
            warnings.append(
                f"(5 alpha + beta)/2 = {(5*self.alpha+self.beta)/2:.3f} >= 1: outside "
                "the unweighted error regime")
        if self.gamma <= 1 - 3 * self.alpha:
            warnings.append(
                f"gamma = {self.gamma} <= 1 - 3 alpha = {1-3*self.alpha:.3f}: outside "
                "the weighted-norm convergence regime")
        lo, hi = max((self.alpha + self.beta) / 2, 2 * self.alpha), 1 - self.alpha
        if not (lo < self.gamma < hi):
            warnings.append(
                f"gamma = {self.gamma} outside the weighted-rate window "
                f"({lo:.3f}, {hi:.3f})")
        return errors, warnings


@dataclass
class TimeGrid:
    horizon: float
    steps: int

    @property
    def tau(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.tau


def floor_tau(s: float, grid: TimeGrid) -> float:
    """Largest grid time t_k <= s."""
    if s < 0 or s > grid.horizon * (1 + 1e-12):
        raise ValueError("time outside [0, T]")
    times = grid.times
    k = int(np.searchsorted(times, s, side="right")) - 1
    return float(times[min(max(k, 0), grid.steps)])


@dataclass
class TrajectoryRecord:
    """Fields at the requested grid indices plus per-step diagnostics."""

    params: SchemeParams
    times: np.ndarray
    record_indices: list
    Y: dict
    Zbar: dict
    X: dict
    psi_norms: np.ndarray
    divisors: np.ndarray


def psi(y: SpectralField, z: wick.WickTriple, a, _y_grid=None, _z1_grid=None) -> SpectralField:
    """Nonlinearity Psi(y, z) = sum_j a_j sum_k C(j,k) y^k z^{:j-k:}.

    All monomials are evaluated pointwise on one alias-free grid (the inputs
    are band-limited at the common cutoff, so every product is exact) and the
    result is projected back to that cutoff.
    """
    a0, a1, a2, a3 = (float(c) for c in a)
    N = y.cutoff
    if z.cutoff != N:
        raise ValueError("y and the Wick triple must share a cutoff")
    if a1 == a2 == a3 == 0.0:
        out = SpectralField.zeros(N)
        out.coeffs[N, N] = a0
        return out
    if a2 == 0.0 and a3 == 0.0:
        out = a1 * (y + z.z1)
        out.coeffs[N, N] += a0
        return out
    G = power_grid_size(N, 3, N)
    yg = grid_values(y, G) if _y_grid is None else _y_grid
    z1g = grid_values(z.z1, G) if _z1_grid is None else _z1_grid
    z2g = grid_values(z.z2, G)
    z3g = grid_values(z.z3, G)
    # binomial sums sum_k C(j,k) y^k z^{:j-k:}, accumulated with few passes
    y2 = yg * yg
    yz = yg * z1g
    total = z3g  # fresh array, safe to consume
    total *= a3
    tmp = yg * z2g
    tmp *= 3.0 * a3
    total += tmp
    np.multiply(yz, 3.0 * a3, out=tmp)
    tmp *= yg
    total += tmp
    np.multiply(y2, yg, out=tmp)
    tmp *= a3
    total += tmp
    if a2 != 0.0:
        total += a2 * y2
        total += (2.0 * a2) * yz
        total += a2 * z2g
    if a1 != 0.0:
        total += a1 * yg
        total += a1 * z1g
    if a0 != 0.0:
        total += a0
    return grid_to_coeffs(total, N)


def _drift_norm(drift: SpectralField, params: SchemeParams) -> float:
    return besov.besov_norm(drift, -params.alpha, params.partition,
                            oversample=params.divisor_oversample, refine=False).value


class _StepKernel:
    """Precomputed multipliers for repeated tamed steps at fixed (N, tau)."""

    def __init__(self, params: SchemeParams):
        N, tau = params.cutoff, params.tau
        self.params = params
        self.mask = ball_mask(N)
        self.decay = semigroup_multipliers(N, tau) * self.mask
        self.int_factor = integrated_semigroup_factor(symbol_grid(N), tau) * self.mask

    def step(self, y_coeffs: np.ndarray, z: wick.WickTriple, k: int,
             _y_grid=None, _z1_grid=None):
        """One recursion step; returns (new coeffs, psi norm, divisor)."""
        p = self.params
        y = SpectralField(p.cutoff, y_coeffs)
        drift = psi(y, z, p.a, _y_grid=_y_grid, _z1_grid=_z1_grid)
        if not np.all(np.isfinite(drift.coeffs)):
            raise SchemeAbort(k)
        norm = _drift_norm(drift, p)
        divisor = 1.0 + p.tau * norm
        new = self.decay * y_coeffs + self.int_factor * (drift.coeffs / divisor)
        if not np.all(np.isfinite(new)):
            raise SchemeAbort(k, "(after semigroup update)")
        return new, norm, divisor


def tamed_step(y: SpectralField, z: wick.WickTriple, params: SchemeParams) -> SpectralField:
    """Y_{t_{k+1}} from Y_{t_k}: semigroup transport plus tamed drift."""
    kernel = _StepKernel(params)
    new, _, _ = kernel.step(y.coeffs, z, k=-1)
    return SpectralField(params.cutoff, new)


def _zbar_half(path: noise.NoisePath, k_fine: int, x0_coeffs, cutoff: int):
    """Zbar(t) on the coefficient square: P_N S_t X0 + Z_t."""
    zsq = noise.square_from_half(noise.zero_initial_half(path, k_fine), cutoff)
    if x0_coeffs is not None:
        t = path.time_of(k_fine)
        zsq += np.exp(-t * symbol_grid(cutoff)) * x0_coeffs
    return zsq


def run(params: SchemeParams, path: noise.NoisePath, record_indices=None,
        keep=("Y", "Zbar", "X")) -> TrajectoryRecord:
    """Integrate one trajectory against a given noise path.

    The path's cutoff must cover params.cutoff and its fine grid must be
    divisible by params.steps.  Fields are recorded at `record_indices`
    (grid indices; default all) for the components named in `keep`;
    diagnostics at every step.
    """
    N, M, T = params.cutoff, params.steps, params.horizon
    if path.cutoff < N:
        raise ValueError("noise path cutoff is smaller than the scheme cutoff")
    if path.fine_steps % M != 0:
        raise ValueError("scheme steps must divide the path's fine grid")
    if path.cutoff > N:
        path = noise.restrict_modes(path, N)
    stride = path.fine_steps // M
    tau = params.tau
    times = np.arange(M + 1) * tau
    record = sorted(set(range(M + 1) if record_indices is None else record_indices))
    record_set = set(record)

    drift_free = all(c == 0.0 for c in params.a)
    x0_field = None if params.initial.is_zero else params.initial.spectral(N)
    x0_coeffs = None if x0_field is None else x0_field.coeffs
    R = wick.renorm_constant(N)

    Ys, Zs, Xs = {}, {}, {}
    psi_norms = np.full(M + 1, np.nan)
    divisors = np.full(M + 1, np.nan)
    y = np.zeros((2 * N + 1, 2 * N + 1), dtype=np.complex128)

    def record_state(k, y_coeffs):
        zsq = _zbar_half(path, k * stride, x0_coeffs, N)
        if "Y" in keep:
            Ys[k] = SpectralField(N, y_coeffs.copy())
        if "Zbar" in keep:
            Zs[k] = SpectralField(N, zsq)
        if "X" in keep:
            Xs[k] = SpectralField(N, y_coeffs + zsq)

    if 0 in record_set:
        record_state(0, y)
    if 1 in record_set:
        record_state(1, y)  # dead interval: Y == 0 on [0, tau]

    if not drift_free and M > 1:
        kernel = _StepKernel(params)
        G = power_grid_size(N, 3, N)
        linear_drift = params.a[2] == 0.0 and params.a[3] == 0.0
        for k in range(1, M):
            t_k = times[k]
            z1 = SpectralField(N, _zbar_half(path, k * stride, x0_coeffs, N))
            z1g = None if linear_drift else grid_values(z1, G)
            triple = wick.triple_from_field(t_k, z1, R, _grid=z1g)
            yg = None if linear_drift else grid_values(SpectralField(N, y), G)
            try:
                y, psi_norms[k], divisors[k] = kernel.step(
                    y, triple, k, _y_grid=yg, _z1_grid=z1g)
            except SchemeAbort as err:
                raise SchemeAbort(err.step, f"(sample seed {params.seed})") from err
            if k + 1 in record_set:
                record_state(k + 1, y)
    else:
        for k in record:
            if k > 1:
                record_state(k, y)

    return TrajectoryRecord(params, times, record, Ys, Zs, Xs, psi_norms, divisors)
