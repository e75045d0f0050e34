"""Statistical sanity suite for the Gaussian layer (the `wick-stats` command).

Checks empirical Wick moments against Isserlis-theorem targets and the OU
lag covariance against its closed form, each within a stated number of
standard errors.  Pointwise field values at x = 0 are used: a spectral
field's value there is just the coefficient sum, so tens of thousands of
samples stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import noise
from .wick import renorm_constant

MAX_SE = 5.0


@dataclass
class StatCheck:
    name: str
    estimate: float
    target: float
    se: float
    n_se: float
    passed: bool


def _check(name: str, samples: np.ndarray, target: float, max_se: float) -> StatCheck:
    est = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / np.sqrt(samples.size))
    n_se = abs(est - target) / se if se > 0 else np.inf
    return StatCheck(name, est, target, se, float(n_se), bool(n_se <= max_se))


def _point_values(batch: np.ndarray, cutoff: int) -> np.ndarray:
    """Field value at x = 0 per sample: sum of all coefficients (real)."""
    zero = noise._mode_zero_mask(cutoff)
    return 2.0 * np.sum(batch.real, axis=1) - batch[:, zero].real


def _sample_keys(master_seed: int, n_samples: int, m1: int, m2: int) -> np.ndarray:
    keys = np.empty(n_samples, dtype=np.uint64)
    for i in range(n_samples):
        keys[i] = noise.mode_keys(
            noise.stream_key(master_seed, noise.PURPOSE_NOISE, i),
            np.array([m1]), np.array([m2]))[0]
    return keys


def lag_covariance_check(master_seed: int, n_samples: int, m1: int, m2: int,
                         t: float, s: float, max_se: float = MAX_SE) -> StatCheck:
    """E[z_t conj(z_s)] against e^{-|t-s| I_m} / (2 I_m) for one mode."""
    i_m = 1.0 + 4.0 * np.pi**2 * (m1 * m1 + m2 * m2)
    dt = abs(t - s)
    keys = _sample_keys(master_seed, n_samples, m1, m2)
    g = noise.normal_pairs(keys, np.arange(2, dtype=np.uint64))
    if m1 == 0 and m2 == 0:
        v_s = g[:, 0].real * np.sqrt(1.0 / (2.0 * i_m))
        inc = g[:, 1].real * np.sqrt(2.0) * noise.increment_scale(np.array([i_m]), dt)[0]
    else:
        v_s = g[:, 0] * np.sqrt(1.0 / (4.0 * i_m))
        inc = g[:, 1] * noise.increment_scale(np.array([i_m]), dt)[0]
    v_t = np.exp(-dt * i_m) * v_s + inc
    prods = (v_t * np.conj(v_s)).real
    target = np.exp(-dt * i_m) / (2.0 * i_m)
    return _check(f"lag_cov m=({m1},{m2}) |t-s|={dt:g}", prods, target, max_se)


DEFAULT_LAG_CHECKS = (
    ((0, 0), 0.25), ((1, 0), 0.01), ((0, 1), 0.02), ((1, 1), 0.005),
    ((2, 1), 0.004), ((3, 0), 0.002), ((0, 4), 0.002), ((5, 3), 0.001),
    ((8, 0), 0.0005), ((10, 10), 0.0002),
)


def run_wick_stats(cutoff: int = 16, samples: int = 10_000,
                   master_seed: int = 2024, max_se: float = MAX_SE) -> list:
    """The full suite: Wick means, Wick variances and 10 lag-covariance spots."""
    R = renorm_constant(cutoff).value
    batch = noise.stationary_batch(cutoff, master_seed, samples)
    z = _point_values(batch, cutoff)
    w2 = z * z - R
    w3 = z**3 - 3.0 * R * z
    checks = [
        _check("mean :Z^2:", w2, 0.0, max_se),
        _check("mean :Z^3:", w3, 0.0, max_se),
        _check("var :Z^2: -> 2 R^2", w2 * w2, 2.0 * R * R, max_se),
        _check("var :Z^3: -> 6 R^3", w3 * w3, 6.0 * R**3, max_se),
    ]
    for (m1, m2), dt in DEFAULT_LAG_CHECKS:
        checks.append(lag_covariance_check(master_seed + 1, samples, m1, m2,
                                           t=0.25 + dt, s=0.25, max_se=max_se))
    return checks
