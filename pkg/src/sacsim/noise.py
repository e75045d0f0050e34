"""Exact-in-law sampling of the stochastic heat equation's linear part.

Each Fourier mode of the stochastic convolution Z_{-inf,t} is an independent
complex Ornstein-Uhlenbeck process (up to the Hermitian pairing that keeps
the field real):

    dz_m = -I_m z_m dt + d beta_m,   E|z_m(t)|^2 = 1/(2 I_m),

with exact transition z_m(t+h) = e^{-h I_m} z_m(t) + g, Var|g| =
(1 - e^{-2 h I_m})/(2 I_m).  Only modes in the canonical half-lattice
(m1 > 0, or m1 == 0 and m2 >= 0) are sampled; the conjugate half is derived,
and the zero mode is real with variance 1/2.

Coupling across resolutions
---------------------------
Strong-error experiments need the *same* driving noise at every (N, M).  All
randomness is therefore counter-based and keyed per mode:

* the Gaussian stream of mode m depends only on
  (master_seed, sample_index, purpose, m1, m2) -- never on the cutoff or the
  step count -- so restricting modes is a column selection, bit-identical to
  a direct build at the smaller cutoff;
* time is always generated on the SeedSpec's canonical base grid of
  ``base_steps`` atomic steps over [0, T]; a path whose own grid is coarser
  records every (base/fine)-th state of the same atomic recursion, so paths
  built at different step counts agree byte-for-byte at shared times.

Stream derivation rule (stable across versions)
-----------------------------------------------
With ``mix`` the SplitMix64 output function
(x += 0x9E3779B97F4A7C15 first; then xor-shift-multiply finalizer):

    h1 = mix(master_seed XOR (purpose * 0xD1342543DE82EF95))
    h2 = mix(h1 XOR uint64(sample_index))
    h3 = mix(mix(h2 XOR uint64(m1)) XOR uint64(m2))

Pair j >= 0 of mode m maps two counters to uniforms
u = (mix(h3 XOR (0x5851F42D4C957F2D + 2j [+1])) >> 11) * 2^-53 and turns them
into two unit normals by Box-Muller.  Pair 0 is the stationary initial state;
pair 1+k is the increment over atomic step k.  Purposes: 0x4F55 for the
driving noise, 0x4943 for rough initial data.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import TWO_PI_SQ, SpectralField

PURPOSE_NOISE = 0x4F55
PURPOSE_INITIAL = 0x4943

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_PURPOSE_MULT = 0xD1342543DE82EF95
_COUNTER_BASE = 0x5851F42D4C957F2D
_MASK = (1 << 64) - 1


def _mix64_int(x: int) -> int:
    """SplitMix64 next() on a Python int, exact 64-bit wrapping."""
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK
    return x ^ (x >> 31)


def _mix64(x: np.ndarray) -> np.ndarray:
    """Vectorized SplitMix64 next() on uint64 arrays."""
    with np.errstate(over="ignore"):
        x = x + np.uint64(_GOLDEN)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(_MIX1)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(_MIX2)
        return x ^ (x >> np.uint64(31))


def _u64(v) -> int:
    return int(v) & _MASK


def stream_key(master_seed: int, purpose: int, sample_index: int) -> int:
    h1 = _mix64_int(_u64(master_seed) ^ ((_u64(purpose) * _PURPOSE_MULT) & _MASK))
    return _mix64_int(h1 ^ _u64(sample_index))


def mode_keys(h2: int, m1: np.ndarray, m2: np.ndarray) -> np.ndarray:
    """Per-mode 64-bit keys from the (seed, sample, purpose) key h2."""
    a = _mix64(np.uint64(h2) ^ m1.astype(np.int64).view(np.uint64))
    return _mix64(a ^ m2.astype(np.int64).view(np.uint64))


def _mix64_inplace(x: np.ndarray, tmp: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x += np.uint64(_GOLDEN)
        np.right_shift(x, np.uint64(30), out=tmp)
        x ^= tmp
        x *= np.uint64(_MIX1)
        np.right_shift(x, np.uint64(27), out=tmp)
        x ^= tmp
        x *= np.uint64(_MIX2)
        np.right_shift(x, np.uint64(31), out=tmp)
        x ^= tmp
    return x


def normal_pairs(keys: np.ndarray, pair_indices: np.ndarray) -> np.ndarray:
    """Unit complex normals (re, im ~ N(0,1) independent) for keys x pairs.

    Shape: keys.shape + pair_indices.shape; bitwise reproducible regardless
    of chunking, since every element is a pure function of (key, pair index).
    """
    k = keys.reshape(keys.shape + (1,) * pair_indices.ndim)
    with np.errstate(over="ignore"):
        c1 = np.uint64(_COUNTER_BASE) + (np.uint64(2) * pair_indices.astype(np.uint64))
        x1 = k ^ c1
        x2 = k ^ (c1 + np.uint64(1))
    tmp = np.empty_like(x1)
    _mix64_inplace(x1, tmp)
    _mix64_inplace(x2, tmp)
    # (x >> 11) spans 53 bits; +1 keeps u1 in (0, 1] for the logarithm.
    x1 >>= np.uint64(11)
    x2 >>= np.uint64(11)
    r = x1.astype(np.float64)
    r += 1.0
    r *= 2.0**-53
    np.log(r, out=r)
    r *= -2.0
    np.sqrt(r, out=r)
    angle = x2.astype(np.float64)
    angle *= 2.0 * np.pi * 2.0**-53
    out = np.empty(r.shape, dtype=np.complex128)
    np.cos(angle, out=out.real)
    np.sin(angle, out=out.imag)
    out.real *= r
    out.imag *= r
    return out


@dataclass(frozen=True)
class SeedSpec:
    """Everything that pins one sample's randomness.

    base_steps is the canonical atomic time resolution of the derivation
    rule: every path built from this spec steps the OU recursion base_steps
    times over [0, T], whatever its own (coarser) recording grid is.
    """

    master_seed: int
    sample_index: int = 0
    base_steps: int = 4096

    def noise_key(self) -> int:
        return stream_key(self.master_seed, PURPOSE_NOISE, self.sample_index)


@lru_cache(maxsize=None)
def half_modes(cutoff: int) -> np.ndarray:
    """Canonical half-lattice modes inside the ball, (K, 2), lexicographic."""
    N = cutoff
    out = []
    for m1 in range(-N, N + 1):
        for m2 in range(-N, N + 1):
            if m1 * m1 + m2 * m2 > N * N:
                continue
            if m1 > 0 or (m1 == 0 and m2 >= 0):
                out.append((m1, m2))
    return np.array(out, dtype=np.int64)


@lru_cache(maxsize=None)
def half_symbol(cutoff: int) -> np.ndarray:
    m = half_modes(cutoff)
    return 1.0 + TWO_PI_SQ * (m[:, 0] ** 2 + m[:, 1] ** 2).astype(np.float64)


@lru_cache(maxsize=None)
def _half_scatter(cutoff: int):
    m = half_modes(cutoff)
    N = cutoff
    pos = ((m[:, 0] + N) * (2 * N + 1) + (m[:, 1] + N)).astype(np.intp)
    neg = ((N - m[:, 0]) * (2 * N + 1) + (N - m[:, 1])).astype(np.intp)
    zero_at = int(np.nonzero((m[:, 0] == 0) & (m[:, 1] == 0))[0][0])
    return pos, neg, zero_at


@lru_cache(maxsize=None)
def _restrict_columns(cutoff: int, new_cutoff: int) -> np.ndarray:
    parent = {tuple(mm): i for i, mm in enumerate(half_modes(cutoff))}
    return np.array([parent[tuple(mm)] for mm in half_modes(new_cutoff)], dtype=np.intp)


def square_from_half(values: np.ndarray, cutoff: int) -> np.ndarray:
    """Expand half-lattice values to the Hermitian coefficient square."""
    side = 2 * cutoff + 1
    sq = np.zeros(side * side, dtype=np.complex128)
    pos, neg, _ = _half_scatter(cutoff)
    sq[pos] = values
    sq[neg] = np.conj(values)
    return sq.reshape(side, side)


def _mode_zero_mask(cutoff: int) -> int:
    return _half_scatter(cutoff)[2]


def sample_stationary_initial(cutoff: int, seed: SeedSpec) -> SpectralField:
    """One draw of the stationary state Z_{-inf,0}: E|c_m|^2 = 1/(2 I_m)."""
    vals = _initial_half(cutoff, seed)
    return SpectralField(cutoff, square_from_half(vals, cutoff))


def _initial_half(cutoff: int, seed: SeedSpec) -> np.ndarray:
    modes = half_modes(cutoff)
    keys = mode_keys(seed.noise_key(), modes[:, 0], modes[:, 1])
    g = normal_pairs(keys, np.array(0))
    i_m = half_symbol(cutoff)
    vals = g * np.sqrt(1.0 / (4.0 * i_m))
    z = _mode_zero_mask(cutoff)
    vals[z] = g[z].real * np.sqrt(1.0 / (2.0 * i_m[z]))
    return vals


def stationary_batch(cutoff: int, master_seed: int, n_samples: int,
                     first_sample: int = 0) -> np.ndarray:
    """(n_samples, K) stationary states; row i equals the single-draw path
    for sample_index = first_sample + i, bitwise."""
    modes = half_modes(cutoff)
    i_m = half_symbol(cutoff)
    rows = []
    for i in range(n_samples):
        key = stream_key(master_seed, PURPOSE_NOISE, first_sample + i)
        rows.append(mode_keys(key, modes[:, 0], modes[:, 1]))
    keys = np.stack(rows)
    g = normal_pairs(keys, np.array(0))
    vals = g * np.sqrt(1.0 / (4.0 * i_m))[None, :]
    z = _mode_zero_mask(cutoff)
    vals[:, z] = g[:, z].real * np.sqrt(1.0 / (2.0 * i_m[z]))
    return vals


def advance(state: np.ndarray, i_m: np.ndarray, tau: float,
            increments: np.ndarray) -> np.ndarray:
    """One exact OU transition: e^{-tau I_m} state + g."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return np.exp(-tau * i_m) * state + increments


def increment_scale(i_m: np.ndarray, h: float) -> np.ndarray:
    """Per-component std dev of the step-h increment: sqrt((1-e^{-2hI})/(4I))."""
    return np.sqrt(-np.expm1(-2.0 * h * i_m) / (4.0 * i_m))


class NoisePath:
    """Per-mode OU trajectory of Z_{-inf, t} on a grid of fine_steps over [0, T].

    values[k] holds the half-lattice state at time k*T/fine_steps; values[0]
    is the stationary initial state.  Instances are treated as immutable.
    """

    def __init__(self, cutoff: int, fine_steps: int, horizon: float,
                 values: np.ndarray, seed: SeedSpec | None):
        self.cutoff = cutoff
        self.fine_steps = fine_steps
        self.horizon = horizon
        self.values = values
        self.seed = seed

    @classmethod
    def zeros(cls, cutoff: int, fine_steps: int, horizon: float) -> "NoisePath":
        K = len(half_modes(cutoff))
        return cls(cutoff, fine_steps, horizon,
                   np.zeros((fine_steps + 1, K), dtype=np.complex128), None)

    @classmethod
    def build(cls, cutoff: int, fine_steps: int, horizon: float, seed: SeedSpec,
              time_block: int = 256) -> "NoisePath":
        """Run the atomic recursion and record every (base/fine)-th state."""
        base = seed.base_steps
        if base % fine_steps != 0:
            raise ValueError(f"fine_steps {fine_steps} must divide base_steps {base}")
        stride = base // fine_steps
        h = horizon / base
        modes = half_modes(cutoff)
        i_m = half_symbol(cutoff)
        K = len(modes)
        keys = mode_keys(seed.noise_key(), modes[:, 0], modes[:, 1])
        zero_at = _mode_zero_mask(cutoff)
        out = np.empty((fine_steps + 1, K), dtype=np.complex128)

        init_sd = np.sqrt(1.0 / (4.0 * i_m))
        step_sd = increment_scale(i_m, h)
        decay = np.exp(-h * i_m)

        g0 = normal_pairs(keys, np.array(0))
        z = g0 * init_sd
        # the zero mode is real, with the full (not per-component) variance
        z[zero_at] = g0[zero_at].real * (np.sqrt(2.0) * init_sd[zero_at])
        out[0] = z
        for b0 in range(0, base, time_block):
            b1 = min(b0 + time_block, base)
            # pair 1+k drives atomic step k
            g = normal_pairs(keys, np.arange(b0 + 1, b1 + 1, dtype=np.uint64))
            g *= step_sd[:, None]
            g[zero_at] = g[zero_at].real * np.sqrt(2.0)
            for k in range(b0, b1):
                z = decay * z + g[:, k - b0]
                if (k + 1) % stride == 0:
                    out[(k + 1) // stride] = z
        return cls(cutoff, fine_steps, horizon, out, seed)

    @property
    def tau(self) -> float:
        return self.horizon / self.fine_steps

    def initial_state(self) -> np.ndarray:
        return self.state_at(0)

    def state_at(self, k: int) -> np.ndarray:
        """Half-lattice state of Z_{-inf, t_k}."""
        return self.values[k]

    def slice_half(self, k: int) -> np.ndarray:
        return self.state_at(k)

    def slice_field(self, k: int) -> SpectralField:
        """Z_{-inf, t_k} as a spectral field."""
        return SpectralField(self.cutoff, square_from_half(self.state_at(k), self.cutoff))

    def time_of(self, k: int) -> float:
        return k * (self.horizon / self.fine_steps)

    def index_of(self, t: float) -> int:
        tau = self.horizon / self.fine_steps
        k = int(round(t / tau))
        if not (0 <= k <= self.fine_steps) or abs(k * tau - t) > 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"{t} is not a grid time of this path")
        return k


def restrict_modes(path: NoisePath, new_cutoff: int) -> NoisePath:
    """Drop modes with |m| > N'; bit-identical to a direct build at N'."""
    if new_cutoff > path.cutoff:
        raise ValueError("restriction cannot enlarge the cutoff")
    if new_cutoff == path.cutoff:
        return path
    cols = _restrict_columns(path.cutoff, new_cutoff)
    return NoisePath(new_cutoff, path.fine_steps, path.horizon,
                     path.values[:, cols], path.seed)


def subsample_times(path: NoisePath, coarse_steps: int) -> NoisePath:
    """View of the states at times k*T/M'; requires M' | fine_steps."""
    if path.fine_steps % coarse_steps != 0:
        raise ValueError(f"{coarse_steps} does not divide {path.fine_steps}")
    stride = path.fine_steps // coarse_steps
    return NoisePath(path.cutoff, coarse_steps, path.horizon,
                     path.values[::stride], path.seed)


def zero_initial_value(path: NoisePath, t: float) -> SpectralField:
    """Z_t = Z_{-inf,t} - S_t Z_{-inf,0} as a spectral field."""
    k = path.index_of(t)
    return SpectralField(path.cutoff, square_from_half(zero_initial_half(path, k), path.cutoff))


def zero_initial_half(path, k: int) -> np.ndarray:
    """Half-lattice values of Z_{t_k} (zero-initial solution)."""
    if k == 0:
        return np.zeros_like(path.state_at(0))
    t = path.time_of(k)
    i_m = half_symbol(path.cutoff)
    return path.state_at(k) - np.exp(-t * i_m) * path.state_at(0)


class StreamingNoisePath:
    """Slice-on-demand variant for runs too large to hold every state.

    Keeps one checkpoint state every `checkpoint_every` recorded slices and
    regenerates the states in between from the counter-based stream with the
    same arithmetic as NoisePath.build, so values are bit-identical to the
    stored path.  Sequential access (the scheme's pattern) regenerates each
    gap once.  Mode restriction is not supported; build at the consumer's
    cutoff instead (streams are keyed per mode, so the law is unchanged).
    """

    def __init__(self, cutoff: int, fine_steps: int, horizon: float, seed: SeedSpec,
                 checkpoint_every: int = 64):
        base = seed.base_steps
        if base % fine_steps != 0:
            raise ValueError(f"fine_steps {fine_steps} must divide base_steps {base}")
        self.cutoff = cutoff
        self.fine_steps = fine_steps
        self.horizon = horizon
        self.seed = seed
        self.checkpoint_every = checkpoint_every
        self._stride = base // fine_steps
        modes = half_modes(cutoff)
        self._keys = mode_keys(seed.noise_key(), modes[:, 0], modes[:, 1])
        i_m = half_symbol(cutoff)
        h = horizon / base
        self._decay = np.exp(-h * i_m)
        self._step_sd = increment_scale(i_m, h)
        self._zero_at = _mode_zero_mask(cutoff)
        g0 = normal_pairs(self._keys, np.array(0))
        z0 = g0 * np.sqrt(1.0 / (4.0 * i_m))
        z0[self._zero_at] = g0[self._zero_at].real * (
            np.sqrt(2.0) * np.sqrt(1.0 / (4.0 * i_m[self._zero_at])))
        self._checkpoints = {0: z0}
        self._cache = (0, z0)
        self._build_checkpoints()

    def _advance_atomic(self, z: np.ndarray, a0: int, a1: int) -> np.ndarray:
        """Run atomic steps a0..a1-1 from state z (same arithmetic as build)."""
        if a1 == a0:
            return z
        g = normal_pairs(self._keys, np.arange(a0 + 1, a1 + 1, dtype=np.uint64))
        g *= self._step_sd[:, None]
        g[self._zero_at] = g[self._zero_at].real * np.sqrt(2.0)
        for k in range(a0, a1):
            z = self._decay * z + g[:, k - a0]
        return z

    def _build_checkpoints(self):
        z = self._checkpoints[0]
        step = self.checkpoint_every * self._stride
        for a in range(0, self.seed.base_steps, step):
            a1 = min(a + step, self.seed.base_steps)
            z = self._advance_atomic(z, a, a1)
            self._checkpoints[a1 // self._stride] = z

    @property
    def tau(self) -> float:
        return self.horizon / self.fine_steps

    def time_of(self, k: int) -> float:
        return k * (self.horizon / self.fine_steps)

    def index_of(self, t: float) -> int:
        tau = self.horizon / self.fine_steps
        k = int(round(t / tau))
        if not (0 <= k <= self.fine_steps) or abs(k * tau - t) > 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"{t} is not a grid time of this path")
        return k

    def state_at(self, k: int) -> np.ndarray:
        if not 0 <= k <= self.fine_steps:
            raise IndexError(k)
        if k in self._checkpoints:
            return self._checkpoints[k]
        ck, cz = self._cache
        if ck > k or k - ck > self.checkpoint_every:
            ck = (k // self.checkpoint_every) * self.checkpoint_every
            cz = self._checkpoints[ck]
        z = self._advance_atomic(cz, ck * self._stride, k * self._stride)
        self._cache = (k, z)
        return z

    def slice_field(self, k: int) -> SpectralField:
        return SpectralField(self.cutoff, square_from_half(self.state_at(k), self.cutoff))
