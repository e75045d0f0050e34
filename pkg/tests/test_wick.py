import math

import numpy as np
import pytest

from sacsim.noise import NoisePath, SeedSpec, stationary_batch, half_modes
from sacsim.spectral import SpectralField, ball_mask, to_physical
from sacsim.wick import (
    InitialCondition,
    RenormConstant,
    decayed_mode_sum,
    renorm_constant,
    triple_from_field,
    wick_powers_pointwise,
    wick_with_initial,
    wick_with_initial_binomial,
    zero_initial_wick,
    zero_initial_wick_binomial,
)

from test_spectral import random_field

TWO_PI_SQ = 4 * math.pi**2


def renorm_oracle(N):
    """Independent brute-force fsum over the square lattice masked to the ball."""
    terms = []
    for m1 in range(-N, N + 1):
        for m2 in range(-N, N + 1):
            if m1 * m1 + m2 * m2 <= N * N:
                terms.append(1.0 / (2.0 * (1.0 + TWO_PI_SQ * (m1 * m1 + m2 * m2))))
    return math.fsum(terms)


class TestRenormConstant:
    def test_single_mode(self):
        assert renorm_constant(0).value == 0.5

    def test_five_modes(self):
        want = 0.5 + 4 * (1.0 / (2 * (1 + TWO_PI_SQ)))
        assert renorm_constant(1).value == pytest.approx(want, rel=1e-14)
        assert want == pytest.approx(0.54941, abs=1e-5)

    @pytest.mark.parametrize("N", [0, 1, 2, 7, 16, 64, 128])
    def test_against_fsum_oracle(self, N):
        assert renorm_constant(N).value == pytest.approx(renorm_oracle(N), rel=1e-12)

    def test_strictly_increasing(self):
        vals = [renorm_constant(N).value for N in range(0, 12)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_doubling_gap_approaches_log2_over_4pi(self):
        gap = renorm_constant(1024).value - renorm_constant(512).value
        assert abs(gap - math.log(2) / (4 * math.pi)) < 5e-3


class TestWickPointwise:
    def test_constant_field_formulas(self):
        c = 1.7
        f = SpectralField.from_modes(2, {(0, 0): c})
        R = RenormConstant(2, 0.9)
        z2, z3 = wick_powers_pointwise(f, R)
        assert z2.coeff(0, 0).real == pytest.approx(c * c - 0.9, rel=1e-12)
        assert z3.coeff(0, 0).real == pytest.approx(c**3 - 3 * 0.9 * c, rel=1e-12)

    def test_zero_constant_plain_powers(self):
        rng = np.random.default_rng(0)
        f = random_field(4, rng, scale=0.5)
        z2, z3 = wick_powers_pointwise(f, 0.0)
        from sacsim.spectral import dealiased_power

        assert np.max(np.abs(z2.coeffs - dealiased_power(f, 2, 4).coeffs)) < 1e-12
        assert np.max(np.abs(z3.coeffs - dealiased_power(f, 3, 4).coeffs)) < 1e-12

    def test_cutoff_mismatch_rejected(self):
        with pytest.raises(ValueError):
            wick_powers_pointwise(SpectralField.zeros(3), RenormConstant(4, 1.0))

    def test_stationary_moments_at_a_point(self):
        # Isserlis oracle: E[:Z^2:] = 0, E[(:Z^2:)^2] = 2 R^2 at a fixed point
        N, n = 8, 4000
        R = renorm_constant(N).value
        batch = stationary_batch(N, 314, n)
        modes = half_modes(N)
        zero = int(np.nonzero((modes[:, 0] == 0) & (modes[:, 1] == 0))[0][0])
        z = 2.0 * np.sum(batch.real, axis=1) - batch[:, zero].real
        w2 = z * z - R
        se = np.std(w2) / math.sqrt(n)
        assert abs(np.mean(w2)) < 5 * se
        sq = w2 * w2
        se2 = np.std(sq) / math.sqrt(n)
        assert abs(np.mean(sq) - 2 * R * R) < 5 * se2

    def test_point_values_match_convolution_oracle(self):
        # the projected Wick fields at x = 0 against direct-convolution oracles
        # (the projection changes point values, so P_N(f^2)(0) != f(0)^2)
        from test_spectral import convolution_power_oracle

        N = 6
        R = renorm_constant(N)
        f = random_field(N, np.random.default_rng(5), scale=0.3)
        z2, z3 = wick_powers_pointwise(f, R)
        G = 4 * N + 2
        fv = to_physical(f, G).values[0, 0]
        z2v = to_physical(z2, G).values[0, 0]
        z3v = to_physical(z3, G).values[0, 0]
        want2 = np.sum(convolution_power_oracle(f, 2, N).coeffs).real - R.value
        want3 = np.sum(convolution_power_oracle(f, 3, N).coeffs).real - 3 * R.value * fv
        assert z2v == pytest.approx(want2, rel=1e-10)
        assert z3v == pytest.approx(want3, rel=1e-10)


class TestZeroInitialWick:
    def test_time_zero_triple(self):
        path = NoisePath.build(5, 8, 1.0, SeedSpec(1, 0, base_steps=8))
        R = renorm_constant(5)
        tr = zero_initial_wick(path, 0.0, R)
        assert np.max(np.abs(tr.z1.coeffs)) == 0.0
        assert tr.z2.coeff(0, 0).real == pytest.approx(-R.value, rel=1e-13)
        off = tr.z2.coeffs.copy()
        off[5, 5] = 0
        assert np.max(np.abs(off)) < 1e-13
        assert np.max(np.abs(tr.z3.coeffs)) < 1e-13

    @pytest.mark.parametrize("seed", range(4))
    def test_binomial_equals_closed(self, seed):
        path = NoisePath.build(6, 16, 1.0, SeedSpec(40 + seed, 0, base_steps=16))
        R = renorm_constant(6)
        for t in (1 / 16, 0.5, 1.0):
            a = zero_initial_wick(path, t, R)
            b = zero_initial_wick_binomial(path, t, R)
            for fa, fb in ((a.z1, b.z1), (a.z2, b.z2), (a.z3, b.z3)):
                denom = max(np.max(np.abs(fa.coeffs)), 1e-30)
                assert np.max(np.abs(fa.coeffs - fb.coeffs)) / denom < 1e-10

    def test_decayed_variance_statistic(self):
        # E[(Z_t)^{:2:}(x)] -> -sum e^{-2 t I_m} / (2 I_m)
        N, n, t = 4, 3000, 0.05
        R = renorm_constant(N)
        vals = []
        for i in range(n):
            path = NoisePath.build(N, 4, 0.2, SeedSpec(606, i, base_steps=4))
            tr = zero_initial_wick(path, t, R)
            vals.append(np.sum(tr.z2.coeffs).real)  # value at x = 0
        vals = np.array(vals)
        target = -decayed_mode_sum(N, t)
        se = np.std(vals) / math.sqrt(n)
        assert abs(np.mean(vals) - target) < 5 * se


class TestWickWithInitial:
    def test_zero_datum_reduces(self):
        path = NoisePath.build(5, 8, 1.0, SeedSpec(2, 3, base_steps=8))
        R = renorm_constant(5)
        a = wick_with_initial(path, 0.5, R, InitialCondition.zero())
        b = zero_initial_wick(path, 0.5, R)
        for fa, fb in ((a.z1, b.z1), (a.z2, b.z2), (a.z3, b.z3)):
            assert np.array_equal(fa.coeffs, fb.coeffs)

    def test_deterministic_constant_datum(self):
        path = NoisePath.zeros(4, 8, 1.0)
        R = renorm_constant(4)
        c, t = 0.9, 0.5
        tr = wick_with_initial(path, t, R, InitialCondition.from_modes({(0, 0): c}))
        e = math.exp(-t)
        assert tr.z1.coeff(0, 0).real == pytest.approx(e * c, rel=1e-12)
        assert tr.z2.coeff(0, 0).real == pytest.approx(e**2 * c**2 - R.value, rel=1e-12)
        assert tr.z3.coeff(0, 0).real == pytest.approx(
            e**3 * c**3 - 3 * R.value * e * c, rel=1e-12)

    @pytest.mark.parametrize("kind", ["modes", "rough"])
    def test_binomial_equals_closed(self, kind):
        path = NoisePath.build(6, 16, 1.0, SeedSpec(50, 1, base_steps=16))
        R = renorm_constant(6)
        if kind == "modes":
            x0 = InitialCondition.from_modes(
                {(0, 0): 0.3, (2, 1): 0.2 - 0.1j, (-2, -1): 0.2 + 0.1j})
        else:
            x0 = InitialCondition.rough(0.25, 6, 777)
        for t in (1 / 16, 0.75):
            a = wick_with_initial(path, t, R, x0)
            b = wick_with_initial_binomial(path, t, R, x0)
            for fa, fb in ((a.z1, b.z1), (a.z2, b.z2), (a.z3, b.z3)):
                denom = max(np.max(np.abs(fa.coeffs)), 1e-30)
                assert np.max(np.abs(fa.coeffs - fb.coeffs)) / denom < 1e-10

    def test_rough_rejected_at_time_zero(self):
        path = NoisePath.build(4, 8, 1.0, SeedSpec(3, 0, base_steps=8))
        x0 = InitialCondition.rough(0.25, 4, 12)
        with pytest.raises(ValueError):
            wick_with_initial(path, 0.0, renorm_constant(4), x0)
        # a finite mode list is fine at t = 0
        ok = wick_with_initial(path, 0.0, renorm_constant(4),
                               InitialCondition.from_modes({(0, 0): 1.0}))
        assert ok.z1.coeff(0, 0).real == pytest.approx(1.0)


class TestInitialCondition:
    def test_rough_sampling_is_cached_and_projective(self):
        from sacsim.spectral import project

        x0 = InitialCondition.rough(0.25, 8, 404)
        f8 = x0.spectral(8)
        f4 = x0.spectral(4)
        assert np.array_equal(f4.coeffs, project(f8, 4).coeffs)
        assert f8.hermitian_defect() == 0.0

    def test_rough_mode_decay_law(self):
        # E|c_m|^2 = (1 + |m|^2)^{-(1-alpha')}
        n = 3000
        acc = []
        for i in range(n):
            x0 = InitialCondition.rough(0.3, 2, 9000 + i)
            acc.append(x0.spectral(2).coeff(1, 1))
        acc = np.array(acc)
        target = (1.0 + 2.0) ** (-(1 - 0.3))
        power = np.abs(acc) ** 2
        se = np.std(power) / math.sqrt(n)
        assert abs(np.mean(power) - target) < 5 * se

    def test_non_hermitian_mode_list_rejected(self):
        with pytest.raises(ValueError):
            InitialCondition.from_modes({(1, 0): 1.0})
        with pytest.raises(ValueError):
            InitialCondition.from_modes({(1, 0): 1.0, (-1, 0): 2.0})

    def test_triple_from_field_shares_grid(self):
        f = random_field(4, np.random.default_rng(7))
        R = renorm_constant(4)
        t1 = triple_from_field(0.3, f, R)
        z2, z3 = wick_powers_pointwise(f, R)
        assert np.array_equal(t1.z2.coeffs, z2.coeffs)
        assert np.array_equal(t1.z3.coeffs, z3.coeffs)
