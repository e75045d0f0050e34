"""Spectral fields on the torus and their dyadic Besov norms.

Walks through the core field type: Galerkin projection onto the Euclidean
ball, the heat semigroup of A = Laplacian - Id, exact dealiased powers, and
the Littlewood-Paley block decomposition behind the C^s norms.
"""

import numpy as np

from sacsim import (
    DyadicPartition,
    SpectralField,
    besov_norm,
    dealiased_power,
    lp_block,
    project,
    semigroup,
    to_physical,
)

rng = np.random.default_rng(7)

# A real field is stored through Hermitian coefficients on [-N, N]^2.
f = SpectralField.from_modes(6, {
    (0, 0): 0.5,
    (1, 0): 0.25, (-1, 0): 0.25,          # cos(2 pi x1) / 2
    (3, 4): 0.1 - 0.2j, (-3, -4): 0.1 + 0.2j,
})
print("cutoff:", f.cutoff)
print("Hermitian defect:", f.hermitian_defect())

# Projection truncates to the Euclidean ball: |(3,4)| = 5 survives P_5 but not P_4.
print("P_5 keeps (3,4):", project(f, 5).coeff(3, 4))
print("P_4 drops (3,4):", project(f, 4).coeff(3, 4))

# The semigroup damps mode m by e^{-t I_m}, I_m = 1 + 4 pi^2 |m|^2.
g = semigroup(f, 0.02)
print("semigroup factor on (1,0):", (g.coeff(1, 0) / f.coeff(1, 0)).real)

# Pointwise powers are evaluated on an alias-free grid and projected back:
# cos^2 = 1/2 + cos(4 pi x1)/2 appears as modes 0 and +-(2,0).
c = SpectralField.from_modes(2, {(1, 0): 0.5, (-1, 0): 0.5})
sq = dealiased_power(c, 2, 2)
print("cos^2 coefficients:", sq.coeff(0, 0).real, sq.coeff(2, 0).real)

# Littlewood-Paley blocks: block -1 is the mean, block j the annulus
# 2^{j-1} < |m| <= 2^j; sharp masks reconstruct the field bit-exactly.
u = SpectralField(10, np.where(
    np.hypot(*np.meshgrid(np.arange(-10, 11), np.arange(-10, 11))) <= 10,
    rng.standard_normal((21, 21)) + 1j * rng.standard_normal((21, 21)), 0))
u = SpectralField(10, 0.5 * (u.coeffs + u.coeffs[::-1, ::-1].conj()))
part = DyadicPartition("sharp")
total = sum(lp_block(u, j, part).coeffs for j in range(-1, part.max_block(10) + 1))
print("block sum reconstructs:", np.array_equal(total, u.coeffs))

# The C^s norm is the weighted max of per-block sup norms.
res = besov_norm(u, -0.3)
print(f"||u||_-0.3 = {res.value:.4f}")
for b in res.blocks:
    print(f"  block {b.j:2d}: sup {b.sup:8.4f}  2^(js) sup {b.weighted:8.4f}")

# Negative-index norms weight high frequencies down; the embedding
# ||u||_s1 <= 2^(s2 - s1) ||u||_s2 for s1 <= s2 is exact for this evaluator.
n_low, n_high = besov_norm(u, -0.5).value, besov_norm(u, 0.5).value
print("embedding check:", n_low <= 2.0 * n_high)

# Physical-space view of the field on a collocation grid.
p = to_physical(u, 64)
print("grid range:", p.values.min().round(3), "to", p.values.max().round(3))
