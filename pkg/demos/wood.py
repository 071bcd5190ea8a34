"""Beech/isotropic bilayer composite: effective stiffness, curvature and energy.

    python3 demos/wood.py
"""
import numpy as np

from platehom import bending_energy, build_grid, compute_effective, prestrain_from_corrector
from platehom.material import build_material_field, build_prestrain_field

np.set_printoptions(precision=5, suppress=False)

# Beech occupies a quarter-width stripe in y1; its grain runs along y1 in the
# bottom layer and is turned by pi/4 about e3 in the top layer.  The matrix is
# isotropic with mu = 1, lambda = 0.
material = build_material_field("wood-narrow")
swelling = build_prestrain_field("hydrostatic-bottom")
grid = build_grid(16, 2, 16, material, swelling)

inf = compute_effective(grid, "inf", swelling)
print("Qhat (infinity):")
print(inf.Qhat)
print("eigenvalues", np.linalg.eigvalsh(inf.Qhat))
print(f"Beff = {inf.BeffCoeffs}, Ires = {inf.Ires:.4e}")

# Swelling the bottom layer bends the sheet; the curvature barely depends on gamma.
for gamma in (1.0, 8.0, 64.0, 512.0):
    e = compute_effective(grid, gamma, swelling)
    print(f"gamma = {gamma:5g}: Beff = {e.BeffCoeffs}, q22 = {e.Qhat[1, 1]:.4f}")

zero = compute_effective(grid, 0.0, swelling)
print(f"gamma = 0    : Beff = {zero.BeffCoeffs}, q22 = {zero.Qhat[1, 1]:.4f}")

# Limit energy of a sheet bent uniformly to its spontaneous curvature versus a flat one.
flat = [(1.0, np.zeros((2, 2)))]
natural = [(1.0, inf.Beff)]
print(f"energy flat {bending_energy(inf.Qhat, inf.BeffCoeffs, inf.Ires, flat):.5f}, "
      f"at Beff {bending_energy(inf.Qhat, inf.BeffCoeffs, inf.Ires, natural):.5f} (= Ires)")

# The material's own limit corrector as prestrain: zero effective curvature at
# infinity, a gamma^-1 tail for finite gamma.
own = prestrain_from_corrector(grid)
for regime in ("inf", 1.0, 16.0, 256.0):
    e = compute_effective(grid, regime, own, infinity="finite-limit")
    print(f"own prestrain, regime {regime!s:>5}: |Beff| = {np.linalg.norm(e.BeffCoeffs):.3e}")
